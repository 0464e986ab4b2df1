"""SRSWOR sampling, sample statistics and the exact enumeration oracle."""

from __future__ import annotations

import itertools
import math
import os
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import DegenerateSample, InvalidDesign, NumericalDomain, TooManyCombinations
from .estimators import DEGENERATE, EstimatorSpec, evaluate_array, is_resolved
from .mse import Variant, resolve
from .population import BivariatePopulation, PopulationParams, derive_params, theta

DEFAULT_ENUM_CAP = 10**7

# upper bound on the (replicates x N) index matrix built per batch
_BATCH_CELLS = 4_000_000


def enumeration_cap() -> int:
    """The enumeration cap, overridable through ``VAREST_ENUM_CAP``."""
    raw = os.environ.get("VAREST_ENUM_CAP")
    if raw is None or not raw.strip():
        return DEFAULT_ENUM_CAP
    try:
        cap = int(float(raw))
    except ValueError:
        raise ValueError(f"VAREST_ENUM_CAP must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError("VAREST_ENUM_CAP must be positive")
    return cap


def _check_design(n: int, N: int) -> None:
    if not 2 <= n <= N:
        raise InvalidDesign(f"need 2 <= n <= N, got n = {n}, N = {N}")


@dataclass(frozen=True, eq=False)
class Sample:
    indices: tuple[int, ...]
    y_values: np.ndarray
    x_values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indices)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.indices == other.indices
            and np.array_equal(self.y_values, other.y_values)
            and np.array_equal(self.x_values, other.x_values)
        )

    __hash__ = None  # type: ignore[assignment]


def _make_sample(pop: BivariatePopulation, idx) -> Sample:
    idx = np.sort(np.asarray(idx, dtype=np.intp))
    return Sample(tuple(int(i) for i in idx), pop.y[idx], pop.x[idx])


@dataclass(frozen=True)
class SampleStats:
    n: int
    ybar: float
    xbar: float
    sy2: float
    sx2: float
    e0: float | None = None
    e1: float | None = None


def srswor_indices(N: int, n: int, seed: int, replicates: np.ndarray) -> np.ndarray:
    """Sorted SRSWOR index sets, one row per replicate number.

    A partial Fisher-Yates shuffle over ``range(N)`` driven by the counter-based
    uniforms of replicate ``r``; row ``r`` depends on nothing but
    ``(N, n, seed, r)``.
    """
    _check_design(n, N)
    reps = np.asarray(replicates, dtype=np.uint64)
    R = reps.size
    out = np.empty((R, n), dtype=np.intp)
    step = max(1, _BATCH_CELLS // N)
    for lo in range(0, R, step):
        hi = min(R, lo + step)
        u = _rng.uniforms(seed, reps[lo:hi], n)
        rows = np.arange(hi - lo)
        perm = np.tile(np.arange(N, dtype=np.intp), (hi - lo, 1))
        for j in range(n):
            k = j + np.minimum((u[:, j] * (N - j)).astype(np.intp), N - j - 1)
            picked = perm[rows, k]
            perm[rows, k] = perm[rows, j]
            perm[rows, j] = picked
        out[lo:hi] = np.sort(perm[:, :n], axis=1)
    return out


def draw_srswor(pop: BivariatePopulation, n: int, seed: int) -> Sample:
    """One SRSWOR sample; identical to replicate 0 of a simulation with ``seed``."""
    idx = srswor_indices(pop.N, n, seed, np.zeros(1, dtype=np.uint64))[0]
    return _make_sample(pop, idx)


def batch_variances(pop: BivariatePopulation, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample variances (divisor n - 1) of y and x for each row of ``idx``."""
    n = idx.shape[1]
    ys = pop.y[idx]
    xs = pop.x[idx]
    dy = ys - ys.mean(axis=1, keepdims=True)
    dx = xs - xs.mean(axis=1, keepdims=True)
    return (dy * dy).sum(axis=1) / (n - 1), (dx * dx).sum(axis=1) / (n - 1)


def sample_stats(sample: Sample, params: PopulationParams | None = None) -> SampleStats:
    n = sample.n
    if n < 2:
        raise InvalidDesign("sample statistics need n >= 2")
    ybar = math.fsum(sample.y_values) / n
    xbar = math.fsum(sample.x_values) / n
    sy2 = math.fsum((sample.y_values - ybar) ** 2) / (n - 1)
    sx2 = math.fsum((sample.x_values - xbar) ** 2) / (n - 1)
    e0 = e1 = None
    if params is not None:
        e0 = sy2 / params.Sy2 - 1.0
        e1 = sx2 / params.Sx2 - 1.0
    return SampleStats(n=n, ybar=ybar, xbar=xbar, sy2=sy2, sx2=sx2, e0=e0, e1=e1)


def _check_enumerable(N: int, n: int, cap: int | None) -> int:
    _check_design(n, N)
    cap = enumeration_cap() if cap is None else cap
    count = math.comb(N, n)
    if count > cap:
        raise TooManyCombinations(count, cap)
    return count


def enumerate_samples(
    pop: BivariatePopulation, n: int, *, cap: int | None = None
) -> Iterator[Sample]:
    """Every n-subset exactly once, in lexicographic index order.

    The design and the combination cap are checked before the first sample.
    """
    _check_enumerable(pop.N, n, cap)
    return (
        Sample(combo, pop.y[list(combo)], pop.x[list(combo)])
        for combo in itertools.combinations(range(pop.N), n)
    )


def _combination_batches(N: int, n: int, size: int = 100_000) -> Iterator[np.ndarray]:
    combos = itertools.combinations(range(N), n)
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, size)), dtype=np.intp
        )
        if flat.size == 0:
            return
        yield flat.reshape(-1, n)


@dataclass(frozen=True)
class ExactResult:
    spec: EstimatorSpec
    mse: float
    bias: float
    mean_estimate: float
    samples: int
    rejected: int


def exact_summary(
    pop: BivariatePopulation,
    n: int,
    spec: EstimatorSpec,
    params: PopulationParams | None = None,
    *,
    allow_partial: bool = False,
    cap: int | None = None,
    variant: Variant = Variant.AS_PRINTED,
) -> ExactResult:
    """Design-based MSE, bias and mean by enumerating all C(N, n) samples.

    Samples on which the estimator cannot be evaluated raise by default; with
    ``allow_partial`` they are excluded and counted in ``rejected``.
    """
    count = _check_enumerable(pop.N, n, cap)
    params = derive_params(pop) if params is None else params
    if not is_resolved(spec):
        spec = resolve(spec, params, theta(n, pop.N), variant)
    target = params.Sy2
    sq_parts: list[float] = []
    dev_parts: list[float] = []
    rejected = 0
    for idx in _combination_batches(pop.N, n):
        sy2, sx2 = batch_variances(pop, idx)
        values, status = evaluate_array(spec, sy2, sx2, params)
        bad = status != 0
        if bad.any():
            if not allow_partial:
                kind = DegenerateSample if (status == DEGENERATE).any() else NumericalDomain
                raise kind(f"{spec}: estimator undefined on some enumerated samples")
            rejected += int(bad.sum())
            values = values[~bad]
        dev = values - target
        sq_parts.append(math.fsum(dev * dev))
        dev_parts.append(math.fsum(dev))
    used = count - rejected
    if used == 0:
        raise DegenerateSample(f"{spec}: estimator undefined on every sample")
    bias = math.fsum(dev_parts) / used
    return ExactResult(
        spec=spec,
        mse=math.fsum(sq_parts) / used,
        bias=bias,
        mean_estimate=target + bias,
        samples=count,
        rejected=rejected,
    )


def exact_mse(
    pop: BivariatePopulation,
    n: int,
    spec: EstimatorSpec,
    params: PopulationParams | None = None,
    *,
    allow_partial: bool = False,
    cap: int | None = None,
) -> float:
    return exact_summary(pop, n, spec, params, allow_partial=allow_partial, cap=cap).mse
