"""Replicated SRSWOR simulation of estimator MSE.

Replicate ``r`` draws its sample from the counter-based stream ``(seed, r)``;
replicates are processed in fixed-size blocks whose results are concatenated
in replicate order and reduced with ``math.fsum``. The output therefore does
not depend on how many workers ran the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DegenerateSample, InvalidDesign, NumericalDomain
from .estimators import DEGENERATE, EstimatorSpec, ProposedT, evaluate_array
from .mse import Variant, resolve, t_expectation, t_mse_at, theoretical_mse
from .population import BivariatePopulation, PopulationParams, theta
from .sampling import batch_variances, srswor_indices

BLOCK = 4096
REGIME_THRESHOLD = 0.5
SMALL_SAMPLE_N = 30


@dataclass(frozen=True)
class SimulationConfig:
    replicates: int
    n: int
    seed: int
    specs: list[EstimatorSpec] = field(default_factory=list)
    allow_partial: bool = False
    workers: int = 1
    variant: Variant = Variant.AS_PRINTED

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.n < 2:
            raise InvalidDesign(f"need n >= 2, got {self.n}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SimulationResult:
    spec: EstimatorSpec
    empirical_mse: float
    empirical_bias: float
    mc_stderr: float
    rejected_samples: int
    replicates_used: int
    empirical_mean: float
    bias_stderr: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimator": str(self.spec),
            "empirical_mse": self.empirical_mse,
            "empirical_bias": self.empirical_bias,
            "mc_stderr": self.mc_stderr,
            "rejected": self.rejected_samples,
            "replicates_used": self.replicates_used,
        }


def _mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    # The mean is correctly rounded (fsum). The spread only feeds the standard
    # error, so numpy's pairwise sum is enough; it runs over the same
    # replicate-ordered array whatever the worker count, so it is deterministic.
    count = values.size
    mean = math.fsum(values.tolist()) / count
    if count < 2:
        return mean, math.inf
    centered = values - mean
    var = float(np.sum(centered * centered)) / (count - 1)
    return mean, math.sqrt(var / count)


def _block_estimates(pop, params, specs, n, seed, lo, hi):
    idx = srswor_indices(pop.N, n, seed, np.arange(lo, hi, dtype=np.uint64))
    sy2, sx2 = batch_variances(pop, idx)
    return [evaluate_array(spec, sy2, sx2, params) for spec in specs]


def simulate_estimates(
    pop: BivariatePopulation,
    params: PopulationParams,
    specs: list[EstimatorSpec],
    n: int,
    seed: int,
    replicates: int,
    workers: int = 1,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-replicate ``(values, status)`` arrays for resolved specs, in replicate order."""
    theta(n, pop.N)  # validates the design
    bounds = [(lo, min(replicates, lo + BLOCK)) for lo in range(0, replicates, BLOCK)]

    def job(b):
        return _block_estimates(pop, params, specs, n, seed, *b)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(job, bounds))
    else:
        blocks = [job(b) for b in bounds]
    out = []
    for k in range(len(specs)):
        values = np.concatenate([blk[k][0] for blk in blocks])
        status = np.concatenate([blk[k][1] for blk in blocks])
        out.append((values, status))
    return out


def run(
    pop: BivariatePopulation, params: PopulationParams, cfg: SimulationConfig
) -> list[SimulationResult]:
    """Empirical MSE, bias and MC standard error for every spec in ``cfg``."""
    th = theta(cfg.n, pop.N)
    specs = [resolve(s, params, th, cfg.variant) for s in cfg.specs]
    arrays = simulate_estimates(pop, params, specs, cfg.n, cfg.seed, cfg.replicates, cfg.workers)
    results = []
    for spec, (values, status) in zip(specs, arrays):
        bad = status != 0
        rejected = int(bad.sum())
        if rejected and not cfg.allow_partial:
            kind = DegenerateSample if (status == DEGENERATE).any() else NumericalDomain
            raise kind(f"{spec}: estimator undefined on {rejected} of {cfg.replicates} replicates")
        used = values[~bad]
        if used.size == 0:
            raise DegenerateSample(f"{spec}: estimator undefined on every replicate")
        dev = used - params.Sy2
        mse, stderr = _mean_and_stderr(dev * dev)
        bias, bias_se = _mean_and_stderr(dev)
        results.append(
            SimulationResult(
                spec=spec,
                empirical_mse=mse,
                empirical_bias=bias,
                mc_stderr=stderr,
                rejected_samples=rejected,
                replicates_used=int(used.size),
                empirical_mean=params.Sy2 + bias,
                bias_stderr=bias_se,
            )
        )
    return results


@dataclass(frozen=True)
class ValidationRow:
    result: SimulationResult
    theoretical: float
    ratio: float  # empirical / theoretical
    regime_warning: bool
    small_sample: bool

    def to_dict(self) -> dict[str, Any]:
        d = self.result.to_dict()
        d.update(
            theoretical_mse=self.theoretical,
            ratio=self.ratio,
            regime_warning=self.regime_warning,
            small_sample=self.small_sample,
        )
        return d


def regime_flags(params: PopulationParams, n: int) -> tuple[bool, bool]:
    """``(approximation-regime warning, small-sample warning)`` for a design."""
    th = theta(n, params.N)
    regime = th * max(params.beta2y_star, params.beta2x_star) > REGIME_THRESHOLD
    return regime, n < SMALL_SAMPLE_N


def validate_theory(
    pop: BivariatePopulation,
    params: PopulationParams,
    cfg: SimulationConfig,
    variant: Variant | None = None,
) -> list[ValidationRow]:
    """Join each empirical MSE with its first-order theoretical value."""
    variant = cfg.variant if variant is None else Variant(variant)
    th = theta(cfg.n, pop.N)
    regime, small = regime_flags(params, cfg.n)
    results = run(pop, params, SimulationConfig(
        replicates=cfg.replicates, n=cfg.n, seed=cfg.seed, specs=cfg.specs,
        allow_partial=cfg.allow_partial, workers=cfg.workers, variant=variant,
    ))
    rows = []
    for res in results:
        theory = theoretical_mse(res.spec, params, th, variant).mse
        if theory:
            ratio = res.empirical_mse / theory
        else:
            ratio = 1.0 if res.empirical_mse == 0 else math.inf
        rows.append(ValidationRow(res, theory, ratio, regime, small))
    return rows


@dataclass(frozen=True)
class ArbitrationRow:
    """Empirical mean and MSE of a fixed-weight ``T`` next to both variants' predictions."""

    result: SimulationResult
    predicted_mean: dict[Variant, float]
    predicted_mse: dict[Variant, float]

    def bias_z(self, variant: Variant) -> float:
        """Gap between empirical and predicted mean in Monte Carlo standard errors."""
        gap = self.result.empirical_mean - self.predicted_mean[variant]
        return gap / self.result.bias_stderr

    def mse_ratio(self, variant: Variant) -> float:
        return self.result.empirical_mse / self.predicted_mse[variant]

    @property
    def winner(self) -> Variant:
        return min(Variant, key=lambda v: abs(self.bias_z(v)))


def arbitrate_variants(
    pop: BivariatePopulation,
    params: PopulationParams,
    specs: list[ProposedT],
    n: int,
    seed: int,
    replicates: int,
    workers: int = 1,
) -> list[ArbitrationRow]:
    """Compare fixed-weight ``T`` simulations with the printed and rederived models.

    At ``(w1, w2) = (1, 0)`` the two models give the same MSE, so the mean
    ``E[T] = S_y^2 (w1 B4 + w2 B5)`` is what separates them.
    """
    th = theta(n, pop.N)
    for s in specs:
        if not isinstance(s, ProposedT) or s.w1 is None:
            raise ValueError("arbitration needs ProposedT specs with explicit weights")
    cfg = SimulationConfig(replicates=replicates, n=n, seed=seed, specs=list(specs), workers=workers)
    rows = []
    for spec, res in zip(specs, run(pop, params, cfg)):
        means = {v: t_expectation(params, th, spec.m, spec.w, spec.A, spec.w1, spec.w2, v) for v in Variant}
        mses = {v: t_mse_at(params, th, spec.m, spec.w, spec.A, spec.w1, spec.w2, v) for v in Variant}
        rows.append(ArbitrationRow(res, means, mses))
    return rows
