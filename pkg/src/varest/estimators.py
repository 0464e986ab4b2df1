"""Point estimators of the finite-population variance ``S_y^2``.

Each estimator is available twice: as a scalar function on :class:`SampleStats`
that raises on an invalid sample, and through :func:`evaluate_array`, which
evaluates many samples at once and reports invalid ones in a status array
instead of raising. Both paths share the same kernels.

Estimator specifications have a canonical text form used on the command line::

    usual  ratio  reg:b=0.25  reg:opt  kc:1  kcc:opt  kcc:alpha1=0.2
    gs:alpha=0,opt  gs:alpha=1,d1=0.9,d2=1e-7
    t:m=-1,w=1,c=2,d=1,opt  t:m=0,w=1,c=2,d=1,w1=1,w2=0

``opt`` leaves weights unresolved; :func:`varest.mse.resolve` fills them in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

import numpy as np

from .errors import DegenerateSample, InvalidSpec, NumericalDomain

if TYPE_CHECKING:
    from .population import PopulationParams
    from .sampling import SampleStats

OK, DEGENERATE, DOMAIN = 0, 1, 2


def _num(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True)
class Usual:
    def __str__(self) -> str:
        return "usual"

    @property
    def label(self) -> str:
        return "S_y^2"


@dataclass(frozen=True)
class IsakiRatio:
    def __str__(self) -> str:
        return "ratio"

    @property
    def label(self) -> str:
        return "S_R^2"


@dataclass(frozen=True)
class Regression:
    """``s_y^2 + b (S_x^2 - s_x^2)``; ``b=None`` means the population-optimal slope."""

    b: float | None = None

    def __str__(self) -> str:
        return "reg:opt" if self.b is None else f"reg:b={_num(self.b)}"

    @property
    def label(self) -> str:
        return "S_Reg^2"


@dataclass(frozen=True)
class KadilarCingi:
    i: int

    def __post_init__(self) -> None:
        if self.i not in (1, 2, 3, 4):
            raise InvalidSpec(f"Kadilar-Cingi index must be 1..4, got {self.i}")

    def __str__(self) -> str:
        return f"kc:{self.i}"

    @property
    def label(self) -> str:
        return f"S_KC{self.i}^2"


@dataclass(frozen=True)
class KCCombined:
    """``alpha1 s_y^2 + (1 - alpha1) tau s_y^2 S_x^2/s_x^2``.

    ``alpha1=None`` requests the optimal weight; ``tau=None`` takes the
    population value ``(1 + theta C_yx) / (1 + theta C_x^2)``.
    """

    alpha1: float | None = None
    tau: float | None = None

    def __post_init__(self) -> None:
        if self.alpha1 is None and self.tau is not None:
            raise InvalidSpec("kcc: tau given without alpha1")

    @property
    def alpha2(self) -> float | None:
        return None if self.alpha1 is None else 1.0 - self.alpha1

    def __str__(self) -> str:
        if self.alpha1 is None:
            return "kcc:opt"
        s = f"kcc:alpha1={_num(self.alpha1)}"
        return s if self.tau is None else f"{s},tau={_num(self.tau)}"

    @property
    def label(self) -> str:
        return "S_KC^2"


@dataclass(frozen=True)
class GuptaShabbirPR:
    alpha: float
    d1: float | None = None
    d2: float | None = None

    def __post_init__(self) -> None:
        if (self.d1 is None) != (self.d2 is None):
            raise InvalidSpec("gs: give both d1 and d2, or opt")

    def __str__(self) -> str:
        head = f"gs:alpha={_num(self.alpha)}"
        if self.d1 is None:
            return f"{head},opt"
        return f"{head},d1={_num(self.d1)},d2={_num(self.d2)}"

    @property
    def label(self) -> str:
        return f"S_PR^2(alpha={_num(self.alpha)})"


@dataclass(frozen=True)
class ProposedT:
    m: float
    w: float
    c: float
    d: float
    w1: float | None = None
    w2: float | None = None

    def __post_init__(self) -> None:
        if self.c == self.d:
            raise InvalidSpec("proposed T needs c != d")
        if (self.w1 is None) != (self.w2 is None):
            raise InvalidSpec("t: give both w1 and w2, or opt")

    @property
    def A(self) -> float:
        return self.d / (self.c - self.d)

    def __str__(self) -> str:
        head = f"t:m={_num(self.m)},w={_num(self.w)},c={_num(self.c)},d={_num(self.d)}"
        if self.w1 is None:
            return f"{head},opt"
        return f"{head},w1={_num(self.w1)},w2={_num(self.w2)}"

    @property
    def label(self) -> str:
        return f"T(m={_num(self.m)})"


EstimatorSpec = Union[
    Usual, IsakiRatio, Regression, KadilarCingi, KCCombined, GuptaShabbirPR, ProposedT
]


def is_resolved(spec: EstimatorSpec) -> bool:
    """True when the spec has no ``opt`` placeholders left."""
    if isinstance(spec, Regression):
        return spec.b is not None
    if isinstance(spec, KCCombined):
        return spec.alpha1 is not None and spec.tau is not None
    if isinstance(spec, GuptaShabbirPR):
        return spec.d1 is not None
    if isinstance(spec, ProposedT):
        return spec.w1 is not None
    return True


def _parse_kv(name: str, args: list[str], allowed: set[str]) -> tuple[dict[str, float], bool]:
    values: dict[str, float] = {}
    opt = False
    for tok in args:
        tok = tok.strip()
        if tok == "opt":
            opt = True
            continue
        key, sep, raw = tok.partition("=")
        key = key.strip()
        if not sep or key not in allowed:
            raise InvalidSpec(f"{name}: unexpected argument {tok!r}")
        if key in values:
            raise InvalidSpec(f"{name}: duplicate argument {key!r}")
        try:
            val = float(raw)
        except ValueError:
            raise InvalidSpec(f"{name}: {key} must be a number, got {raw!r}") from None
        if not math.isfinite(val):
            raise InvalidSpec(f"{name}: {key} must be finite")
        values[key] = val
    return values, opt


def parse_spec(text: str) -> EstimatorSpec:
    """Parse the canonical text form of an estimator specification."""
    text = text.strip()
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    args = [a for a in rest.split(",") if a.strip()] if rest else []

    if name in ("usual", "ratio"):
        if args:
            raise InvalidSpec(f"{name} takes no arguments")
        return Usual() if name == "usual" else IsakiRatio()
    if name == "reg":
        vals, opt = _parse_kv(name, args, {"b"})
        if opt == ("b" in vals):
            raise InvalidSpec("reg: give exactly one of b=<value> or opt")
        return Regression(vals.get("b"))
    if name == "kc":
        if len(args) != 1:
            raise InvalidSpec("kc: expected a single index, e.g. kc:1")
        try:
            i = int(args[0])
        except ValueError:
            raise InvalidSpec(f"kc: index must be an integer, got {args[0]!r}") from None
        return KadilarCingi(i)
    if name == "kcc":
        vals, opt = _parse_kv(name, args, {"alpha1", "tau"})
        if opt and vals:
            raise InvalidSpec("kcc: opt cannot be combined with explicit values")
        if not opt and "alpha1" not in vals:
            raise InvalidSpec("kcc: give alpha1=<value> or opt")
        return KCCombined(vals.get("alpha1"), vals.get("tau"))
    if name == "gs":
        vals, opt = _parse_kv(name, args, {"alpha", "d1", "d2"})
        if "alpha" not in vals:
            raise InvalidSpec("gs: alpha is required")
        if opt and ("d1" in vals or "d2" in vals):
            raise InvalidSpec("gs: opt cannot be combined with d1/d2")
        if not opt and not ("d1" in vals and "d2" in vals):
            raise InvalidSpec("gs: give d1 and d2, or opt")
        return GuptaShabbirPR(vals["alpha"], vals.get("d1"), vals.get("d2"))
    if name == "t":
        vals, opt = _parse_kv(name, args, {"m", "w", "c", "d", "w1", "w2"})
        missing = [k for k in ("m", "w", "c", "d") if k not in vals]
        if missing:
            raise InvalidSpec(f"t: missing {', '.join(missing)}")
        if opt and ("w1" in vals or "w2" in vals):
            raise InvalidSpec("t: opt cannot be combined with w1/w2")
        if not opt and not ("w1" in vals and "w2" in vals):
            raise InvalidSpec("t: give w1 and w2, or opt")
        return ProposedT(vals["m"], vals["w"], vals["c"], vals["d"], vals.get("w1"), vals.get("w2"))
    raise InvalidSpec(f"unknown estimator {name!r}")


def parse_specs(items: list[str]) -> list[EstimatorSpec]:
    """Parse CLI spec tokens; a token may hold several specs separated by ``;``."""
    out = []
    for item in items:
        for part in item.split(";"):
            if part.strip():
                out.append(parse_spec(part))
    return out


# --------------------------------------------------------------------------
# array kernels
# --------------------------------------------------------------------------

def _is_int(v: float) -> bool:
    return float(v).is_integer()


def _power(base: np.ndarray, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    """``base ** exponent`` with a status array instead of NaN/inf."""
    status = np.zeros(base.shape, dtype=np.int8)
    if exponent == 0:
        return np.ones_like(base), status
    if exponent < 0:
        status[base == 0] = DEGENERATE
    if not _is_int(exponent):
        status[base < 0] = DOMAIN
    safe = np.where(status == OK, base, 1.0)
    with np.errstate(all="ignore"):
        out = np.power(safe, exponent)
    return out, status


def _div(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    status = np.where(den == 0, DEGENERATE, OK).astype(np.int8)
    with np.errstate(all="ignore"):
        out = num / np.where(den == 0, 1.0, den)
    return out, status


def evaluate_array(
    spec: EstimatorSpec,
    sy2: np.ndarray,
    sx2: np.ndarray,
    params: PopulationParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a resolved spec on arrays of sample variances.

    Returns ``(values, status)``; ``status`` is ``OK`` (0), ``DEGENERATE`` (1)
    or ``DOMAIN`` (2) per element and ``values`` is NaN wherever status != 0.
    """
    sy2 = np.asarray(sy2, dtype=np.float64)
    sx2 = np.asarray(sx2, dtype=np.float64)
    Sx2 = params.Sx2
    status = np.zeros(sy2.shape, dtype=np.int8)

    if isinstance(spec, Usual):
        values = sy2.copy()
    elif isinstance(spec, IsakiRatio):
        factor, status = _div(np.full_like(sx2, Sx2), sx2)
        values = sy2 * factor
    elif isinstance(spec, Regression):
        if spec.b is None:
            raise InvalidSpec("reg:opt must be resolved before evaluation")
        values = sy2 + spec.b * (Sx2 - sx2)
    elif isinstance(spec, KadilarCingi):
        Cx, b2x = params.Cx, params.beta2x
        scale, shift = {1: (1.0, Cx), 2: (1.0, b2x), 3: (b2x, Cx), 4: (Cx, b2x)}[spec.i]
        factor, status = _div(np.full_like(sx2, Sx2 * scale + shift), sx2 * scale + shift)
        values = sy2 * factor
    elif isinstance(spec, KCCombined):
        if spec.alpha1 is None or spec.tau is None:
            raise InvalidSpec("kcc must be resolved before evaluation")
        ratio, status = _div(np.full_like(sx2, Sx2), sx2)
        values = spec.alpha1 * sy2 + (1.0 - spec.alpha1) * spec.tau * sy2 * ratio
    elif isinstance(spec, GuptaShabbirPR):
        if spec.d1 is None:
            raise InvalidSpec("gs:...,opt must be resolved before evaluation")
        powered, status = _power(sx2 / Sx2, spec.alpha)
        values = (spec.d1 * sy2 + spec.d2 * (Sx2 - sx2)) * (2.0 - powered)
    elif isinstance(spec, ProposedT):
        if spec.w1 is None:
            raise InvalidSpec("t:...,opt must be resolved before evaluation")
        base = (spec.c * Sx2 - spec.d * sx2) / ((spec.c - spec.d) * Sx2)
        first, st1 = _power(base, spec.m)
        second, st2 = _power(sx2 / Sx2, spec.w)
        status = np.maximum(st1, st2)
        values = spec.w1 * sy2 * first + spec.w2 * sy2 * (2.0 - second)
    else:
        raise InvalidSpec(f"not an estimator spec: {spec!r}")

    values = np.where(status == OK, values, np.nan)
    return values, status


def _scalar(spec: EstimatorSpec, stats: SampleStats, params: PopulationParams) -> float:
    values, status = evaluate_array(
        spec, np.array([stats.sy2]), np.array([stats.sx2]), params
    )
    if status[0] == DEGENERATE:
        raise DegenerateSample(f"{spec}: sample makes a denominator vanish (s_x^2 = {stats.sx2})")
    if status[0] == DOMAIN:
        raise NumericalDomain(f"{spec}: negative base raised to a fractional power")
    return float(values[0])


# --------------------------------------------------------------------------
# scalar API
# --------------------------------------------------------------------------

def usual(stats: SampleStats) -> float:
    return float(stats.sy2)


def isaki_ratio(stats: SampleStats, params: PopulationParams) -> float:
    return _scalar(IsakiRatio(), stats, params)


def regression(stats: SampleStats, params: PopulationParams, b: float) -> float:
    return _scalar(Regression(b), stats, params)


def kadilar_cingi(stats: SampleStats, params: PopulationParams, i: int) -> float:
    return _scalar(KadilarCingi(i), stats, params)


def kc_combined(stats: SampleStats, params: PopulationParams, alpha1: float, tau: float) -> float:
    return _scalar(KCCombined(alpha1, tau), stats, params)


def gupta_shabbir(
    stats: SampleStats, params: PopulationParams, alpha: float, d1: float, d2: float
) -> float:
    return _scalar(GuptaShabbirPR(alpha, d1, d2), stats, params)


def proposed_t(stats: SampleStats, params: PopulationParams, spec: ProposedT) -> float:
    return _scalar(spec, stats, params)


def evaluate(spec: EstimatorSpec, stats: SampleStats, params: PopulationParams) -> float:
    if isinstance(spec, Usual):
        return usual(stats)
    return _scalar(spec, stats, params)
