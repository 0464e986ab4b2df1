"""Grid search over the generator constants ``(m, w, c, d)`` of the proposed class."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyGrid, InvalidSpec, MalformedRow, MissingFile, VarestError
from .estimators import ProposedT
from .mse import (
    MseReport,
    Variant,
    t_mse_at,
    t_optimal,
    t_optimal_constrained,
    var_usual,
)
from .population import PopulationParams

DEFAULT_MW = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
REFINE_TOP_K = 5
REFINE_PASSES = 2


@dataclass
class Grid:
    """Search grid. Each ``weights`` entry is ``"opt"`` or a fixed ``(w1, w2)`` pair."""

    m: Sequence[float]
    w: Sequence[float]
    cd: Sequence[tuple[float, float]]
    weights: Sequence[str | tuple[float, float]] = ("opt",)

    def points(self):
        for c, d in self.cd:
            if c == d:
                continue
            for m in self.m:
                for w in self.w:
                    for wt in self.weights:
                        yield float(m), float(w), float(c), float(d), wt

    def size(self) -> int:
        return sum(1 for _ in self.points())


def default_grid(params: PopulationParams) -> Grid:
    b2x, cx = params.beta2x, params.Cx
    return Grid(
        m=DEFAULT_MW,
        w=DEFAULT_MW,
        cd=[(2.0, 1.0), (b2x, cx), (cx, b2x), (1.0, b2x), (1.0, cx)],
    )


def parse_range(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma list ``"1,2,3"``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidSpec(f"range must be start:stop:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise InvalidSpec(f"bad range {text!r}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + k * step, 12) for k in range(count)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise InvalidSpec(f"bad value list {text!r}") from None


def _named(value, params: PopulationParams) -> float:
    if isinstance(value, str):
        names = {"beta2x": params.beta2x, "beta2y": params.beta2y, "cx": params.Cx, "cy": params.Cy}
        key = value.strip().lower().replace("_", "")
        if key in names:
            return names[key]
        return float(value)
    return float(value)


def parse_cd(text: str, params: PopulationParams) -> tuple[float, float]:
    """``"c,d"``; each side may be a number or one of beta2x, beta2y, Cx, Cy."""
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidSpec(f"--cd expects c,d, got {text!r}")
    try:
        return _named(parts[0], params), _named(parts[1], params)
    except ValueError:
        raise InvalidSpec(f"bad c,d pair {text!r}") from None


def load_grid(path: str | os.PathLike, params: PopulationParams) -> Grid:
    """JSON grid file: ``{"m": [...] | "a:b:s", "w": ..., "cd": [[c, d], ...], "weights": [...]}``."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRow(exc.lineno, exc.msg) from None
    base = default_grid(params)

    def values(key, default):
        raw = doc.get(key)
        if raw is None:
            return list(default)
        return parse_range(raw) if isinstance(raw, str) else [float(v) for v in raw]

    cd = base.cd
    if "cd" in doc:
        cd = [(_named(c, params), _named(d, params)) for c, d in doc["cd"]]
    weights: list = []
    for wt in doc.get("weights", ["opt"]):
        weights.append("opt" if wt == "opt" else (float(wt[0]), float(wt[1])))
    return Grid(values("m", base.m), values("w", base.w), cd, weights)


@dataclass
class TuningPoint:
    spec: ProposedT
    weights: str | tuple[float, float]
    report: MseReport
    constrained: MseReport | None = None
    errors: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.report.mse is not None and not self.report.breakdown_flag

    def sort_key(self):
        mse = self.report.mse if self.report.mse is not None else math.inf
        return (not self.valid, mse, str(self.spec))


def _evaluate_point(params, theta, variant, constrained, point) -> TuningPoint:
    m, w, c, d, wt = point
    base = ProposedT(m, w, c, d)
    errors: list[str] = []
    if wt == "opt":
        try:
            rep = t_optimal(params, theta, m, w, c, d, variant)
        except VarestError as exc:
            rep = MseReport(spec=base, mse=None, variant=Variant(variant), error=str(exc), breakdown_flag=True)
    else:
        w1, w2 = wt
        spec = ProposedT(m, w, c, d, w1, w2)
        value = t_mse_at(params, theta, m, w, spec.A, w1, w2, variant)
        rep = MseReport(spec=spec, mse=value, variant=Variant(variant),
                        weights_used={"w1": w1, "w2": w2}, breakdown_flag=value <= 0)
    if rep.mse is not None and rep.mse > 0:
        rep.relative_efficiency = var_usual(params, theta) / rep.mse
    cons = None
    if constrained:
        try:
            cons = t_optimal_constrained(params, theta, m, w, c, d, variant)
        except VarestError as exc:
            errors.append(f"constrained: {exc}")
    spec = rep.spec if rep.mse is not None else base
    return TuningPoint(spec=spec, weights=wt, report=rep, constrained=cons, errors=errors)


def _evaluate(params, theta, variant, constrained, points, workers) -> list[TuningPoint]:
    def job(p):
        return _evaluate_point(params, theta, variant, constrained, p)

    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, points))
    return [job(p) for p in points]


def _step(values: Sequence[float]) -> float:
    v = np.unique(np.asarray(values, dtype=float))
    return float(np.min(np.diff(v))) if v.size > 1 else 0.5


def _key(point) -> tuple:
    m, w, c, d, wt = point
    return (round(m, 10), round(w, 10), c, d, wt)


def minimize_t(
    params: PopulationParams,
    theta: float,
    grid: Grid,
    variant: Variant = Variant.AS_PRINTED,
    constrained: bool = False,
    *,
    refine: bool = True,
    workers: int = 1,
) -> list[TuningPoint]:
    """Evaluate the optimal-weight MSE at every grid point, best first.

    Breakdown-flagged or failed points sort after every valid point. With
    ``refine``, two passes add the half-step neighbours in ``(m, w)`` of the
    five best valid optimal-weight points (c and d stay on their grid pairs).
    """
    points = list(grid.points())
    if not points:
        raise EmptyGrid("grid has no points with c != d")
    seen = {_key(p) for p in points}
    results = _evaluate(params, theta, variant, constrained, points, workers)

    if refine:
        hm, hw = _step(grid.m), _step(grid.w)
        for _ in range(REFINE_PASSES):
            hm, hw = hm / 2.0, hw / 2.0
            ranked = sorted(results, key=TuningPoint.sort_key)
            top = [t for t in ranked if t.valid and t.weights == "opt"][:REFINE_TOP_K]
            new = []
            for t in top:
                for dm in (-hm, 0.0, hm):
                    for dw in (-hw, 0.0, hw):
                        p = (t.spec.m + dm, t.spec.w + dw, t.spec.c, t.spec.d, "opt")
                        if _key(p) not in seen:
                            seen.add(_key(p))
                            new.append(p)
            results.extend(_evaluate(params, theta, variant, constrained, new, workers))

    return sorted(results, key=TuningPoint.sort_key)


def recover(
    params: PopulationParams,
    theta: float,
    target_mse: float,
    grid: Grid,
    variant: Variant = Variant.AS_PRINTED,
    tolerance: float = 1e-3,
    *,
    constrained: bool = False,
    workers: int = 1,
) -> list[TuningPoint]:
    """Grid points whose non-breakdown MSE is within ``tolerance`` (relative) of the target.

    With ``constrained`` the ``w1 + w2 = 1`` optimum is matched as well. An
    empty list is a legitimate answer.
    """
    if not target_mse > 0:
        raise ValueError("target_mse must be positive")
    ranked = minimize_t(params, theta, grid, variant, constrained, refine=False, workers=workers)

    def close(rep: MseReport | None) -> bool:
        return (
            rep is not None
            and rep.mse is not None
            and not rep.breakdown_flag
            and abs(rep.mse - target_mse) <= tolerance * target_mse
        )

    return [t for t in ranked if close(t.report) or (constrained and close(t.constrained))]
