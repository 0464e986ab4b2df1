"""Finite bivariate populations and the moment constants derived from them.

Two divisor conventions coexist here and both are deliberate:

* population variances ``Sy2``/``Sx2`` use ``N - 1``;
* central product-moments ``mu_pq`` use ``N``.

Kurtosis ratios and ``lambda22`` are ratios of ``mu_pq`` and are therefore the
same under either convention.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    DegeneratePopulation,
    InvalidDesign,
    InvariantViolation,
    MalformedRow,
    MissingFile,
    MissingKey,
)

# relative slack for Cauchy-Schwarz style inequalities that hold with equality
# for exactly proportional data
_CS_SLACK = 1e-12

# When a parameter file supplies both C_yx and rho_yx, they must agree to this
# relative tolerance. Published parameters are rounded to 3-5 decimals, so a
# tighter default would reject real inputs.
CYX_FILE_RTOL = 1e-3
CYX_EXACT_RTOL = 1e-9
SD_VAR_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class BivariatePopulation:
    """A finite population of ``(y, x)`` pairs."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=np.float64)
        x = np.array(self.x, dtype=np.float64)
        if y.ndim != 1 or x.ndim != 1 or y.shape != x.shape:
            raise DegeneratePopulation("y and x must be 1-d sequences of equal length")
        if y.size < 2:
            raise DegeneratePopulation(f"population needs N >= 2 units, got {y.size}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DegeneratePopulation("population contains non-finite values")
        if np.all(y == y[0]):
            raise DegeneratePopulation("study variable y has zero variance")
        if np.all(x == x[0]):
            raise DegeneratePopulation("auxiliary variable x has zero variance")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def N(self) -> int:
        return int(self.y.size)

    def scaled(self, ky: float = 1.0, kx: float = 1.0) -> BivariatePopulation:
        return BivariatePopulation(self.y * ky, self.x * kx)


@dataclass(frozen=True)
class PopulationParams:
    """Population-level constants used by the MSE theory.

    Starred quantities (``beta2y_star`` ...) are derived, never stored.
    ``n`` is carried through from parameter files that specify a design.
    """

    N: int
    Sy2: float
    Sx2: float
    Cy: float
    Cx: float
    rho_yx: float
    Cyx: float
    beta2y: float
    beta2x: float
    lambda22: float
    Ybar: float | None = None
    Xbar: float | None = None
    n: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        for name in ("Sy2", "Sx2", "Cy", "Cx", "rho_yx", "Cyx", "beta2y", "beta2x", "lambda22"):
            if not math.isfinite(getattr(self, name)):
                raise InvariantViolation(f"{name} must be finite")
        if self.N < 2:
            raise InvariantViolation(f"N must be >= 2, got {self.N}")
        if self.Sy2 <= 0 or self.Sx2 <= 0:
            raise InvariantViolation("population variances must be positive")
        if self.Cy == 0 or self.Cx == 0:
            raise InvariantViolation("coefficients of variation must be nonzero")
        if abs(self.rho_yx) > 1 + _CS_SLACK:
            raise InvariantViolation(f"rho_yx = {self.rho_yx} outside [-1, 1]")
        if self.beta2y < 1 - _CS_SLACK:
            raise InvariantViolation(f"beta2_y = {self.beta2y} < 1 is impossible")
        if self.beta2x < 1 - _CS_SLACK:
            raise InvariantViolation(f"beta2_x = {self.beta2x} < 1 is impossible")
        if self.lambda22**2 > self.beta2y * self.beta2x * (1 + _CS_SLACK):
            raise InvariantViolation("lambda22^2 exceeds beta2_y * beta2_x")
        if self.n is not None and not 2 <= self.n <= self.N:
            raise InvalidDesign(f"n = {self.n} outside [2, N = {self.N}]")

    @property
    def Sy(self) -> float:
        return math.sqrt(self.Sy2)

    @property
    def Sx(self) -> float:
        return math.sqrt(self.Sx2)

    @property
    def beta2y_star(self) -> float:
        return self.beta2y - 1.0

    @property
    def beta2x_star(self) -> float:
        return self.beta2x - 1.0

    @property
    def lambda22_star(self) -> float:
        return self.lambda22 - 1.0

    @property
    def rho_star(self) -> float:
        """Correlation between ``s_y^2`` and ``s_x^2`` to first order."""
        denom = math.sqrt(self.beta2y_star * self.beta2x_star)
        if denom == 0:
            return 0.0
        return self.lambda22_star / denom

    def ybar(self) -> float:
        return self.Ybar if self.Ybar is not None else self.Sy / self.Cy

    def xbar(self) -> float:
        return self.Xbar if self.Xbar is not None else self.Sx / self.Cx

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready mapping accepted back by :func:`load_params`."""
        out: dict[str, Any] = {
            "N": self.N,
            "S_y": self.Sy,
            "S_x": self.Sx,
            "S_y2": self.Sy2,
            "S_x2": self.Sx2,
            "C_y": self.Cy,
            "C_x": self.Cx,
            "rho_yx": self.rho_yx,
            "C_yx": self.Cyx,
            "beta2_y": self.beta2y,
            "beta2_x": self.beta2x,
            "lambda22": self.lambda22,
            "Ybar": self.ybar(),
            "Xbar": self.xbar(),
            "beta2_y_star": self.beta2y_star,
            "beta2_x_star": self.beta2x_star,
            "lambda22_star": self.lambda22_star,
            "rho_star": self.rho_star,
        }
        if self.n is not None:
            out["n"] = self.n
        return out

    def scaled_y(self, k: float) -> PopulationParams:
        """Parameters of the population with ``y`` multiplied by ``k > 0``."""
        return PopulationParams(
            N=self.N, Sy2=self.Sy2 * k * k, Sx2=self.Sx2, Cy=self.Cy, Cx=self.Cx,
            rho_yx=self.rho_yx, Cyx=self.Cyx, beta2y=self.beta2y, beta2x=self.beta2x,
            lambda22=self.lambda22, Ybar=None if self.Ybar is None else self.Ybar * k,
            Xbar=self.Xbar, n=self.n,
        )


def central_moment(pop: BivariatePopulation, p: int, q: int) -> float:
    """``mu_pq = (1/N) sum (y_i - Ybar)^p (x_i - Xbar)^q`` with a two-pass scheme."""
    if p < 0 or q < 0 or p + q < 1:
        raise ValueError("need non-negative p, q with p + q >= 1")
    dy = pop.y - math.fsum(pop.y) / pop.N
    dx = pop.x - math.fsum(pop.x) / pop.N
    return math.fsum((dy**p) * (dx**q)) / pop.N


def derive_params(pop: BivariatePopulation) -> PopulationParams:
    N = pop.N
    ybar = math.fsum(pop.y) / N
    xbar = math.fsum(pop.x) / N
    dy = pop.y - ybar
    dx = pop.x - xbar
    dy2 = dy * dy
    dx2 = dx * dx
    mu20 = math.fsum(dy2) / N
    mu02 = math.fsum(dx2) / N
    mu11 = math.fsum(dy * dx) / N
    mu40 = math.fsum(dy2 * dy2) / N
    mu04 = math.fsum(dx2 * dx2) / N
    mu22 = math.fsum(dy2 * dx2) / N
    if mu20 == 0 or mu02 == 0:
        raise DegeneratePopulation("zero variance in y or x")
    if ybar == 0 or xbar == 0:
        raise DegeneratePopulation("coefficient of variation undefined for a zero mean")
    Sy2 = mu20 * N / (N - 1)
    Sx2 = mu02 * N / (N - 1)
    Cy = math.sqrt(Sy2) / ybar
    Cx = math.sqrt(Sx2) / xbar
    rho = mu11 / math.sqrt(mu20 * mu02)
    return PopulationParams(
        N=N,
        Sy2=Sy2,
        Sx2=Sx2,
        Cy=Cy,
        Cx=Cx,
        rho_yx=rho,
        Cyx=rho * Cy * Cx,
        beta2y=mu40 / (mu20 * mu20),
        beta2x=mu04 / (mu02 * mu02),
        lambda22=mu22 / (mu20 * mu02),
        Ybar=ybar,
        Xbar=xbar,
    )


def theta(n: int, N: int) -> float:
    """Finite-population design factor ``1/n - 1/N``."""
    if n < 2 or n > N:
        raise InvalidDesign(f"need 2 <= n <= N, got n = {n}, N = {N}")
    return 1.0 / n - 1.0 / N


def load_csv(path: str | os.PathLike) -> BivariatePopulation:
    """Read a ``y,x`` CSV file into a population, preserving row order."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    ys: list[float] = []
    xs: list[float] = []
    with path.open(encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["y", "x"]:
            raise MalformedRow(1, "header must be 'y,x'")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise MalformedRow(line, f"expected 2 fields, got {len(row)}")
            try:
                yv, xv = float(row[0]), float(row[1])
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            if not (math.isfinite(yv) and math.isfinite(xv)):
                raise MalformedRow(line, "non-finite value")
            ys.append(yv)
            xs.append(xv)
    return BivariatePopulation(np.array(ys), np.array(xs))


_REQUIRED = ("N", "C_y", "C_x", "rho_yx", "beta2_y", "beta2_x", "lambda22")


def _spread(doc: dict, sd_key: str, var_key: str) -> float:
    sd = doc.get(sd_key)
    var = doc.get(var_key)
    if sd is None and var is None:
        raise MissingKey(sd_key)
    if sd is not None and var is not None:
        if not math.isclose(float(sd) ** 2, float(var), rel_tol=SD_VAR_RTOL):
            raise InvariantViolation(f"{sd_key}^2 and {var_key} disagree")
        return float(var)
    return float(var) if var is not None else float(sd) ** 2


def params_from_mapping(doc: dict[str, Any], *, cyx_rtol: float = CYX_FILE_RTOL) -> PopulationParams:
    for key in _REQUIRED:
        if key not in doc:
            raise MissingKey(key)
    Sy2 = _spread(doc, "S_y", "S_y2")
    Sx2 = _spread(doc, "S_x", "S_x2")
    Cy, Cx, rho = float(doc["C_y"]), float(doc["C_x"]), float(doc["rho_yx"])
    implied = rho * Cy * Cx
    if doc.get("C_yx") is None:
        Cyx = implied
    else:
        Cyx = float(doc["C_yx"])
        if abs(Cyx - implied) > cyx_rtol * abs(Cyx):
            raise InvariantViolation(
                f"C_yx = {Cyx} disagrees with rho_yx*C_y*C_x = {implied}"
            )
    n = doc.get("n")
    if isinstance(doc["N"], float) and not doc["N"].is_integer():
        raise InvariantViolation("N must be an integer")
    try:
        return PopulationParams(
            N=int(doc["N"]),
            Sy2=Sy2,
            Sx2=Sx2,
            Cy=Cy,
            Cx=Cx,
            rho_yx=rho,
            Cyx=Cyx,
            beta2y=float(doc["beta2_y"]),
            beta2x=float(doc["beta2_x"]),
            lambda22=float(doc["lambda22"]),
            Ybar=None if doc.get("Ybar") is None else float(doc["Ybar"]),
            Xbar=None if doc.get("Xbar") is None else float(doc["Xbar"]),
            n=None if n is None else int(n),
        )
    except InvalidDesign as exc:
        raise InvariantViolation(str(exc)) from None


def load_params(path: str | os.PathLike) -> PopulationParams:
    """Load a JSON parameter file.

    Required keys: ``N, S_y (or S_y2), S_x (or S_x2), C_y, C_x, rho_yx,
    beta2_y, beta2_x, lambda22``. Optional: ``C_yx``, ``n``, ``Ybar``, ``Xbar``.
    Other keys (e.g. the starred values written by ``params --out json``) are
    ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRow(exc.lineno, exc.msg) from None
    if not isinstance(doc, dict):
        raise InvariantViolation("parameter file must hold a JSON object")
    return params_from_mapping(doc)


def synthetic_population(N: int = 10_000, seed: int = 20240601, shape: float = 4.0) -> BivariatePopulation:
    """Correlated, right-skewed population for Monte Carlo checks.

    ``x`` is shifted gamma and ``y = 2x + 1.5 g`` with independent gamma noise
    ``g`` of the same shape, so corr(y, x) = 2 / 2.5 = 0.8 in expectation and
    ``x`` has kurtosis ``3 + 6 / shape``.
    """
    rng = np.random.default_rng(seed)
    x = rng.gamma(shape, 1.0, size=N) + 1.0
    y = 2.0 * x + 1.5 * rng.gamma(shape, 1.0, size=N)
    return BivariatePopulation(y, x)
