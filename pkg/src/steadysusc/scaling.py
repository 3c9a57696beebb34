"""Parameter sweeps of the susceptibilities, extremum location and scaling fits."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .metrics import SusceptibilityPoint, fidelity_susceptibility, trace_distance_susceptibility

log = logging.getLogger(__name__)

METRICS = ("chi_f", "chi_t")


class BoundaryExtremum(ValueError):
    """The extremum sits on the first or last grid point; widen the grid."""

    def __init__(self, message, p, value):
        super().__init__(message)
        self.p = p
        self.value = value


@dataclass(frozen=True)
class SusceptibilityCurve:
    model_id: str
    param_name: str
    grid: np.ndarray
    points: tuple
    delta_p: float
    solver: str
    failed: dict = field(default_factory=dict)
    diagnostics: tuple = ()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.size and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if len(self.points) != grid.size:
            raise ValueError("need exactly one point per grid value")
        object.__setattr__(self, "grid", grid)

    def values(self, metric):
        return np.array([np.nan if getattr(pt, metric) is None else getattr(pt, metric)
                         for pt in self.points])


@dataclass(frozen=True)
class ScalingFit:
    kind: Literal["power_law", "linear"]
    params: tuple
    r_squared: float
    residuals: tuple

    def as_dict(self):
        names = ("kappa", "eta") if self.kind == "power_law" else ("slope", "intercept")
        return {"kind": self.kind, **dict(zip(names, self.params)),
                "r_squared": self.r_squared, "residuals": list(self.residuals)}


# -- sweeps ----------------------------------------------------------------

def _point(family, p, delta_p, metrics, solve, chi_f_basis):
    try:
        rho_p, diag_p = solve(p)
        rho_pp, _ = solve(p + delta_p)
    except Exception as exc:  # solver failures are recorded per point
        log.warning("point %s=%g failed: %s", family.param_name, p, exc)
        return SusceptibilityPoint(p, delta_p), f"{type(exc).__name__}: {exc}", {}
    chi_f = fidelity_susceptibility(rho_p, rho_pp, delta_p, basis=chi_f_basis) if "chi_f" in metrics else None
    chi_t = trace_distance_susceptibility(rho_p, rho_pp, delta_p) if "chi_t" in metrics else None
    return SusceptibilityPoint(p, delta_p, chi_f, chi_t), None, diag_p


def sweep(family, grid, delta_p, metrics=METRICS, threads=1, chi_f_basis="midpoint",
          progress=None):
    """Susceptibilities of ``family`` at every grid value.

    The fidelity susceptibility is evaluated in the eigenbasis of the
    midpoint state by default (see :func:`fidelity_susceptibility`), which
    converges in ``delta_p`` at second order.

    ``family`` must provide ``model_id``, ``param_name``, ``solver`` and
    ``solve(p) -> (rho, diagnostics)``. States at ``p + delta_p`` are shared
    with the next grid point when the grid spacing equals ``delta_p``.
    ``progress(index, point, error, diagnostics)`` is called as points finish.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty grid")
    if not delta_p > 0:
        raise ValueError("delta_p must be positive")
    if grid.size > 1 and delta_p > np.min(np.diff(grid)) * (1 + 1e-12):
        raise ValueError("delta_p must not exceed the grid spacing")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")

    memo = {}

    def solve(p):
        key = float(p)
        if key not in memo:
            memo[key] = family.solve(key)
        return memo[key]

    def task(i, p, solver):
        r = _point(family, p, delta_p, metrics, solver, chi_f_basis)
        if progress is not None:
            progress(i, *r)
        return r

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda a: task(*a, family.solve), enumerate(grid)))
    else:
        results = [task(i, p, solve) for i, p in enumerate(grid)]

    points = tuple(r[0] for r in results)
    failed = {float(p): r[1] for p, r in zip(grid, results) if r[1] is not None}
    diagnostics = tuple(r[2] for r in results)
    return SusceptibilityCurve(family.model_id, family.param_name, grid, points, delta_p,
                               family.solver, failed, diagnostics)


# -- extrema ---------------------------------------------------------------

def local_extrema(values, which="min"):
    """Indices of strict interior local minima (or maxima) of a sampled curve."""
    v = np.asarray(values, dtype=float)
    if which == "max":
        v = -v
    inner = np.arange(1, v.size - 1)
    mask = (v[inner] < v[inner - 1]) & (v[inner] < v[inner + 1])
    return inner[mask]


def parabola_vertex(x, y):
    """Vertex of the parabola through three points."""
    (x0, x1, x2), (y0, y1, y2) = x, y
    d0 = (y1 - y0) / (x1 - x0)
    d1 = (y2 - y1) / (x2 - x1)
    curv = (d1 - d0) / (x2 - x0)
    if curv == 0:
        return x1, y1
    xv = (x0 + x1) / 2 - d0 / (2 * curv)
    yv = y0 + d0 * (xv - x0) + curv * (xv - x0) * (xv - x1)
    return xv, yv


def locate_extremum(curve, which="min_chi_f"):
    """Grid extremum refined by the parabola through it and its two neighbours."""
    metric, kind = {"min_chi_f": ("chi_f", "min"), "max_chi_t": ("chi_t", "max")}[which]
    x = curve.grid
    y = curve.values(metric)
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 3:
        raise ValueError("need at least three valid points")
    i = int(np.argmin(y) if kind == "min" else np.argmax(y))
    if i == 0 or i == x.size - 1:
        raise BoundaryExtremum(f"{which} at grid boundary {curve.param_name}={x[i]:g}", x[i], y[i])
    xv, yv = parabola_vertex(x[i - 1:i + 2], y[i - 1:i + 2])
    xv = min(max(xv, x[i - 1]), x[i + 1])
    return float(xv), float(yv)


# -- fits ------------------------------------------------------------------

def _r_squared(y, fit):
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - ss_res / ss_tot))


def _ols(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)


def fit_power_law(xs, ys):
    """Least squares on (ln x, ln y): y = kappa * x**eta."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("need at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    eta, c = _ols(lx, ly)
    fit = c + eta * lx
    return ScalingFit("power_law", (float(np.exp(c)), eta), _r_squared(ly, fit), tuple(ly - fit))


def fit_linear_extrapolate(xs, ys, x_target=0.0):
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("need at least two (x, y) pairs")
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissae")
    slope, intercept = _ols(x, y)
    fit = slope * x + intercept
    result = ScalingFit("linear", (slope, intercept), _r_squared(y, fit), tuple(y - fit))
    return result, slope * x_target + intercept
