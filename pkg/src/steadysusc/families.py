"""One-parameter model families: steady state as a function of a control parameter."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kerr, xyz
from .liouville import (DENSE_LIMIT, ResidualTooLarge, build_liouvillian, liouvillian_spectrum,
                        Superoperator, restrict, steady_state_ed, steady_state_evolve)
from .symmetry import symmetric_basis

log = logging.getLogger(__name__)


def _all_down(n_sites):
    rho = np.zeros((2 ** n_sites, 2 ** n_sites), dtype=complex)
    rho[-1, -1] = 1.0
    return rho


def _vacuum(n_max):
    rho = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    rho[0, 0] = 1.0
    return rho


@dataclass
class _Family:
    solver: str = "ed"
    rk4_dt: float | None = None
    rk4_tol: float = 1e-10
    rk4_t_max: float = 1e4
    warm_start: bool = False
    cache: object = None
    _memo: dict = field(default_factory=dict, repr=False)
    _last: object = field(default=None, repr=False)

    def solver_settings(self):
        return {"solver": self.solver, "rk4_dt": self.rk4_dt, "rk4_tol": self.rk4_tol,
                "rk4_t_max": self.rk4_t_max, "warm_start": self.warm_start}

    def _rk4(self, L, rho0, diag):
        start = self._last if (self.warm_start and self._last is not None) else rho0
        rho = steady_state_evolve(L, start, dt=self.rk4_dt, conv_tol=self.rk4_tol,
                                  t_max=self.rk4_t_max, info=diag)
        self._last = rho
        return rho

    def _solve_superoperator(self, L, rho0):
        diag = {"method": self.solver}
        if self.solver == "ed":
            rho = steady_state_ed(L)
        elif self.solver == "rk4":
            rho = self._rk4(L, rho0, diag)
        elif self.solver == "auto":
            try:
                rho = steady_state_ed(L)
                diag["method"] = "ed"
            except (ResidualTooLarge, MemoryError) as exc:
                log.info("ED failed (%s); falling back to RK4", exc)
                diag["method"] = "rk4"
                rho = self._rk4(L, rho0, diag)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        diag["residual"] = L.full_residual(L.from_density(rho))
        return rho, diag

    def solve(self, p):
        """Steady state and solver diagnostics at control value ``p`` (memoized)."""
        p = float(p)
        if p in self._memo:
            return self._memo[p]
        L = self.liouvillian(p)
        key = None
        if self.cache is not None:
            key = self.cache.key(L, self.solver_settings())
            hit = self.cache.load(key)
            if hit is not None:
                self._memo[p] = hit
                return hit
        result = self._solve_superoperator(L, self.initial_state())
        result[1].update(self.extra_diagnostics(result[0], L))
        if self.cache is not None:
            self.cache.store(key, *result)
        self._memo[p] = result
        return result

    def extra_diagnostics(self, rho, L):
        return {}


@dataclass
class XYZFamily(_Family):
    """XYZ lattice with one coupling (default ``Jy``) as the control parameter."""

    base: xyz.XYZParams = field(default_factory=xyz.XYZParams)
    param_name: str = "Jy"
    reduce: bool = True
    _basis: object = field(default=None, repr=False)
    _affine: object = field(default=None, repr=False)

    @property
    def model_id(self):
        b = self.base
        return f"xyz-{b.Lx}x{b.Ly}-{b.bond_multiplicity}"

    def params(self, p):
        return self.base.with_(**{self.param_name: p})

    def _build(self, p):
        L = build_liouvillian(xyz.build_xyz_model(self.params(p)))
        if not self.reduce:
            return L
        if self._basis is None:
            b = self.base
            self._basis = symmetric_basis(b.Lx, b.Ly, b.bond_multiplicity)
        return restrict(L, self._basis)

    def liouvillian(self, p):
        # The generator is affine in each coupling: L(p) = L(0) + p (L(1) - L(0)).
        if self._affine is None:
            L0, L1 = self._build(0.0), self._build(1.0)
            self._affine = (L0, (L1.matrix - L0.matrix).tocsr())
        L0, slope = self._affine
        return Superoperator((L0.matrix + p * slope).tocsr(), L0.hilbert_dim, L0.basis)

    def initial_state(self):
        return _all_down(self.base.n_sites)


@dataclass
class KerrFamily(_Family):
    """Kerr oscillator with the two-photon drive ``G`` as the control parameter.

    ``n_max`` is fixed for the whole family so that states at neighbouring
    parameters live in the same space.
    """

    base: kerr.KerrParams = field(default_factory=kerr.KerrParams)
    param_name: str = "G"
    tail_levels: int = 5
    with_gap: bool = False

    @property
    def model_id(self):
        return f"kerr-U{self.base.U:.6g}-nmax{self.base.n_max}"

    @classmethod
    def for_grid(cls, U, grid, delta_p=0.0, gamma=1.0, delta=0.0, **kw):
        """Family whose truncation follows the n_max policy at the largest drive."""
        g_top = float(np.max(grid)) + delta_p
        n_max = kerr.default_n_max(g_top, U, gamma)
        return cls(base=kerr.KerrParams(U=U, G=g_top, delta=delta, gamma=gamma, n_max=n_max), **kw)

    def params(self, p):
        return self.base.with_(**{self.param_name: p})

    def liouvillian(self, p):
        return build_liouvillian(kerr.build_kerr_model(self.params(p)))

    def initial_state(self):
        return _vacuum(self.base.n_max)

    def extra_diagnostics(self, rho, L):
        diag = {"tail": kerr.truncation_check(rho, self.tail_levels)}
        if self.with_gap:
            diag["gap"] = self._gap(L)
        return diag

    def gap(self, p, how_many=None):
        """Real part of the slowest nonzero Liouvillian eigenvalue."""
        return self._gap(self.liouvillian(p), how_many)

    @staticmethod
    def _gap(L, how_many=None):
        if how_many is None:
            how_many = "all" if L.dim <= DENSE_LIMIT else 6
        return liouvillian_spectrum(L, how_many).gap


class ConstantFamily(_Family):
    """Family whose steady state does not depend on the parameter (for checks)."""

    def __init__(self, rho, param_name="p"):
        super().__init__()
        self.rho = rho
        self.param_name = param_name
        self.model_id = "constant"

    def solve(self, p):
        return self.rho, {"residual": 0.0}
