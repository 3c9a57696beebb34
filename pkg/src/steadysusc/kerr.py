"""Driven-dissipative Kerr oscillator with two-photon pumping."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .liouville import LindbladModel


@dataclass(frozen=True)
class KerrParams:
    U: float = 1 / 20
    G: float = 1.0
    delta: float = 0.0
    gamma: float = 1.0
    n_max: int = 40

    def __post_init__(self):
        if not self.U > 0:
            raise ValueError("U must be positive")
        if self.G < 0:
            raise ValueError("G must be nonnegative")
        if self.n_max < 2:
            raise ValueError("n_max must be >= 2")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class SemiclassicalState:
    alpha: complex

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    @property
    def photons(self):
        return abs(self.alpha) ** 2


def semiclassical_photons(G, U, gamma=1.0):
    """Photon number |alpha|^2 of the nonzero fixed point (0 below G = gamma)."""
    if G <= gamma:
        return 0.0
    return math.sqrt(G * G - gamma * gamma) / (2 * U)


def default_n_max(G, U, gamma=1.0):
    """Truncation heuristic: three times the semiclassical photon number plus 15."""
    return math.ceil(3 * semiclassical_photons(G, U, gamma)) + 15


def annihilation(n_max):
    return sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, format="csr").astype(complex)


def parity_matrix(n_max):
    return sp.diags((-1.0) ** np.arange(n_max + 1), format="csr").astype(complex)


def build_kerr_model(params):
    a = annihilation(params.n_max)
    ad = a.conj().T.tocsr()
    H = (-params.delta * (ad @ a)
         + 0.5 * params.U * (ad @ ad @ a @ a)
         + 0.25 * params.G * (ad @ ad + a @ a))
    H = sp.csr_matrix(H)
    labels = {"U": params.U, "G": params.G, "delta": params.delta, "gamma": params.gamma}
    return LindbladModel(H, [(a, params.gamma)], labels)


def number_operator(n_max):
    return sp.diags(np.arange(n_max + 1, dtype=float), format="csr").astype(complex)


def truncation_check(rho, tail_levels=5):
    """Total population in the top ``tail_levels`` Fock states."""
    pops = np.real(np.diag(rho))
    if tail_levels >= pops.size - 1:
        raise ValueError("tail_levels must be smaller than n_max")
    return float(np.clip(pops[-tail_levels:], 0, None).sum())


def semiclassical_rhs(params, alpha):
    return (-1j * params.U * abs(alpha) ** 2 - 0.5 * params.gamma) * alpha \
        - 0.5j * params.G * alpha.conjugate()


class SemiclassicalDiverged(RuntimeError):
    pass


def semiclassical_evolve(params, alpha0=0.1 + 0.1j, conv_tol=1e-12, dt=0.05, t_max=1e6):
    """RK4 integration of the coherent-field equation of motion to a fixed point.

    Convergence: ``|alpha(t + 1/gamma) - alpha(t)| < conv_tol``.
    """
    f = lambda a: semiclassical_rhs(params, a)
    unit = 1.0 / params.gamma
    n = max(1, math.ceil(unit / dt - 1e-9))
    h = unit / n
    alpha = complex(alpha0)
    t = 0.0
    while t < t_max:
        prev = alpha
        for _ in range(n):
            k1 = f(alpha)
            k2 = f(alpha + 0.5 * h * k1)
            k3 = f(alpha + 0.5 * h * k2)
            k4 = f(alpha + h * k3)
            alpha = alpha + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += unit
        if not abs(alpha) < 1e6:
            raise SemiclassicalDiverged(f"|alpha| exceeded 1e6 at t={t:g}")
        if abs(alpha - prev) < conv_tol:
            return SemiclassicalState(alpha)
    raise SemiclassicalDiverged(f"no fixed point by t={t_max:g}; |alpha|={abs(alpha):.6g}")
