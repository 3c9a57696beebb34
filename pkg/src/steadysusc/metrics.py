"""Similarity measures between mixed states and their susceptibilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liouville import hermitize

NEG_TOL = 1e-12
EPS_CUT = 1e-12


@dataclass(frozen=True)
class SusceptibilityPoint:
    p: float
    delta_p: float
    chi_f: float | None = None
    chi_t: float | None = None

    def __post_init__(self):
        if not self.delta_p > 0:
            raise ValueError("delta_p must be positive")
        if self.chi_f is not None and self.chi_f > 0:
            raise ValueError(f"chi_f must be <= 0, got {self.chi_f}")
        if self.chi_t is not None and self.chi_t < 0:
            raise ValueError(f"chi_t must be >= 0, got {self.chi_t}")


@dataclass(frozen=True)
class StateSpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _same_shape(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"state shapes differ or are not square: {a.shape} vs {b.shape}")
    return a, b


def _clamp(w):
    if w.min() < -NEG_TOL * max(1.0, np.abs(w).max()):
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None)


def spectral_decomposition(rho):
    """Populations and eigenbasis of a density matrix, negatives clamped."""
    w, v = np.linalg.eigh(hermitize(rho))
    return StateSpectralDecomposition(_clamp(w), v)


def sqrtm_psd(rho):
    """Square root of a PSD matrix; eigenvalues below the eigensolver's resolution are zeroed."""
    w, v = np.linalg.eigh(hermitize(rho))
    w = _clamp(w)
    w[w < w.size * np.finfo(float).eps * w.max()] = 0.0
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho_a, rho_b):
    """Uhlmann (root) fidelity Tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a)).

    Evaluated as the sum of singular values of ``sqrt(rho_a) sqrt(rho_b)``,
    which equals the trace above and is symmetric in its arguments.
    """
    rho_a, rho_b = _same_shape(rho_a, rho_b)
    m = sqrtm_psd(rho_a) @ sqrtm_psd(rho_b)
    f = float(np.linalg.svd(m, compute_uv=False).sum())
    return min(f, 1.0)


def fidelity_susceptibility(rho_p, rho_pp, delta_p, eps_cut=EPS_CUT, basis="reference"):
    r"""Second-order coefficient of the fidelity in the perturbation.

    .. math:: \chi_F = -\frac{1}{4\,\delta p^2}\sum_{n,m}
              \frac{|\langle m|\delta\rho|n\rangle|^2}{\lambda_m+\lambda_n}

    with ``delta_rho = rho_pp - rho_p``. ``basis="reference"`` takes the
    populations and eigenvectors of ``rho_p``; ``basis="midpoint"`` takes
    them from ``(rho_p + rho_pp) / 2``, which removes the first-order bias in
    ``delta_p`` and keeps every term bounded when populations are below
    ``delta_p**2``. Ordered pairs with ``lambda_m + lambda_n <= eps_cut``
    are skipped.
    """
    if not delta_p > 0:
        raise ValueError("delta_p must be positive")
    rho_p, rho_pp = _same_shape(rho_p, rho_pp)
    if basis == "reference":
        dec = spectral_decomposition(rho_p)
    elif basis == "midpoint":
        dec = spectral_decomposition(0.5 * (rho_p + rho_pp))
    else:
        raise ValueError(f"unknown basis {basis!r}")
    v = dec.eigenvectors
    drho = v.conj().T @ hermitize(rho_pp - rho_p) @ v
    denom = dec.eigenvalues[:, None] + dec.eigenvalues[None, :]
    keep = denom > eps_cut
    if not keep.any():
        raise ValueError("all eigenvalue pairs fall below eps_cut")
    total = np.sum(np.abs(drho[keep]) ** 2 / denom[keep])
    return -float(total) / (4.0 * delta_p ** 2)


def trace_distance(rho_a, rho_b):
    rho_a, rho_b = _same_shape(rho_a, rho_b)
    w = np.linalg.eigvalsh(hermitize(rho_b - rho_a))
    return 0.5 * float(np.abs(w).sum())


def trace_distance_susceptibility(rho_p, rho_pp, delta_p):
    if not delta_p > 0:
        raise ValueError("delta_p must be positive")
    return trace_distance(rho_p, rho_pp) / delta_p
