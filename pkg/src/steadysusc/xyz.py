"""Dissipative spin-1/2 XYZ model on a periodic square lattice.

Spin basis per site is (|up>, |down>); site 0 is the leftmost tensor factor.
Sites are numbered ``x + Lx * y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import scipy.integrate
import scipy.sparse as sp

from .liouville import LindbladModel

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ}


@dataclass(frozen=True)
class XYZParams:
    Jx: float = 0.9
    Jy: float = 1.0
    Jz: float = 1.0
    gamma: float = 1.0
    Lx: int = 2
    Ly: int = 2
    z: int = 4
    a: float = 1.0
    bond_multiplicity: Literal["unique", "wrapped"] = "wrapped"

    def __post_init__(self):
        if self.Lx < 1 or self.Ly < 1:
            raise ValueError("lattice extents must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.bond_multiplicity not in ("unique", "wrapped"):
            raise ValueError(f"unknown bond multiplicity {self.bond_multiplicity!r}")

    @property
    def n_sites(self):
        return self.Lx * self.Ly

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class BlochVector:
    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        if self.sx ** 2 + self.sy ** 2 + self.sz ** 2 > 1 + 1e-9:
            raise ValueError("Bloch vector lies outside the unit ball")

    def as_array(self):
        return np.array([self.sx, self.sy, self.sz])

    @property
    def transverse(self):
        return math.hypot(self.sx, self.sy)


DEFAULT_SEED = BlochVector(*(np.array([0.1, 0.1, -0.99]) / np.linalg.norm([0.1, 0.1, -0.99])))


def bonds(Lx, Ly, multiplicity="unique"):
    """Nearest-neighbour bonds (i, j) with periodic wrapping.

    In ``unique`` mode every unordered pair appears once, so an extent-2
    direction contributes one bond per pair rather than two.
    """
    out = []
    for y in range(Ly):
        for x in range(Lx):
            i = x + Lx * y
            for nx, ny in (((x + 1) % Lx, y), (x, (y + 1) % Ly)):
                j = nx + Lx * ny
                if j != i:
                    out.append((i, j))
    if multiplicity == "wrapped":
        return out
    seen = set()
    unique = []
    for i, j in out:
        key = (min(i, j), max(i, j))
        if key not in seen:
            seen.add(key)
            unique.append(key)
    return unique


def site_operator(op, site, n_sites):
    """Sparse ``op`` acting on ``site`` of an ``n_sites`` spin chain."""
    left = sp.identity(2 ** site, format="csr", dtype=complex)
    right = sp.identity(2 ** (n_sites - site - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def build_xyz_model(params, max_sites=12):
    n = params.n_sites
    if n > max_sites:
        raise ValueError(f"{params.Lx}x{params.Ly} lattice exceeds {max_sites} sites")
    ops = {a: [site_operator(PAULI[a], j, n) for j in range(n)] for a in "xyz"}
    couplings = {"x": params.Jx, "y": params.Jy, "z": params.Jz}
    dim = 2 ** n
    H = sp.csr_matrix((dim, dim), dtype=complex)
    for i, j in bonds(params.Lx, params.Ly, params.bond_multiplicity):
        for a, J in couplings.items():
            if J != 0:
                H = H + J * (ops[a][i] @ ops[a][j])
    H = sp.csr_matrix(H)
    H.eliminate_zeros()
    jumps = [(site_operator(SM, j, n), params.gamma) for j in range(n)]
    labels = {"Jx": params.Jx, "Jy": params.Jy, "Jz": params.Jz, "gamma": params.gamma}
    return LindbladModel(H, jumps, labels)


def parity_operator(n_sites):
    """The global pi rotation about z, i.e. the tensor product of sigma_z."""
    downs = np.array([bin(b).count("1") for b in range(2 ** n_sites)])
    return sp.diags((-1.0) ** downs).astype(complex).tocsr()


def site_expectations(rho, n_sites):
    """Single-site <sigma^a_j> for every site j, as an (n_sites, 3) array."""
    out = np.empty((n_sites, 3))
    for j in range(n_sites):
        rho_j = reduced_site_state(rho, j, n_sites)
        out[j] = [np.trace(rho_j @ PAULI[a]).real for a in "xyz"]
    return out


def reduced_site_state(rho, site, n_sites):
    left, right = 2 ** site, 2 ** (n_sites - site - 1)
    t = np.asarray(rho).reshape(left, 2, right, left, 2, right)
    return np.einsum("aibajb->ij", t)


# -- mean field ------------------------------------------------------------

def mf_bloch_rhs(params, s):
    """Gutzwiller mean-field Bloch equations; the field includes the coordination number."""
    g = params.gamma
    h = params.z * np.array([params.Jx, params.Jy, params.Jz]) * s
    ds = 2.0 * np.cross(h, s)
    ds[0] -= 0.5 * g * s[0]
    ds[1] -= 0.5 * g * s[1]
    ds[2] -= g * (s[2] + 1.0)
    return ds


class MeanFieldNotConverged(RuntimeError):
    def __init__(self, message, tail):
        super().__init__(message)
        self.tail = tail


def mf_steady_state(params, init=DEFAULT_SEED, conv_tol=1e-10, t_max=1e6, window=200.0):
    """Integrate the self-consistent single-site dynamics to its fixed point.

    Integration proceeds in windows with an adaptive high-order Runge-Kutta
    scheme; convergence is declared once Bloch vectors one unit of 1/gamma
    apart differ by less than ``conv_tol``.
    """
    s = init.as_array() if isinstance(init, BlochVector) else np.asarray(init, dtype=float)
    fun = lambda t, y: mf_bloch_rhs(params, y)
    t0 = 0.0
    step = 1.0 / params.gamma
    tail = []
    while t0 < t_max:
        ts = t0 + np.arange(0.0, window + 0.5 * step, step)
        sol = scipy.integrate.solve_ivp(fun, (ts[0], ts[-1]), s, method="DOP853",
                                        t_eval=ts, rtol=1e-12, atol=1e-14)
        if not sol.success:
            raise MeanFieldNotConverged(sol.message, tail)
        ys = sol.y.T
        diffs = np.linalg.norm(np.diff(ys, axis=0), axis=1)
        hit = np.flatnonzero(diffs < conv_tol)
        if hit.size:
            s = ys[hit[0] + 1]
            return BlochVector(*np.clip(s, -1, 1) / max(1.0, np.linalg.norm(s)))
        s = ys[-1]
        tail = ys[-10:]
        t0 = ts[-1]
    raise MeanFieldNotConverged(f"no fixed point by t={t_max:g} (possible limit cycle)", tail)


# -- linear stability ------------------------------------------------------

def _pq(params, kx, ky):
    t = 2 * math.cos(kx * params.a) + 2 * math.cos(ky * params.a)
    P = -1j * ((params.Jx + params.Jy) * t - 2 * params.z * params.Jz)
    Q = -1j * (params.Jx - params.Jy) * t
    return P, Q


def stability_matrix(params, kx, ky):
    """Fluctuation generator around the all-down state at wave vector (kx, ky)."""
    g = params.gamma
    P, Q = _pq(params, kx, ky)
    return np.array([
        [-g, 0, 0, 0],
        [0, P - g / 2, Q, 0],
        [0, -Q, -P - g / 2, 0],
        [g, 0, 0, 0],
    ], dtype=complex)


def stability_eigenvalues(params, kx, ky):
    g = params.gamma
    P, Q = _pq(params, kx, ky)
    r = np.sqrt(complex(P * P - Q * Q))
    return np.array([0.0, -g, -g / 2 + r, -g / 2 - r])


def stability_map(params, resolution=101, include_trivial=True):
    """Largest real part of the fluctuation spectrum over the Brillouin zone.

    Returns ``(k, values, argmax)`` with ``values[i, j]`` evaluated at
    ``(k[i], k[j])`` (first index kx) and ``argmax`` the (kx, ky) of the
    global maximum. With ``include_trivial`` the conserved zero mode is part
    of the maximum, so stable regions read 0.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    # exact integer ratios keep k = 0 on the grid for odd resolutions
    k = math.pi * (2 * np.arange(resolution) - (resolution - 1)) / (resolution - 1)
    t = 2 * np.cos(k * params.a)[:, None] + 2 * np.cos(k * params.a)[None, :]
    P = -1j * ((params.Jx + params.Jy) * t - 2 * params.z * params.Jz)
    Q = -1j * (params.Jx - params.Jy) * t
    r = np.sqrt((P * P - Q * Q).astype(complex))
    values = -params.gamma / 2 + np.abs(r.real)
    if include_trivial:
        values = np.maximum(values, 0.0)
    i, j = np.unravel_index(np.argmax(values), values.shape)
    return k, values, (float(k[i]), float(k[j]))


def critical_coupling(J_other, Jz, z=4, gamma=1.0):
    """Mean-field boundary: J^c = gamma^2 / (16 z^2 (Jz - J_other)) + Jz."""
    if Jz == J_other:
        raise ZeroDivisionError("critical coupling diverges at Jz == J_other")
    return gamma ** 2 / (16 * z ** 2) / (Jz - J_other) + Jz
