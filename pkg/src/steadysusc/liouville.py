"""Liouvillian construction, spectra and steady states.

Density matrices are plain complex ``numpy`` arrays. Vectorization is
column stacking throughout, so that ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.

A :class:`Superoperator` may act on the full Liouville space or on a
subspace spanned by the columns of a real isometry ``basis`` (used for
symmetry-reduced lattice problems, see :mod:`steadysusc.symmetry`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

#: Liouville dimension above which spectra/steady states use sparse solvers.
DENSE_LIMIT = 1024

HERMITIAN_TOL = 1e-12
CLAMP_TOL = 1e-12
CLAMP_MASS_TOL = 1e-8


class DegenerateSteadyState(RuntimeError):
    """More than one eigenvalue of the Liouvillian sits at zero."""

    def __init__(self, message, eigenvalues, eigenvectors):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors


class NotConverged(RuntimeError):
    """Time evolution hit ``t_max`` before the convergence criterion was met."""

    def __init__(self, message, state, residual):
        super().__init__(message)
        self.state = state
        self.residual = residual


class StepInstability(RuntimeError):
    pass


class ResidualTooLarge(RuntimeError):
    pass


# -- vectorization ---------------------------------------------------------

def vectorize(rho):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(vec, dim):
    vec = np.asarray(vec)
    if vec.ndim != 1 or vec.size != dim * dim:
        raise ValueError(f"vector of size {vec.size} cannot form a {dim}x{dim} matrix")
    return vec.reshape((dim, dim), order="F")


# -- density matrices ------------------------------------------------------

def hermitize(m):
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def fix_density_matrix(rho, clamp_tol=CLAMP_TOL, mass_tol=CLAMP_MASS_TOL):
    """Hermitize, clamp negative eigenvalues below ``-clamp_tol``, renormalize.

    Raises ``ValueError`` when the clamped negative mass exceeds ``mass_tol``
    (the input is then not a density matrix up to numerical noise).
    """
    rho = hermitize(rho)
    tr = np.trace(rho).real
    if not np.isfinite(tr) or abs(tr) < 1e-300:
        raise ValueError("density matrix has zero or non-finite trace")
    rho = rho / tr
    w, v = np.linalg.eigh(rho)
    neg = w < -clamp_tol
    if np.any(neg):
        mass = -w[neg].sum()
        if mass > mass_tol:
            raise ValueError(f"negative eigenvalue mass {mass:.3e} exceeds {mass_tol:.1e}")
        w = np.where(neg, 0.0, w)
        rho = (v * w) @ v.conj().T
        rho = hermitize(rho) / w.sum()
    return rho


def check_density_matrix(rho, tol=1e-10):
    """Return True if ``rho`` is Hermitian, unit-trace and PSD within ``tol``."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return np.linalg.eigvalsh(hermitize(rho)).min() >= -tol


def expectation(rho, op):
    rho = np.asarray(rho)
    if sp.issparse(op):
        if op.shape != rho.shape:
            raise ValueError(f"operator shape {op.shape} does not match state {rho.shape}")
        return complex((op.multiply(rho.T)).sum())
    op = np.asarray(op)
    if op.shape != rho.shape:
        raise ValueError(f"operator shape {op.shape} does not match state {rho.shape}")
    # Tr(rho O) without forming the product
    return complex(np.sum(rho * op.T))


# -- models and superoperators ---------------------------------------------

@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian plus (jump operator, rate) pairs; matrices may be sparse."""

    hamiltonian: object
    jumps: Sequence[tuple] = ()
    labels: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        h = self.hamiltonian
        if h.shape[0] != h.shape[1]:
            raise ValueError("Hamiltonian must be square")
        diff = h - h.conj().T
        err = abs(diff).max() if sp.issparse(diff) else np.max(np.abs(diff))
        if err > HERMITIAN_TOL:
            raise ValueError(f"Hamiltonian is not Hermitian (max deviation {err:.2e})")
        for op, rate in self.jumps:
            if op.shape != h.shape:
                raise ValueError(f"jump operator shape {op.shape} does not match H {h.shape}")
            if rate < 0:
                raise ValueError(f"negative rate {rate}")

    @property
    def dim(self):
        return self.hamiltonian.shape[0]


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Matrix of a Liouvillian acting on vectorized density matrices.

    ``basis`` is ``None`` for the full Liouville space; otherwise it is a
    sparse real isometry whose columns span an invariant subspace and
    ``matrix`` is the operator expressed in that basis.
    """

    matrix: object
    hilbert_dim: int
    basis: object = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)

    def dense(self):
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def sparse(self):
        return sp.csr_matrix(self.matrix)

    def __matmul__(self, vec):
        return self.matrix @ vec

    def trace_row(self):
        ident = vectorize(np.eye(self.hilbert_dim)).astype(complex)
        if self.basis is None:
            return ident
        return self.basis.T @ ident

    def to_density(self, vec):
        vec = np.asarray(vec)
        if self.basis is not None:
            vec = self.basis @ vec
        return devectorize(vec, self.hilbert_dim)

    def from_density(self, rho):
        v = vectorize(rho)
        if self.basis is not None:
            v = self.basis.T @ v
        return v

    def full_residual(self, vec):
        """Max-abs of the Liouvillian applied to ``vec``, in full Liouville space."""
        r = self.matrix @ vec
        if self.basis is not None:
            r = self.basis @ r
        return float(np.max(np.abs(r)))

    def norm_inf(self):
        if self.is_sparse:
            return float(abs(self.matrix).sum(axis=1).max())
        return float(np.abs(self.matrix).sum(axis=1).max())


def build_liouvillian(model, sparse=True):
    """Column-stacked Lindblad generator of ``model``."""
    d = model.dim
    h = sp.csr_matrix(model.hamiltonian, dtype=complex)
    eye = sp.identity(d, dtype=complex, format="csr")
    L = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for op, rate in model.jumps:
        if rate == 0:
            continue
        c = sp.csr_matrix(op, dtype=complex)
        if c.shape != h.shape:
            raise ValueError(f"jump operator shape {c.shape} does not match H {h.shape}")
        cdc = (c.conj().T @ c).tocsr()
        L = L + rate * (sp.kron(c.conj(), c)
                        - 0.5 * sp.kron(eye, cdc)
                        - 0.5 * sp.kron(cdc.T, eye))
    L = sp.csr_matrix(L)
    L.eliminate_zeros()
    return Superoperator(L if sparse else L.toarray(), d)


def apply_lindblad(model, rho):
    """Right-hand side of the master equation evaluated directly on ``rho``."""
    h = model.hamiltonian
    out = -1j * (h @ rho - (rho.T @ h.T).T) if sp.issparse(h) else -1j * (h @ rho - rho @ h)
    for op, rate in model.jumps:
        c = op.toarray() if sp.issparse(op) else np.asarray(op)
        cdc = c.conj().T @ c
        out = out + rate * (c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc))
    return np.asarray(out)


def restrict(L, basis):
    """Express ``L`` in the subspace spanned by the orthonormal columns of ``basis``."""
    if L.basis is not None:
        raise ValueError("superoperator is already restricted")
    b = sp.csc_matrix(basis)
    m = (b.T @ (L.sparse() @ b)).tocsr()
    m.eliminate_zeros()
    return Superoperator(m, L.hilbert_dim, b)


# -- spectra ---------------------------------------------------------------

@dataclass(frozen=True)
class LiouvilleSpectrum:
    eigenvalues: np.ndarray
    steady_state: np.ndarray
    gap: float
    zero_multiplicity: int


def zero_threshold(scale):
    return max(1e-9 * scale, 1e-12)


def _sorted_eig(values, vectors):
    order = np.lexsort((-values.imag, -values.real))
    return values[order], vectors[:, order]


def _state_from_vector(L, vec):
    rho = L.to_density(vec)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise ValueError("zero-eigenvalue eigenvector has vanishing trace")
    return fix_density_matrix(rho / tr)


def liouvillian_spectrum(L, how_many="all", sigma=None):
    """Eigenvalues sorted by descending real part, steady state and gap.

    ``how_many="all"`` performs a dense diagonalization. An integer requests
    that many eigenvalues closest to the origin via shift-invert Arnoldi;
    the gap is then correct whenever the slowest mode is among them.
    """
    if how_many == "all":
        values, vectors = scipy.linalg.eig(L.dense(), check_finite=False)
        scale = float(np.max(np.abs(values.real))) if values.size else 1.0
    else:
        k = int(how_many)
        if k >= L.dim - 1:
            return liouvillian_spectrum(L, "all")
        scale = L.norm_inf()
        if sigma is None:
            sigma = 1e-3
        values, vectors = spla.eigs(L.sparse().tocsc(), k=k, sigma=sigma, which="LM",
                                    tol=1e-13, maxiter=10 * L.dim)
    values, vectors = _sorted_eig(values, vectors)
    eps = zero_threshold(scale)
    zero = np.abs(values.real) < eps
    nzero = int(zero.sum())
    if nzero == 0:
        raise ResidualTooLarge(f"no eigenvalue within {eps:.1e} of zero; largest Re {values[0].real:.3e}")
    if nzero > 1:
        raise DegenerateSteadyState(
            f"{nzero} eigenvalues within {eps:.1e} of zero",
            values[zero], vectors[:, zero])
    rest = values[~zero]
    gap = float(rest[0].real) if rest.size else float("nan")
    rho = _state_from_vector(L, vectors[:, 0])
    return LiouvilleSpectrum(values, rho, gap, nzero)


# -- steady states ---------------------------------------------------------

def _steady_state_dense(L):
    spec = liouvillian_spectrum(L, "all")
    return spec.steady_state


def _steady_state_sparse(L):
    """Kernel vector from the trace-bordered linear system ``A x = e_r``."""
    t = L.trace_row()
    r = int(np.argmax(np.abs(t)))
    keep = np.ones(L.dim)
    keep[r] = 0.0
    cols = np.flatnonzero(t)
    border = sp.csr_matrix((t[cols], (np.full(cols.size, r), cols)), shape=(L.dim, L.dim))
    A = (sp.diags(keep) @ L.sparse() + border).tocsc()
    b = np.zeros(L.dim, dtype=complex)
    b[r] = 1.0
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
    except RuntimeError as exc:
        _raise_degenerate(L, exc)
    if not np.all(np.isfinite(x)):
        _raise_degenerate(L, "non-finite solution")
    return x


def _raise_degenerate(L, cause):
    scale = L.norm_inf()
    values, vectors = spla.eigs(L.sparse().tocsc(), k=min(4, L.dim - 2), sigma=1e-3 * max(scale, 1))
    eps = zero_threshold(scale)
    zero = np.abs(values.real) < eps
    raise DegenerateSteadyState(f"singular steady-state system ({cause}); "
                                f"{int(zero.sum())} near-zero eigenvalues",
                                values[zero], vectors[:, zero])


def steady_state_ed(L, tol=1e-10, method="auto"):
    """Steady state as the zero-eigenvalue eigenvector of ``L``.

    ``method="dense"`` diagonalizes fully; ``"sparse"`` computes the kernel
    vector with a sparse LU factorization. ``"auto"`` picks dense below
    :data:`DENSE_LIMIT`.
    """
    if method == "auto":
        method = "dense" if L.dim <= DENSE_LIMIT else "sparse"
    if method == "dense":
        rho = _steady_state_dense(L)
    elif method == "sparse":
        rho = _state_from_vector(L, _steady_state_sparse(L))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = L.full_residual(L.from_density(rho))
    if res > tol:
        raise ResidualTooLarge(f"steady-state residual {res:.2e} exceeds {tol:.1e}")
    return rho


def default_dt(L, gamma=1.0):
    return min(0.5 / L.norm_inf(), 0.05 / gamma)


def _trace_distance(a, b):
    w = np.linalg.eigvalsh(hermitize(b - a))
    return 0.5 * float(np.abs(w).sum())


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(L, rho0, t, dt=None):
    """Fixed-step RK4 propagation of ``rho0`` for a time ``t``."""
    dt = default_dt(L) if dt is None else dt
    n = max(1, math.ceil(t / dt - 1e-9))
    h = t / n
    v = L.from_density(np.asarray(rho0, dtype=complex))
    m = L.matrix
    for _ in range(n):
        v = rk4_step(lambda y: m @ y, v, h)
    return L.to_density(v)


def steady_state_evolve(L, rho0, dt=None, conv_tol=1e-10, t_max=1e4, check_every=1.0, info=None):
    """Integrate to the long-time limit with classical fixed-step RK4.

    Convergence is declared when the trace distance between states
    ``check_every`` apart (one unit of 1/gamma by default) drops below
    ``conv_tol``. If ``info`` is a dict it receives the step count, the
    final time and the last trace distance.
    """
    dt = default_dt(L) if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = max(1, math.ceil(check_every / dt - 1e-9))
    h = check_every / n
    m = L.matrix
    f = lambda y: m @ y
    t_row = L.trace_row().conj()
    v = L.from_density(np.asarray(rho0, dtype=complex))
    prev = L.to_density(v)
    t = 0.0
    dist = np.inf
    while t < t_max:
        for _ in range(n):
            v = rk4_step(f, v, h)
        t += check_every
        tr = t_row @ v
        if not np.isfinite(tr) or abs(tr - 1) > 1e-6:
            raise StepInstability(f"trace drifted to {tr:.6g} at t={t:g}; reduce dt (now {h:.3g})")
        cur = L.to_density(v)
        dist = _trace_distance(prev, cur)
        prev = cur
        if info is not None:
            info.update(steps=int(round(t / h)), t=t, last_distance=dist)
        if dist < conv_tol:
            rho = fix_density_matrix(cur)
            log.debug("rk4 converged at t=%g (T=%.2e)", t, dist)
            return rho
    raise NotConverged(f"no convergence by t={t_max:g} (last T={dist:.2e})",
                       fix_density_matrix(prev), L.full_residual(v))
