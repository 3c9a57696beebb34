import numpy as np
import pytest
import scipy.sparse as sp

from steadysusc.liouville import LindbladModel, build_liouvillian, hermitize

SM = np.array([[0, 0], [1, 0]], dtype=complex)  # |up> -> |down>
UP = np.diag([1.0, 0.0]).astype(complex)
DOWN = np.diag([0.0, 1.0]).astype(complex)


def random_density(rng, dim, rank=None):
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, dim):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, dim):
    return hermitize(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))


def assert_valid_steady_state(L, rho, residual_tol):
    """Density-matrix invariants plus the generator residual in the full space."""
    rho = np.asarray(rho)
    assert np.max(np.abs(rho - rho.conj().T)) <= 1e-10
    assert abs(np.trace(rho) - 1) <= 1e-10
    assert np.linalg.eigvalsh(hermitize(rho)).min() >= -1e-10
    res = L.full_residual(L.from_density(rho))
    assert res <= residual_tol, f"residual {res:.2e} > {residual_tol:.0e}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def decaying_qubit():
    model = LindbladModel(np.zeros((2, 2), dtype=complex), [(SM, 1.0)])
    return model, build_liouvillian(model, sparse=False)


@pytest.fixture
def sparse_decaying_qubit():
    model = LindbladModel(sp.csr_matrix((2, 2), dtype=complex), [(sp.csr_matrix(SM), 1.0)])
    return model, build_liouvillian(model)
