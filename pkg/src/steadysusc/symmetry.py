"""Symmetric-sector reduction of spin-lattice Liouvillians.

A unique steady state is invariant under every symmetry of the master
equation. For the periodic XYZ lattice these are the lattice space group
(translations, reflections, and the x<->y swap on square lattices) together
with the global pi rotation about z. The fully symmetric operators form an
invariant subspace of the Liouvillian; its orthonormal basis consists of
normalized orbit sums of matrix units |a><b|.
"""

from __future__ import annotations


import numpy as np
import scipy.sparse as sp

from .liouville import build_liouvillian, restrict
from .xyz import bonds, build_xyz_model


def _compose(p, q):
    return tuple(p[i] for i in q)


def lattice_group(Lx, Ly, multiplicity="unique"):
    """Site permutations of the periodic lattice that preserve the bond multiset."""
    def site(x, y):
        return (x % Lx) + Lx * (y % Ly)

    coords = [(x, y) for y in range(Ly) for x in range(Lx)]
    gens = [
        tuple(site(x + 1, y) for x, y in coords),
        tuple(site(x, y + 1) for x, y in coords),
        tuple(site(-x, y) for x, y in coords),
        tuple(site(x, -y) for x, y in coords),
    ]
    if Lx == Ly:
        gens.append(tuple(site(y, x) for x, y in coords))
    ident = tuple(range(Lx * Ly))
    group = {ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for g in frontier:
            for h in gens:
                c = _compose(h, g)
                if c not in group:
                    group.add(c)
                    nxt.append(c)
        frontier = nxt

    ref = sorted(tuple(sorted(b)) for b in bonds(Lx, Ly, multiplicity))
    keep = [g for g in sorted(group)
            if sorted(tuple(sorted((g[i], g[j]))) for i, j in bonds(Lx, Ly, multiplicity)) == ref]
    return keep


def state_permutations(group, n_sites):
    """Table ``perm[g, b]``: image of basis state ``b`` under site permutation ``g``."""
    states = np.arange(2 ** n_sites)
    bits = [(states >> (n_sites - 1 - j)) & 1 for j in range(n_sites)]
    table = np.empty((len(group), states.size), dtype=np.int64)
    for k, g in enumerate(group):
        img = np.zeros_like(states)
        for j in range(n_sites):
            img |= bits[j] << (n_sites - 1 - g[j])
        table[k] = img
    return table


def symmetric_basis(Lx, Ly, multiplicity="unique"):
    """Sparse isometry onto the fully symmetric (even, space-group invariant) sector."""
    n = Lx * Ly
    dim = 2 ** n
    perms = state_permutations(lattice_group(Lx, Ly, multiplicity), n)
    pop = np.array([bin(b).count("1") for b in range(dim)])
    a, b = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    a = a.ravel()
    b = b.ravel()
    even = (pop[a] + pop[b]) % 2 == 0
    a = a[even]
    b = b[even]
    key = np.full(a.size, np.iinfo(np.int64).max, dtype=np.int64)
    for row in perms:
        np.minimum(key, row[a] + row[b] * dim, out=key)
    _, orbit = np.unique(key, return_inverse=True)
    sizes = np.bincount(orbit)
    vals = 1.0 / np.sqrt(sizes[orbit])
    rows = a + b * dim
    return sp.csc_matrix((vals, (rows, orbit)), shape=(dim * dim, sizes.size))


def reduced_xyz_liouvillian(params, basis=None):
    """Liouvillian of the XYZ lattice restricted to the symmetric sector."""
    if basis is None:
        basis = symmetric_basis(params.Lx, params.Ly, params.bond_multiplicity)
    L = build_liouvillian(build_xyz_model(params))
    return restrict(L, basis)
