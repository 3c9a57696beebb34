"""Acceptance criteria, one test per criterion.

Every test prints a ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line with the measured quantities, visible even without ``-s``.
"""

import contextlib
import math

import numpy as np
import pytest

from steadysusc import kerr, xyz
from steadysusc.families import KerrFamily, XYZFamily
from steadysusc.metrics import (fidelity, fidelity_susceptibility, trace_distance,
                                trace_distance_susceptibility)
from steadysusc.scaling import (fit_linear_extrapolate, fit_power_law, local_extrema,
                                locate_extremum, sweep)

from conftest import assert_valid_steady_state, random_density, random_unitary

JC = 1.0390625
XYZ_GRID = np.round(np.arange(0.9, 1.1 + 1e-9, 0.005), 12)
# the 3x3 valley sits well inside this window, which keeps the run to minutes
XYZ_GRID_3X3 = np.round(np.arange(0.96, 1.10 + 1e-9, 0.01), 12)
KERR_GRID = np.round(np.arange(0.9, 1.4 + 1e-9, 0.01), 12)
KERR_US = (1 / 20, 1 / 40, 1 / 60)


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title):
        detail = []
        status = "FAIL"
        try:
            yield detail
            status = "PASS"
        finally:
            with capsys.disabled():
                extra = f" [{'; '.join(detail)}]" if detail else ""
                print(f"\n{status} criterion {number}: {title}{extra}")
    return run


def _check_family_states(family, residual_tol):
    """Invariants and full-space residual for every state a family has solved."""
    assert family._memo
    for p, (rho, _) in family._memo.items():
        assert_valid_steady_state(family.liouvillian(p), rho, residual_tol)
    return len(family._memo)


def _xyz_sweep(lx, ly, grid, delta_p):
    fam = XYZFamily(base=xyz.XYZParams(Lx=lx, Ly=ly))
    return fam, sweep(fam, grid, delta_p)


@pytest.fixture(scope="module")
def xyz_2x2():
    return _xyz_sweep(2, 2, XYZ_GRID, 1e-3)


@pytest.fixture(scope="module")
def xyz_2x3():
    return _xyz_sweep(2, 3, XYZ_GRID, 1e-3)


@pytest.fixture(scope="module")
def xyz_3x3():
    return _xyz_sweep(3, 3, XYZ_GRID_3X3, 1e-3)


@pytest.fixture(scope="module")
def kerr_curves():
    out = {}
    for U in KERR_US:
        fam = KerrFamily.for_grid(U, KERR_GRID, delta_p=1e-3)
        out[U] = (fam, sweep(fam, KERR_GRID, 1e-3))
    return out


# -- 1 ---------------------------------------------------------------------

def test_criterion_01_closed_form_critical_point(criterion):
    with criterion(1, "closed-form critical coupling and marginal stability") as d:
        jc = xyz.critical_coupling(0.9, 1.0, 4)
        ev = np.linalg.eigvals(xyz.stability_matrix(xyz.XYZParams(Jy=jc), 0.0, 0.0))
        d += [f"Jy_c={jc!r}", f"max Re lambda={ev.real.max():.2e}"]
        assert abs(jc - JC) <= 1e-9
        assert abs(ev.real.max()) <= 1e-9


# -- 2 ---------------------------------------------------------------------

def test_criterion_02_mean_field_bifurcation(criterion):
    with criterion(2, "mean-field bifurcation and onset") as d:
        low = xyz.mf_steady_state(xyz.XYZParams(Jy=0.95))
        high = xyz.mf_steady_state(xyz.XYZParams(Jy=1.06))
        d += [f"|s_perp|(0.95)={max(abs(low.sx), abs(low.sy)):.1e}",
              f"min |sx|,|sy| (1.06)={min(abs(high.sx), abs(high.sy)):.3f}"]
        assert abs(low.sx) <= 1e-6 and abs(low.sy) <= 1e-6
        assert abs(high.sx) >= 1e-2 and abs(high.sy) >= 1e-2
        scan = np.round(np.arange(1.030, 1.050 + 1e-9, 1e-3), 12)
        ordered = [abs(xyz.mf_steady_state(xyz.XYZParams(Jy=j)).sx) >= 1e-2 for j in scan]
        onset = scan[ordered.index(True)]
        d.append(f"onset={onset:.3f}")
        assert not any(ordered[:ordered.index(True)]) and all(ordered[ordered.index(True):])
        assert abs(onset - JC) <= 2e-3


# -- 3 ---------------------------------------------------------------------

def test_criterion_03_stability_map(criterion):
    with criterion(3, "stability map maximum at the zone centre") as d:
        _, values, arg = xyz.stability_map(xyz.XYZParams(Jy=1.06))
        hand = -0.5 + math.sqrt(0.384)
        d += [f"argmax={arg}", f"max={values.max():.9f}", f"hand={hand:.9f}"]
        assert arg == (0.0, 0.0)
        assert abs(values.max() - hand) <= 1e-6
        assert round(values.max(), 4) == 0.1197


# -- 4 ---------------------------------------------------------------------

def test_criterion_04_delta_p_convergence(criterion, xyz_2x2):
    with criterion(4, "chi_F converged in delta_p on 2x2") as d:
        _, coarse = xyz_2x2
        _, fine = _xyz_sweep(2, 2, XYZ_GRID, 1e-4)
        a, b = coarse.values("chi_f"), fine.values("chi_f")
        rel = np.max(np.abs(a - b) / np.abs(b))
        d.append(f"max rel diff={rel:.4f}")
        assert rel <= 0.02


# -- 5 ---------------------------------------------------------------------

def test_criterion_05_valley_and_peak_structure(criterion, xyz_2x2, xyz_2x3):
    with criterion(5, "unique interior chi_F valley and chi_T peak, 2x2 and 2x3") as d:
        ext = {}
        for name, (_, curve) in (("2x2", xyz_2x2), ("2x3", xyz_2x3)):
            assert local_extrema(curve.values("chi_f"), "min").size == 1
            assert local_extrema(curve.values("chi_t"), "max").size == 1
            ext[name] = (locate_extremum(curve, "min_chi_f"), locate_extremum(curve, "max_chi_t"))
            d.append(f"{name}: chi_F min {ext[name][0][1]:.2f} at {ext[name][0][0]:.4f}, "
                     f"chi_T max {ext[name][1][1]:.2f} at {ext[name][1][0]:.4f}")
        assert abs(ext["2x3"][0][1]) > abs(ext["2x2"][0][1])
        assert ext["2x3"][1][1] > ext["2x2"][1][1]


# -- 6 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_finite_size_extrapolation(criterion, xyz_2x2, xyz_2x3, xyz_3x3):
    with criterion(6, "finite-size extrapolation of the chi_F valley") as d:
        n = np.array([4.0, 6.0, 9.0])
        mins = [locate_extremum(c, "min_chi_f") for _, c in (xyz_2x2, xyz_2x3, xyz_3x3)]
        _, jc = fit_linear_extrapolate(1 / n, [m[0] for m in mins])
        eta = fit_power_law(n, [-m[1] for m in mins]).params[1]
        d += ["Jy(min) at N=4,6,9: " + ", ".join(f"{m[0]:.4f}" for m in mins),
              f"extrapolated={jc:.4f}", f"eta={eta:.3f}"]
        assert abs(jc - 1.05) <= 0.03
        assert 0.6 <= eta <= 1.1
        # time evolution on the same reduced 3x3 space agrees with ED
        fam_ed, _ = xyz_3x3
        rk = XYZFamily(base=xyz.XYZParams(Lx=3, Ly=3), solver="rk4")
        rho_rk, diag = rk.solve(1.02)
        rho_ed, _ = fam_ed.solve(1.02)
        t = trace_distance(rho_ed, rho_rk)
        d.append(f"3x3 ED vs RK4 T={t:.1e}")
        assert t <= 1e-7
        assert diag["residual"] <= 1e-8


# -- 7 ---------------------------------------------------------------------

def test_criterion_07_kerr_semiclassics(criterion):
    with criterion(7, "semiclassical Kerr amplitude and threshold") as d:
        worst = 0.0
        for U in (1 / 20, 1 / 60):
            for G in (1.2, 1.5, 2.0):
                s = kerr.semiclassical_evolve(kerr.KerrParams(U=U, G=G))
                worst = max(worst, abs(s.photons - math.sqrt(G ** 2 - 1) / (2 * U)))
        below = kerr.semiclassical_evolve(kerr.KerrParams(U=1 / 20, G=0.8)).photons
        d += [f"max |n - n_analytic|={worst:.1e}", f"n(G=0.8)={below:.1e}"]
        assert worst <= 1e-6
        assert below <= 1e-6
        scan = np.round(np.arange(0.995, 1.005 + 1e-9, 1e-3), 12)
        lit = [kerr.semiclassical_evolve(kerr.KerrParams(U=1 / 20, G=g)).photons > 1e-3
               for g in scan]
        onset = scan[lit.index(True)]
        d.append(f"onset G={onset:.3f}")
        assert not any(lit[:lit.index(True)]) and all(lit[lit.index(True):])
        assert abs(onset - 1.0) <= 1e-3 + 1e-12


# -- 8 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_kerr_quantum_criticality(criterion, kerr_curves):
    with criterion(8, "Kerr gap closing, drift of extrema and extrapolated threshold") as d:
        for U in (1 / 20, 1 / 40):
            fam = KerrFamily.for_grid(U, [0.5, 1.5])
            g_low, g_high = fam.gap(0.5), fam.gap(1.5)
            d.append(f"U=1/{round(1 / U)}: |gap| {abs(g_low):.3g} -> {abs(g_high):.3g}")
            assert abs(g_high) * 5 <= abs(g_low)
        mins = [locate_extremum(kerr_curves[U][1], "min_chi_f")[0] for U in KERR_US]
        maxs = [locate_extremum(kerr_curves[U][1], "max_chi_t")[0] for U in KERR_US]
        _, gc = fit_linear_extrapolate(KERR_US, mins)
        d += ["G(chi_F min)=" + ", ".join(f"{m:.4f}" for m in mins),
              "G(chi_T max)=" + ", ".join(f"{m:.4f}" for m in maxs), f"G_c={gc:.4f}"]
        assert mins[0] > mins[1] > mins[2]
        assert maxs[0] > maxs[1] > maxs[2]
        assert abs(gc - 1.04) <= 0.05
        for U in KERR_US:
            tails = [diag["tail"] for diag in kerr_curves[U][1].diagnostics]
            assert max(tails) <= 1e-6


# -- 9 ---------------------------------------------------------------------

def test_criterion_09_fit_machinery(criterion):
    with criterion(9, "synthetic power-law and linear fits") as d:
        n = np.array([4.0, 6.0, 9.0, 12.0])
        fit = fit_power_law(n, 1.5230 * n ** 0.8786)
        kappa, eta = fit.params
        d += [f"kappa err={abs(kappa - 1.5230):.1e}", f"eta err={abs(eta - 0.8786):.1e}"]
        assert abs(kappa - 1.5230) <= 1e-9 and abs(eta - 0.8786) <= 1e-9
        x = 1 / n
        lin, y0 = fit_linear_extrapolate(x, 1.05 - 0.3 * x)
        d.append(f"intercept err={abs(y0 - 1.05):.1e}")
        assert abs(y0 - 1.05) <= 1e-12
        assert lin.r_squared == 1.0 and max(map(abs, lin.residuals)) <= 1e-12


# -- 10 --------------------------------------------------------------------

def test_criterion_10_metric_axioms(criterion, xyz_2x2, xyz_2x3):
    with criterion(10, "metric axioms, susceptibility signs and two-level oracles") as d:
        rng = np.random.default_rng(10)
        for dim in (2, 4, 8):
            for _ in range(200):
                a, b, c = (random_density(rng, dim, rng.integers(1, dim + 1)) for _ in range(3))
                u = random_unitary(rng, dim)
                f = fidelity(a, b)
                assert 0 <= f <= 1
                assert abs(fidelity(a, a) - 1) <= 1e-9
                assert abs(fidelity(b, a) - f) <= 1e-9
                assert abs(fidelity(u @ a @ u.conj().T, u @ b @ u.conj().T) - f) <= 1e-9
                t = trace_distance(a, b)
                assert t >= 0
                assert abs(trace_distance(b, a) - t) <= 1e-12
                assert trace_distance(a, c) <= t + trace_distance(b, c) + 1e-12
                assert abs(trace_distance(u @ a @ u.conj().T, u @ b @ u.conj().T) - t) <= 1e-9
        d.append("600 random state triples")
        for _, curve in (xyz_2x2, xyz_2x3):
            assert np.all(curve.values("chi_f") <= 0)
            assert np.all(curve.values("chi_t") >= 0)
        dp, a, eps = 1e-3, 0.3, 1e-4
        rho_p = np.diag([a, 1 - a]).astype(complex)
        rho_pp = np.diag([a + eps, 1 - a - eps]).astype(complex)
        errs = []
        for basis, q in (("reference", a), ("midpoint", a + eps / 2)):
            want = -(eps / dp) ** 2 * (1 / (8 * q) + 1 / (8 * (1 - q)))
            errs.append(abs(fidelity_susceptibility(rho_p, rho_pp, dp, basis=basis) / want - 1))
        errs.append(abs(trace_distance_susceptibility(rho_p, rho_pp, dp) / (eps / dp) - 1))
        d.append(f"oracle rel err={max(errs):.1e}")
        assert max(errs) <= 1e-9


# -- 11 --------------------------------------------------------------------

def test_criterion_11_solver_invariants(criterion, xyz_2x2, xyz_2x3):
    with criterion(11, "steady-state invariants and ED/RK4 agreement") as d:
        checked = sum(_check_family_states(fam, 1e-9) for fam, _ in (xyz_2x2, xyz_2x3))
        d.append(f"{checked} ED states checked")
        ed = XYZFamily(base=xyz.XYZParams(Jy=1.02), reduce=False)
        rk = XYZFamily(base=xyz.XYZParams(Jy=1.02), reduce=False, solver="rk4")
        t_xyz = trace_distance(ed.solve(1.02)[0], rk.solve(1.02)[0])
        _check_family_states(ed, 1e-9)
        _check_family_states(rk, 1e-8)
        base = kerr.KerrParams(U=1 / 20, G=1.2, n_max=15)
        ked, krk = KerrFamily(base=base), KerrFamily(base=base, solver="rk4")
        t_kerr = trace_distance(ked.solve(1.2)[0], krk.solve(1.2)[0])
        _check_family_states(ked, 1e-9)
        _check_family_states(krk, 1e-8)
        d += [f"T(2x2 XYZ)={t_xyz:.1e}", f"T(Kerr n_max=15)={t_kerr:.1e}"]
        assert t_xyz <= 1e-7 and t_kerr <= 1e-7


@pytest.mark.slow
def test_criterion_11_large_instances(criterion, xyz_3x3, kerr_curves):
    with criterion(11, "steady-state invariants on the 3x3 and Kerr sweeps") as d:
        checked = _check_family_states(xyz_3x3[0], 1e-9)
        checked += sum(_check_family_states(kerr_curves[U][0], 1e-9) for U in KERR_US)
        d.append(f"{checked} ED states checked")
