import math

import numpy as np
import pytest

import oracles
from conftest import TOY_SETTINGS
from mixsearch.belief import ScanBelief
from mixsearch.dp import (
    ConvergenceError, SolverSettings, baseline_value, expected_next_value, interpolation_tolerance,
    refinement_value, scanning_value, solve_baseline, solve_refinement, solve_scanning,
)
from mixsearch.grid import ValueSurface
from mixsearch.model import ConfigurationError, ModelParams, mixed_densities, scan_prior, toy_pair
from mixsearch.quadrature import QuadratureSpec, check_mass, composite_gauss_legendre, rule_for

TOY_CASES = [(0.3, 0.05), (0.05, 0.01), (0.5, 0.02), (0.2, 0.15)]


def test_tree_counts():
    assert oracles.n_refine_trees(3) == 26
    assert oracles.n_baseline_trees(3) == 723
    assert oracles.n_scan_trees(3) == 1 + 2 * 55 ** 3
    pi, c = 0.3, 0.05
    w = np.array([0.1, 0.2, 0.2, 0.5])
    assert oracles.refine_tree_costs(w, oracles.TOY_F, c, 3).size == 26
    assert oracles.baseline_tree_costs(np.array([0.7, 0.3]), pi, oracles.TOY_F, c, 3).size == 723


# ---------------------------------------------------------------- toy oracles


@pytest.mark.parametrize("pi,c", TOY_CASES)
def test_refinement_horizon3_matches_enumeration(pi, c):
    params = ModelParams(pi, c, toy_pair())
    ref = solve_refinement(params, settings=TOY_SETTINGS, horizon=3)
    grid, ci = ref.grid, ref.loglr.center_index
    for k in range(len(grid)):
        want = oracles.refine_value((grid.p11[k], grid.pmix[k]), oracles.TOY_F, c, 3)
        assert abs(ref.values[k, ci] - want) <= 1e-12
        assert abs(refinement_value(params, ScanBelief(grid.p11[k], grid.pmix[k]), 0.0, 3) - want) <= 1e-12


@pytest.mark.parametrize("pi,c", TOY_CASES)
def test_scanning_horizon3_matches_enumeration(pi, c):
    params = ModelParams(pi, c, toy_pair())
    mixed = mixed_densities(params)

    def g_pkg(b):
        return refinement_value(params, b, 0.0, 3)

    def g_oracle(b):
        return oracles.refine_value(b, oracles.TOY_F, c, 3)

    for belief in (scan_prior(params), ScanBelief(0.1, 0.6), ScanBelief(0.0, 0.0)):
        got = scanning_value(params, mixed, g_pkg, belief, 3)
        want = oracles.scan_value(tuple(belief), pi, oracles.TOY_F, c, g_oracle, 3)
        assert abs(got - want) <= 1e-12


@pytest.mark.parametrize("pi,c", TOY_CASES)
def test_baseline_horizon3_matches_enumeration(pi, c):
    params = ModelParams(pi, c, toy_pair())
    sol = solve_baseline(params, TOY_SETTINGS, horizon=3)
    for k in range(-2, 3):
        omega = math.log(pi / (1 - pi)) + k * math.log(4.0)
        post = 1 / (1 + math.exp(-omega))
        want = oracles.baseline_value(post, pi, oracles.TOY_F, c, 3)
        assert abs(sol.values[sol.grid.center_index + k] - want) <= 1e-12
        assert abs(baseline_value(params, post, 3) - want) <= 1e-12


def test_expected_next_value_toy_direct_sum(toy_params):
    mixed = mixed_densities(toy_params)
    prior = scan_prior(toy_params)
    b = ScanBelief(0.2, 0.5)
    f = oracles.TOY_F
    pmf = oracles.mixed_pmf(f)
    w = np.array([b.p11, b.pmix / 2, b.pmix / 2, 1 - b.p11 - b.pmix])

    def surface(u):
        return u.p11 ** 2 + 0.3 * u.pmix

    want = 0.0
    for z in range(3):
        joint = w * np.array([pmf[p][z] for p in oracles.PAIRS])
        post = ScanBelief(joint[0] / joint.sum(), (joint[1] + joint[2]) / joint.sum())
        want += joint.sum() * surface(post)
    assert abs(expected_next_value(surface, b, "continue", mixed, prior) - want) <= 1e-12


def test_expected_next_value_constant_and_switch(coarse_solution):
    params, settings, mixed, ref, scan = coarse_solution
    prior = scan_prior(params)
    const = ValueSurface(ref.grid, np.full(len(ref.grid), 0.37))
    for b in (ScanBelief(0.1, 0.2), ScanBelief(0.0, 0.9)):
        assert expected_next_value(const, b, "continue", mixed, prior) == pytest.approx(0.37, abs=1e-9)
    vals = {expected_next_value(scan.vs_surface, b, "switch", mixed, prior)
            for b in (ScanBelief(0.1, 0.2), ScanBelief(0.0, 0.9), ScanBelief(0.5, 0.5))}
    assert len(vals) == 1
    with pytest.raises(ValueError):
        expected_next_value(const, prior, "jump", mixed, prior)


# ---------------------------------------------------------------- solved surfaces


def test_refinement_anchors(coarse_solution):
    _, _, _, ref, _ = coarse_solution
    g = ref.g_surface
    assert g.node(1, 0) == 0.0
    assert g.node(0, 0) == 1.0
    assert np.all((g.values >= 0) & (g.values <= 1))
    assert ref.max_increase <= 1e-12


def test_scanning_bounds_and_operator(coarse_solution):
    params, _, _, ref, scan = coarse_solution
    g, vs, ac = ref.g_surface.values, scan.vs_surface.values, scan.ac_surface.values
    c = params.c
    assert np.all((vs >= 0) & (vs <= 1))
    assert np.all(vs <= g)
    assert np.all(vs <= c + scan.a_s + 1e-9)
    assert np.max(np.abs(vs - np.minimum(g, c + np.minimum(ac, scan.a_s)))) <= 1e-7
    assert np.all(vs[g == 0] == 0)
    assert scan.max_increase <= 1e-12
    prior = scan_prior(params)
    assert scan.vs_surface.at(*prior) <= c + scan.a_s + 1e-9
    assert scan.vs_surface.at(*prior) <= ref.g_surface.at(*prior) + 1e-12


def test_flat_top(coarse_solution):
    params, _, _, ref, scan = coarse_solution
    g, vs, ac = ref.g_surface.values, scan.vs_surface.values, scan.ac_surface.values
    switching = (g > vs + 1e-9) & (ac > scan.a_s)
    assert switching.any()
    assert np.max(np.abs(vs[switching] - (params.c + scan.a_s))) <= 1e-9


def test_a_s_equals_a_c_at_prior(coarse_solution):
    params, _, _, _, scan = coarse_solution
    tol = interpolation_tolerance(scan.ac_surface)
    assert abs(scan.ac_surface.at(*scan_prior(params)) - scan.a_s) <= tol


@pytest.mark.parametrize("name", ["g", "V_s", "A_c"])
def test_concavity(coarse_solution, name):
    _, _, _, ref, scan = coarse_solution
    surf = {"g": ref.g_surface, "V_s": scan.vs_surface, "A_c": scan.ac_surface}[name]
    eps = 2 * interpolation_tolerance(surf)
    for d in ((1, 0), (0, 1), (1, 1)):
        _, dd = surf.grid.second_differences(surf.values, d)
        assert dd.max() <= eps


def test_baseline_solution(default_params):
    sol = solve_baseline(default_params, SolverSettings())
    assert sol.value_at(1 - 1e-12) == pytest.approx(0.0, abs=1e-9)
    assert sol.value_at(1e-9) <= default_params.c + sol.a_switch + 1e-12
    assert default_params.pi < sol.stop_threshold <= 1.0
    assert sol.max_increase <= 1e-12
    assert np.all((sol.values >= 0) & (sol.values <= 1))


def test_grid_refinement_stability(default_params):
    sols = {}
    for m in (20, 40, 80):
        st = SolverSettings(grid_m=m)
        ref = solve_refinement(default_params, settings=st)
        scan = solve_scanning(default_params, None, ref, st)
        sols[m] = (ref.g_surface, scan.vs_surface)

    def change(m_lo, m_hi):
        lo, hi = sols[m_lo], sols[m_hi]
        k = m_hi // m_lo
        grid_lo = lo[0].grid
        idx = hi[0].grid.index(grid_lo.i * k, grid_lo.j * k)
        return max(np.max(np.abs(lo[s].values - hi[s].values[idx])) for s in (0, 1))

    assert change(40, 80) < 5 * change(20, 40)


# ---------------------------------------------------------------- errors


def test_nonconvergence_reports_residual(default_params):
    with pytest.raises(ConvergenceError) as exc:
        solve_refinement(default_params, settings=SolverSettings(grid_m=20, max_iter=2))
    assert exc.value.iterations == 2 and exc.value.residual > 0


def test_grid_checks(default_params, coarse_solution):
    with pytest.raises(ConfigurationError):
        solve_refinement(default_params, settings=SolverSettings(grid_m=10))
    _, _, mixed, ref, _ = coarse_solution
    with pytest.raises(ConfigurationError):
        solve_scanning(default_params, mixed, ref, SolverSettings(grid_m=41))
    with pytest.raises(ConfigurationError):
        SolverSettings(loglr_points=400)
    with pytest.raises(ConfigurationError):
        QuadratureSpec(n_points=16)


# ---------------------------------------------------------------- quadrature


def test_gauss_legendre_polynomial_exactness():
    x, w = composite_gauss_legendre(64, -2.0, 3.0, order=4)
    for k in range(8):
        exact = (3.0 ** (k + 1) - (-2.0) ** (k + 1)) / (k + 1)
        assert float(w @ x ** k) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("snr", [-5.0, 0.0, 3.0, 10.0, 20.0, 30.0])
def test_quadrature_mass(snr):
    from mixsearch.model import DensityPair

    pair = DensityPair.gaussian(1.0, snr_db=snr)
    m = mixed_densities(pair)
    for dens in ([pair.f0, pair.f1], [m.f00, m.fm, m.f11]):
        x, w = rule_for(dens, QuadratureSpec())
        assert np.all(w > 0)
        assert check_mass(dens, x, w) <= 1e-6
