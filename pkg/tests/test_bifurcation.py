import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_nod import bifurcation as bif
from coupled_nod.model import AgentParams, coupled_field

BASE = AgentParams(d=1, u=1.3, b=0.0, K_z=2, K_x=3, k=10, sigma=0.1)
# set whose reduced cubic term matches the uncoupled normal form (see tests/test_acceptance.py)
NEAR_NF = AgentParams(d=1, u=1.1, b=0.0, K_z=2, K_x=1, k=1, sigma=0.5)
NEAR_NF_RHO = 5.0 / 6.0


def test_reduce_to_scalar_origin():
    assert bif.reduce_to_scalar(BASE, 0.0, 0.5) == (0.0, 0.0)


def test_reduce_to_scalar_underflow_is_domain_error():
    with pytest.raises(bif.ReductionDomainError):
        bif.reduce_to_scalar(BASE, 5.0, 0.5)
    assert np.isnan(bif.g_values(BASE, np.array([5.0]), 0.5)[0])


def test_x_of_z_lies_on_opinion_nullcline():
    p = BASE.with_(b=0.07)
    for z in np.linspace(-0.3, 0.3, 13):
        x, _ = bif.reduce_to_scalar(p, z, 0.5)
        assert abs(coupled_field(p, z, x, 0.5)[0]) < 1e-12


def test_g_is_odd_for_zero_bias():
    z = np.linspace(-0.4, 0.4, 801)
    g = bif.g_values(BASE, z, 0.5)
    assert np.allclose(g, -g[::-1], atol=1e-9, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 1.5), st.floats(-0.15, 0.15), st.floats(0.05, 0.9))
def test_g_roots_are_equilibria(u, b, rho):
    p = BASE.with_(u=u, b=b)
    for z in bif.scan_g_roots(p, rho, -0.6, 0.6, step=1e-3):
        x = float(bif.x_of_z(p, z, rho))
        dz, dx = coupled_field(p, z, x, rho)
        assert abs(dz) < 1e-9 and abs(dx) < 1e-8


def test_newton_finds_the_scan_roots():
    p = BASE.with_(u=1.2, b=0.05)
    roots = bif.scan_g_roots(p, 0.5, -1, 1)
    eq = bif.newton_equilibria_grid(p, 0.5)
    assert len(roots) == len(eq)
    assert np.allclose(np.sort(eq[:, 0]), roots, atol=1e-8)


@pytest.mark.parametrize("u,expected", [(0.5, "stable"), (0.99, "stable"), (1.0, "marginal"),
                                        (1.01, "unstable"), (1.5, "unstable")])
def test_neutral_stability(u, expected):
    p = AgentParams(d=1, u=u, K_z=2, b=0)
    assert bif.neutral_stability(p) == expected
    J = bif.neutral_jacobian(p)
    assert abs(np.linalg.det(J) - (1 - u)) < 1e-12
    assert abs(np.trace(J) - (u - 1 - 2 - 1)) < 1e-12
    # the neutral Jacobian is the full Jacobian at the origin
    assert np.allclose(J, bif.jacobian(p, 0.0, 0.0, 0.5))


def test_neutral_stability_requires_zero_bias():
    with pytest.raises(ValueError):
        bif.neutral_stability(BASE.with_(b=0.1))


def test_cubic_coefficient_values():
    assert bif.cubic_coefficient(BASE, 0.5) == pytest.approx(359, abs=1e-9)
    assert bif.cubic_coefficient(BASE, 0.05) == pytest.approx(-46, abs=1e-9)
    assert bif.classify_criticality(BASE, 0.5) == "subcritical_quintic"
    assert bif.classify_criticality(BASE, 0.05) == "supercritical"


def test_series_cubic_matches_finite_differences_of_g():
    p = BASE.with_(u=1.0)
    h = 2e-3
    for rho in (0.5, 0.05):
        g = bif.g_values(p, np.array([-2 * h, -h, 0, h, 2 * h]), rho)
        d3 = (g[4] - 2 * g[3] + 2 * g[1] - g[0]) / (2 * h**3)
        assert d3 == pytest.approx(bif.series_cubic_coefficient(p, rho), rel=5e-3)
        # same sign as the closed-form criticality coefficient
        assert np.sign(d3) == np.sign(bif.cubic_coefficient(p, rho))


def test_out_of_theory_quintic():
    p = AgentParams(d=1, u=1, K_z=2, K_x=1, k=1, sigma=0.1, b=0)
    assert bif.quintic_coefficient(p, 0.1) >= 0
    with pytest.raises(bif.OutOfTheoryError):
        bif.classify_criticality(p, 0.1)


def test_normal_form_saddles():
    (z1, b1), (z2, b2) = bif.normal_form_saddles(1.3, 1.0)
    assert z1 == pytest.approx(0.316228, abs=1e-6) and b1 == pytest.approx(-0.0632456, abs=1e-7)
    assert (z2, b2) == (-z1, -b1)
    with pytest.raises(ValueError):
        bif.normal_form_saddles(0.9, 1.0)


def test_b_branch_samples_are_equilibria_with_correct_stability():
    br = bif.b_branch(NEAR_NF, NEAR_NF_RHO, (-0.5, 0.5))
    assert len(br) > 20
    for p_, z, x, s, _ in br.rows():
        res = bif.residual(NEAR_NF.with_(b=p_), z, x, NEAR_NF_RHO)
        assert np.max(np.abs(res)) <= bif.RESIDUAL_TOL
        if s != "marginal":
            assert s == bif.stability(NEAR_NF.with_(b=p_), z, x, NEAR_NF_RHO)


def test_folds_change_the_root_count():
    br = bif.b_branch(NEAR_NF, NEAR_NF_RHO, (-0.5, 0.5))
    assert len(br.folds) == 2
    for f in br.folds:
        counts = [len(bif.scan_g_roots(NEAR_NF.with_(b=f.param + s), NEAR_NF_RHO, -2, 2))
                  for s in (-1e-4, 1e-4)]
        assert sorted(counts) == [1, 3]
        J = bif.jacobian(NEAR_NF.with_(b=f.param), f.z, f.x, NEAR_NF_RHO)
        assert abs(np.linalg.det(J)) < 1e-6


def test_below_pitchfork_no_folds_and_monotone():
    br = bif.b_branch(NEAR_NF.with_(u=0.9), NEAR_NF_RHO, (-0.5, 0.5))
    assert br.folds == []
    assert np.all(np.diff(br.param) < 0)
    assert all(s == "stable" for s in br.stability)


def test_u_diagram_pitchfork_topology_supercritical():
    branches = bif.u_diagram(BASE.with_(b=0.0), 0.05, (0.9, 1.01))
    below = bif.equilibria_on(branches, 0.95)
    above = bif.equilibria_on(branches, 1.005)
    assert len(below) == 1 and len(above) == 3
    assert np.allclose(above[:, 0], bif.scan_g_roots(BASE.with_(u=1.005), 0.05, -1, 1), atol=1e-8)


def test_saddle_pair_signs():
    br = bif.b_branch(BASE, 0.5, (-1, 1))
    f1, f2 = bif.saddle_pair(br)
    assert f1.z > 0 > f1.param and f2.z < 0 < f2.param


def test_sensitivity_u_matches_minus_saturation():
    pr = bif.BifurcationProblem(NEAR_NF.with_(u=1.2), "b", (-0.5, 0.5), NEAR_NF_RHO)
    s = bif.threshold_sensitivity(pr, "u")
    assert s.finite_difference == pytest.approx(s.analytic, rel=1e-2)


def test_sensitivity_Kx_formula_matches_finite_differences():
    pr = bif.BifurcationProblem(BASE.with_(u=1.2, K_x=0.05), "b", (-1, 1), 0.8)
    br = bif.b_branch(pr.params, pr.rho, pr.range)
    for f in bif.saddle_pair(br):
        s = bif.threshold_sensitivity(pr, "K_x", fold=f)
        assert s.finite_difference == pytest.approx(s.analytic, rel=2e-2, abs=1e-6)
        assert np.sign(s.analytic) == -np.sign(f.z)


def test_threshold_table_u_grid_increasing():
    rows = bif.threshold_table(BASE, 0.5, "u", [1.05, 1.1, 1.2, 1.3, 1.5])
    assert all(r["ok"] for r in rows)
    b2 = [r["b2_star"] for r in rows]
    assert np.all(np.diff(b2) > 0)
    assert all(r["z2_star"] < 0 < r["b2_star"] for r in rows)


def test_threshold_table_Kx_grid_grows_with_Kx():
    # the bistable region widens with K_x for these parameters (see README)
    rows = bif.threshold_table(BASE.with_(u=1.1), 0.5, "K_x", [1, 2, 3, 4])
    b2 = [r["b2_star"] for r in rows]
    assert np.all(np.diff(b2) > 0)
    assert len(bif.threshold_table(BASE, 0.5, "u", [1.3])) == 1


def test_threshold_table_flags_failures():
    rows = bif.threshold_table(NEAR_NF, NEAR_NF_RHO, "u", [0.9, 1.3], (-0.5, 0.5))
    assert rows[0]["ok"] is False and rows[1]["ok"] is True


def test_problem_validation():
    with pytest.raises(ValueError):
        bif.BifurcationProblem(BASE, "k", (0, 1))
    with pytest.raises(ValueError):
        bif.BifurcationProblem(BASE, "b", (1, 0))
