import numpy as np
import pytest
from scipy.special import beta, betainc

from jeans_blowup import fuchsian_check as fc
from jeans_blowup import reference_ode as ro
from jeans_blowup.model_core import ModelParameters
from jeans_blowup.transforms import HomogeneousChart


def test_constants(params):
    K = fc.fuchsian_constants(params)
    assert K.kappa_hat == pytest.approx(1 / 150)
    assert K.gamma1 == pytest.approx(8.0)
    assert K.gamma2 == pytest.approx(37500.0)
    assert K.target == pytest.approx(1 / 600)
    assert (K.a0_lower, K.a0_upper) == (0.125, 3.0)


def test_smoothstep_is_regularized_incomplete_beta():
    s = np.linspace(0.0, 1.0, 101)
    assert np.allclose(fc.smoothstep7(s), betainc(8, 8, s), atol=1e-14)
    assert fc.smoothstep7(-0.5) == 0.0 and fc.smoothstep7(1.5) == 1.0


def test_smoothstep_derivative_has_order_seven_zeros():
    # d/ds I_s(8, 8) = s^7 (1-s)^7 / B(8, 8), so derivatives 1..7 vanish at both ends
    s = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    fd = (fc.smoothstep7(s + h) - fc.smoothstep7(s - h)) / (2 * h)
    exact = s**7 * (1 - s) ** 7 / beta(8, 8)
    assert np.allclose(fd, exact, rtol=1e-6, atol=1e-9)


def test_cutoff_support():
    d = 0.05
    assert fc.cutoff_phi(-2.0 / d - 1.0, d) == 0.0
    assert fc.cutoff_phi(-1.0 / d, d) == 1.0
    assert fc.cutoff_phi(-1.5 / d, d) == pytest.approx(0.5)


@pytest.mark.parametrize("n", [1, 2])
def test_symmetrized_source_equals_explicit_matrix(rng, n):
    for _ in range(20):
        q = rng.uniform(3.0, 100.0, n)
        pm, pe = rng.uniform(0, 0.5), rng.uniform(0, 0.25)
        a = fc.symmetrized_source_matrix(q, pm, pe, 0.5)
        b = fc.explicit_symmetrized_matrix(q, pm, pe, 0.5)
        assert np.allclose(a, b, atol=1e-12)


def test_symmetrized_matrix_band(rng):
    for qm in (3.01, 10.0, 50.0, 99.9):
        q = np.array([qm])
        for pm, pe in ((0.0, 0.0), (0.5, 0.25)):
            e = np.linalg.eigvalsh(fc.explicit_symmetrized_matrix(q, pm, pe, 0.5))
            assert e.min() > 1 / 50 and e.max() < 250


def test_s_equals_k_when_m2_equals_k(chart):
    S, ok, strict = fc.s_along_trajectory(chart)
    assert np.allclose(S, 0.25, atol=1e-15)
    assert ok and not strict


@pytest.mark.parametrize("m2", [0.0, 0.1, 0.2])
def test_s_bounds_below_k(m2):
    p = ModelParameters(m2=m2)
    tr = ro.integrate(p)
    ch = HomogeneousChart(tr, ro.estimate_blowup_time(tr)[0])
    S, ok, strict = fc.s_along_trajectory(ch)
    assert ok and strict
    assert S.max() <= 0.25 * (1 + 1 / p.beta)


def test_coefficients_at_zero_state(chart):
    c = fc.coefficients_at(chart, -0.3, np.zeros(4))
    assert float(c.L) == 0.0 and float(c.H) == 0.0
    assert float(c.R) == pytest.approx(float(c.S * c.frac_f * c.chi_over_B))
    A0 = fc.revised_A0(c, np.zeros(1), 1)
    assert np.allclose(np.sort(np.linalg.eigvalsh(A0)), [0.25, 1, 1, 1, 2, 2])
    Ai = fc.revised_Ai(c, 1, 0)
    assert Ai[0, 0] == pytest.approx(100 / 51)
    assert Ai[0, 1] == pytest.approx(float(c.S * c.chi_over_B))


def test_untilted_matrices_shape(chart):
    c = fc.coefficients_at(chart, -0.3, np.array([0.01, 0.0, 0.0, 0.02]))
    A0, Ai = fc.untilted_matrices(c, np.array([0.02]), 1)
    assert A0.shape == (5, 5) and len(Ai) == 1
    assert np.allclose(A0, A0.T) and np.allclose(Ai[0], Ai[0].T)


def test_state_outside_ball_rejected(chart):
    with pytest.raises(fc.OutOfBall):
        fc.coefficients_at(chart, -0.3, np.array([0.5, 0, 0, 0]), R_hat=0.1)
    with pytest.raises(ValueError):
        fc.coefficients_at(chart, -0.3, np.zeros(3))


def test_z_block_explicit_part(chart):
    c = fc.coefficients_at(chart, -0.2, np.array([0.0, 0.0, 0.0, 0.05]))
    assert np.shape(c.Z) == (1, 1)
    assert float(c.Z[0, 0]) == pytest.approx(float(100 / 51 * c.R * 0.05 + c.H))


def test_pd_audit_small_sample(chart):
    rep = fc.pd_audit(chart, samples=2000, seed=3)
    assert rep.passes and rep.witness is None
    assert rep.a0_min >= 0.125 and rep.a0_max <= 3.0
    assert rep.to_dict()["passes"] is True


def test_pd_audit_rejects_bad_conormal(traj, t_m):
    p = ModelParameters(q_mag=2.0)
    tr = ro.integrate(p)
    with pytest.raises(ValueError):
        fc.pd_audit(HomogeneousChart(tr, t_m), samples=10)


@pytest.mark.parametrize("delta0", [0.02, 0.05])
def test_boundary_minors_nonnegative(chart, delta0):
    rep = fc.spacelike_minor_audit(chart, delta0)
    assert rep.passes
    assert rep.d2_min_left > 0 and rep.d2_min_right > 0
    assert rep.face_max_abs == 0.0


def test_boundary_minors_with_small_state(chart):
    rep = fc.spacelike_minor_audit(chart, 0.05, state_scale=0.01)
    assert rep.passes


def test_leading_minors_of_known_matrix():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(fc.leading_minors(M), [2.0, 5.0])


def test_feasibility_interval(chart):
    r4 = fc.feasibility(chart, sobolev_k=4)
    r6 = fc.feasibility(chart, sobolev_k=6)
    assert r4.nonempty and r6.nonempty
    assert r6.gamma_max < r4.gamma_max
    assert r4.target == pytest.approx(1 / 600)
    assert not r4.configured_admissible
    with pytest.raises(ValueError):
        fc.feasibility(chart, sobolev_k=3)


def test_fuchsian_variables_on_bump_run(bump_run):
    taus = np.linspace(-1.0, -0.5, 5)
    cols = np.arange(0, bump_run.x.size, 32)
    fv = fc.fuchsian_variables(bump_run, taus, cols)
    assert fv.u.shape == (5, cols.size)
    assert np.allclose(fv.z[0], 0.0, atol=1e-12)
    assert fv.max_abs()["u"] < 0.1


def test_explicit_equation_residuals(bump_run):
    rep = fc.residual_explicit_equations(bump_run)
    assert not rep.homogeneous
    assert rep.passes, rep.to_dict()
    assert rep.ratio_u > 3.0 and rep.ratio_z > 3.0


def test_residuals_on_homogeneous_run(flat_run):
    rep = fc.residual_explicit_equations(flat_run)
    assert rep.homogeneous and rep.passes
