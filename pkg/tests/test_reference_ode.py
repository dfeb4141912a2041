import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from jeans_blowup import reference_ode as ro
from jeans_blowup.model_core import ModelParameters, derive_constants


def _direct_solution(t_end):
    """The reference equation integrated as written, without derived variables."""
    def rhs(t, y):
        f, fp = y
        return [fp, -4.0 / (3.0 * t) * fp + 2.0 / (3.0 * t * t) * f * (1 + f) + 4.0 / 3.0 * fp * fp / (1 + f)]
    return solve_ivp(rhs, (1.0, t_end), [1.0, 5.0], method="DOP853", rtol=1e-13, atol=1e-13,
                     dense_output=True)


def test_trajectory_matches_direct_integration(traj):
    sol = _direct_solution(2.2)
    ts = np.linspace(1.0, 2.2, 13)
    f, f0 = traj.sol(ts)[:2]
    ref = sol.sol(ts)
    assert np.max(np.abs(f - ref[0]) / (1 + ref[0])) < 1e-9
    assert np.max(np.abs(f0 - ref[1]) / (1 + np.abs(ref[1]))) < 1e-8


def test_log_form_pass_agrees(params, traj):
    ts = np.linspace(1.1, 2.3, 7)
    f2 = ro.integrate_log_form(params, ts)
    f1 = traj.sol(ts)[0]
    assert np.max(np.abs(f2 - f1) / (1 + f1)) < 1e-8


def test_blowup_time_inside_bracket(traj):
    tm, unc, est = ro.estimate_blowup_time(traj)
    k = traj.consts
    assert k.t_star <= tm < k.t_upper_star
    assert unc < 1e-4 * tm
    assert tm == pytest.approx(2.3561119952, abs=1e-7)


def test_threshold_sweep_converges(traj):
    _, _, est = ro.estimate_blowup_time(traj)
    assert len(est) == 3
    steps = np.abs(np.diff(est))
    assert steps[1] < steps[0]
    assert est[-1] > traj.t[-1]


def test_not_blown_up_reports_lower_bound(params):
    traj = ro.integrate(params, ro.IntegratorConfig(t_max_factor=1.5))
    assert not traj.reached_threshold
    with pytest.raises(ro.NotBlownUp) as info:
        ro.estimate_blowup_time(traj)
    assert info.value.lower_bound == pytest.approx(1.5)


def test_step_budget_exhaustion_raises(params):
    with pytest.raises(ro.StepUnderflow) as info:
        ro.integrate(params, ro.IntegratorConfig(max_steps=20))
    assert info.value.last_time > params.t0


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        ro.IntegratorConfig(rel_tol=-1.0)


def test_chi_start_ratio_and_xi_relation(traj):
    B = traj.consts.Bcap
    assert traj.chi[0] / (4 * B) == pytest.approx(25 / 16, rel=1e-12)
    assert traj.Gg[0] == pytest.approx(traj.chi[0] - 4 * B, rel=1e-12)
    assert np.max(np.abs(traj.Xi - traj.Gg / (2 * B))) < 1e-10
    assert traj.Xi[0] == pytest.approx(9 / 8, rel=1e-12)


def test_law_report_core_residuals(traj):
    laws = ro.verify_quantity_laws(traj)
    assert laws.f0_identity_max_residual < 1e-8
    assert laws.gfrak_forms_max_residual < 1e-8
    assert laws.dchi_max_residual < 1e-6
    assert laws.xi_monotone_max_violation <= 1e-10
    assert laws.G_tail < 1e-2 and laws.xi_tail < 1e-6
    assert laws.inv_g_sqrtf_decay_exponent < 0


def test_gfrak_maps_onto_unit_interval(traj):
    g = traj.gfrak
    assert g[0] == pytest.approx(-1.0, abs=1e-15)
    assert np.all(np.diff(g) > 0) and g[-1] < 0 and g[-1] > -1e-2


def test_conoid_radius_column_matches_quadrature(traj):
    for t in (1.3, 1.9, 2.3):
        assert ro.conoid_radius_of(traj, t) == pytest.approx(float(ro.conoid_radius_interp(traj, t)), rel=1e-9)


def test_summary_keys(traj):
    s = ro.summary(traj)
    assert {"constants", "assumptions", "t_m", "laws", "t_m_uncertainty"} <= set(s)
    assert s["constants"]["t_upper_star"] == pytest.approx(125 / 27)


def test_parameter_sweep_blowup_times_ordered():
    # more initial velocity blows up earlier
    tms = [ro.estimate_blowup_time(ro.integrate(ModelParameters(beta0=b)))[0] for b in (4.0, 5.0, 6.0)]
    assert tms[0] > tms[1] > tms[2]
    for b, tm in zip((4.0, 5.0, 6.0), tms):
        k = derive_constants(ModelParameters(beta0=b))
        assert k.t_star <= tm < k.t_upper_star
