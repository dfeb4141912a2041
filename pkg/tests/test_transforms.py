import math

import numpy as np
import pytest

from jeans_blowup import transforms as tf
from jeans_blowup.reference_ode import OutOfRange


def test_identities_hold_along_trajectory(traj):
    rep = tf.verify_identities(traj)
    assert len(rep.residuals) == 7
    assert rep.passes(1e-8), rep.residuals


def test_inverse_map_matches_direct_integration(chart):
    taus = -np.geomspace(0.9, 1e-2, 9)
    assert tf.compare_inverse_maps(chart, taus) < 1e-8


def test_b_up_inverts_gfrak(chart, traj):
    ts = np.linspace(1.05, 2.3, 11)
    assert np.max(np.abs(chart.b_up(chart.gfrak(ts)) - ts)) < 1e-9
    assert chart.b_up(-1.0) == traj.params.t0
    for tau in (-0.5, -0.05):
        assert chart.b_up_rootfind(tau) == pytest.approx(chart.b_up(tau), rel=1e-9)


def test_b_up_tail_approaches_blowup_time(chart, t_m):
    t = chart.b_up(np.array([0.5 * chart.tau_last, 1e-2 * chart.tau_last]))
    assert np.all(t < t_m) and t_m - t[1] < t_m - t[0]


def test_b_up_rejects_out_of_range(chart):
    with pytest.raises(OutOfRange):
        chart.b_up(0.0)
    with pytest.raises(OutOfRange):
        chart.b_up(-1.5)


def test_tilt_roundtrip_and_jacobian(rng):
    tau = -rng.uniform(1e-6, 1.0, 20)
    z = rng.normal(size=20)
    tt, zt = tf.tilt(tau, z, A=1.0)
    _, z2 = tf.untilt(tt, zt, A=1.0)
    assert np.allclose(z2, z, atol=1e-13)
    assert tf.tilt_slope() == pytest.approx(100 / 51)
    h = 1e-7
    _, zp = tf.tilt(-0.3 + h, 0.0)
    _, zm = tf.tilt(-0.3 - h, 0.0)
    J = tf.tilt_jacobian(-0.3)
    assert J[1, 0] == pytest.approx((zp - zm) / (2 * h), rel=1e-6)


def test_torus_roundtrip_and_jacobian(params, rng):
    z = rng.normal(scale=10, size=50)
    zh = tf.torus(z, params.gamma)
    assert np.all(np.abs(zh) < math.pi / 2)
    assert np.allclose(tf.untorus(zh, params.gamma), z, rtol=1e-12)
    h = 1e-6
    d = (tf.torus(1.0 + h, 0.5) - tf.torus(1.0 - h, 0.5)) / (2 * h)
    assert tf.torus_jacobian(tf.torus(1.0, 0.5), 0.5) == pytest.approx(d, rel=1e-8)
    with pytest.raises(OutOfRange):
        tf.untorus(math.pi / 2, 0.5)


def test_combined_chart_roundtrip(params):
    tau, z = -0.2, 3.0
    th, zh = tf.tilt_and_torus(tau, z, params)
    back = tf.tilt_and_torus(th, zh, params, direction="backward")
    assert back[1] == pytest.approx(z, rel=1e-12)
    with pytest.raises(ValueError):
        tf.tilt_and_torus(tau, z, params, direction="sideways")


def test_weights_in_log_form(params):
    lm = tf.log_mu(0.0, params)
    assert lm == pytest.approx(math.log(0.5) - 153 / 0.05)
    assert tf.log_eta(1.0, params) - tf.log_mu(1.0, params) == pytest.approx(math.log(0.5))
    assert tf.log_mu(1.0, params) - lm == pytest.approx(-51.0)
    assert tf.mu(0.0, params) == 0.0  # underflows, which is why logs are carried


def test_g_rate_and_b_rate_are_reciprocal(params, traj):
    B = traj.consts.Bcap
    r = tf.g_rate(params, B, 1.5, 2.0, -0.4) * tf.b_rate(params, B, -0.4, 1.5, 2.0)
    assert r == pytest.approx(1.0, rel=1e-14)


def test_duality_on_bump_run(bump_run):
    cols = np.arange(0, bump_run.x.size, 64)
    taus = np.linspace(-1.0, -0.3, 6)
    bf = tf.evolve_b_fields(bump_run, taus, cols)
    res = tf.duality_residuals(bump_run, bf, cols)
    assert max(res.values()) < 1e-6, res


def test_g_field_is_a_valid_chart(bump_run):
    g = tf.evolve_g_field(bump_run)
    assert np.all(g < 0) and np.all(g >= -1 - 1e-12)
