import numpy as np
import pytest

from jeans_blowup import geometry as geo
from jeans_blowup.reference_ode import OutOfRange


@pytest.fixture(scope="module")
def surface(traj):
    return geo.gamma_surface(traj, 0.05)


def test_surface_constants(surface):
    assert surface.Xi0 == pytest.approx(9 / 8, rel=1e-12)
    assert surface.c_const == pytest.approx(16 / 475, rel=1e-12)
    assert surface.junction_tilde * surface.delta0 == pytest.approx(-0.48257, abs=5e-6)


def test_left_end_and_branch_continuity(surface):
    assert surface.T_tilde(-1.0 / surface.delta0) == -1.0
    assert surface.branch_gap() < 1e-10


def test_closed_form_matches_root_finding(surface):
    zeta = np.concatenate([np.linspace(-20.0, -1.0, 7), np.geomspace(0.1, 400.0, 9)])
    closed = surface.log_neg_gamma_tau(zeta)
    roots = np.array([surface.log_neg_gamma_tau_rootfind(z) for z in zeta])
    assert np.max(np.abs(closed - roots)) < 1e-9


def test_inverse_maps(surface):
    # kept where tau itself does not underflow
    zt = np.linspace(-19.0, 12.0, 41)
    assert np.allclose(surface.zeta_tilde_of_tau(surface.T_tilde(zt)), zt, rtol=1e-9, atol=1e-8)
    z = np.linspace(-19.0, 120.0, 41)
    assert np.allclose(surface.zeta_of_tau(surface.gamma_tau(z)), z, rtol=1e-9, atol=1e-8)


def test_surface_climbs_toward_blowup(surface):
    z = np.linspace(-20.0, 2000.0, 500)
    s = surface.log_neg_gamma_tau(z)
    assert np.all(np.diff(s) < 0)
    assert s[0] == pytest.approx(0.0, abs=1e-12)


def test_left_of_domain_rejected(surface):
    with pytest.raises(geo.LeftOfDomain):
        surface.log_neg_gamma_tau(-21.0)


def test_conormal_ranges(surface):
    J = surface.junction_tilde
    ql = surface.q(np.linspace(-20.0, J, 200))
    qr = surface.q(J + np.geomspace(1e-6, 800.0, 200))
    assert ql.min() == pytest.approx(25.5 * surface.c_const / 2, rel=1e-12)
    assert ql.max() < 0.68
    assert 17.1 < qr.min() and qr.max() < 25.5


def test_conoid_closed_form_and_tail(chart, t_m):
    con = geo.Conoid(chart)
    ts = np.linspace(1.0, chart.traj.t[-1], 200)
    assert np.max(np.abs(con.radius(ts) - con.radius_closed_form(ts))) < 1e-6
    tail = np.array([chart.traj.t[-1] + 0.5 * (t_m - chart.traj.t[-1])])
    assert con.radius(tail)[0] > con.radius(chart.traj.t[-1])
    with pytest.raises(OutOfRange):
        con.radius(t_m)


def test_domain_classifier(chart):
    cls = geo.DomainClassifier(geo.Conoid(chart), band=1e-9)
    assert cls.classify(1.0, 0.5) is geo.DomainLabel.INHOMOGENEOUS
    assert cls.classify(1.0, 1.0) is geo.DomainLabel.ON_CONOID
    assert cls.classify(1.0, 3.0) is geo.DomainLabel.HOMOGENEOUS


@pytest.mark.parametrize("delta0", [0.02, 0.05, 0.1])
def test_ladder_points_inside_conoid(traj, chart, delta0):
    rep = geo.verify_pm_reachability(traj, chart, delta0)
    assert rep.all_inhomogeneous, rep.min_margin
    assert rep.to_dict()["points"][0]["a"] == 0.0


def test_lens_decay_bound(surface):
    rep = geo.lens_decay_check(surface)
    assert rep.holds and rep.n_points > 0


def test_surface_time_in_homogeneous_chart(surface, chart):
    t = geo.gamma_t(surface, chart, np.array([-20.0, 0.0, 10.0]))
    assert t[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(t) > 0)
