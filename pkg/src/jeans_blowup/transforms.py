"""Time compactification, tilted and torus charts, and the identity ledger.

Naming follows the charts used throughout the package:

* ``t, x``       physical time and space,
* ``tau, zeta``  compactified time ``tau = g(t, x)`` in ``[-1, 0)``, ``zeta = x``,
* ``tau~, zeta~`` tilted chart, ``zeta~^i = (a c^i / A) ln(-tau) + zeta^i``,
* ``tau^, zeta^`` torus chart, ``zeta^^i = arctan(gamma zeta~^i)``.

The identities verified by :func:`verify_identities` are those of the Jeans
coefficients ``a = c = 4/3``, ``b = 2/3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .model_core import ModelParameters
from .reference_ode import ReferenceTrajectory, OutOfRange


class ChartDegenerate(RuntimeError):
    """Raised when d_t g <= 0, so the compactified chart is not invertible."""


# Tilt parameters: a = -100, c = (-1/51, 0, ...), d = 0, kappa = (-51, 0, ...).
TILT_A = -100.0
TILT_C1 = -1.0 / 51.0
KAPPA1 = -51.0
OMEGA = 1.0
THETA = 1.0


def tilt_slope() -> float:
    """The product a*c^1 entering the tilt (100/51)."""
    return TILT_A * TILT_C1


# ---------------------------------------------------------------------------
# homogeneous time compactification
# ---------------------------------------------------------------------------

def _dlg_dt(traj: ReferenceTrajectory, t, f, lg):
    p = traj.params
    src = t ** (p.a - 2.0) * f * (1.0 + f) ** (1.0 - p.c)
    return -p.A * traj.consts.Bcap * src * np.exp(p.b / p.A * lg)


@dataclass
class HomogeneousChart:
    """The pair gfrak(t) and its inverse b_up(tau) built from a trajectory.

    The inverse is a cubic Hermite interpolant of ``t`` against ``ln(-tau)``
    using the exact slopes, so it is monotone and fourth order accurate on
    the trajectory nodes.  Past the last node the blowup asymptotics
    ``t_m - t ~ tau^2`` are used.
    """

    traj: ReferenceTrajectory
    t_m: float
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        tr = self.traj
        lg = tr.log_neg_gfrak
        slope = _dlg_dt(tr, tr.t, tr.f, lg)
        if np.any(slope >= 0):
            raise ChartDegenerate("gfrak is not strictly increasing along the trajectory")
        # x must increase: reverse so that ln(-tau) runs from its minimum up to 0
        self._spline = CubicHermiteSpline(lg[::-1], tr.t[::-1], (1.0 / slope)[::-1])
        self.tau_last = -math.exp(lg[-1])

    def gfrak(self, t):
        t = np.asarray(t, dtype=float)
        tr = self.traj
        if np.any(t < tr.t[0]) or np.any(t > tr.t[-1]):
            raise OutOfRange("t outside the trajectory")
        return -np.exp(tr.sol(t)[3])

    def b_up(self, tau):
        """Inverse of gfrak on [-1, 0)."""
        tau = np.asarray(tau, dtype=float)
        if np.any(tau >= 0) or np.any(tau < -1.0 - 1e-14):
            raise OutOfRange("tau must lie in [-1, 0)")
        out = np.empty_like(tau)
        inside = tau <= self.tau_last
        out[inside] = self._spline(np.log(-tau[inside]))
        t_last = self.traj.t[-1]
        # tail: t_m - t ~ C tau^2 near blowup
        out[~inside] = self.t_m - (self.t_m - t_last) * (tau[~inside] / self.tau_last) ** 2
        out = np.where(tau == -1.0, self.traj.params.t0, out)
        return out if out.ndim else float(out)

    def b_up_rootfind(self, tau: float) -> float:
        """Newton solve of ln(-gfrak(t)) = ln(-tau) on the dense output."""
        tr = self.traj
        target = math.log(-tau)
        t = float(self.b_up(np.array(tau)))
        for _ in range(30):
            t = min(max(t, tr.t[0]), tr.t[-1])
            y = tr.sol(t)
            r = y[3] - target
            d = float(_dlg_dt(tr, t, y[0], y[3]))
            step = r / d
            t -= step
            if abs(step) < 1e-15 * max(1.0, abs(t)):
                break
        return t

    def f_of_tau(self, tau):
        """(f, f0, chi) at t = b_up(tau)."""
        t = np.atleast_1d(self.b_up(tau))
        y = self.traj.sol(t)
        f, f0, lg = y[0], y[1], y[3]
        p = self.traj.params
        chi = t ** (2.0 - p.a) * f0 / ((1.0 + f) ** (2.0 - p.c) * f * np.exp(p.b / p.A * lg))
        return t, f, f0, chi


def b_up_by_integration(params: ModelParameters, traj: ReferenceTrajectory, taus,
                        rtol=1e-12, atol=1e-14):
    """Integrate d b_up / d tau together with the reference ODE in tau.

    The state is (b_up, f, f0) with
    ``d b_up/d tau = b_up^{2/3}(1+f)^{1/3} / (A B f (-tau)^{2/(3A)+1})``.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(taus >= 0) or np.any(taus < -1):
        raise OutOfRange("tau must lie in [-1, 0)")
    p, B = params, traj.consts.Bcap
    a, b, c, A = p.a, p.b, p.c, p.A
    # the general form of the time map: d tau/dt = A B t^{a-2} f (1+f)^{1-c} (-tau)^{b/A+1}
    def rhs(tau, y):
        t, f, f0 = y
        dt = 1.0 / (A * B * t ** (a - 2.0) * f * (1.0 + f) ** (1.0 - c) * (-tau) ** (b / A + 1.0))
        fpp = -a / t * f0 + b / t**2 * f * (1.0 + f) + c * f0**2 / (1.0 + f)
        return [dt, f0 * dt, fpp * dt]

    order = np.argsort(taus)
    ts = taus[order]
    sol = solve_ivp(rhs, (-1.0, float(ts[-1])), [p.t0, p.beta, p.beta0], method="DOP853",
                    t_eval=ts, rtol=rtol, atol=atol)
    out = np.empty_like(taus)
    out[order] = sol.y[0]
    return out


def compare_inverse_maps(chart: HomogeneousChart, taus) -> float:
    """Max relative gap between the interpolated and integrated inverses."""
    a = np.asarray(chart.b_up(np.asarray(taus)))
    b = b_up_by_integration(chart.traj.params, chart.traj, taus)
    return float(np.max(np.abs(a - b) / np.abs(b)))


# ---------------------------------------------------------------------------
# inhomogeneous chart g(t, x) and its inverse b(tau, zeta)
# ---------------------------------------------------------------------------

def g_rate(params: ModelParameters, Bcap: float, t, rho, g):
    """d_t g = A B rho (-g)^{2/(3A)+1} / (t^{2/3} (1+rho)^{1/3})."""
    p = params
    return (p.A * Bcap * t ** (p.a - 2.0) * rho * (1.0 + rho) ** (1.0 - p.c)
            * (-g) ** (p.b / p.A + 1.0))


def b_rate(params: ModelParameters, Bcap: float, tau, b, rho):
    """d_tau b, the reciprocal of g_rate evaluated at t = b."""
    return 1.0 / g_rate(params, Bcap, b, rho, tau)


def evolve_g_field(run):
    """Return the co-evolved g samples of a wave run after checking d_t g > 0."""
    if np.any(run.gdot_ck <= 0):
        raise ChartDegenerate("d_t g <= 0 on the run grid")
    if np.any(run.g_ck >= 0) or np.any(run.g_ck < -1 - 1e-12):
        raise ChartDegenerate("g left [-1, 0)")
    return run.g_ck


@dataclass
class BField:
    """Samples of b(tau, zeta) and b_1 = d_zeta b on a (tau, zeta) lattice."""

    tau: np.ndarray
    zeta: np.ndarray
    b: np.ndarray
    b1: np.ndarray
    rho: np.ndarray
    rho_t: np.ndarray


def evolve_b_fields(run, taus, cols=None, rtol=1e-10, atol=1e-12) -> BField:
    """Integrate d_tau b and d_tau b_1 along every spatial column of a run.

    ``rho`` and its derivatives at ``(b, zeta)`` come from the run's Hermite
    time interpolation.  ``b_1`` obeys the zeta-derivative of the b equation,
    with ``d_zeta rho = rho_t b_1 + rho_x``.
    """
    p, B = run.params, run.consts.Bcap
    if run.params.n != 1:
        raise NotImplementedError("b fields are built for n = 1 runs")
    cols = np.arange(run.x.size) if cols is None else np.asarray(cols)
    taus = np.asarray(taus, dtype=float)
    N = cols.size
    a, b_, c, A = p.a, p.b, p.c, p.A
    e = b_ / A + 1.0

    def rhs(tau, y):
        bb, b1 = y[:N], y[N:]
        rho, rt, rx = run.sample(bb, cols)
        opr = 1.0 + rho
        # F = 1 / (A B b^{a-2} rho (1+rho)^{1-c} (-tau)^e)
        F = 1.0 / (A * B * bb ** (a - 2.0) * rho * opr ** (1.0 - c) * (-tau) ** e)
        dF_db = -(a - 2.0) / bb * F
        dF_drho = -F * (1.0 / rho + (1.0 - c) / opr)
        dzrho = rt * b1 + rx
        return np.concatenate([F, dF_db * b1 + dF_drho * dzrho])

    y0 = np.concatenate([np.full(N, p.t0), np.zeros(N)])
    sol = solve_ivp(rhs, (-1.0, float(taus[-1])), y0, t_eval=taus, method="RK45",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise ChartDegenerate(f"b-field integration failed: {sol.message}")
    bb = sol.y[:N].T
    b1 = sol.y[N:].T
    rho = np.empty_like(bb)
    rt = np.empty_like(bb)
    for k in range(bb.shape[0]):
        rho[k], rt[k], _ = run.sample(bb[k], cols)
    return BField(tau=taus, zeta=run.x[cols], b=bb, b1=b1, rho=rho, rho_t=rt)


def duality_residuals(run, bf: BField, cols=None) -> dict:
    """Check d_tau b = 1/d_t g and b_1 = -d_x g / d_t g.

    ``b`` is compared with the inverse of the co-evolved ``g`` field, and
    ``b_1`` with ``-g_x/g_t`` at ``(b, zeta)``.
    """
    p, B = run.params, run.consts.Bcap
    cols = np.arange(run.x.size) if cols is None else np.asarray(cols)
    inv_err = 0.0
    b1_err = 0.0
    rate_err = 0.0
    for k, tau in enumerate(bf.tau):
        g, gt, gx = run.sample_g(bf.b[k], cols)
        inv_err = max(inv_err, float(np.max(np.abs(g - tau))) / abs(tau))
        scale = max(1.0, float(np.max(np.abs(bf.b1[k]))))
        b1_err = max(b1_err, float(np.max(np.abs(bf.b1[k] + gx / gt))) / scale)
        rate = b_rate(p, B, tau, bf.b[k], bf.rho[k])
        rate_err = max(rate_err, float(np.max(np.abs(rate * gt - 1.0))))
    return {"g_of_b_minus_tau": inv_err, "b1_vs_gx_over_gt": b1_err,
            "dtau_b_times_dt_g_minus_1": rate_err}


# ---------------------------------------------------------------------------
# tilted and torus charts
# ---------------------------------------------------------------------------

def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau >= 0) or np.any(tau < -1.0):
        raise OutOfRange("tau must lie in [-1, 0)")
    return tau


def tilt(tau, zeta1, A=1.0):
    tau = _check_tau(tau)
    return tau, tilt_slope() / A * np.log(-tau) + zeta1


def untilt(tau_t, zeta1_t, A=1.0):
    tau_t = _check_tau(tau_t)
    return tau_t, zeta1_t - tilt_slope() / A * np.log(-tau_t)


def tilt_jacobian(tau, A=1.0):
    """d(tau~, zeta~^1)/d(tau, zeta^1)."""
    return np.array([[1.0, 0.0], [tilt_slope() / (A * tau), 1.0]])


def torus(zeta_t, gamma):
    return np.arctan(gamma * np.asarray(zeta_t, dtype=float))


def untorus(zeta_h, gamma):
    zeta_h = np.asarray(zeta_h, dtype=float)
    if np.any(np.abs(zeta_h) >= math.pi / 2):
        raise OutOfRange("torus coordinate must lie in (-pi/2, pi/2)")
    return np.tan(zeta_h) / gamma


def torus_jacobian(zeta_h, gamma):
    """d zeta^/d zeta~ = gamma cos^2(zeta^)."""
    return gamma * np.cos(zeta_h) ** 2


def tilt_and_torus(tau, zeta1, params: ModelParameters, direction="forward"):
    """Map (tau, zeta^1) to (tau^, zeta^^1) or back."""
    A, gamma = params.A, params.gamma
    if direction == "forward":
        tt, zt = tilt(tau, zeta1, A)
        return tt, torus(zt, gamma)
    if direction == "backward":
        zt = untorus(zeta1, gamma)
        return untilt(tau, zt, A)
    raise ValueError("direction must be 'forward' or 'backward'")


def log_mu(zeta1_t, params: ModelParameters):
    """ln mu with mu = sigma0 e^{-153/delta0} e^{-51 zeta~^1}.

    mu itself underflows for practical delta0, hence the log.
    """
    return math.log(params.sigma0) - 153.0 / params.delta0 - 51.0 * np.asarray(zeta1_t)


def log_eta(zeta1_t, params: ModelParameters):
    return log_mu(zeta1_t, params) + math.log(params.sigma0)


def mu(zeta1_t, params):
    return np.exp(log_mu(zeta1_t, params))


def eta(zeta1_t, params):
    return np.exp(log_eta(zeta1_t, params))


# ---------------------------------------------------------------------------
# identity ledger
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    residuals: dict
    argmax_t: dict

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def passes(self, tol=1e-8) -> bool:
        return self.max_residual < tol

    def to_dict(self) -> dict:
        return {"residuals": dict(self.residuals), "argmax_t": dict(self.argmax_t),
                "max_residual": self.max_residual}


def _rel(lhs, rhs):
    return np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)


def verify_identities(traj: ReferenceTrajectory, seed: int = 0, t_cut: float | None = None) -> IdentityReport:
    """Evaluate both sides of the seven identities at every trajectory node.

    ``b_up = t`` and ``tau = gfrak(t)`` at each node, so the identities test
    the co-integrated time map against the closed forms built from chi.
    The two identities involving perturbation variables are evaluated with
    random ``u, z, B_j`` drawn from a fixed seed.
    """
    p = traj.params
    A, B = p.A, traj.consts.Bcap
    sel = slice(None) if t_cut is None else traj.t <= t_cut
    t = traj.t[sel]
    f = traj.f[sel]
    f0 = traj.f0[sel]
    lg = traj.log_neg_gfrak[sel]
    chi = traj.chi[sel]
    mt = np.exp(lg)  # -tau
    e = 2.0 / (3.0 * A) + 1.0
    res, arg = {}, {}

    def record(name, lhs, rhs):
        r = _rel(lhs, rhs)
        i = int(np.argmax(r))
        res[name] = float(r[i])
        arg[name] = float(t[i])

    record("iden3",
           t ** (-1 / 3) * (1 + f) ** (1 / 3) / (A * B * f * mt**e),
           np.sqrt(chi) / (A * mt * math.sqrt(B) * np.sqrt(f)))
    record("iden1",
           t ** (-4 / 3) * (1 + f) ** (4 / 3) / (f0 * A * B * mt**e),
           1.0 / (A * mt))
    record("iden2",
           t ** (2 / 3) * (1 + f) ** (-2 / 3) * f0 / (A * B * f * mt**e),
           chi / (A * B * mt))
    record("keyid3", t * f0 / (1 + f), np.sqrt(chi * f / B))

    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, t.size)
    z = rng.uniform(-0.3, 0.3, t.size)
    worst = np.zeros(t.size)
    for l0, l1, l2, l3 in ((1, 2, 1 / 3, 2), (1, -1, 1 / 3, 2), (0, -4, 4 / 3, 2), (2, 5, -1, 3)):
        bb = t * (1 + z) ** 3
        lhs = bb ** (l1 / 3) * (1 + f + f * u) ** l2 / (A * B * (f + f * u) ** l0 * mt ** (l3 / (3 * A) + 1))
        rhs = (t ** (l1 / 3) * (1 + f) ** l2 / (A * B * f**l0 * mt ** (l3 / (3 * A) + 1))
               * (1 + z) ** l1 * (1 + f / (1 + f) * u) ** l2 / (1 + u) ** l0)
        worst = np.maximum(worst, _rel(lhs, rhs))
    i = int(np.argmax(worst))
    res["id1"], arg["id1"] = float(worst[i]), float(t[i])

    left = (1.0 / B) * mt ** (-2 / (3 * A)) / (t ** (-2 / 3) * (1 + f) ** (2 / 3))
    mid = t**2 * f0 / (1 + f) ** 2
    right = chi / B * f / f0
    r3 = np.maximum(_rel(left, mid), _rel(mid, right))
    i = int(np.argmax(r3))
    res["id3"], arg["id3"] = float(r3[i]), float(t[i])

    Bj = rng.uniform(-1.0, 1.0, t.size)
    bj = (1.0 / B) * mt ** (-2 / (3 * A)) / (t ** (-2 / 3) * (1 + f) ** (2 / 3)) * Bj
    r2 = np.maximum(_rel(mid * Bj, bj), _rel(right * Bj, bj))
    i = int(np.argmax(r2))
    res["id2"], arg["id2"] = float(r2[i]), float(t[i])
    return IdentityReport(res, arg)
