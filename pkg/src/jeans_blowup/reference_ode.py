"""Reference blowup ODE: integration, blowup time and diagnostic quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp, quad

from .model_core import ModelParameters, derive_constants, DerivedConstants, check_assumptions


class StepUnderflow(RuntimeError):
    def __init__(self, message, last_time):
        super().__init__(message)
        self.last_time = last_time


class NotBlownUp(RuntimeError):
    def __init__(self, message, lower_bound):
        super().__init__(message)
        self.lower_bound = lower_bound


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    blowup_threshold: float = 1e12
    max_steps: int = 200000
    t_max_factor: float = 1e3

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.blowup_threshold < 1e8:
            raise ValueError("blowup_threshold must be at least 1e8")


def _rhs(params: ModelParameters, Bcap: float):
    a, b, c, A = params.a, params.b, params.c, params.A
    k, m2 = params.k, params.m2

    def rhs(t, y):
        f, f0, _I, lg, _R = y
        opf = 1.0 + f
        fpp = -a / t * f0 + b / t**2 * f * opf + c * f0**2 / opf
        src = t ** (a - 2.0) * f * opf ** (1.0 - c)
        # d ln(-gfrak)/dt for the compactified time
        dlg = -A * Bcap * src * math.exp(b / A * lg)
        gq = m2 * f0**2 / opf**2 + 4.0 * (k - m2) * opf / t**2
        return [f0, fpp, src, dlg, math.sqrt(max(gq, 0.0))]

    return rhs


def _rhs_log(params: ModelParameters):
    a, b, c = params.a, params.b, params.c

    def rhs(t, y):
        w, v = y
        return [v, -a / t * v + b / t**2 * math.expm1(w) + (c - 1.0) * v * v]

    return rhs


@dataclass
class ReferenceTrajectory:
    params: ModelParameters
    consts: DerivedConstants
    cfg: IntegratorConfig
    t: np.ndarray
    f: np.ndarray
    f0: np.ndarray
    integral: np.ndarray
    log_neg_gfrak: np.ndarray
    conoid_radius: np.ndarray
    reached_threshold: bool
    sol: object = field(repr=False, default=None)

    # derived columns --------------------------------------------------
    @property
    def gfrak(self) -> np.ndarray:
        return -np.exp(self.log_neg_gfrak)

    @property
    def gfrak_integral_form(self) -> np.ndarray:
        p = self.params
        return -(1.0 + p.b * self.consts.Bcap * self.integral) ** (-p.A / p.b)

    @property
    def chi(self) -> np.ndarray:
        p = self.params
        return (self.t ** (2.0 - p.a) * self.f0
                / ((1.0 + self.f) ** (2.0 - p.c) * self.f * np.exp(p.b / p.A * self.log_neg_gfrak)))

    @property
    def chi_limit(self) -> float:
        p = self.params
        return 2.0 * p.b * self.consts.Bcap / (3.0 - 2.0 * p.c)

    @property
    def Gg(self) -> np.ndarray:
        return self.chi - self.chi_limit

    @property
    def xi(self) -> np.ndarray:
        return np.exp(-self.log_neg_gfrak) / (1.0 + self.f)

    @property
    def Xi(self) -> np.ndarray:
        return xi_from(self.params.m2, self.Gg / self.consts.Bcap, self.f)

    @property
    def tau(self) -> np.ndarray:
        return self.gfrak

    def columns(self) -> dict:
        return {
            "t": self.t, "f": self.f, "f0": self.f0, "gfrak": self.gfrak,
            "chi": self.chi, "xi": self.xi, "Gg": self.Gg, "Xi": self.Xi,
            "conoid_radius": self.conoid_radius,
        }

    def state_at(self, t: float) -> tuple:
        """Dense-output (f, f0, ln(-gfrak)) at time t."""
        if t < self.t[0] or t > self.t[-1]:
            raise OutOfRange(f"t={t} outside [{self.t[0]}, {self.t[-1]}]")
        y = self.sol(t)
        return float(y[0]), float(y[1]), float(y[3])


def xi_from(m2, G_over_B, f):
    """Domain-of-influence excess Xi written through G/B and f."""
    inner = (1.0 + G_over_B / 4.0) * (1.0 + m2 * G_over_B + (1.0 - 4.0 * m2) / f)
    return 2.0 * np.sqrt(inner) - 2.0


def integrate(params: ModelParameters, cfg: IntegratorConfig | None = None,
              threshold: float | None = None) -> ReferenceTrajectory:
    cfg = cfg or IntegratorConfig()
    consts = derive_constants(params)
    thr = cfg.blowup_threshold if threshold is None else threshold

    def hit(t, y):
        return y[0] - thr
    hit.terminal = True
    hit.direction = 1

    t0 = params.t0
    t_end = t0 * cfg.t_max_factor
    y0 = [params.beta, params.beta0, 0.0, 0.0, 1.0]
    sol = solve_ivp(_rhs(params, consts.Bcap), (t0, t_end), y0, method="RK45",
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, events=hit, dense_output=True)
    if sol.status == -1:
        raise StepUnderflow(sol.message, float(sol.t[-1]))
    if len(sol.t) > cfg.max_steps:
        raise StepUnderflow("max_steps exceeded", float(sol.t[-1]))
    reached = sol.status == 1
    Y = sol.y
    return ReferenceTrajectory(
        params=params, consts=consts, cfg=cfg, t=sol.t.copy(),
        f=Y[0].copy(), f0=Y[1].copy(), integral=Y[2].copy(),
        log_neg_gfrak=Y[3].copy(), conoid_radius=Y[4].copy(),
        reached_threshold=reached, sol=sol.sol,
    )


def integrate_log_form(params: ModelParameters, t_points, cfg: IntegratorConfig | None = None):
    """Second pass in w = ln(1+f); returns f at the requested times."""
    cfg = cfg or IntegratorConfig()
    t_points = np.asarray(t_points, dtype=float)
    y0 = [math.log1p(params.beta), params.beta0 / (1.0 + params.beta)]
    sol = solve_ivp(_rhs_log(params), (params.t0, float(t_points.max())), y0, method="RK45",
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, t_eval=t_points)
    return np.expm1(sol.y[0])


def _fit_tm(t, f, c):
    """Zero of (1+f)^(-1/2) from a quadratic fit over the final decade of growth."""
    y = (1.0 + f) ** -0.5
    top = f[-1]
    sel = f >= top / 10.0
    if sel.sum() < 4:
        sel = np.zeros_like(f, dtype=bool)
        sel[-4:] = True
    ts, ys = t[sel], y[sel]
    ref = ts[-1]
    coef = np.polyfit(ts - ref, ys, 2)
    roots = np.roots(coef)
    roots = roots[np.isreal(roots)].real
    ahead = roots[roots > -1e-12]
    if len(ahead) == 0:
        # linear fallback
        lin = np.polyfit(ts - ref, ys, 1)
        return ref - lin[1] / lin[0]
    return ref + ahead.min()


def estimate_blowup_time(traj: ReferenceTrajectory, thresholds=(1e8, 1e10, 1e12)):
    """Blowup time and its spread across thresholds."""
    if not traj.reached_threshold:
        raise NotBlownUp("blowup threshold not reached", float(traj.t[-1]))
    estimates = []
    top = traj.f[-1]
    for thr in thresholds:
        if thr > top * (1 + 1e-9):
            continue
        sel = traj.f <= thr
        estimates.append(_fit_tm(traj.t[sel], traj.f[sel], traj.params.c))
    if not estimates:
        raise NotBlownUp("no threshold reached", float(traj.t[-1]))
    estimates = np.array(estimates)
    tm = float(estimates[-1])
    unc = float(estimates.max() - estimates.min()) if len(estimates) > 1 else abs(tm - traj.t[-1])
    return tm, unc, estimates


@dataclass
class LawReport:
    G_monotone_max_violation: float
    G_nonneg_min: float
    G_nonneg_asserted: bool
    G_tail: float
    xi_tail: float
    inv_g_sqrtf_tail: float
    inv_g_sqrtf_decay_exponent: float
    G_sqrt_tau_constant: float
    f0_identity_max_residual: float
    gfrak_forms_max_residual: float
    dchi_max_residual: float
    xi_monotone_max_violation: float
    Xi_monotone_max_violation: float
    Xi_vs_G_max_residual: float | None
    chi0: float
    G0: float
    chi0_over_limit: float

    def to_dict(self):
        return dict(self.__dict__)

    def passes(self, slack=1e-10) -> bool:
        ok = (self.G_monotone_max_violation <= slack
              and self.xi_monotone_max_violation <= slack
              and self.Xi_monotone_max_violation <= slack
              and self.f0_identity_max_residual < 1e-8
              and self.gfrak_forms_max_residual < 1e-8)
        if self.G_nonneg_asserted:
            ok = ok and self.G_nonneg_min >= -slack
        if self.Xi_vs_G_max_residual is not None:
            ok = ok and self.Xi_vs_G_max_residual < 1e-10
        return ok


def _monotone_violation(x, decreasing=True):
    d = np.diff(x)
    if decreasing:
        return float(max(d.max(), 0.0))
    return float(max(-d.min(), 0.0))


def dchi_dt_closed_form(traj: ReferenceTrajectory):
    p = traj.params
    B = traj.consts.Bcap
    chi, f, t = traj.chi, traj.f, traj.t
    G = chi - traj.chi_limit
    return (-(3.0 - 2.0 * p.c) * G * np.sqrt(f) * np.sqrt(chi) / (np.sqrt(B) * t)
            - chi**1.5 / (np.sqrt(B) * t * np.sqrt(f))
            + 2.0 * (1.0 - p.a) * chi / t)


def verify_quantity_laws(traj: ReferenceTrajectory, t_cut: float | None = None) -> LawReport:
    p = traj.params
    B = traj.consts.Bcap
    chi, G, xi, Xi = traj.chi, traj.Gg, traj.xi, traj.Xi
    f, f0, t = traj.f, traj.f0, traj.t

    # f0 = B^{-1} t^{-a} (-g)^{-b/A} (1+f)^c, compared in log form
    log_rhs = -math.log(B) - p.a * np.log(t) - p.b / p.A * traj.log_neg_gfrak + p.c * np.log1p(f)
    f0_res = float(np.max(np.abs(np.expm1(log_rhs - np.log(f0)))))

    log_int = -p.A / p.b * np.log1p(p.b * B * traj.integral)
    g_res = float(np.max(np.abs(np.expm1(log_int - traj.log_neg_gfrak))))

    # dchi/dt by finite differences on the dense output, at interior sample times
    if t_cut is None:
        t_cut = t[0] + 0.9 * (t[-1] - t[0])
    ts = np.linspace(t[0] + 1e-3 * (t_cut - t[0]), t_cut, 41)
    h = 1e-5 * (t_cut - t[0])

    def chi_at(tt):
        ff, ff0, lg = traj.state_at(tt)
        return tt ** (2 - p.a) * ff0 / ((1 + ff) ** (2 - p.c) * ff * math.exp(p.b / p.A * lg))

    def dchi_closed(tt):
        ff, ff0, lg = traj.state_at(tt)
        ch = chi_at(tt)
        Gv = ch - traj.chi_limit
        return (-(3 - 2 * p.c) * Gv * math.sqrt(ff * ch / B) / tt
                - ch**1.5 / (math.sqrt(B) * tt * math.sqrt(ff))
                + 2 * (1 - p.a) * ch / tt)

    dres = 0.0
    for tt in ts:
        fd = (chi_at(tt + h) - chi_at(tt - h)) / (2 * h)
        cf = dchi_closed(tt)
        dres = max(dres, abs(fd - cf) / max(1.0, abs(cf)))

    G_mono = _monotone_violation(np.abs(G), decreasing=True)
    a1 = check_assumptions(p).A1
    inv = 1.0 / (np.exp(traj.log_neg_gfrak) * np.sqrt(f))
    tail = slice(max(len(t) - 50, 0), len(t))
    lt = np.log(np.abs(traj.log_neg_gfrak[tail]) + 1e-300)
    try:
        expo = float(np.polyfit(np.log(f[tail]), np.log(inv[tail]), 1)[0])
    except Exception:
        expo = float("nan")
    tau = traj.gfrak
    Cg = float(np.max(np.abs(G) / np.sqrt(-tau)))

    Xi_res = None
    if p.m2 == 0.25:
        Xi_res = float(np.max(np.abs(Xi - G / (2.0 * B))))

    return LawReport(
        G_monotone_max_violation=G_mono,
        G_nonneg_min=float(G.min()),
        G_nonneg_asserted=bool(a1),
        G_tail=float(abs(G[-1])),
        xi_tail=float(xi[-1]),
        inv_g_sqrtf_tail=float(inv[-1]),
        inv_g_sqrtf_decay_exponent=expo,
        G_sqrt_tau_constant=Cg,
        f0_identity_max_residual=f0_res,
        gfrak_forms_max_residual=g_res,
        dchi_max_residual=float(dres),
        xi_monotone_max_violation=_monotone_violation(xi),
        Xi_monotone_max_violation=_monotone_violation(Xi),
        Xi_vs_G_max_residual=Xi_res,
        chi0=float(chi[0]),
        G0=float(G[0]),
        chi0_over_limit=float(chi[0] / traj.chi_limit),
    )


def conoid_radius_of(traj: ReferenceTrajectory, t: float) -> float:
    """1 + integral of sqrt(g) from t0 to t along the reference solution."""
    p = traj.params
    if t < traj.t[0] or t > traj.t[-1]:
        raise OutOfRange(f"t={t} outside the trajectory")
    if t == traj.t[0]:
        return 1.0

    def integrand(y):
        ff, ff0, _ = traj.state_at(y)
        opf = 1.0 + ff
        return math.sqrt(p.m2 * ff0**2 / opf**2 + 4.0 * (p.k - p.m2) * opf / y**2)

    # split at trajectory nodes so the quadrature follows the adaptive grid
    idx = np.searchsorted(traj.t, t)
    knots = traj.t[: idx]
    step = max(1, len(knots) // 200)
    pts = list(knots[::step]) + [t]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            total += quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    return 1.0 + total


def conoid_radius_interp(traj: ReferenceTrajectory, t):
    """Conoid radius at arbitrary times from the co-integrated column."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    flat = t.ravel()
    res = out.ravel()
    for i, tt in enumerate(flat):
        if tt <= traj.t[0]:
            res[i] = 1.0
        else:
            res[i] = traj.sol(tt)[4]
    return out


def summary(traj: ReferenceTrajectory) -> dict:
    try:
        tm, unc, _ = estimate_blowup_time(traj)
    except NotBlownUp as exc:
        tm, unc = None, None
    laws = verify_quantity_laws(traj)
    return {
        "constants": traj.consts.to_dict(),
        "assumptions": check_assumptions(traj.params).to_dict(),
        "t_m": tm,
        "t_m_uncertainty": unc,
        "n_nodes": int(len(traj.t)),
        "laws": laws.to_dict(),
    }
