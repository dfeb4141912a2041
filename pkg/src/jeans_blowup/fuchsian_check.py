"""Fuchsian variables, leading-order matrices and their numerical audits.

Only the explicit parts of the coefficient matrices are assembled.  The
remainders that are specified solely by their vanishing order are set to
zero, and state dependence enters through the closed-form scalars
S, L, R, H and Z^{ij}.

Unknowns are ordered (u0, u_1..u_n, u, B_1..B_n, z, v); the untilted
system drops the trailing v.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model_core import ModelParameters
from .reference_ode import OutOfRange
from .transforms import (
    KAPPA1, OMEGA, THETA, TILT_A, HomogeneousChart, evolve_b_fields, log_eta, log_mu, tilt_slope,
)

class OutOfBall(ValueError):
    pass


class PDViolation(RuntimeError):
    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class MinorViolation(RuntimeError):
    def __init__(self, message, location, index):
        super().__init__(message)
        self.location = location
        self.index = index


class Infeasible(RuntimeError):
    def __init__(self, message, constraint):
        super().__init__(message)
        self.constraint = constraint


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# constants and cut-off
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FuchsianConstants:
    kappa_hat: float
    gamma1: float
    gamma2: float
    a0_lower: float
    a0_upper: float
    target: float

    def to_dict(self):
        return asdict(self)


def fuchsian_constants(params: ModelParameters) -> FuchsianConstants:
    b, m2, A = params.beta, params.m2, params.A
    return FuchsianConstants(
        kappa_hat=b / (50.0 * A * (2.0 * b + 1.0)),
        gamma1=2.0 / m2,
        gamma2=12500.0 * (2.0 * b + 1.0) / b,
        a0_lower=m2 / 2.0,
        a0_upper=2.0 + 1.0 / b,
        target=m2 * b / (50.0 * A * (1.0 + 2.0 * b)),
    )


def smoothstep7(s):
    """C^7 polynomial step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    # P(s) = 1 - P(1-s); evaluating on the near half avoids cancellation
    flip = s > 0.5
    x = np.where(flip, 1.0 - s, s)
    out = np.zeros_like(x)
    for k in range(8):
        out += math.comb(7 + k, k) * math.comb(15, 7 - k) * (-x) ** k
    out *= x ** 8
    out = np.where(flip, 1.0 - out, out)
    return out if out.ndim else float(out)


def cutoff_phi(zeta1_t, delta0: float):
    """phi = 0 left of -2/delta0, 1 right of -1/delta0."""
    return smoothstep7((np.asarray(zeta1_t, dtype=float) + 2.0 / delta0) * delta0)


# ---------------------------------------------------------------------------
# background scalars along the homogeneous solution
# ---------------------------------------------------------------------------

@dataclass
class Background:
    """f, chi and G = chi - chi_limit at given ln(-tau); ``extrapolated`` marks tail points."""

    log_neg_tau: np.ndarray
    f: np.ndarray
    inv_f: np.ndarray
    chi: np.ndarray
    Gg: np.ndarray
    Bcap: float
    extrapolated: np.ndarray


def _tail_laws(chart: HomogeneousChart, n_fit: int = 60):
    tr = chart.traj
    s = tr.log_neg_gfrak[-n_fit:]
    G = tr.Gg[-n_fit:]
    p_f = np.polyfit(s, np.log(tr.f[-n_fit:]), 1)[0]
    if np.all(G < 0) or np.all(G > 0):
        p_G = np.polyfit(s, np.log(np.abs(G)), 1)[0]
    else:
        p_G = 0.5
    return p_f, p_G


def background_log(chart: HomogeneousChart, s) -> Background:
    """Background at ln(-tau) = s.

    Past the last trajectory node the tail is continued with the power laws
    fitted over the last nodes (1+f ~ tau^-4, |G| ~ (-tau)^p with p >= 1/2).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s > 0):
        raise OutOfRange("tau must lie in [-1, 0)")
    tr = chart.traj
    B = tr.consts.Bcap
    s_last = tr.log_neg_gfrak[-1]
    inside = s >= s_last
    f = np.empty_like(s)
    chi = np.empty_like(s)
    if np.any(inside):
        t, fi, _, ci = chart.f_of_tau(-np.exp(s[inside]))
        f[inside] = fi
        chi[inside] = ci
    inv_f = np.zeros_like(s)
    inv_f[inside] = 1.0 / f[inside]
    if np.any(~inside):
        p_f, p_G = _tail_laws(chart)
        ds = s[~inside] - s_last
        lf = math.log(tr.f[-1]) + p_f * ds
        f[~inside] = np.exp(np.minimum(lf, 700.0))
        inv_f[~inside] = np.exp(-lf)
        chi[~inside] = tr.chi_limit + tr.Gg[-1] * np.exp(p_G * ds)
    return Background(log_neg_tau=s, f=f, inv_f=inv_f, chi=chi, Gg=chi - tr.chi_limit, Bcap=B,
                      extrapolated=~inside)


def background(chart: HomogeneousChart, tau) -> Background:
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau >= 0) or np.any(tau < -1.0 - 1e-14):
        raise OutOfRange("tau must lie in [-1, 0)")
    return background_log(chart, np.log(-tau))


# ---------------------------------------------------------------------------
# coefficient scalars
# ---------------------------------------------------------------------------

@dataclass
class Coefficients:
    S: np.ndarray
    S_cal: np.ndarray
    L: np.ndarray
    R: np.ndarray
    H: np.ndarray
    Z: np.ndarray  # (..., n, n)
    chi_over_B: np.ndarray
    frac_f: np.ndarray  # f / (1+f)
    s_bounds_ok: bool
    s_lower_strict: bool


def s_scalars(bg: Background, params: ModelParameters):
    """(S_cal, S) with S = k + tau S_cal."""
    k = params.k
    B = bg.Bcap
    tau = -np.exp(bg.log_neg_tau)
    x = B / bg.chi * (4.0 * bg.inv_f - bg.Gg / B)
    with np.errstate(divide="ignore", invalid="ignore"):
        S_cal = np.where(k == params.m2, 0.0, (k - params.m2) / tau * x)
    S = k + (k - params.m2) * x  # tau * S_cal without the 0/0 at tau -> 0
    return S_cal, S


def s_bounds(S, params: ModelParameters, slack: float = 1e-12):
    """(non-strict bounds hold, strict lower bound holds)."""
    k = params.k
    upper = k * (1.0 + 1.0 / params.beta)
    ok = bool(np.all(S >= params.m2 - slack) and np.all(S <= upper + slack))
    strict = bool(np.all(S > params.m2))
    return ok, strict


def _split_state(state, n):
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != 3 + n:
        raise ValueError(f"state must have 3+n = {3 + n} trailing components (u0, u, z, B_1..B_n)")
    return state[..., 0], state[..., 1], state[..., 2], state[..., 3:]


def coefficients_from_background(bg: Background, params: ModelParameters, state,
                                 R_hat: float | None = 0.1) -> Coefficients:
    """Closed-form S, L, R, H, Z^{ij} for states (u0, u, z, B_j) at the background points.

    ``state`` broadcasts against the background arrays.  The state entries are
    the unscaled perturbations, i.e. (mu u0, mu v, eta z, mu B_j) of the
    rescaled system.
    """
    n = params.n
    state = np.asarray(state, dtype=float)
    if R_hat is not None and np.any(np.abs(state) > R_hat):
        raise OutOfBall(f"state magnitude {np.max(np.abs(state)):.3g} exceeds R_hat = {R_hat}")
    u0, u, z, Bv = _split_state(state, n)
    m2, k = params.m2, params.k
    B = bg.Bcap
    S_cal, S = s_scalars(bg, params)
    cB = bg.chi / B
    ff = 1.0 / (1.0 + bg.inv_f)
    w = 1.0 + ff * u
    L = (m2 * ((1.0 + u0) ** 2 / w ** 2 - 1.0)
         + 4.0 * (k - m2) / cB * (1.0 + bg.inv_f) * (w / (1.0 + z) ** 6 - 1.0))
    R = (S + L) * ff * cB
    H = L * cB + (S + L) * cB * ((1.0 + z) ** 2 * np.cbrt(w) / (1.0 + u) - 1.0)
    ac = np.zeros(n)
    ac[0] = tilt_slope()
    Z = (ac[:, None] * (R[..., None, None] * Bv[..., None, :])
         + H[..., None, None] * np.eye(n))
    ok, strict = s_bounds(S, params)
    return Coefficients(S=S, S_cal=S_cal, L=L, R=R, H=H, Z=Z, chi_over_B=cB, frac_f=ff,
                        s_bounds_ok=ok, s_lower_strict=strict)


def coefficients_at(chart: HomogeneousChart, tau, state, R_hat: float | None = 0.1,
                    strict: bool = False) -> Coefficients:
    """Coefficient scalars at tau for the given state.

    Raises ``AssertionError`` if S leaves [m^2, k(1+1/beta)]; with
    ``strict`` the lower bound must hold strictly.
    """
    params = chart.traj.params
    c = coefficients_from_background(background(chart, tau), params, state, R_hat)
    if np.ndim(tau) == 0:
        c = Coefficients(**{k: (v[0] if isinstance(v, np.ndarray) else v) for k, v in c.__dict__.items()})
    if not c.s_bounds_ok or (strict and not c.s_lower_strict):
        raise AssertionError(f"S = {np.asarray(c.S)} outside (m^2, k(1+1/beta)]")
    return c


def s_along_trajectory(chart: HomogeneousChart):
    """S on every trajectory node together with the bound check."""
    tr = chart.traj
    bg = background_log(chart, tr.log_neg_gfrak)
    _, S = s_scalars(bg, tr.params)
    ok, strict = s_bounds(S, tr.params)
    return S, ok, strict


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def _blocks(n, with_v=True):
    idx = {"u0": [0], "ui": list(range(1, 1 + n)), "u": [1 + n], "B": list(range(2 + n, 2 + 2 * n)),
           "z": [2 + 2 * n]}
    if with_v:
        idx["v"] = [3 + 2 * n]
    return idx


def untilted_matrices(c: Coefficients, Bv, n: int):
    """Leading A^0 and A^i of the untilted system (d^i = 0).

    Returns (A0, [A^1..A^n]) with size 2n+3.
    """
    N = 2 * n + 3
    ix = _blocks(n, with_v=False)
    Bv = np.asarray(Bv, dtype=float)
    A0 = np.zeros((N, N))
    A0[0, 0] = 1.0
    for j in range(n):
        Rj = float(c.R) * Bv[j]
        A0[0, ix["ui"][j]] = A0[ix["ui"][j], 0] = Rj
        A0[ix["ui"][j], ix["ui"][j]] = float(c.S + c.L)
        A0[ix["B"][j], ix["B"][j]] = 1.0
    A0[ix["u"][0], ix["u"][0]] = 2.0
    A0[ix["z"][0], ix["z"][0]] = 1.0
    Hs = float(c.S * c.chi_over_B + c.H)
    Ai = []
    for i in range(n):
        M = np.zeros((N, N))
        M[0, ix["ui"][i]] = M[ix["ui"][i], 0] = Hs
        Ai.append(M)
    return A0, Ai


def leading_source_matrix(q, k: float = 0.25, omega: float = OMEGA, theta: float = THETA,
                          a: float = TILT_A, kappa1: float = KAPPA1, d1: float = 0.0,
                          phi_mu: float = 0.0, phi_eta: float = 0.0, sigma0: float = 0.5):
    """Explicit part of the revised source matrix with the remainders set to zero.

    Entries are built from (k, omega, theta, a, kappa) rather than the
    reduced numbers, so they can be checked against the reduced matrix.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = q.size
    ix = _blocks(n)
    N = 2 * n + 4
    kap = np.zeros(n)
    kap[0] = kappa1
    M = np.zeros((N, N))
    i0, iu, iz, iv = ix["u0"][0], ix["u"][0], ix["z"][0], ix["v"][0]
    M[i0, i0] = -omega * a - 14.0 / 3.0
    for j in range(n):
        M[i0, ix["ui"][j]] = -4.0 * k * q[j] - 4.0 * omega * k * kap[j]
        M[ix["ui"][j], i0] = -4.0 * omega * k * kap[j]
        M[ix["ui"][j], ix["ui"][j]] = 4.0 * k - k * omega * a
        M[ix["ui"][j], ix["B"][j]] = 24.0 * k
        M[ix["B"][j], ix["ui"][j]] = 2.0 / 3.0
        M[ix["B"][j], ix["B"][j]] = 2.0 / 3.0 - omega * a
    M[i0, iz] = sigma0 * -8.0
    M[i0, iv] = 8.0
    M[iu, i0] = phi_mu * -8.0
    M[iu, iu] = 40.0 / 3.0
    M[iu, iz] = phi_eta * -16.0
    M[iz, iz] = -theta * (a + kap[0] * d1)
    M[iv, i0] = -8.0
    M[iv, iz] = sigma0 * -16.0
    M[iv, iv] = 40.0 / 3.0 - 2.0 * omega * a
    return M


def symmetrized_source_matrix(q, phi_mu=0.0, phi_eta=0.0, sigma0=0.5):
    """Symmetric matrix with the same quadratic form as the source matrix."""
    M = leading_source_matrix(q, phi_mu=phi_mu, phi_eta=phi_eta, sigma0=sigma0)
    return 0.5 * (M + M.T)


def explicit_symmetrized_matrix(q, phi_mu=0.0, phi_eta=0.0, sigma0=0.5):
    """The reduced symmetric matrix written out entry by entry (n = len(q))."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = q.size
    ix = _blocks(n)
    N = 2 * n + 4
    M = np.zeros((N, N))
    i0, iu, iz, iv = ix["u0"][0], ix["u"][0], ix["z"][0], ix["v"][0]
    M[i0, i0] = 286.0 / 3.0
    for j in range(n):
        M[i0, ix["ui"][j]] = M[ix["ui"][j], i0] = -q[j] / 2.0 + (51.0 if j == 0 else 0.0)
        M[ix["ui"][j], ix["ui"][j]] = 26.0
        M[ix["ui"][j], ix["B"][j]] = M[ix["B"][j], ix["ui"][j]] = 10.0 / 3.0
        M[ix["B"][j], ix["B"][j]] = 302.0 / 3.0
    M[i0, iu] = M[iu, i0] = -4.0 * phi_mu
    M[i0, iz] = M[iz, i0] = -4.0 * sigma0
    M[iu, iu] = 40.0 / 3.0
    M[iu, iz] = M[iz, iu] = -8.0 * phi_eta
    M[iz, iz] = 100.0
    M[iz, iv] = M[iv, iz] = -8.0 * sigma0
    M[iv, iv] = 640.0 / 3.0
    return M


def revised_A0(c: Coefficients, phi_mu_B, n: int):
    """A^0_phi; ``phi_mu_B`` holds phi mu B_j (so the off-diagonal is R phi mu B_j)."""
    phi_mu_B = np.asarray(phi_mu_B, dtype=float)
    lead = np.asarray(c.S + c.L, dtype=float)
    R = np.asarray(c.R, dtype=float)
    shape = lead.shape
    N = 2 * n + 4
    ix = _blocks(n)
    M = np.zeros(shape + (N, N))
    M[..., 0, 0] = 1.0
    for j in range(n):
        a = ix["ui"][j]
        M[..., 0, a] = M[..., a, 0] = R * phi_mu_B[..., j]
        M[..., a, a] = lead
        M[..., ix["B"][j], ix["B"][j]] = 1.0
    M[..., ix["u"][0], ix["u"][0]] = 2.0
    M[..., ix["z"][0], ix["z"][0]] = 1.0
    M[..., ix["v"][0], ix["v"][0]] = 2.0
    return M


def revised_Ai(c: Coefficients, n: int, i: int = 0):
    """A^i_phi (zero-based i) with the explicit Z^{ij} block."""
    lead = np.asarray(c.S + c.L, dtype=float)
    shape = lead.shape
    N = 2 * n + 4
    ix = _blocks(n)
    s = tilt_slope() if i == 0 else 0.0
    Sx = np.asarray(c.S * c.chi_over_B, dtype=float)
    M = np.zeros(shape + (N, N))
    M[..., 0, 0] = s
    for j in range(n):
        a = ix["ui"][j]
        off = (Sx if i == j else 0.0) + np.asarray(c.Z)[..., i, j]
        M[..., 0, a] = M[..., a, 0] = off
        M[..., a, a] = s * lead
        M[..., ix["B"][j], ix["B"][j]] = s
    M[..., ix["u"][0], ix["u"][0]] = 2.0 * s
    M[..., ix["z"][0], ix["z"][0]] = s
    M[..., ix["v"][0], ix["v"][0]] = 2.0 * s
    return M


# ---------------------------------------------------------------------------
# Fuchsian variables from a wave run
# ---------------------------------------------------------------------------

@dataclass
class FuchsianVariables:
    """Perturbation variables on a (tau, zeta) lattice of a wave run.

    The rescaled variables are ``value * exp(-log_mu)`` (or ``-log_eta``
    for z); they overflow for small delta0, so only the logs of the
    scales are stored.
    """

    tau: np.ndarray
    zeta: np.ndarray
    u0: np.ndarray
    ui: np.ndarray
    u: np.ndarray
    z: np.ndarray
    Bj: np.ndarray
    log_mu: np.ndarray
    log_eta: np.ndarray

    def scaled(self) -> dict:
        with np.errstate(over="ignore"):
            im = np.exp(-self.log_mu)
            ie = np.exp(-self.log_eta)
        return {"u0": self.u0 * im, "ui": self.ui * im, "u": self.u, "v": self.u * im,
                "B": self.Bj * im, "z": self.z * ie}

    def max_abs(self) -> dict:
        return {k: float(np.max(np.abs(getattr(self, k)))) for k in ("u0", "ui", "u", "z", "Bj")}


def max_lattice_tau(run, cols=None, margin: float = 1e-3) -> float:
    """Largest tau every selected column reaches before the run stops."""
    cols = np.arange(run.x.size) if cols is None else np.asarray(cols)
    return float(np.min(run.g_ck[-1][cols])) * (1.0 + margin)


def fuchsian_variables(run, taus, cols=None, bfield=None) -> FuchsianVariables:
    p = run.params
    cols = np.arange(run.x.size) if cols is None else np.asarray(cols)
    taus = np.asarray(taus, dtype=float)
    bf = bfield if bfield is not None else evolve_b_fields(run, taus, cols)
    t, f, f0, chi = run.chart.f_of_tau(taus)
    B = run.consts.Bcap
    rho_x = np.empty_like(bf.b)
    for k in range(taus.size):
        _, _, rho_x[k] = run.sample(bf.b[k], cols)
    u = bf.rho / f[:, None] - 1.0
    u0 = bf.rho_t / f0[:, None] - 1.0
    ui = rho_x / (1.0 + f[:, None])
    z = np.cbrt(bf.b / t[:, None]) - 1.0
    Bj = bf.b1 * (B * f0 / (chi * f))[:, None]
    zt = tilt_slope() / p.A * np.log(-taus)[:, None] + bf.zeta[None, :]
    return FuchsianVariables(tau=taus, zeta=bf.zeta, u0=u0, ui=ui, u=u, z=z, Bj=Bj,
                             log_mu=log_mu(zt, p), log_eta=log_eta(zt, p))


# ---------------------------------------------------------------------------
# residuals of the explicit scalar equations
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    steps: list
    dtau_u: list
    dtau_z: list
    dzeta_z_static: float
    ratio_u: float
    ratio_z: float
    variable_scale: dict
    min_dtau: float = math.inf
    floor: float = 1e-6
    min_ratio: float = 3.0
    static_tol: float = 1e-6

    @property
    def homogeneous(self) -> bool:
        """Variables at the solver's noise level, so no refinement trend exists."""
        return max(self.variable_scale.values()) < self.floor

    @property
    def noise_bound(self) -> float:
        """Residual a difference quotient of noise of size variable_scale can produce."""
        return max(self.floor, 4.0 * max(self.variable_scale.values()) / self.min_dtau)

    def _ok(self, res, ratio):
        if self.homogeneous:
            return max(res) < self.noise_bound
        return ratio >= self.min_ratio

    @property
    def passes(self) -> bool:
        return (self._ok(self.dtau_u, self.ratio_u) and self._ok(self.dtau_z, self.ratio_z)
                and self.dzeta_z_static < self.static_tol)

    def to_dict(self):
        d = _jsonable(asdict(self))
        d["homogeneous"] = self.homogeneous
        d["noise_bound"] = self.noise_bound
        d["passes"] = self.passes
        return d


def dtau_u_closed(tau, f, chi, B, A, u0, u, z):
    ff = f / (1.0 + f)
    w = 1.0 + ff * u
    return chi / (A * B * (-tau)) / ff * ((1.0 + z) ** 2 * np.cbrt(w) * (1.0 + u0) / (1.0 + u) - (1.0 + u))


def dtau_z_closed(tau, f, chi, B, A, u, z):
    w = 1.0 + f / (1.0 + f) * u
    return np.sqrt(chi / B) / (3.0 * A * (-tau) * np.sqrt(f)) * (np.cbrt(w) / (1.0 + u) - 1.0 - z)


def dzeta_z_closed(b_up, b1, z):
    return b1 / (3.0 * b_up * (1.0 + z) ** 2)


def residual_explicit_equations(run, centers=None, step: float = 1e-2, cols=None) -> ResidualReport:
    """Insert finite-difference derivatives of u and z into their closed forms.

    Central differences in tau with relative steps ``step`` and ``step/2``
    must reduce the residual at the stencil order (ratio >= 3).  The zeta
    derivative of z is checked statically: a fourth-order difference of z
    across the grid against the closed form built from the co-evolved b_1.
    """
    p = run.params
    A, B = p.A, run.consts.Bcap
    n_x = run.x.size
    cols = np.arange(4, n_x - 4) if cols is None else np.asarray(cols)
    t_hi = max_lattice_tau(run, cols)
    if centers is None:
        lo = -0.9
        centers = np.linspace(lo, lo + 0.85 * (t_hi - lo) / (1.0 + 2 * step), 4)
    centers = np.asarray(centers, dtype=float)
    steps = [step, step / 2.0]
    res_u, res_z = [], []
    scale = {}
    for D in steps:
        taus = np.sort(np.concatenate([centers + k * D * np.abs(centers) for k in (-1, 0, 1)]))
        fv = fuchsian_variables(run, taus, cols)
        t, f, f0, chi = run.chart.f_of_tau(taus)
        ru = rz = 0.0
        for i, c in enumerate(centers):
            j = int(np.argmin(np.abs(taus - c)))
            dt = D * abs(c)
            du = (fv.u[j + 1] - fv.u[j - 1]) / (2.0 * dt)
            dz = (fv.z[j + 1] - fv.z[j - 1]) / (2.0 * dt)
            cu = dtau_u_closed(c, f[j], chi[j], B, A, fv.u0[j], fv.u[j], fv.z[j])
            cz = dtau_z_closed(c, f[j], chi[j], B, A, fv.u[j], fv.z[j])
            ru = max(ru, float(np.max(np.abs(du - cu))))
            rz = max(rz, float(np.max(np.abs(dz - cz))))
        res_u.append(ru)
        res_z.append(rz)
        scale = fv.max_abs()
    # static zeta check on the full grid
    all_cols = np.arange(n_x)
    taus = np.asarray(centers)
    bf = evolve_b_fields(run, taus, all_cols)
    t, *_ = run.chart.f_of_tau(taus)
    z = np.cbrt(bf.b / t[:, None]) - 1.0
    h = run.h
    dz_fd = (z[:, :-4] - 8 * z[:, 1:-3] + 8 * z[:, 3:-1] - z[:, 4:]) / (12.0 * h)
    dz_cf = dzeta_z_closed(t[:, None], bf.b1[:, 2:-2], z[:, 2:-2])
    static = float(np.max(np.abs(dz_fd - dz_cf)))

    def ratio(r):
        return r[0] / r[1] if r[1] > 0 else math.inf

    return ResidualReport(steps=steps, dtau_u=res_u, dtau_z=res_z, dzeta_z_static=static,
                          ratio_u=ratio(res_u), ratio_z=ratio(res_z), variable_scale=scale,
                          min_dtau=float(steps[-1] * np.min(np.abs(centers))))


# ---------------------------------------------------------------------------
# positive definiteness audit
# ---------------------------------------------------------------------------

@dataclass
class PDReport:
    samples: int
    a0_min: float
    a0_max: float
    a0_eig_min: float
    a0_eig_max: float
    sym_min: float
    sym_max: float
    sym_eig_min: float
    sym_eig_max: float
    chain_ok: bool
    constants: dict
    a0_ok: bool
    sym_ok: bool
    witness: list | None = None

    @property
    def passes(self) -> bool:
        return self.a0_ok and self.sym_ok and self.chain_ok

    def to_dict(self):
        d = _jsonable(asdict(self))
        d["passes"] = self.passes
        return d


def _sample_taus(chart: HomogeneousChart, rng, N):
    s_last = chart.traj.log_neg_gfrak[-1]
    # mostly on the trajectory, a tenth in the extrapolated tail
    s = rng.uniform(s_last, 0.0, N)
    tail = rng.random(N) < 0.1
    s[tail] = s_last + rng.uniform(-20.0, 0.0, int(tail.sum()))
    return s


def pd_audit(chart: HomogeneousChart, samples: int = 10_000, seed: int = 0, R_hat: float = 0.01,
             strict: bool = False) -> PDReport:
    """Monte-Carlo check of the A^0_phi and symmetrized source-matrix bounds.

    States are drawn in the cube of half width ``R_hat`` (effective
    perturbations phi mu u0, ..., so the cut-off and mu scales are folded
    in), the symmetrized source matrix uses phi mu in [0, sigma0] and
    phi eta in [0, sigma0^2].
    """
    params = chart.traj.params
    n = params.n
    q = np.zeros(n)
    q[0] = params.q_mag
    if not 3.0 < params.q_mag < 100.0:
        raise ValueError("|q| must lie in (3, 100)")
    K = fuchsian_constants(params)
    rng = np.random.default_rng(seed)
    N = int(samples)
    s = _sample_taus(chart, rng, N)
    bg = background_log(chart, s)
    state = rng.uniform(-R_hat, R_hat, (N, 3 + n))
    c = coefficients_from_background(bg, params, state, R_hat=R_hat)
    A0 = revised_A0(c, state[:, 3:], n)
    X = rng.normal(size=(N, 2 * n + 4))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    xa0 = np.einsum("ni,nij,nj->n", X, A0, X)
    phi_mu = rng.uniform(0.0, params.sigma0, N)
    phi_eta = rng.uniform(0.0, params.sigma0 ** 2, N)
    base = symmetrized_source_matrix(q, 0.0, 0.0, params.sigma0)
    d_mu = symmetrized_source_matrix(q, 1.0, 0.0, params.sigma0) - base
    d_eta = symmetrized_source_matrix(q, 0.0, 1.0, params.sigma0) - base
    Asym = base[None] + phi_mu[:, None, None] * d_mu[None] + phi_eta[:, None, None] * d_eta[None]
    xas = np.einsum("ni,nij,nj->n", X, Asym, X)
    e0 = np.linalg.eigvalsh(A0)
    es = np.linalg.eigvalsh(Asym)
    a0_ok = bool(np.all(xa0 >= K.a0_lower) and np.all(xa0 <= K.a0_upper)
                 and e0.min() >= K.a0_lower and e0.max() <= K.a0_upper)
    sym_ok = bool(np.all(xas > 1.0 / 50.0) and np.all(xas < 250.0)
                  and es.min() > 1.0 / 50.0 and es.max() < 250.0)
    scaled = xas / (K.kappa_hat * params.A)
    chain_ok = bool(np.all(K.a0_lower <= xa0) and np.all(xa0 < scaled) and np.all(scaled <= K.gamma2))
    witness = None
    if not (a0_ok and sym_ok and chain_ok):
        bad = np.flatnonzero((xa0 < K.a0_lower) | (xa0 > K.a0_upper) | (xas <= 1 / 50) | (xas >= 250)
                             | (xa0 >= scaled) | (scaled > K.gamma2))
        i = int(bad[0]) if bad.size else int(np.argmin(e0.min(axis=1)))
        witness = X[i].tolist()
    rep = PDReport(samples=N, a0_min=float(xa0.min()), a0_max=float(xa0.max()),
                   a0_eig_min=float(e0.min()), a0_eig_max=float(e0.max()),
                   sym_min=float(xas.min()), sym_max=float(xas.max()),
                   sym_eig_min=float(es.min()), sym_eig_max=float(es.max()),
                   chain_ok=chain_ok, constants=K.to_dict(), a0_ok=a0_ok, sym_ok=sym_ok,
                   witness=witness)
    if strict and not rep.passes:
        raise PDViolation("positive definiteness bound violated", witness)
    return rep


# ---------------------------------------------------------------------------
# weakly spacelike boundary audit
# ---------------------------------------------------------------------------

@dataclass
class MinorReport:
    delta0: float
    points: int
    min_scaled_minor: float
    worst: dict
    d2_min_left: float
    d2_min_right: float
    q_left_range: list
    q_right_range: list
    face_max_abs: float
    tol: float = 1e-10

    @property
    def passes(self) -> bool:
        return self.min_scaled_minor >= -self.tol and self.face_max_abs == 0.0

    def to_dict(self):
        d = _jsonable(asdict(self))
        d["passes"] = self.passes
        return d


def leading_minors(M):
    """Sequential leading principal minors of M (..., N, N)."""
    N = M.shape[-1]
    return np.stack([np.linalg.det(M[..., :l, :l]) for l in range(1, N + 1)], axis=-1)


def gamma_points(surface, n_left: int = 32, n_right: int = 48, right_span: float = 40.0):
    """Tilted zeta^1 samples on both branches of the boundary surface."""
    d = surface.delta0
    J = surface.junction_tilde
    left = np.linspace(-1.0 / d, J, n_left + 1)[1:]
    right = J + np.geomspace(1e-6 / d, right_span / d, n_right)
    return left, right


def spacelike_minor_audit(chart: HomogeneousChart, delta0: float | None = None, samples: int = 80,
                          seed: int = 0, state_scale: float = 0.0, tol: float = 1e-10) -> MinorReport:
    """Sequential principal minors of A^0_phi + q A^1_phi on the boundary surface.

    The normal is (1, A tau q delta^1_i), so the tau^-1 of the spatial
    part cancels.  ``state_scale`` sets the size of the state before
    multiplication by phi mu; zero gives the explicit leading matrices.
    """
    from .geometry import gamma_surface

    tr = chart.traj
    params = tr.params
    n = params.n
    d0 = params.delta0 if delta0 is None else delta0
    surf = gamma_surface(tr, d0)
    nl = max(2, samples * 2 // 5)
    left, right = gamma_points(surf, nl, max(2, samples - nl))
    zt = np.concatenate([left, right])
    branch = np.array([0] * left.size + [1] * right.size)
    s = surf.log_neg_T_tilde(zt)
    bg = background_log(chart, s)
    rng = np.random.default_rng(seed)
    phi = cutoff_phi(zt, d0)
    with np.errstate(under="ignore"):
        pm = phi * np.exp(log_mu(zt, params.replace(delta0=d0)))
    raw = rng.uniform(-1.0, 1.0, (zt.size, 3 + n)) * state_scale
    eff = raw * pm[:, None]
    c = coefficients_from_background(bg, params, eff, R_hat=None)
    q = np.asarray(surf.q(zt))
    M = revised_A0(c, eff[:, 3:], n) + q[:, None, None] * revised_Ai(c, n, 0)
    minors = leading_minors(M)
    norms = np.max(np.abs(M), axis=(-2, -1))
    scale = norms[:, None] ** np.arange(1, M.shape[-1] + 1)[None, :]
    scaled = minors / scale
    k = np.unravel_index(int(np.argmin(scaled)), scaled.shape)
    worst = {"zeta_tilde": float(zt[k[0]]), "log_neg_tau": float(s[k[0]]),
             "branch": "left" if branch[k[0]] == 0 else "right", "minor_index": int(k[1]) + 1,
             "minor": float(minors[k]), "scaled": float(scaled[k])}
    d2 = minors[:, 1]
    face = float(np.max(np.abs(face_matrix(c, n, params.gamma))))
    rep = MinorReport(delta0=d0, points=int(zt.size), min_scaled_minor=float(scaled.min()), worst=worst,
                      d2_min_left=float(d2[branch == 0].min()), d2_min_right=float(d2[branch == 1].min()),
                      q_left_range=[float(q[branch == 0].min()), float(q[branch == 0].max())],
                      q_right_range=[float(q[branch == 1].min()), float(q[branch == 1].max())],
                      face_max_abs=face, tol=tol)
    if rep.min_scaled_minor < -tol:
        raise MinorViolation(f"minor {worst['minor_index']} negative", worst, worst["minor_index"])
    return rep


def face_matrix(c: Coefficients, n: int, gamma: float):
    """Boundary matrix on the torus faces zeta^^k = +-pi/2 for every k."""
    # the face sits exactly at zeta^ = pi/2 where cos vanishes; math.cos(pi/2)
    # returns 6e-17, so the exact zero is used
    ch = 0.0
    out = []
    for k in range(n):
        out.append(gamma * ch * revised_Ai(c, n, k))
    return np.stack(out)


# ---------------------------------------------------------------------------
# parameter feasibility
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityReport:
    sobolev_k: int
    C0: float
    C1: float
    C_a: float
    target: float
    gamma_max: float
    gamma_interval: list
    configured_gamma: float
    configured_admissible: bool
    kappa_hat: float
    gamma1: float
    assumptions: list = field(default_factory=list)

    @property
    def nonempty(self) -> bool:
        return self.gamma_max > 0.0

    def to_dict(self):
        d = _jsonable(asdict(self))
        d["nonempty"] = self.nonempty
        return d


def _leading_a1_norm(chart: HomogeneousChart, s):
    params = chart.traj.params
    n = params.n
    bg = background_log(chart, s)
    c = coefficients_from_background(bg, params, np.zeros((s.size, 3 + n)), R_hat=None)
    M = revised_Ai(c, n, 0)
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def feasibility(chart: HomogeneousChart, sobolev_k: int | None = None, lattice: int = 64,
                safety: float = 2.0, strict: bool = False) -> FeasibilityReport:
    """Admissible torus scale gamma from (C1 + 2k(k+1)C0) gamma < m^2 beta/(50A(1+2beta)).

    C0 bounds the commutator quantity b <= C_a + C0 gamma on a
    (tau^, zeta^) lattice at state zero.  With zeta^ = arctan(gamma zeta~),
    cos^2(zeta^) d_zeta^ = d_zeta~/gamma, so the cut-off derivative piece
    is gamma independent (C_a, proportional to phi mu and phi eta) and the
    cos^2 derivative gives C0 = sup |A~^1|/A.  C1 collects the tau^-1 terms
    without a state factor; at state zero only d(gamma cos^2) A~^1 is left,
    so C1 = C0.  Both are multiplied by the safety factor, and the gamma
    independent C_a is moved to the right-hand side.
    """
    tr = chart.traj
    params = tr.params
    n = params.n
    A = params.A
    k = int(sobolev_k) if sobolev_k is not None else int(math.ceil(n / 2 + 3))
    if k < n / 2 + 3:
        raise ValueError("Sobolev index must be at least n/2 + 3")
    K = fuchsian_constants(params)
    s_last = tr.log_neg_gfrak[-1]
    s = np.linspace(s_last, 0.0, lattice)
    a1 = _leading_a1_norm(chart, s)
    zh = np.linspace(-math.pi / 2, math.pi / 2, lattice + 2)[1:-1]
    sin2 = np.abs(np.sin(2 * zh)).max()
    C0 = safety * sin2 * float(a1.max()) / A
    # cut-off and mu/eta dependent part: d_zeta~ of the source matrix times its inverse
    zt = np.tan(zh) / params.gamma
    with np.errstate(under="ignore"):
        lm = log_mu(zt, params)
        phi = cutoff_phi(zt, params.delta0)
        pm = phi * np.exp(lm)
        pe = phi * np.exp(lm + math.log(params.sigma0))
        dphi = (cutoff_phi(zt + 1e-6, params.delta0) - cutoff_phi(zt - 1e-6, params.delta0)) / 2e-6
        dpm = dphi * np.exp(lm) - 51.0 * pm
        dpe = dphi * np.exp(lm + math.log(params.sigma0)) - 51.0 * pe
    q = np.zeros(n)
    q[0] = params.q_mag
    base = symmetrized_source_matrix(q, 0.0, 0.0, params.sigma0)
    d_mu = symmetrized_source_matrix(q, 1.0, 0.0, params.sigma0) - base
    d_eta = symmetrized_source_matrix(q, 0.0, 1.0, params.sigma0) - base
    Ca = 0.0
    for i in range(zt.size):
        Am = base + pm[i] * d_mu + pe[i] * d_eta
        dA = dpm[i] * d_mu + dpe[i] * d_eta
        Ainv = np.linalg.inv(Am)
        comm = Am @ (-Ainv @ dA @ Ainv)
        Ca = max(Ca, 2.0 * np.linalg.norm(comm, 2) * float(a1.max()) / A)
    Ca *= safety
    C1 = C0
    target = K.target
    denom = C1 + 2 * k * (k + 1) * C0
    gamma_max = (target - 2 * k * (k + 1) * Ca) / denom if denom > 0 else math.inf
    gamma_max = max(gamma_max, 0.0)
    cfg = params.gamma
    rep = FeasibilityReport(sobolev_k=k, C0=C0, C1=C1, C_a=Ca, target=target, gamma_max=gamma_max,
                            gamma_interval=[0.0, gamma_max], configured_gamma=cfg,
                            configured_admissible=bool(0.0 < cfg < gamma_max), kappa_hat=K.kappa_hat,
                            gamma1=K.gamma1,
                            assumptions=["odd-index decay constants beta_3 = beta_5 = beta_7 = 0",
                                         f"state-zero lattice {lattice}x{lattice}, safety {safety}"])
    if strict and not rep.nonempty:
        raise Infeasible("no admissible gamma", "(C1 + 2k(k+1)C0) gamma < target")
    return rep
