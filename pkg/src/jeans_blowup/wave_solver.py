"""Method-of-lines solver for the quasilinear Jeans-type wave equation.

In the t-chart the equation reads

    rho_tt - G rho_xx = (b/t^2) rho (1+rho) - (a/t) rho_t + c rho_t^2/(1+rho)
                        + G q^i d_i rho - t^{-2} K^{ij} d_i rho d_j rho,
    G = m^2 rho_t^2/(1+rho)^2 + 4 (k - m^2)(1+rho)/t^2,

and in the logarithmic time s = ln t the same equation loses the explicit
powers of t and the damping becomes (a-1) rho_s.  Space is discretised with
fourth order central differences and time with classical RK4 under a CFL
restriction.  The chart field g(t, x) is advanced with the same stepper.

The outer two cells on each side form a pad that advances by the
reference ODE alone, so the box must be wide enough that the conoid never
reaches it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .model_core import ModelParameters, derive_constants, kappa_matrix, envelopes, DomainError
from .reference_ode import ReferenceTrajectory, integrate, estimate_blowup_time
from .transforms import HomogeneousChart, ChartDegenerate, g_rate
from .geometry import Conoid, GammaSurface, gamma_surface


class HyperbolicityLost(RuntimeError):
    pass


class VacuumCross(RuntimeError):
    pass


class CFLCollapse(RuntimeError):
    pass


def bump(x, n: int = 1):
    """(1 - |x|^2)^4 on the unit ball, zero outside."""
    x = np.asarray(x, dtype=float)
    r2 = x**2 if n == 1 else np.sum(x**2, axis=0)
    return np.where(r2 < 1.0, (1.0 - r2) ** 4, 0.0)


@dataclass(frozen=True)
class InitialData:
    eps: float = 0.0
    eps0: float | None = None

    def amplitudes(self, params: ModelParameters):
        eps0 = self.eps * params.beta0 / params.beta if self.eps0 is None else self.eps0
        if self.eps < 0 or eps0 < 0:
            raise ValueError("bump amplitudes must be non-negative")
        return self.eps, eps0

    def fields(self, params: ModelParameters, X):
        e, e0 = self.amplitudes(params)
        b = bump(X, params.n)
        return params.beta + e * b, params.beta0 + e0 * b


@dataclass(frozen=True)
class GridConfig:
    n_cells: int = 512
    half_width: float | None = None
    cfl: float = 0.4
    t_end: float | None = None
    t_end_fraction: float = 0.9
    n_checkpoints: int = 8
    store_every: int = 1
    blowup_rho: float = 1e6
    dt_min: float = 1e-12
    margin: float = 1.0
    backend: str | None = None

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError("n_cells must be at least 8")
        if not 0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if self.store_every < 1:
            raise ValueError("store_every must be positive")


@dataclass
class WaveRun:
    """Stored frames of a run; ``T`` is the evolution time (t or ln t)."""

    params: ModelParameters
    data: InitialData
    grid: GridConfig
    eq: str
    x: np.ndarray
    h: float
    T: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    acc: np.ndarray
    g: np.ndarray
    gdot: np.ndarray
    is_checkpoint: np.ndarray
    hyper_min: np.ndarray
    halting_reason: str
    steps: int
    wall_time: float
    traj: ReferenceTrajectory = field(repr=False)
    chart: HomogeneousChart = field(repr=False)
    _dx_cache: dict = field(default_factory=dict, repr=False)

    @property
    def consts(self):
        return self.traj.consts

    @property
    def t(self) -> np.ndarray:
        return self.T if self.eq == "eq2" else np.exp(self.T)

    @property
    def rho_t(self) -> np.ndarray:
        """d_t rho at the frames (converted from d_s rho for the log-time run)."""
        return self.v if self.eq == "eq2" else self.v / self.t[:, None]

    @property
    def g_ck(self):
        return self.g

    @property
    def gdot_ck(self):
        return self.gdot

    def checkpoint_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_checkpoint)

    def reference(self, t):
        """(f, f0) of the reference ODE at times t."""
        y = self.traj.sol(np.asarray(t, dtype=float))
        return y[0], y[1]

    # -- time interpolation (n = 1, t-chart runs) --------------------------
    def _dx(self, name):
        if name not in self._dx_cache:
            self._dx_cache[name] = d1_4(getattr(self, name), self.h)
        return self._dx_cache[name]

    def _hermite(self, tq, cols, y, dy):
        T = self.T
        k = np.clip(np.searchsorted(T, tq, side="right") - 1, 0, T.size - 2)
        D = T[k + 1] - T[k]
        th = (tq - T[k]) / D
        th2, th3 = th * th, th * th * th
        h00 = 2 * th3 - 3 * th2 + 1
        h10 = th3 - 2 * th2 + th
        h01 = -2 * th3 + 3 * th2
        h11 = th3 - th2
        return (h00 * y[k, cols] + h10 * D * dy[k, cols]
                + h01 * y[k + 1, cols] + h11 * D * dy[k + 1, cols])

    def sample(self, tq, cols):
        """rho, rho_t, rho_x at per-column times ``tq`` (cubic Hermite in time)."""
        if self.eq != "eq2" or self.params.n != 1:
            raise NotImplementedError("sampling is provided for one-dimensional t-chart runs")
        tq = np.asarray(tq, dtype=float)
        rho = self._hermite(tq, cols, self.rho, self.v)
        rt = self._hermite(tq, cols, self.v, self.acc)
        rx = self._hermite(tq, cols, self._dx("rho"), self._dx("v"))
        return rho, rt, rx

    def sample_g(self, tq, cols):
        """g, g_t, g_x at per-column times; g_t uses the closed-form rate."""
        tq = np.asarray(tq, dtype=float)
        g = self._hermite(tq, cols, self.g, self.gdot)
        rho, _, _ = self.sample(tq, cols)
        gt = g_rate(self.params, self.consts.Bcap, tq, rho, g)
        gx = self._hermite(tq, cols, self._dx("g"), self._dx("gdot"))
        return g, gt, gx

    def summary(self) -> dict:
        t = self.t
        f, _ = self.reference(t)
        f = f.reshape((-1,) + (1,) * (self.rho.ndim - 1))
        dev = np.max(np.abs(self.rho - f) / (1.0 + f))
        return {
            "eq": self.eq, "n_cells": self.grid.n_cells, "h": self.h,
            "half_width": float(self.x[-1]) if self.params.n == 1 else float(self.x[0][-1]),
            "steps": self.steps, "frames": int(self.T.size), "t_final": float(t[-1]),
            "halting_reason": self.halting_reason,
            "hyperbolicity_min": float(np.min(self.hyper_min)),
            "max_rel_deviation_from_f": float(dev),
            "max_rho": float(np.max(self.rho)),
            "backend": self.grid.backend or kernels.BACKEND,
        }


def d1_4(a, h):
    """Fourth order central first derivative along the last axis, zero at the two edge cells."""
    out = np.zeros_like(a)
    out[..., 2:-2] = (a[..., :-4] - 8.0 * a[..., 1:-3] + 8.0 * a[..., 3:-1] - a[..., 4:]) / (12.0 * h)
    return out


def default_half_width(conoid: Conoid, t_end: float, margin: float) -> float:
    return float(math.ceil(conoid.radius(t_end) + margin))


def _setup(params, data, grid, traj, t_m):
    if traj is None:
        traj = integrate(params)
    if t_m is None:
        t_m, _, _ = estimate_blowup_time(traj)
    chart = HomogeneousChart(traj, t_m)
    t_end = grid.t_end if grid.t_end is not None else grid.t_end_fraction * t_m
    if t_end >= traj.t[-1]:
        raise ValueError("t_end lies beyond the reference trajectory")
    L = grid.half_width or default_half_width(Conoid(chart), t_end, grid.margin)
    return traj, chart, t_m, t_end, L


def _coefficients(params, Bcap, T, eq):
    p = params
    if eq == "eq2":
        t = T
        return dict(c1=p.b / t**2, c2=p.a / t, c4=4.0 * (p.k - p.m2) / t**2, c5=p.c,
                    cg=p.A * Bcap * t ** (p.a - 2.0), c3=1.0 / t**2, t=t)
    t = math.exp(T)
    return dict(c1=p.b, c2=p.a - 1.0, c4=4.0 * (p.k - p.m2), c5=p.c,
                cg=t * p.A * Bcap * t ** (p.a - 2.0), c3=1.0, t=t)


def _pad_mask(shape):
    m = np.ones(shape, dtype=bool)
    if len(shape) == 1:
        m[2:-2] = False
    else:
        m[2:-2, 2:-2] = False
    return m


def _solve(params: ModelParameters, data: InitialData, grid: GridConfig, eq: str,
           traj=None, t_m=None, checkpoint_times=None) -> WaveRun:
    wall0 = time.perf_counter()
    traj, chart, t_m, t_end, L = _setup(params, data, grid, traj, t_m)
    Bcap = traj.consts.Bcap
    n = params.n
    if n not in (1, 2):
        raise NotImplementedError("only n = 1 and n = 2 are supported")
    rhs1, rhs2 = kernels.get_backend(grid.backend)
    rhs_kernel = rhs1 if n == 1 else rhs2
    N = grid.n_cells
    x = np.linspace(-L, L, N + 1)
    h = x[1] - x[0]
    if n == 1:
        X = x
        shape = (N + 1,)
    else:
        X = np.array(np.meshgrid(x, x, indexing="ij"))
        shape = (N + 1, N + 1)
    pad = _pad_mask(shape)
    q = params.q_mag
    e1 = 1.0 - params.c
    e2 = params.b / params.A + 1.0
    kappa = bool(params.kappa_terms)

    rho, rho_t = data.fields(params, X)
    rho = np.ascontiguousarray(rho, dtype=float)
    t0 = params.t0
    if eq == "eq2":
        T0, T_end = t0, t_end
        v = np.ascontiguousarray(rho_t, dtype=float)
    else:
        T0, T_end = math.log(t0), math.log(t_end)
        v = np.ascontiguousarray(t0 * rho_t, dtype=float)
    g = -np.ones(shape)

    if checkpoint_times is None:
        ck_t = np.linspace(t0, t_end, grid.n_checkpoints + 1)
    else:
        ck_t = np.asarray(sorted(checkpoint_times), dtype=float)
    ck_T = ck_t if eq == "eq2" else np.log(ck_t)
    ck_T = ck_T[(ck_T > T0) & (ck_T <= T_end + 1e-14)]

    drho = np.zeros(shape)
    dv = np.zeros(shape)
    dg = np.zeros(shape)

    def F(T, r, w, gg):
        c = _coefficients(params, Bcap, T, eq)
        gmin = rhs_kernel(r, w, gg, drho, dv, dg, h, q, params.m2, c["c1"], c["c2"], c["c4"],
                          c["c5"], c["cg"], e1, e2)
        # pad cells follow the reference ODE
        rp, wp = r[pad], w[pad]
        drho[pad] = wp
        dv[pad] = c["c1"] * rp * (1.0 + rp) - c["c2"] * wp + c["c5"] * wp * wp / (1.0 + rp)
        if kappa:
            dv[...] -= c["c3"] * _kappa_term(params, c["t"], r, h) * (~pad)
        return drho.copy(), dv.copy(), dg.copy(), gmin

    def max_speed(T, r, w):
        c = _coefficients(params, Bcap, T, eq)
        opr = 1.0 + r
        G = params.m2 * w * w / (opr * opr) + c["c4"] * opr
        return math.sqrt(float(np.max(G)))

    frames = {k: [] for k in ("T", "rho", "v", "acc", "g", "gdot", "ck")}
    hyper = []

    def store(T, r, w, gg, is_ck):
        dr, a, dgg, gmin = F(T, r, w, gg)
        if np.any(dgg <= 0):
            raise ChartDegenerate(f"d_t g <= 0 at T={T}")
        frames["T"].append(T)
        frames["rho"].append(r.copy())
        frames["v"].append(w.copy())
        frames["acc"].append(a)
        frames["g"].append(gg.copy())
        frames["gdot"].append(dgg)
        frames["ck"].append(is_ck)
        return gmin

    T = T0
    hyper.append(store(T, rho, v, g, True))
    steps = 0
    reason = "t_end"
    ck_i = 0
    while T < T_end - 1e-14:
        dt = grid.cfl * h / max_speed(T, rho, v)
        if eq == "eq1":
            pass  # the CFL bound already lives in s-time units
        next_ck = ck_T[ck_i] if ck_i < ck_T.size else T_end
        hit = False
        if T + dt >= next_ck - 1e-14:
            dt = next_ck - T
            hit = True
        if dt < grid.dt_min:
            reason = "cfl_collapse"
            break
        k1 = F(T, rho, v, g)
        k2 = F(T + dt / 2, rho + dt / 2 * k1[0], v + dt / 2 * k1[1], g + dt / 2 * k1[2])
        k3 = F(T + dt / 2, rho + dt / 2 * k2[0], v + dt / 2 * k2[1], g + dt / 2 * k2[2])
        k4 = F(T + dt, rho + dt * k3[0], v + dt * k3[1], g + dt * k3[2])
        rho = rho + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        g = g + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        T = next_ck if hit else T + dt
        steps += 1
        if hit:
            ck_i += 1
        if np.any(1.0 + rho <= 0):
            raise VacuumCross(f"1 + rho <= 0 at T={T}")
        if np.any(g >= 0) or np.any(g < -1.0 - 1e-12):
            raise ChartDegenerate(f"g left [-1, 0) at T={T}")
        if hit or steps % grid.store_every == 0:
            gmin = store(T, rho, v, g, hit)
        else:
            gmin = F(T, rho, v, g)[3]
        hyper.append(gmin)
        if not gmin > 0:
            raise HyperbolicityLost(f"min G = {gmin} at T={T}")
        if np.max(rho) > grid.blowup_rho:
            reason = "blowup_threshold"
            break
    if frames["T"][-1] != T:
        store(T, rho, v, g, False)

    return WaveRun(
        params=params, data=data, grid=grid, eq=eq, x=x if n == 1 else (x, x), h=h,
        T=np.array(frames["T"]), rho=np.array(frames["rho"]), v=np.array(frames["v"]),
        acc=np.array(frames["acc"]), g=np.array(frames["g"]), gdot=np.array(frames["gdot"]),
        is_checkpoint=np.array(frames["ck"]), hyper_min=np.array(hyper),
        halting_reason=reason, steps=steps, wall_time=time.perf_counter() - wall0,
        traj=traj, chart=chart,
    )


def _kappa_term(params, t, rho, h):
    if params.n == 1:
        grads = [d1_4(rho, h)]
    else:
        grads = [np.swapaxes(d1_4(np.swapaxes(rho, 0, 1), h), 0, 1), d1_4(rho, h)]
    K = kappa_matrix(params, t, rho)
    out = np.zeros_like(rho)
    for i in range(params.n):
        for j in range(params.n):
            out += K[i][j] * grads[i] * grads[j]
    return out


def run(params: ModelParameters, data: InitialData, grid: GridConfig | None = None,
        traj=None, t_m=None, checkpoint_times=None) -> WaveRun:
    """Solve the t-chart equation."""
    return _solve(params, data, grid or GridConfig(), "eq2", traj, t_m, checkpoint_times)


def run_eq1(params: ModelParameters, data: InitialData, grid: GridConfig | None = None,
            traj=None, t_m=None, checkpoint_times=None) -> WaveRun:
    """Solve the logarithmic-time equation, s = ln t."""
    return _solve(params, data, grid or GridConfig(), "eq1", traj, t_m, checkpoint_times)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def checkpoint_fields(run: WaveRun):
    """(t, rho, rho_t, g) at the requested checkpoints."""
    idx = run.checkpoint_indices()
    return run.t[idx], run.rho[idx], run.rho_t[idx], run.g[idx]


@dataclass
class ConvergenceReport:
    n_cells: list
    differences: list
    ratio: float
    order: float
    error_estimate: float

    def to_dict(self):
        return asdict(self)


def convergence_study(params, data, n_cells=(128, 256, 512), grid=None, traj=None, t_m=None,
                      eq="eq2") -> ConvergenceReport:
    """Richardson study on three nested grids.

    The differences are max norms over shared nodes and checkpoints of
    rho_h - rho_{h/2}; the ratio of successive differences is about 2^p.
    """
    base = grid or GridConfig()
    if traj is None:
        traj = integrate(params)
    if t_m is None:
        t_m, _, _ = estimate_blowup_time(traj)
    runs = []
    solver = run if eq == "eq2" else run_eq1
    L = base.half_width
    if L is None:
        chart = HomogeneousChart(traj, t_m)
        t_end = base.t_end if base.t_end is not None else base.t_end_fraction * t_m
        L = default_half_width(Conoid(chart), t_end, base.margin)
    for N in n_cells:
        g = GridConfig(**{**asdict(base), "n_cells": N, "half_width": L, "store_every": 10**9})
        runs.append(solver(params, data, g, traj=traj, t_m=t_m))
    diffs = []
    for coarse, fine in zip(runs[:-1], runs[1:]):
        r = fine.grid.n_cells // coarse.grid.n_cells
        ic, iff = coarse.checkpoint_indices(), fine.checkpoint_indices()
        a = coarse.rho[ic]
        b = fine.rho[iff][:, ::r]
        diffs.append(float(np.max(np.abs(a - b))))
    ratio = diffs[-2] / diffs[-1] if len(diffs) >= 2 and diffs[-1] > 0 else float("nan")
    order = math.log2(ratio) if ratio > 0 else float("nan")
    est = diffs[-1] / (ratio - 1.0) if ratio > 1 else diffs[-1]
    return ConvergenceReport(list(n_cells), diffs, ratio, order, est)


@dataclass
class SandwichReport:
    eps: float
    n_points: int
    max_abs_u: float
    K: float
    decay_slope: float
    decay_rank_corr: float
    one_minus: float
    one_plus: float
    envelope_ok: bool
    improved_ok: bool | None
    homogeneous_tail_max: float
    points: dict = field(default_factory=dict, repr=False)

    @property
    def decay_ok(self) -> bool:
        return self.decay_slope < 0 and self.decay_rank_corr < 0

    def to_dict(self):
        d = asdict(self)
        d.pop("points")
        d["decay_ok"] = self.decay_ok
        return d


def _lens_points(run: WaveRun, surface: GammaSurface, t_cut: float):
    """Frames with t <= t_cut, points inside the conoid and below Gamma."""
    con = Conoid(run.chart)
    ts = run.t
    out_t, out_x, out_rho, out_g, out_in = [], [], [], [], []
    d = surface.delta0
    for k in range(ts.size):
        t = ts[k]
        if t > t_cut or t <= run.params.t0:
            continue
        R = float(con.radius(t))
        x = run.x
        ok = x >= -1.0 / d
        tg = np.full(x.shape, -1.0)
        tg[ok] = surface.gamma_tau(x[ok])
        below = ok & (run.g[k] <= tg)
        inside = below & (np.abs(x) < R)
        out_t.append(np.full(int(below.sum()), t))
        out_x.append(x[below])
        out_rho.append(run.rho[k][below])
        out_g.append(run.g[k][below])
        out_in.append(inside[below])
    cat = np.concatenate
    return cat(out_t), cat(out_x), cat(out_rho), cat(out_g), cat(out_in)


def _fit_one_factor(run, t, rho, lower: bool) -> float:
    """Smallest d with rho >= (1-d) f(t0+(1-d)(t-t0)) (or the upper analogue)."""
    t0 = run.params.t0

    def ok(d):
        s = (1.0 - d) if lower else (1.0 + d)
        tt = t0 + s * (t - t0)
        if np.any(tt >= run.traj.t[-1]):
            return False
        f = run.traj.sol(tt)[0]
        return bool(np.all(rho >= s * f)) if lower else bool(np.all(rho <= s * f))

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1e-12
    while not ok(hi):
        hi *= 2.0
        if hi > 0.5:
            return float("nan")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def verify_sandwich(run: WaveRun, delta0: float | None = None, t_cut: float | None = None,
                    n_bins: int = 12) -> SandwichReport:
    """Check the normalized deviation and envelope bounds on the lens domain.

    ``u = (rho - f(b_up(g)))/f(b_up(g))`` is evaluated on every stored frame
    with ``t <= t_cut`` at points inside the conoid and below Gamma.
    """
    from scipy.stats import spearmanr

    p = run.params
    traj, chart = run.traj, run.chart
    surface = gamma_surface(traj, p.delta0 if delta0 is None else delta0)
    t_cut = 0.9 * chart.t_m if t_cut is None else t_cut
    eps, _ = run.data.amplitudes(p)

    t, x, rho, g, inside = _lens_points(run, surface, t_cut)
    fb = traj.sol(chart.b_up(g))[0]
    u = (rho - fb) / fb
    ui = np.abs(u[inside])
    max_u = float(ui.max()) if ui.size else 0.0
    K = max_u / eps if eps > 0 else 0.0

    # x^1 trend of the worst deviation on x^1 >= 0
    xi = x[inside]
    sel = xi >= 0
    slope, corr = 0.0, 0.0
    if eps > 0 and np.count_nonzero(sel) > n_bins:
        edges = np.linspace(0.0, xi[sel].max(), n_bins + 1)
        centers, worst = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            m = sel & (xi >= lo) & (xi < hi)
            if np.any(m) and ui[m].max() > 0:
                centers.append(0.5 * (lo + hi))
                worst.append(ui[m].max())
        if len(worst) >= 3:
            slope = float(np.polyfit(centers, np.log(worst), 1)[0])
            corr = float(spearmanr(centers, worst)[0])

    # envelopes with fitted factors, on conoid-interior points
    ti, ri = t[inside], rho[inside]
    d_minus = _fit_one_factor(run, ti, ri, lower=True)
    d_plus = _fit_one_factor(run, ti, ri, lower=False)
    env = envelopes(p, traj.consts)
    t0 = p.t0
    Tm = t0 + (1.0 - d_minus) * (ti - t0)
    Tp = t0 + (1.0 + d_plus) * (ti - t0)
    lower_env = (1.0 - d_minus) * np.array([env.lower(s) for s in Tm])
    env_ok = bool(np.all(ri >= lower_env))
    ts = traj.consts.t_star
    mask_up = Tp < ts
    if np.any(mask_up):
        upper_env = (1.0 + d_plus) * np.array([env.upper(s) for s in Tp[mask_up]])
        env_ok = env_ok and bool(np.all(ri[mask_up] <= upper_env))
    improved = None
    if traj.consts.breve_beta > 0:
        vals = []
        for s in Tm:
            try:
                vals.append(env.improved_lower(s))
            except DomainError:
                vals.append(-np.inf)
        improved = bool(np.all(ri >= (1.0 - d_minus) * np.array(vals)))

    # homogeneous tail: everything outside the conoid
    con = Conoid(chart)
    tail = 0.0
    for k in range(run.T.size):
        tk = run.t[k]
        if tk > t_cut:
            continue
        R = float(con.radius(tk))
        out = np.abs(run.x) > R + 2 * run.h
        if np.any(out):
            f = traj.sol(tk)[0]
            tail = max(tail, float(np.max(np.abs(run.rho[k][out] - f))))

    return SandwichReport(
        eps=eps, n_points=int(inside.sum()), max_abs_u=max_u, K=K,
        decay_slope=slope, decay_rank_corr=corr, one_minus=1.0 - d_minus, one_plus=1.0 + d_plus,
        envelope_ok=env_ok, improved_ok=improved, homogeneous_tail_max=tail,
        points={"t": t, "x": x, "u": u, "inside": inside},
    )


def outside_conoid_deviation(run: WaveRun, cells: int = 2) -> float:
    """max |rho - f| over frames at |x| > conoid radius + cells*h."""
    con = Conoid(run.chart)
    worst = 0.0
    for k in range(run.T.size):
        tk = run.t[k]
        R = float(con.radius(tk))
        out = np.abs(run.x) > R + cells * run.h
        if np.any(out):
            f = run.traj.sol(tk)[0]
            worst = max(worst, float(np.max(np.abs(run.rho[k][out] - f))))
    return worst


def eq1_eq2_discrepancy(r2: WaveRun, r1: WaveRun) -> float:
    """Max |rho_eq1 - rho_eq2| at shared checkpoints."""
    i2, i1 = r2.checkpoint_indices(), r1.checkpoint_indices()
    t2, t1 = r2.t[i2], r1.t[i1]
    if t2.size != t1.size or np.max(np.abs(t2 - t1)) > 1e-9 * np.max(t2):
        raise ValueError("runs do not share checkpoints")
    return float(np.max(np.abs(r2.rho[i2] - r1.rho[i1])))
