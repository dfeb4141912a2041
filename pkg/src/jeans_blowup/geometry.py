"""Domain classification, the charted boundary Gamma and the lens domain.

The boundary is a piecewise surface in the tilted chart,

    tau~ = -exp(-c (51A/2 - 51A/(4 d z + 8)) (z + 1/d))     for -1/d <= z <= J
    tau~ = -exp(-(51A/2 - 51A/(4 d z + 8)) (z + 1/(2d)))     for z > J

with ``d = delta0``, ``z = zeta~^1``, ``c = 1/(1 + 51 Xi0/2)`` and the
junction ``J = (2 - 51 Xi0)/(102 Xi0 d)``.  Surface times close to the
blowup time are handled through ``ln(-tau)`` so nothing underflows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model_core import ModelParameters
from .reference_ode import ReferenceTrajectory, OutOfRange
from .transforms import HomogeneousChart, tilt_slope


class LeftOfDomain(ValueError):
    """Raised for points left of the initial edge zeta^1 = -1/delta0."""


class DomainLabel(enum.Enum):
    INHOMOGENEOUS = "Inhomogeneous"
    HOMOGENEOUS = "Homogeneous"
    ON_CONOID = "OnConoid"


# ---------------------------------------------------------------------------
# conoid and classification
# ---------------------------------------------------------------------------

class Conoid:
    """Radius 1 + int_{t0}^t sqrt(g) of the domain of influence of B_1(0).

    Past the last trajectory node ``1+f ~ C (t_m - t)^{-2}`` and
    ``sqrt(g) ~ m f0/(1+f)``, so the radius grows like ``m ln(1+f)``.
    """

    def __init__(self, chart: HomogeneousChart):
        self.chart = chart
        tr = chart.traj
        self.traj = tr
        self.t_m = chart.t_m
        self.t_last = float(tr.t[-1])
        self.L_last = float(math.log1p(tr.f[-1]))
        self.R_last = float(tr.conoid_radius[-1])
        self.s_last = float(tr.log_neg_gfrak[-1])
        self.m = math.sqrt(tr.params.m2)

    def log1pf(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.traj.t[0]) or np.any(t >= self.t_m):
            raise OutOfRange("t outside [t0, t_m)")
        out = np.empty_like(t)
        inside = t <= self.t_last
        if np.any(inside):
            out[inside] = np.log1p(self.traj.sol(t[inside])[0])
        out[~inside] = self.L_last + 2.0 * np.log((self.t_m - self.t_last) / (self.t_m - t[~inside]))
        return out if out.ndim else float(out)

    def radius(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.traj.t[0]) or np.any(t >= self.t_m):
            raise OutOfRange("t outside [t0, t_m)")
        out = np.empty_like(t)
        inside = t <= self.t_last
        if np.any(inside):
            out[inside] = self.traj.sol(t[inside])[4]
        if not np.all(inside):
            out[~inside] = self.R_last + self.m * (self.log1pf(t[~inside]) - self.L_last)
        return out if out.ndim else float(out)

    def radius_closed_form(self, t):
        """1 + m ln((1+f)/(1+beta)), exact when m^2 = k = 1/4."""
        beta = self.traj.params.beta
        return 1.0 + self.m * (np.asarray(self.log1pf(t)) - math.log1p(beta))

    def radius_at_log_tau(self, s):
        """Radius at t = b_up(tau) with s = ln(-tau); usable for tau near 0."""
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        inside = s >= self.s_last
        if np.any(inside):
            out[inside] = self.radius(self.chart.b_up(-np.exp(s[inside])))
        # tail: 1+f ~ (-tau)^{-4}
        out[~inside] = self.R_last - 4.0 * self.m * (s[~inside] - self.s_last)
        return out if out.ndim else float(out)


@dataclass
class DomainClassifier:
    conoid: Conoid
    band: float = 0.0

    def classify(self, t, x) -> DomainLabel:
        r = float(np.linalg.norm(np.atleast_1d(x)))
        R = float(self.conoid.radius(t))
        if abs(r - R) <= self.band:
            return DomainLabel.ON_CONOID
        return DomainLabel.INHOMOGENEOUS if r < R else DomainLabel.HOMOGENEOUS


# ---------------------------------------------------------------------------
# Gamma surface
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaSurface:
    Xi0: float
    delta0: float
    A: float = 1.0

    @property
    def c_const(self) -> float:
        return 1.0 / (1.0 + 25.5 * self.Xi0)

    @property
    def junction_tilde(self) -> float:
        return (2.0 - 51.0 * self.Xi0) / (102.0 * self.Xi0 * self.delta0)

    @property
    def junction_tau_chart(self) -> float:
        X, d = self.Xi0, self.delta0
        return (-153.0 * X**2 + 204.0 * X + 4.0) / (306.0 * d * X**2 + 4.0 * d * X)

    @property
    def log_neg_tau_junction(self) -> float:
        X, d, A = self.Xi0, self.delta0, self.A
        return -(51.0 * A * X + A) / (153.0 * d * X**2 + 2.0 * d * X)

    def _check_left(self, z):
        if np.any(np.asarray(z) < -1.0 / self.delta0 - 1e-12 / self.delta0):
            raise LeftOfDomain("zeta^1 < -1/delta0")

    # tilted chart ----------------------------------------------------------
    def log_neg_T_tilde(self, zt):
        """ln(-T~(zeta~^1)), both branches."""
        zt = np.asarray(zt, dtype=float)
        self._check_left(zt)
        d, A = self.delta0, self.A
        k = 25.5 * A - 51.0 * A / (4.0 * d * zt + 8.0)
        left = -self.c_const * k * (zt + 1.0 / d)
        right = -k * (zt + 0.5 / d)
        out = np.where(zt <= self.junction_tilde, left, right)
        return out if out.ndim else float(out)

    def T_tilde(self, zt):
        return -np.exp(self.log_neg_T_tilde(zt))

    def branch_gap(self) -> float:
        """Relative jump of ln(-T~) across the junction."""
        J, d, A = self.junction_tilde, self.delta0, self.A
        k = 25.5 * A - 51.0 * A / (4.0 * d * J + 8.0)
        left = -self.c_const * k * (J + 1.0 / d)
        right = -k * (J + 0.5 / d)
        return abs(left - right) / max(abs(left), abs(right))

    def zeta_tilde_of_tau(self, tau):
        """Closed-form inverse of T~ (zeta~^1 as a function of tau~)."""
        L = np.log(-np.asarray(tau, dtype=float))
        X, d, A = self.Xi0, self.delta0, self.A
        dl = 4 * (51 * X + 2) ** 2 * L**2 / A**2 - 612 * (51 * X + 2) * L / (A * d) + 2601 / d**2
        dr = 4 * L**2 / A**2 - 408 * L / (A * d) + 2601 / d**2
        left = np.sqrt(dl) / 204 - (51 * X + 2) * L / (102 * A) - 5 / (4 * d)
        right = np.sqrt(dr) / 102 - L / (51 * A) - 1 / d
        return np.where(L >= self.log_neg_tau_junction, left, right)

    # (tau, zeta) chart -------------------------------------------------------
    def log_neg_gamma_tau(self, zeta):
        """ln(-tau_Gamma(zeta^1)) from the closed form in the (tau, zeta) chart."""
        z = np.asarray(zeta, dtype=float)
        self._check_left(z)
        X, d, A = self.Xi0, self.delta0, self.A
        dz = d * z
        dl = dz * (51 * X + 2) * (dz * (51 * X + 2) + 4 * (51 * X + 77)) + 4 * (51 * X * (51 * X + 104) + 829)
        dr = dz * (dz + 204) + 2754
        left = (A / (200 * d * (X + 2)) * np.sqrt(dl) - A * (51 * X + 127) / (100 * d * (X + 2))
                - A * z * (51 * X + 202) / (200 * (X + 2)))
        right = A / (200 * d) * np.sqrt(dr) - 51 * A / (100 * d) - 101 * A * z / 200
        out = np.where(z <= self.junction_tau_chart, left, right)
        return out if out.ndim else float(out)

    def gamma_tau(self, zeta):
        return -np.exp(self.log_neg_gamma_tau(zeta))

    def log_neg_gamma_tau_rootfind(self, zeta: float) -> float:
        """Solve s = ln(-T~(slope/A * s + zeta)) for s = ln(-tau) by bracketing."""
        self._check_left(zeta)
        k = tilt_slope() / self.A

        def F(s):
            return s - self.log_neg_T_tilde(k * s + zeta)

        # F(0) = -ln(-T~(zeta)) >= 0, and at the smallest s keeping zeta~ on the
        # domain F = s <= 0, so [s_lo, 0] brackets the root
        lo = min(0.0, (-1.0 / self.delta0 - zeta) / k)
        hi = 0.0
        if lo == 0.0 or F(hi) == 0.0:
            return 0.0
        return brentq(F, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)

    def zeta_of_tau(self, tau):
        """Closed-form inverse of tau_Gamma in the (tau, zeta) chart."""
        L = np.log(-np.asarray(tau, dtype=float))
        X, d, A = self.Xi0, self.delta0, self.A
        dl = 4 * (51 * X + 2) ** 2 * L**2 / A**2 - 612 * (51 * X + 2) * L / (A * d) + 2601 / d**2
        dr = 4 * L**2 / A**2 - 408 * L / (A * d) + 2601 / d**2
        left = np.sqrt(dl) / 204 - X * L / (2 * A) - 101 * L / (51 * A) - 5 / (4 * d)
        right = np.sqrt(dr) / 102 - 101 * L / (51 * A) - 1 / d
        return np.where(L >= self.log_neg_tau_junction, left, right)

    # conormal ------------------------------------------------------------------
    def q(self, zt):
        """Conormal coefficient q_l or q_r on the two branches."""
        zt = np.asarray(zt, dtype=float)
        d = self.delta0
        ql = 25.5 * self.c_const * (1.0 - 1.0 / (2.0 * (2.0 + zt * d) ** 2))
        qr = 25.5 * (1.0 - 3.0 / (4.0 * (d * zt + 2.0) ** 2))
        out = np.where(zt <= self.junction_tilde, ql, qr)
        return out if out.ndim else float(out)


def gamma_surface(traj: ReferenceTrajectory, delta0: float | None = None) -> GammaSurface:
    """Surface with Xi0 read from the trajectory's initial node."""
    p = traj.params
    return GammaSurface(Xi0=float(traj.Xi[0]), delta0=p.delta0 if delta0 is None else delta0, A=p.A)


def gamma_t(surface: GammaSurface, chart: HomogeneousChart, x, bfield=None):
    """Surface time t = b(tau_Gamma(x), x).

    Without a b field the homogeneous inverse b_up is used, which is exact
    for vanishing data and for points outside the inhomogeneous domain.
    """
    tau = surface.gamma_tau(x)
    if bfield is None:
        return chart.b_up(tau)
    return bfield(tau, x)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class ReachabilityReport:
    delta0: float
    a: np.ndarray
    log_neg_tau: np.ndarray
    radius: np.ndarray
    margin: np.ndarray
    labels: list

    @property
    def all_inhomogeneous(self) -> bool:
        return all(l is DomainLabel.INHOMOGENEOUS for l in self.labels)

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    def to_dict(self) -> dict:
        return {
            "delta0": self.delta0,
            "all_inhomogeneous": self.all_inhomogeneous,
            "min_margin": self.min_margin,
            "points": [
                {"a": float(a), "log_neg_tau": float(s), "radius": float(r), "margin": float(m),
                 "label": l.value}
                for a, s, r, m, l in zip(self.a, self.log_neg_tau, self.radius, self.margin, self.labels)
            ],
        }


def default_ladder(n: int = 24) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(0.01, 1e4, n - 1)])


def verify_pm_reachability(traj: ReferenceTrajectory, chart: HomogeneousChart,
                           delta0: float, ladder=None) -> ReachabilityReport:
    """Check that surface points (t_Gamma(a e1), a e1), a >= 0, lie inside the conoid."""
    a = default_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    surf = gamma_surface(traj, delta0)
    con = Conoid(chart)
    s = surf.log_neg_gamma_tau(a)
    R = con.radius_at_log_tau(s)
    margin = R - a
    labels = [DomainLabel.INHOMOGENEOUS if m > 0 else DomainLabel.HOMOGENEOUS for m in margin]
    return ReachabilityReport(delta0, a, s, R, margin, labels)


@dataclass
class DecayReport:
    n_points: int
    max_log_ratio: float

    @property
    def holds(self) -> bool:
        return self.max_log_ratio < 0

    def to_dict(self):
        return {"n_points": self.n_points, "max_log_ratio": self.max_log_ratio, "holds": self.holds}


def lens_decay_check(surface: GammaSurface, zeta=None, n_tau: int = 16) -> DecayReport:
    """Decay-factor bound on sampled lens points, in logarithms.

    ln LHS = -153/d - (100/A) ln(-tau) - 51 zeta and ln RHS = -50/d - zeta/2,
    sampled on tau in [-1, tau_Gamma(zeta)] for each zeta.
    """
    d, A = surface.delta0, surface.A
    zeta = np.linspace(-1.0 / d, 20.0 / d, 400) if zeta is None else np.asarray(zeta, dtype=float)
    s_top = surface.log_neg_gamma_tau(zeta)
    frac = np.linspace(0.0, 1.0, n_tau)
    s = np.outer(s_top, frac)  # ln(-tau) from 0 (tau=-1) to the surface
    Z = zeta[:, None]
    lhs = -153.0 / d - (100.0 / A) * s - 51.0 * Z
    rhs = -50.0 / d - Z / 2.0
    return DecayReport(n_points=int(s.size), max_log_ratio=float(np.max(lhs - rhs)))
