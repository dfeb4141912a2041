"""Problem parameters, closed-form constants, ODE envelopes and assumption checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

from scipy.optimize import brentq


class ParameterError(ValueError):
    """Raised when a parameter set violates its invariants."""


class DomainError(ValueError):
    """Raised when an envelope is requested outside its interval of validity."""


class NoRealRoot(RuntimeError):
    """Raised when the bracket polynomial has no root in the search window."""


@dataclass(frozen=True)
class KappaTerm:
    """One monomial ``coeff * t**p_t * rho**p_rho`` of the tensor K^{ij}."""

    i: int
    j: int
    coeff: float
    p_t: int = 0
    p_rho: int = 0


@dataclass(frozen=True)
class ModelParameters:
    t0: float = 1.0
    beta: float = 1.0
    beta0: float = 5.0
    k: float = 0.25
    m2: float = 0.25
    q_mag: float = 4.0
    n: int = 1
    kappa_terms: tuple = ()
    A: float = 1.0
    sigma0: float = 0.5
    delta0: float = 0.05
    gamma: float = 0.5
    # ODE coefficients; the defaults are the Jeans-type values.
    a: float = 4.0 / 3.0
    b: float = 2.0 / 3.0
    c: float = 4.0 / 3.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        errs = []
        if not self.t0 > 0:
            errs.append("t0 must be positive")
        if not self.beta > 0:
            errs.append("beta must be positive")
        if not self.beta0 > 0:
            errs.append("beta0 must be positive")
        if not self.k > 0:
            errs.append("k must be positive")
        if not 0 <= self.m2 <= self.k:
            errs.append("m2 must lie in [0, k]")
        if not 0 < self.A < 2:
            errs.append("A must lie in (0, 2)")
        if int(self.n) != self.n or self.n < 1:
            errs.append("n must be a positive integer")
        for name in ("sigma0", "delta0", "gamma"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                errs.append(f"{name} must lie in (0, 1]")
        if not (self.a > 1 and self.b > 0 and 1 < self.c < 1.5):
            errs.append("ODE coefficients need a > 1, b > 0, 1 < c < 3/2")
        for term in self.kappa_terms:
            if not isinstance(term, KappaTerm):
                errs.append("kappa_terms entries must be KappaTerm")
            elif not (0 <= term.i < self.n and 0 <= term.j < self.n):
                errs.append("kappa index out of range")
        if errs:
            raise ParameterError("; ".join(errs))

    def replace(self, **changes) -> "ModelParameters":
        d = asdict(self)
        d["kappa_terms"] = self.kappa_terms
        d.update(changes)
        return ModelParameters(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kappa_terms"] = [asdict(t) for t in self.kappa_terms]
        return d


@dataclass(frozen=True)
class DerivedConstants:
    a_bar: float
    c_bar: float
    disc: float
    A_c: float
    B_c: float
    C_c: float
    D_c: float
    E_c: float
    Bcap: float
    t_star: float
    t_upper_star: float
    breve_beta: float
    t_star_found: bool = True

    @property
    def p_minus(self) -> float:
        return (self.a_bar - self.disc) / 2.0

    @property
    def p_plus(self) -> float:
        return (self.a_bar + self.disc) / 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["t_upper_star"]):
            d["t_upper_star"] = "inf"
        if math.isinf(d["t_star"]):
            d["t_star"] = "inf"
        return d


def _bracket_poly(t, A_c, B_c, pm, pp):
    return A_c * t**pm + B_c * t**pp + 1.0


def find_t_star(params: ModelParameters, A_c: float, B_c: float, pm: float, pp: float) -> float:
    """First root above t0 of A t^pm + B t^pp + 1, by bracketed search."""
    t0 = params.t0
    lo = t0
    f_lo = _bracket_poly(lo, A_c, B_c, pm, pp)
    hi = 10.0 * t0
    limit = 1e6 * t0
    while True:
        # scan the window finely so the first sign change is the one we bracket
        grid = [lo + (hi - lo) * i / 2000.0 for i in range(1, 2001)]
        prev_t, prev_v = lo, f_lo
        for t in grid:
            v = _bracket_poly(t, A_c, B_c, pm, pp)
            if prev_v > 0 and v <= 0:
                return brentq(_bracket_poly, prev_t, t, args=(A_c, B_c, pm, pp),
                              xtol=1e-14, rtol=1e-13, maxiter=200)
            prev_t, prev_v = t, v
        if hi >= limit:
            raise NoRealRoot(f"no root of the bracket polynomial in ({t0}, {limit}]")
        lo, f_lo = hi, prev_v
        hi = min(hi * 10.0, limit)


def derive_constants(params: ModelParameters) -> DerivedConstants:
    t0, beta, beta0 = params.t0, params.beta, params.beta0
    a, b, c = params.a, params.b, params.c
    a_bar = 1.0 - a
    c_bar = 1.0 - c
    disc = math.sqrt(a_bar**2 + 4.0 * b)
    pm = (a_bar - disc) / 2.0
    pp = (a_bar + disc) / 2.0
    r = beta / (1.0 + beta)
    s = t0 * beta0 / (1.0 + beta) ** 2
    w = t0 * beta0 / (1.0 + beta)
    L = math.log1p(beta)

    A_c = t0 ** (-pm) / disc * (s - pp * r)
    B_c = t0 ** (-pp) / disc * (pm * r - s)
    E_c = c_bar * beta0 * t0 ** (1.0 - a_bar) / (a_bar * (1.0 + beta))
    C_c = 2.0 / (2.0 + a_bar + disc) * (L + (a_bar + disc) / (2.0 * b) * w) * t0 ** (-pp)
    D_c = (a_bar + disc) / (2.0 + a_bar + disc) * (L - w / b) * t0
    Bcap = (1.0 + beta) ** c / (t0**a * beta0)

    try:
        t_star = find_t_star(params, A_c, B_c, pm, pp)
        found = True
    except NoRealRoot:
        t_star = math.inf
        found = False

    x = t0**a_bar - 1.0 / E_c
    t_upper = x ** (1.0 / a_bar) if x > 0 else math.inf

    return DerivedConstants(
        a_bar=a_bar, c_bar=c_bar, disc=disc,
        A_c=A_c, B_c=B_c, C_c=C_c, D_c=D_c, E_c=E_c,
        Bcap=Bcap, t_star=t_star, t_upper_star=t_upper,
        breve_beta=w - 1.0, t_star_found=found,
    )


@dataclass(frozen=True)
class AssumptionReport:
    A1: bool
    A2: bool
    A3: bool
    finite_blowup: bool

    @property
    def all_hold(self) -> bool:
        return self.A1 and self.A2 and self.A3 and self.finite_blowup

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_hold"] = self.all_hold
        return d


def check_assumptions(params: ModelParameters) -> AssumptionReport:
    t0, beta, beta0 = params.t0, params.beta, params.beta0
    a_bar = 1.0 - params.a
    c_bar = 1.0 - params.c
    a1 = beta0**2 >= 4.0 * beta * (1.0 + beta) ** 2 / t0**2
    a2 = 3.0 < params.q_mag < 100.0
    a3 = params.k == 0.25
    fb = beta0 > a_bar * (1.0 + beta) / (c_bar * t0)
    return AssumptionReport(A1=a1, A2=a2, A3=a3, finite_blowup=fb)


@dataclass(frozen=True)
class Envelopes:
    """Analytic bounds on 1+f for the reference ODE."""

    params: ModelParameters
    consts: DerivedConstants

    def lower(self, t):
        k = self.consts
        return math.exp(k.C_c * t**k.p_plus + k.D_c / t) - 1.0

    def upper(self, t):
        k = self.consts
        if t >= k.t_star:
            raise DomainError(f"upper envelope undefined at t={t} >= t_star={k.t_star}")
        return 1.0 / (k.A_c * t**k.p_minus + k.B_c * t**k.p_plus + 1.0) - 1.0

    def improved_lower(self, t):
        k = self.consts
        p = self.params
        base = 1.0 - k.E_c * p.t0**k.a_bar + k.E_c * t**k.a_bar
        if base <= 0:
            raise DomainError(f"improved envelope undefined at t={t}")
        return (1.0 + p.beta) * base ** (1.0 / k.c_bar) - 1.0


def envelopes(params: ModelParameters, consts: DerivedConstants | None = None) -> Envelopes:
    return Envelopes(params, consts if consts is not None else derive_constants(params))


def lower_envelope(params: ModelParameters, t: float) -> float:
    return envelopes(params).lower(t)


def upper_envelope(params: ModelParameters, t: float) -> float:
    return envelopes(params).upper(t)


def improved_lower_envelope(params: ModelParameters, t: float) -> float:
    return envelopes(params).improved_lower(t)


def g_coefficient(m2, k, rho, rho_t, t):
    """Principal-part coefficient of the Laplacian in the t-chart wave equation."""
    return m2 * rho_t**2 / (1.0 + rho) ** 2 + 4.0 * (k - m2) * (1.0 + rho) / t**2


def kappa_matrix(params: ModelParameters, t, rho):
    """Evaluate K^{ij}(t, rho) as a nested list of arrays/scalars."""
    n = params.n
    K = [[0.0] * n for _ in range(n)]
    for term in params.kappa_terms:
        K[term.i][term.j] = K[term.i][term.j] + term.coeff * t**term.p_t * rho**term.p_rho
    return K
