"""Closed-form scalar objects for u_tt - Δu + Φ(t,x) u_t = |u|^p.

Damping is Φ(t,x) = <x>^{-α} (1+t)^{-β}.  This module holds the admissibility
rules for (α, β, p), the lifespan rate κ, the constant B, the gauge g(t)
solving -g' + (1+t)^{-β} g = 1, the spatial weight F_{p,α}(R), and the
three-case lifespan predictor.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

EXPLICIT = "explicit-power"
GENERAL_SPATIAL = "general-spatial"
GENERAL_TEMPORAL = "general-temporal"
MODES = (EXPLICIT, GENERAL_SPATIAL, GENERAL_TEMPORAL)

SUPERCRITICAL = "supercritical"
SUBCRITICAL_POWER = "subcritical-power"
ALPHA_LOG_CRITICAL = "alpha-log-critical"
ALPHA_DOMINATED = "alpha-dominated"

# relative tolerance for deciding alpha*q == n on floats
_BRANCH_RTOL = 1e-12


class AdmissibilityError(ValueError):
    """Parameters outside the range where the lifespan theory applies."""


@dataclass(frozen=True)
class DampingSpec:
    """Damping coefficient Φ(t,x).

    In ``explicit-power`` mode Φ = <x>^{-α}(1+t)^{-β}.  The general modes take a
    user callable: ``a(r)`` with 0 <= a <~ <x>^{-α} (β must be 0), or ``b(t)``
    with b ~ (1+t)^{-β} (α must be 0).  ``alpha``/``beta`` then record the decay
    rates that drive κ.

    ``exploratory=True`` admits αβ != 0 for simulation only; such specs are
    never in theorem mode.
    """

    alpha: float = 0.0
    beta: float = 0.0
    mode: str = EXPLICIT
    a: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    b: Optional[Callable[[float], float]] = field(default=None, compare=False)
    exploratory: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise AdmissibilityError(f"unknown damping mode {self.mode!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise AdmissibilityError(f"alpha={self.alpha} outside [0, 1)")
        if not -1.0 < self.beta < 1.0:
            raise AdmissibilityError(f"beta={self.beta} outside (-1, 1)")
        if self.mode == GENERAL_SPATIAL:
            if self.a is None:
                raise AdmissibilityError("general-spatial mode needs a(r)")
            if self.beta != 0.0:
                raise AdmissibilityError("general-spatial mode requires beta = 0")
        if self.mode == GENERAL_TEMPORAL:
            if self.b is None:
                raise AdmissibilityError("general-temporal mode needs b(t)")
            if self.alpha != 0.0:
                raise AdmissibilityError("general-temporal mode requires alpha = 0")
        if self.alpha * self.beta != 0.0 and not self.exploratory:
            raise AdmissibilityError(
                f"alpha*beta = {self.alpha * self.beta:g} != 0 is outside the proven range; "
                "enable exploratory mode (--exploratory) to simulate anyway"
            )

    @property
    def theorem_mode(self) -> bool:
        return self.alpha * self.beta == 0.0

    def coefficient(self, t: float, r: np.ndarray) -> np.ndarray:
        """Evaluate Φ(t, r) on radial nodes ``r``."""
        r = np.asarray(r, dtype=float)
        if self.mode == GENERAL_SPATIAL:
            return np.asarray(self.a(r), dtype=float) * np.ones_like(r)
        if self.mode == GENERAL_TEMPORAL:
            return float(self.b(t)) * np.ones_like(r)
        out = (1.0 + t) ** (-self.beta) * np.ones_like(r)
        if self.alpha:
            out = out * (1.0 + r * r) ** (-0.5 * self.alpha)
        return out


def _require_theorem(damping: DampingSpec) -> None:
    if not damping.theorem_mode:
        raise AdmissibilityError(
            f"alpha={damping.alpha}, beta={damping.beta}: alpha*beta != 0 is outside the proven range"
        )


def _check_np(n: int, p: float) -> None:
    if int(n) != n or n < 1:
        raise AdmissibilityError(f"dimension n={n} must be a positive integer")
    if not p > 1.0:
        raise AdmissibilityError(f"p={p} must exceed 1")


def conjugate(p: float) -> float:
    """Hölder conjugate q = p/(p-1)."""
    return p / (p - 1.0)


def fujita_exponent(n: int) -> float:
    return 1.0 + 2.0 / n


def critical_exponent(n: int, alpha: float = 0.0) -> float:
    return 1.0 + 2.0 / (n - alpha)


def alpha_threshold(n: int, alpha: float) -> float:
    """p at which αq = n, i.e. 1 + α/(n-α)."""
    return 1.0 + alpha / (n - alpha)


def kappa(n: int, p: float, damping: DampingSpec) -> float:
    """Lifespan rate κ = 2(1+β)/(2-α) * (1/(p-1) - (n-α)/2).

    May be <= 0; callers classify.
    """
    _check_np(n, p)
    _require_theorem(damping)
    a, b = damping.alpha, damping.beta
    return 2.0 * (1.0 + b) / (2.0 - a) * (1.0 / (p - 1.0) - (n - a) / 2.0)


@dataclass(frozen=True)
class ExponentReport:
    n: int
    p: float
    alpha: float
    beta: float
    kappa: float
    q: float
    p_crit: float
    p_alpha: float
    p_fujita: float
    regime: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def classify(n: int, p: float, damping: DampingSpec) -> ExponentReport:
    k = kappa(n, p, damping)
    a = damping.alpha
    q = conjugate(p)
    p_crit = critical_exponent(n, a)
    if p >= p_crit:
        regime = SUPERCRITICAL
    elif a > 0 and math.isclose(a * q, n, rel_tol=_BRANCH_RTOL):
        regime = ALPHA_LOG_CRITICAL
    elif a * q > n:
        regime = ALPHA_DOMINATED
    else:
        regime = SUBCRITICAL_POWER
    return ExponentReport(
        n=n, p=p, alpha=a, beta=damping.beta, kappa=k, q=q, p_crit=p_crit,
        p_alpha=alpha_threshold(n, a), p_fujita=fujita_exponent(n), regime=regime,
    )


def _primitive(t, beta: float):
    """∫_0^t (1+s)^{-β} ds."""
    return ((1.0 + t) ** (1.0 - beta) - 1.0) / (1.0 - beta)


def _check_beta(beta: float) -> None:
    if not -1.0 < beta < 1.0:
        raise AdmissibilityError(f"beta={beta} outside (-1, 1)")


def compute_B(beta: float) -> float:
    """B = (∫_0^∞ exp(-∫_0^t (1+s)^{-β} ds) dt)^{-1}.

    Adaptive quadrature on [0, T*] where the integrand has fallen below 1e-16,
    split into dyadic panels, plus the leading-order tail e^{-A(T*)} (1+T*)^β.
    """
    _check_beta(beta)
    if beta == 0.0:
        return 1.0
    # A(T*) = 16 ln 10 + margin
    a_star = 38.0
    t_star = (1.0 + (1.0 - beta) * a_star) ** (1.0 / (1.0 - beta)) - 1.0
    edges = [0.0, 1.0]
    while edges[-1] < t_star:
        edges.append(min(2.0 * edges[-1], t_star))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda t: math.exp(-_primitive(t, beta)), lo, hi,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    total += math.exp(-_primitive(t_star, beta)) * (1.0 + t_star) ** beta
    return 1.0 / total


class Gauge:
    """g(t) solving -g' + (1+t)^{-β} g = 1 with g(0) = 1/B.

    Uses 1/B = ∫_0^∞ e^{-A} to write the explicit solution as a tail integral,
        g(t) = e^{A(t)} ∫_t^∞ e^{-A(s)} ds,
    which is a positive integrand and so free of the large-times-tiny
    cancellation in the textbook form.  g' follows from one integration by
    parts, g'(t) = e^{A(t)} ∫_t^∞ e^{-A(s)} β (1+s)^{β-1} ds.
    """

    def __init__(self, beta: float):
        _check_beta(beta)
        self.beta = float(beta)
        self.B = compute_B(beta)

    def _scaled(self, t: float, weight_power: float) -> float:
        # s = t + (1+t)^β w; returns ∫_0^∞ exp(-(A(s)-A(t))) (1+w/X)^weight_power dw
        beta = self.beta
        X = (1.0 + t) ** (1.0 - beta)

        def f(w):
            e = X * math.expm1((1.0 - beta) * math.log1p(w / X)) / (1.0 - beta)
            val = math.exp(-e)
            if weight_power:
                val *= (1.0 + w / X) ** weight_power
            return val

        val, _ = integrate.quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    def normalized(self, t):
        """(1+t)^{-β} g(t), which tends to 1."""
        if self.beta == 0.0:
            return np.ones_like(np.asarray(t, dtype=float))[()]
        return np.vectorize(lambda s: self._scaled(float(s), 0.0), otypes=[float])(t)[()]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("gauge defined for t >= 0")
        return ((1.0 + t) ** self.beta * self.normalized(t))[()]

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.beta == 0.0:
            return np.zeros_like(t)[()]
        beta = self.beta
        inner = np.vectorize(lambda s: self._scaled(float(s), beta - 1.0), otypes=[float])(t)
        return (beta * (1.0 + t) ** (beta - 1.0) * inner)[()]

    def residual(self, t):
        """-g' + (1+t)^{-β} g - 1."""
        t = np.asarray(t, dtype=float)
        return (-self.derivative(t) + (1.0 + t) ** (-self.beta) * self(t) - 1.0)[()]


def gauge(beta: float) -> Gauge:
    return Gauge(beta)


def F_weight(p: float, alpha: float, n: int, R):
    """Spatial weight F_{p,α}(R) from the K3 estimate."""
    if not p > 1.0:
        raise AdmissibilityError(f"p={p} must exceed 1")
    if not 0.0 <= alpha < 1.0:
        raise AdmissibilityError(f"alpha={alpha} outside [0, 1)")
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("R must be positive")
    q = conjugate(p)
    if alpha > 0 and math.isclose(alpha * q, n, rel_tol=_BRANCH_RTOL):
        return (np.log1p(R) ** (1.0 / q))[()]
    if alpha * q < n:
        return (R ** (-alpha + n / q))[()]
    return np.ones_like(R)[()]


POWER_FORM = "eps^(-1/kappa)"
LOG_FORM = "eps^(-(p-1)) * log(1/eps)^(p-1)"
P_MINUS_ONE_FORM = "eps^(-(p-1))"


@dataclass(frozen=True)
class LifespanBound:
    form: str
    value: float
    exponent: float  # power of 1/eps
    log_power: float  # power of log(1/eps); 0 unless log form
    regime: str
    constant: str = "unknown (reported with C = 1)"


def predict_lifespan_bound(n: int, p: float, damping: DampingSpec, epsilon: float) -> LifespanBound:
    """Upper bound shape for T_eps with the unknown constant set to 1."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon={epsilon} outside (0, 1]")
    rep = classify(n, p, damping)
    if rep.regime == SUPERCRITICAL:
        raise AdmissibilityError(
            f"p={p} >= p_c={rep.p_crit:g}: no finite lifespan bound for small data"
        )
    if rep.regime == SUBCRITICAL_POWER:
        s = 1.0 / rep.kappa
        return LifespanBound(POWER_FORM, epsilon ** (-s), s, 0.0, rep.regime)
    s = p - 1.0
    if rep.regime == ALPHA_LOG_CRITICAL:
        val = epsilon ** (-s) * math.log(1.0 / epsilon) ** s
        return LifespanBound(LOG_FORM, val, s, s, rep.regime)
    return LifespanBound(P_MINUS_ONE_FORM, epsilon ** (-s), s, 0.0, rep.regime)


def _num(x: float) -> str:
    """Short rational form (4/3) when x is one to double precision, else %g."""
    f = Fraction(x).limit_denominator(1000)
    if f.denominator > 1 and abs(float(f) - x) <= 1e-12 * abs(x):
        return f"{f.numerator}/{f.denominator}"
    return f"{x:g}"


def bound_table(n: int, damping: DampingSpec) -> dict:
    """Symbolic summary of critical exponent, upper/lower lifespan bounds and κ.

    Mirrors the two-column (α = 0 / β = 0) tabulation of the lifespan results.
    """
    _require_theorem(damping)
    a, b = damping.alpha, damping.beta
    p_c = critical_exponent(n, a)
    if a == 0.0:
        upper = [{"p_range": [1.0, p_c], "p_range_text": f"1 < p < {_num(p_c)}",
                  "bound": POWER_FORM}]
        kappa_text = f"(1+{b:g})*(1/(p-1) - {n}/2)"
    else:
        p_a = alpha_threshold(n, a)
        upper = [
            {"p_range": [p_a, p_c], "p_range_text": f"{_num(p_a)} < p < {_num(p_c)}", "bound": POWER_FORM},
            {"p_range": [p_a, p_a], "p_range_text": f"p = {_num(p_a)}", "bound": LOG_FORM},
            {"p_range": [1.0, p_a], "p_range_text": f"1 < p < {_num(p_a)}", "bound": P_MINUS_ONE_FORM},
        ]
        kappa_text = f"2/(2-{a:g})*(1/(p-1) - ({n}-{a:g})/2)"
    return {
        "n": n, "alpha": a, "beta": b,
        "p_c": p_c, "p_c_text": f"1 + 2/({n}-{a:g})" if a else f"1 + 2/{n}",
        "upper": upper,
        "lower": "eps^(-1/kappa + delta), any delta > 0",
        "kappa": kappa_text,
    }
