"""Space-time quadrature of the test-function functionals on a solution trace.

With the multiplier g(t) and ψ = η(t/τ) φ(x/R), the weak form gives

    I + J/B = K1 + K2 + K3,

    I  = ∬ g |u|^p ψ,              K1 =  ∬ g u ∂_t²ψ,
    J  = ε ∫ (<x>^{-α} B u0 + u1) φ_R,  K2 = -∬ g u Δψ,
                                   K3 =  ∬ (g' - 1) <x>^{-α} u ∂_tψ.

The 1/B on J comes from g(0) = 1/B; it is 1 whenever β = 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .solver import SolutionTrace, sphere_area
from .testfn import ScaledTestFunction, phi_radial
from .theory import EXPLICIT, AdmissibilityError, DampingSpec, F_weight, Gauge, conjugate

CERT_COLUMNS = ("tau", "R", "I", "J", "K1", "K2", "K3", "residual", "D", "C_empirical")


class StrideError(ValueError):
    """Snapshots too sparse for the time quadrature."""


@dataclass(frozen=True)
class Certificate:
    tau: float
    R: float
    I: float
    J: float
    K1: float
    K2: float
    K3: float
    D: float
    identity_residual: float
    C_empirical: float
    epsilon: float
    p: float
    B: float

    def row(self) -> list:
        vals = (self.tau, self.R, self.I, self.J, self.K1, self.K2, self.K3,
                self.identity_residual, self.D, self.C_empirical)
        return [repr(float(v)) for v in vals]


def _trapezoid_weights(r: np.ndarray, n: int) -> np.ndarray:
    w = np.zeros_like(r)
    d = np.diff(r)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return sphere_area(n) * w * r ** (n - 1)


def _require(damping: DampingSpec) -> None:
    if damping.mode != EXPLICIT or not damping.theorem_mode:
        raise AdmissibilityError("certificates need explicit-power damping with alpha*beta = 0")


def eval_J(r, n: int, u0, u1, R: float, epsilon: float, damping: DampingSpec,
           B: Optional[float] = None) -> float:
    """J_R = ε ∫_{B_R} (<x>^{-α} B u0 + u1) φ(x/R) dx by radial trapezoid on ``r``."""
    if R <= 0:
        raise ValueError("R must be positive")
    if B is None:
        B = Gauge(damping.beta).B
    r = np.asarray(r, dtype=float)
    w = _trapezoid_weights(r, n)
    dens = (1.0 + r * r) ** (-0.5 * damping.alpha) * B * np.asarray(u0) + np.asarray(u1)
    return float(epsilon * np.dot(w, dens * phi_radial(r / R)))


def empirical_R0(r, n: int, u0, u1, epsilon: float, damping: DampingSpec, R_grid) -> tuple:
    """Smallest R on ``R_grid`` with J_R >= ½ max J; returns (R0, J values)."""
    B = Gauge(damping.beta).B
    Js = np.array([eval_J(r, n, u0, u1, R, epsilon, damping, B) for R in R_grid])
    if not np.max(Js) > 0:
        raise ValueError("J_R never positive on the R grid; data fail the positivity condition")
    R0 = float(np.asarray(R_grid)[np.argmax(Js >= 0.5 * np.max(Js))])
    return R0, Js


def eval_D(tau: float, R: float, n: int, p: float, damping: DampingSpec,
           literal: bool = False) -> float:
    """D(τ,R) = τ^{-(1+β)/p} (τ^{-1+β} R^{n/q} + τ^{1+β} R^{-2+n/q} + F_{p,α}(R)).

    ``literal=True`` uses R^{q/n} in place of R^{n/q}, as the combined formula
    is printed; the per-term estimates it summarises carry n/q.
    """
    q = conjugate(p)
    b = damping.beta
    e = q / n if literal else n / q
    return float(tau ** (-(1.0 + b) / p) * (
        tau ** (-1.0 + b) * R**e + tau ** (1.0 + b) * R ** (-2.0 + e)
        + F_weight(p, damping.alpha, n, R)))


def choose_R(tau: float, n: int, p: float, alpha: float, beta: float,
             R0: Optional[float] = None) -> float:
    """R = τ^{(1+β)/(2-α)} when αq < n, else R = τ."""
    q = conjugate(p)
    R = tau ** ((1.0 + beta) / (2.0 - alpha)) if alpha * q < n else float(tau)
    if R0 is not None and tau >= tau0(R0, alpha, beta) and R < R0 * (1 - 1e-12):
        raise AssertionError(f"R={R} < R0={R0} although tau >= tau0")
    return R


def tau0(R0: float, alpha: float, beta: float) -> float:
    return max(1.0, R0 ** ((2.0 - alpha) / (1.0 + beta)))


def eval_I_and_K(trace: SolutionTrace, tau: float, R: float, damping: DampingSpec,
                 p: float, epsilon: float, literal_D: bool = False,
                 residual_floor: float = 1e-14) -> Certificate:
    """Trapezoid quadrature in t over snapshots and in r over nodes."""
    _require(damping)
    times = trace.times
    if times.size < 2 or times[-1] < tau:
        raise ValueError(f"trace ends at t={times[-1] if times.size else 0} before tau={tau}")
    k_end = int(np.searchsorted(times, tau, side="left"))
    sel = slice(0, k_end + 1)
    t = times[sel]
    gap = float(np.max(np.diff(t)))
    if gap > tau / 64.0 * (1 + 1e-9):
        raise StrideError(f"snapshot spacing {gap:g} exceeds tau/64 = {tau / 64:g}")
    u = trace.u[sel]
    r = trace.r
    n = trace.n
    gauge = Gauge(damping.beta)
    g = np.asarray(gauge(t), dtype=float)
    gp = np.asarray(gauge.derivative(t), dtype=float)
    psi = ScaledTestFunction(tau, R, n)
    e0, e1, e2 = psi.time_factors(t)
    f0, lap = psi.space_factors(r)
    w = _trapezoid_weights(r, n)
    bracket = (1.0 + r * r) ** (-0.5 * damping.alpha)
    with np.errstate(over="ignore"):
        A = np.abs(u) ** p @ (w * f0)
    B1 = u @ (w * f0)
    B2 = u @ (w * lap)
    B3 = u @ (w * bracket * f0)
    I = float(trapezoid(g * e0 * A, t))
    K1 = float(trapezoid(g * e2 * B1, t))
    K2 = float(-trapezoid(g * e0 * B2, t))
    K3 = float(trapezoid((gp - 1.0) * e1 * B3, t))
    J = eval_J(r, n, trace.u[0], trace.ut[0], R, 1.0, damping, gauge.B)
    resid = abs(I + J / gauge.B - (K1 + K2 + K3)) / max(abs(I) + abs(J), residual_floor)
    D = eval_D(tau, R, n, p, damping, literal=literal_D)
    q = conjugate(p)
    return Certificate(tau=float(tau), R=float(R), I=I, J=J, K1=K1, K2=K2, K3=K3, D=D,
                       identity_residual=float(resid), C_empirical=epsilon / D**q,
                       epsilon=float(epsilon), p=float(p), B=gauge.B)


@dataclass(frozen=True)
class ChainReport:
    applicable: bool
    C1: list  # J / D^q per certificate
    C_feasible: list  # smallest C with C D I^{1/p} - I - J >= 0
    C_empirical: list  # ε / D^q
    spread: float  # max C1 / min C1
    bounded: bool
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def check_chain(certs: Sequence[Certificate] | Certificate, epsilon: float,
                max_spread: float = 2.0) -> ChainReport:
    """Empirical constants in J ≤ C D^q and ε ≤ C D^q along a τ-family.

    Only boundedness is judged: the constants themselves are not fixed by the
    theory.  A family whose C1 varies by more than ``max_spread`` is flagged.
    """
    if isinstance(certs, Certificate):
        certs = [certs]
    C1, Cf, Ce = [], [], []
    applicable = True
    for c in certs:
        q = conjugate(c.p)
        if not (c.I > 0 and c.J > 0 and c.D > 0):
            applicable = False
            C1.append(math.nan)
            Cf.append(math.nan)
            Ce.append(epsilon / c.D**q if c.D > 0 else math.nan)
            continue
        C1.append(c.J / c.D**q)
        Cf.append((c.I + c.J) / (c.D * c.I ** (1.0 / c.p)))
        Ce.append(epsilon / c.D**q)
    if not applicable:
        return ChainReport(False, C1, Cf, Ce, math.nan, False,
                           "I or J vanishes; the chain degenerates")
    spread = max(C1) / min(C1)
    return ChainReport(True, C1, Cf, Ce, spread, spread <= max_spread)


def write_certificates(path, certs: Iterable[Certificate]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CERT_COLUMNS)
        for c in certs:
            w.writerow(c.row())
