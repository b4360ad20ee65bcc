"""Lifespan-scaling experiments: T_eps over an amplitude grid and its log-log slope."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import theory
from .solver import ProblemSpec, run

log = logging.getLogger(__name__)

MIN_POINTS = 4


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    epsilon: float
    T_est: float
    converged: bool
    dx: float
    T_coarse: float = math.nan
    method: str = ""


@dataclass
class SweepResult:
    points: list
    fit_exponent: float
    fit_intercept: float
    fit_ci: tuple
    predicted_upper: float
    predicted_lower: float
    delta: float
    regime: Optional[theory.ExponentReport]
    monotone: bool
    notes: list = field(default_factory=list)

    @property
    def epsilons(self) -> list:
        return [pt.epsilon for pt in self.points]

    @property
    def T_eps(self) -> list:
        return [pt.T_est for pt in self.points]

    def summary(self) -> dict:
        return {
            "fit_exponent": self.fit_exponent,
            "fit_intercept": self.fit_intercept,
            "fit_ci": list(self.fit_ci),
            "predicted_upper": self.predicted_upper,
            "predicted_lower": self.predicted_lower,
            "delta": self.delta,
            "regime": self.regime.as_dict() if self.regime else None,
            "monotone": self.monotone,
            "notes": list(self.notes),
            "points": [asdict(pt) for pt in self.points],
        }


def fit_exponent(eps, T) -> tuple:
    """Least squares for log T = -s log eps + c; returns (s, c)."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(T, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    return float(-slope), float(icpt)


def bootstrap_ci(eps, T, n_boot: int = 1000, seed: int = 0, level: float = 0.95) -> tuple:
    """Percentile CI for the slope from resampled (eps, T) pairs.

    Resamples with fewer than two distinct eps are skipped.
    """
    eps = np.asarray(eps, dtype=float)
    T = np.asarray(T, dtype=float)
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_boot):
        idx = rng.integers(0, eps.size, eps.size)
        if np.unique(eps[idx]).size < 2:
            continue
        slopes.append(fit_exponent(eps[idx], T[idx])[0])
    lo, hi = np.percentile(slopes, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


def _solve_point(spec: ProblemSpec, rtol: float) -> SweepPoint:
    _, rep = run(spec, check_resolution=True, rtol=rtol)
    if rep is None:
        log.info("eps=%g: no blow-up before t_max=%g", spec.epsilon, spec.t_max)
        return SweepPoint(spec.epsilon, math.inf, False, spec.dx)
    coarse = rep.resolution_pair[0] if rep.resolution_pair else math.nan
    return SweepPoint(spec.epsilon, rep.T_est, rep.converged, spec.dx, coarse, rep.method)


def predicted_exponents(n: int, p: float, damping: theory.DampingSpec, delta: float):
    """(upper-bound exponent, lower-bound exponent, report) for T_eps ~ eps^{-s}."""
    rep = theory.classify(n, p, damping)
    if rep.regime == theory.SUPERCRITICAL:
        raise theory.AdmissibilityError(
            f"p={p} >= p_c={rep.p_crit:g}: no lifespan scaling to fit")
    upper = 1.0 / rep.kappa if rep.regime == theory.SUBCRITICAL_POWER else p - 1.0
    return upper, 1.0 / rep.kappa - delta, rep


def run_sweep(base: ProblemSpec, eps_grid: Sequence[float], workers: int = 1,
              rtol: float = 0.05, delta: float = 0.2, n_boot: int = 1000, seed: int = 0,
              done: Optional[dict] = None, on_point=None) -> SweepResult:
    """Estimate T_eps at each amplitude (two resolutions each) and fit the slope.

    ``done`` maps eps -> SweepPoint for points to reuse instead of re-running;
    ``on_point`` is called with each freshly computed point.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(not 0 < e <= 1 for e in eps_grid):
        raise ValueError("eps grid must lie in (0, 1]")
    upper, lower, rep = predicted_exponents(base.n, base.p, base.damping, delta)
    done = dict(done or {})
    todo = [e for e in eps_grid if e not in done]
    specs = [replace(base, epsilon=e) for e in todo]
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(_solve_point, specs, [rtol] * len(specs)))
    else:
        fresh = [_solve_point(s, rtol) for s in specs]
    for pt in fresh:
        done[pt.epsilon] = pt
        if on_point is not None:
            on_point(pt)
    points = [done[e] for e in eps_grid]

    good = [pt for pt in points if pt.converged and math.isfinite(pt.T_est)]
    if len(good) < MIN_POINTS:
        raise SweepError(f"only {len(good)} converged lifespans; need at least {MIN_POINTS}")
    good.sort(key=lambda pt: pt.epsilon)
    e = [pt.epsilon for pt in good]
    T = [pt.T_est for pt in good]
    monotone = all(a >= b for a, b in zip(T[:-1], T[1:]))
    notes = []
    if not monotone:
        notes.append("T_eps increases with eps somewhere on the grid; check resolution")
    s, c = fit_exponent(e, T)
    ci = bootstrap_ci(e, T, n_boot, seed)
    return SweepResult(points, s, c, ci, upper, lower, delta, rep, monotone, notes)


@dataclass(frozen=True)
class Verdict:
    consistent: bool
    within_upper: bool
    within_lower: bool
    fit_exponent: float
    predicted_upper: float
    predicted_lower: float
    tol: float
    candidates: dict
    notes: tuple = ()


def compare_bounds(result: SweepResult, tol: float = 0.2) -> Verdict:
    """Check fit_exponent ≤ upper (1+tol) and ≥ lower (1-tol)."""
    s = result.fit_exponent
    up = s <= result.predicted_upper * (1.0 + tol)
    lo = s >= result.predicted_lower * (1.0 - tol)
    rep = result.regime
    cands = {"upper": result.predicted_upper}
    notes = []
    if rep is not None and rep.regime in (theory.ALPHA_LOG_CRITICAL, theory.ALPHA_DOMINATED):
        cands = {"1/kappa": 1.0 / rep.kappa, "p-1": rep.p - 1.0}
        notes.append("alpha-dominated range: upper bound not expected to be sharp")
        if rep.regime == theory.ALPHA_LOG_CRITICAL:
            notes.append("bound carries a log(1/eps)^(p-1) factor; fit uses the leading power only")
    return Verdict(up and lo, up, lo, s, result.predicted_upper, result.predicted_lower,
                   tol, cands, tuple(notes))


def ode_surrogate_lifespan(epsilon: float, p: float = 2.0, beta: float = 0.0,
                           u0: float = 1.0, u1: float = 1.0, cap: float = 1e8,
                           t_max: float = 1e6) -> float:
    """Blow-up time of u'' + (1+t)^{-β} u' = |u|^p, u(0) = ε u0, u'(0) = ε u1.

    Integrates to u = cap, then adds the remaining time of u'' = u^p from there.
    """
    def rhs(t, y):
        return [y[1], abs(y[0]) ** p - (1.0 + t) ** (-beta) * y[1]]

    def hit(t, y):
        return y[0] - cap

    hit.terminal = True
    sol = solve_ivp(rhs, (0.0, t_max), [epsilon * u0, epsilon * u1], method="DOP853",
                    rtol=1e-11, atol=1e-14, events=hit)
    if not sol.t_events[0].size:
        return math.inf
    c = math.sqrt(2.0 / (p + 1.0))
    tail = cap ** (-(p - 1.0) / 2.0) / (c * (p - 1.0) / 2.0)
    return float(sol.t_events[0][0] + tail)


def write_points(path, points: Sequence[SweepPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "T_est", "converged", "dx"])
        for pt in points:
            w.writerow([repr(pt.epsilon), repr(pt.T_est), int(pt.converged), repr(pt.dx)])


def write_loglog(path, points: Sequence[SweepPoint]) -> None:
    """Whitespace columns for gnuplot: log eps, log T, eps, T."""
    with open(path, "w") as fh:
        fh.write("# log_eps log_T eps T\n")
        for pt in points:
            if pt.converged and math.isfinite(pt.T_est):
                fh.write(f"{math.log(pt.epsilon)!r} {math.log(pt.T_est)!r} "
                         f"{pt.epsilon!r} {pt.T_est!r}\n")


def write_summary(path, result: SweepResult, verdict: Optional[Verdict] = None) -> None:
    data = result.summary()
    if verdict is not None:
        data["verdict"] = asdict(verdict)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
