"""Finite-difference integration of u_tt - Δu + Φ(t,x) u_t = |u|^p on radial grids.

Also covers the heat analogue Φ(t,x) v_t = Δv + |v|^p.  Radially symmetric data
on R^n reduce both to r in [0, L]; n = 1 is the even extension of the line.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate, linalg
from scipy.special import gamma

from .testfn import phi_radial
from .theory import DampingSpec, compute_B

log = logging.getLogger(__name__)

WAVE = "damped-wave"
HEAT = "heat"

PAPER_BUMP = "paper-bump"
GAUSSIAN = "gaussian-truncated"
TABULATED = "custom-tabulated"

FIT = "threshold-extrapolation"
CROSSING = "threshold-crossing"
DT_COLLAPSE = "dt-collapse"


class DataConditionError(ValueError):
    """Initial data fail the positivity condition ∫(<x>^{-α} B u0 + u1) dx > 0."""


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


# ---------------------------------------------------------------------------
# problem description


@dataclass(frozen=True)
class ProblemSpec:
    n: int = 1
    p: float = 2.0
    damping: DampingSpec = field(default_factory=DampingSpec)
    data_family: str = PAPER_BUMP
    data_params: dict = field(default_factory=dict, compare=False)
    epsilon: float = 1.0
    equation: str = WAVE
    domain_radius: Optional[float] = None
    dx: float = 0.05
    cfl: float = 0.5
    blowup_threshold: float = 1e4
    t_max: float = 100.0
    margin: float = 2.0
    snapshot_stride: int = 0
    cascade_start: Optional[float] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n={self.n} must be a positive integer")
        if not self.p > 1.0:
            raise ValueError(f"p={self.p} must exceed 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.equation not in (WAVE, HEAT):
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.dx <= 0 or self.t_max <= 0:
            raise ValueError("dx and t_max must be positive")
        if self.equation == WAVE and not 0 < self.cfl <= 1.0:
            raise ValueError(f"cfl={self.cfl} must lie in (0, 1] for the wave scheme")
        if self.data_family not in (PAPER_BUMP, GAUSSIAN, TABULATED):
            raise ValueError(f"unknown data family {self.data_family!r}")
        needed = self.support_radius + self.t_max + self.margin
        if self.domain_radius is not None and self.domain_radius < needed:
            raise ValueError(
                f"domain_radius={self.domain_radius} < support + t_max + margin = {needed}"
            )

    @property
    def support_radius(self) -> float:
        prm = self.data_params
        if self.data_family == PAPER_BUMP:
            return float(prm.get("r0", 1.0))
        if self.data_family == GAUSSIAN:
            return float(prm.get("cutoff", 3.0 * prm.get("width", 1.0)))
        r = np.asarray(prm["r"], dtype=float)
        nz = (np.abs(prm["u0"]) > 0) | (np.abs(prm.get("u1", np.zeros_like(r))) > 0)
        return float(r[nz].max()) if nz.any() else 0.0

    @property
    def radius(self) -> float:
        if self.domain_radius is not None:
            return float(self.domain_radius)
        return self.support_radius + self.t_max + self.margin

    def refined(self, factor: int = 2) -> "ProblemSpec":
        return replace(self, dx=self.dx / factor,
                       snapshot_stride=self.snapshot_stride * factor)


def data_profile(spec: ProblemSpec) -> Callable[[np.ndarray], tuple]:
    """Return r -> (u0(r), u1(r)) for the spec's data family (unit amplitude)."""
    prm = spec.data_params
    if spec.data_family == PAPER_BUMP:
        r0 = float(prm.get("r0", 1.0))

        def prof(r):
            b = phi_radial(np.asarray(r, dtype=float) / r0)
            return b, b

    elif spec.data_family == GAUSSIAN:
        w = float(prm.get("width", 1.0))
        cut = float(prm.get("cutoff", 3.0 * w))
        a0 = float(prm.get("amp0", 1.0))
        a1 = float(prm.get("amp1", 1.0))

        def prof(r):
            r = np.asarray(r, dtype=float)
            g = np.where(r < cut, np.exp(-(r / w) ** 2), 0.0)
            return a0 * g, a1 * g

    else:
        rt = np.asarray(prm["r"], dtype=float)
        u0t = np.asarray(prm["u0"], dtype=float)
        u1t = np.asarray(prm.get("u1", np.zeros_like(rt)), dtype=float)

        def prof(r):
            r = np.asarray(r, dtype=float)
            return (np.interp(r, rt, u0t, right=0.0), np.interp(r, rt, u1t, right=0.0))

    return prof


def positivity_integral(spec: ProblemSpec) -> float:
    """∫_{R^n} (<x>^{-α} B u0 + u1) dx for the unit-amplitude data.

    For the heat equation only the u0 term is present.
    """
    prof = data_profile(spec)
    B = compute_B(spec.damping.beta)
    alpha = spec.damping.alpha
    heat = spec.equation == HEAT

    def f(r):
        r = np.asarray(r, dtype=float)
        u0, u1 = prof(r)
        w = (1.0 + r * r) ** (-0.5 * alpha) * B * u0
        if not heat:
            w = w + u1
        return w * r ** (spec.n - 1)

    top = spec.support_radius
    if top <= 0:
        return 0.0
    if spec.data_family == TABULATED:
        # piecewise-linear data: trapezoid on a refinement of the table
        rt = np.asarray(spec.data_params["r"], dtype=float)
        rt = rt[rt <= top]
        fine = np.unique(np.concatenate([np.linspace(a, b, 17) for a, b in zip(rt[:-1], rt[1:])]))
        val = integrate.trapezoid(f(fine), fine)
    else:
        val, _ = integrate.quad(lambda x: float(f(x)), 0.0, top, epsabs=1e-14, epsrel=1e-11, limit=400)
    return sphere_area(spec.n) * val


# ---------------------------------------------------------------------------
# grid and operators


class RadialGrid:
    """Nodes r_j = j dx on [0, L] with a finite-volume radial Laplacian.

    Cell j spans [r_j - dx/2, r_j + dx/2] ∩ [0, ∞); the last node carries the
    homogeneous Dirichlet condition.  At r = 0 the scheme reduces to
    Δu(0) ≈ 2n (u_1 - u_0)/dx², the symmetry limit n u_rr(0).
    """

    def __init__(self, n: int, dx: float, L: float):
        self.n = int(n)
        self.dx = float(dx)
        N = int(math.ceil(L / dx))
        self.r = dx * np.arange(N + 1)
        self.L = float(self.r[-1])
        half = self.r[:-1] + 0.5 * dx  # faces j + 1/2
        self.face = half ** (self.n - 1)
        lo = np.maximum(self.r - 0.5 * dx, 0.0)
        hi = self.r + 0.5 * dx
        self.volume = (hi**self.n - lo**self.n) / self.n
        self.omega = sphere_area(self.n)
        # off-diagonal coupling coefficients of Δ_h
        self._up = np.zeros_like(self.r)
        self._lo = np.zeros_like(self.r)
        self._up[:-1] = self.face / (dx * self.volume[:-1])
        self._lo[1:-1] = self.face[:-1] / (dx * self.volume[1:-1])

    @property
    def size(self) -> int:
        return self.r.size

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        flux = self.face * np.diff(u) / self.dx
        out = np.zeros_like(u)
        out[:-1] = flux
        out[1:-1] -= flux[:-1]
        out[:-1] /= self.volume[:-1]
        return out

    def stiffness(self, v: np.ndarray, w: np.ndarray) -> float:
        """Bilinear form a(v, w) = -<Δ_h v, w> in the cell-volume inner product."""
        return self.omega * float(np.sum(self.face * np.diff(v) * np.diff(w)) / self.dx)

    def integrate(self, f: np.ndarray) -> float:
        return self.omega * float(np.dot(self.volume, f))

    def trapezoid_weights(self) -> np.ndarray:
        """Weights for ∫_{R^n} f dx ≈ Σ w_j f(r_j) (trapezoid in r, weight ω r^{n-1})."""
        w = np.full(self.size, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return self.omega * w * self.r ** (self.n - 1)

    def tridiagonal(self):
        """(lower, diag, upper) bands of Δ_h; the Dirichlet row is zero."""
        diag = -(self._up + self._lo)
        diag[0] = -self._up[0]
        diag[-1] = 0.0
        return self._lo.copy(), diag, self._up.copy()


# ---------------------------------------------------------------------------
# time stepping


@dataclass(frozen=True)
class WaveState:
    t: float
    u: np.ndarray
    u_prev: np.ndarray
    dt_prev: float


@dataclass(frozen=True)
class HeatState:
    t: float
    u: np.ndarray


def nonlinearity(u: np.ndarray, p: float) -> np.ndarray:
    return np.abs(u) ** p


def start_wave(grid: RadialGrid, u0, u1, dt: float, damping: DampingSpec, p: float,
               source: bool = True, forcing=None) -> WaveState:
    """Second-order Taylor start: u^1 = u^0 + dt u1 + dt²/2 u_tt(0)."""
    phi = damping.coefficient(0.0, grid.r)
    acc = grid.laplacian(u0) - phi * u1
    if source:
        acc = acc + nonlinearity(u0, p)
    if forcing is not None:
        acc = acc + forcing(0.0, grid.r)
    u = u0 + dt * u1 + 0.5 * dt * dt * acc
    u[-1] = 0.0
    return WaveState(dt, u, np.array(u0, dtype=float), dt)


def step_wave(state: WaveState, dt: float, grid: RadialGrid, damping: DampingSpec,
              p: float, source: bool = True, forcing=None) -> WaveState:
    """One step of the three-level scheme with semi-implicit damping.

    Allows dt != dt_prev:
        2/(k+h) [(u⁺-u)/h - (u-u⁻)/k] - Δ_h u + Φ (u⁺-u⁻)/(k+h) = |u|^p
    with k = dt_prev, h = dt; solved pointwise for u⁺.
    """
    k, h = state.dt_prev, dt
    mean = 0.5 * (k + h)
    u, um = state.u, state.u_prev
    phi = damping.coefficient(state.t, grid.r)
    rhs = grid.laplacian(u)
    if source:
        rhs = rhs + nonlinearity(u, p)
    if forcing is not None:
        rhs = rhs + forcing(state.t, grid.r)
    with np.errstate(over="ignore", invalid="ignore"):
        up = (u / h + (u - um) / k + 0.5 * phi * um + mean * rhs) / (1.0 / h + 0.5 * phi)
    up[-1] = 0.0
    return WaveState(state.t + h, up, u, h)


def wave_energy(grid: RadialGrid, new: np.ndarray, old: np.ndarray, dt: float) -> float:
    """Discrete energy ½‖(u⁺-u)/dt‖² + ½ a(u⁺, u), conserved by the free leapfrog."""
    v = (new - old) / dt
    return 0.5 * grid.integrate(v * v) + 0.5 * grid.stiffness(new, old)


def step_heat(state: HeatState, dt: float, grid: RadialGrid, damping: DampingSpec,
              p: float, source: bool = True) -> HeatState:
    """Φ (v⁺ - v)/dt = Δ_h v⁺ + |v|^p, one tridiagonal solve (linearly implicit)."""
    phi = damping.coefficient(state.t, grid.r)
    lo, dg, up = grid.tridiagonal()
    ab = np.zeros((3, grid.size))
    ab[0, 1:] = -up[:-1]
    ab[1] = phi / dt - dg
    ab[2, :-1] = -lo[1:]
    rhs = phi * state.u / dt
    if source:
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = rhs + nonlinearity(state.u, p)
    # Dirichlet row
    ab[1, -1] = 1.0
    ab[0, -1] = 0.0
    rhs[-1] = 0.0
    if not np.all(np.isfinite(rhs)):
        return HeatState(state.t + dt, np.full_like(state.u, np.inf))
    return HeatState(state.t + dt, linalg.solve_banded((1, 1), ab, rhs, check_finite=False))


# ---------------------------------------------------------------------------
# traces and reports


@dataclass
class SolutionTrace:
    n: int
    r: np.ndarray
    times: np.ndarray
    u: np.ndarray  # (snapshots, nodes)
    ut: np.ndarray
    dt_history: np.ndarray
    norms: dict  # t, sup_u, l2_u, energy

    def __post_init__(self):
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase strictly")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r", "u", "u_t"])
            for t, u, ut in zip(self.times, self.u, self.ut):
                for r, a, b in zip(self.r, u, ut):
                    w.writerow([repr(float(t)), repr(float(r)), repr(float(a)), repr(float(b))])

    def norms_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sup_u", "l2_u", "energy"])
            cols = [self.norms[k] for k in ("t", "sup_u", "l2_u", "energy")]
            for row in zip(*cols):
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, n: int) -> "SolutionTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        times, start = np.unique(t, return_index=True)
        order = np.argsort(start)
        times, start = times[order], start[order]
        m = int(np.sum(t == t[0]))
        r = data[:m, 1]
        u = data[:, 2].reshape(len(times), m)
        ut = data[:, 3].reshape(len(times), m)
        empty = np.array([])
        return cls(n, r, times, u, ut, empty,
                   {"t": empty, "sup_u": empty, "l2_u": empty, "energy": empty})


@dataclass(frozen=True)
class BlowupReport:
    T_est: float
    T_lower: float
    T_upper: float
    method: str
    converged: bool = False
    resolution_pair: Optional[tuple] = None  # (T at dx, T at dx/2)
    dx: float = float("nan")
    fit_quality: float = float("nan")

    def __post_init__(self):
        if not self.T_lower <= self.T_est <= self.T_upper:
            raise ValueError("blow-up bracket must satisfy T_lower <= T_est <= T_upper")

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["resolution_pair"] is not None:
            d["resolution_pair"] = list(d["resolution_pair"])
        return d


def estimate_blowup_time(t, sup_u, p: float, equation: str, threshold: float,
                         window: float = 256.0, min_r2: float = 0.999):
    """Fit sup|u| ≈ A (T - t)^{-γ} near the end of a run.

    γ is the ODE rate: 2/(p-1) for the wave equation, 1/(p-1) for heat.  With
    y = sup^{-1/γ} the model is linear in t and T is its root.  Uses samples
    with sup in [threshold/window, threshold].  Returns (T, r²) or None.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(sup_u, dtype=float)
    ok = np.isfinite(s) & (s >= threshold / window) & (s > 0)
    if ok.sum() < 5:
        return None
    # keep only the final monotone run-up
    idx = np.flatnonzero(ok)
    gaps = np.flatnonzero(np.diff(idx) > 1)
    if gaps.size:
        idx = idx[gaps[-1] + 1:]
    if idx.size < 5:
        return None
    gam = (2.0 if equation == WAVE else 1.0) / (p - 1.0)
    x, y = t[idx], s[idx] ** (-1.0 / gam)
    slope, icpt = np.polyfit(x, y, 1)
    if slope >= 0:
        return None
    pred = slope * x + icpt
    r2 = 1.0 - np.sum((y - pred) ** 2) / max(np.sum((y - y.mean()) ** 2), 1e-300)
    T = -icpt / slope
    if r2 < min_r2 or T < x[-1]:
        return None
    return float(T), float(r2)


def make_initial_data(spec: ProblemSpec, grid: Optional[RadialGrid] = None):
    """Sample ε(u0, u1) on the grid and check the positivity condition.

    Returns (u0, u1, integral) where u0, u1 already carry the factor ε and the
    integral is that of the unit-amplitude data.
    """
    grid = grid or RadialGrid(spec.n, spec.dx, spec.radius)
    integral = positivity_integral(spec)
    scale = 1e-12 * max(1.0, spec.support_radius ** spec.n)
    if not integral > scale:
        raise DataConditionError(
            f"data violate ∫(<x>^(-α) B u0 + u1) dx > 0 (integral = {integral:.3e})"
        )
    u0, u1 = data_profile(spec)(grid.r)
    u0 = spec.epsilon * np.asarray(u0, dtype=float)
    u1 = spec.epsilon * np.asarray(u1, dtype=float)
    u0[-1] = u1[-1] = 0.0
    return u0, u1, integral


def default_cascade_start(p: float, equation: str, dt: float, sup0: float) -> float:
    """sup|u| at which dt halving begins.

    The ODE time scale near blow-up is sup^{-(p-1)/2} (wave) or sup^{-(p-1)}
    (heat); halving starts once that drops below 20 steps.
    """
    rate = 0.5 * (p - 1.0) if equation == WAVE else (p - 1.0)
    return max(2.0 * sup0, (20.0 * dt) ** (-1.0 / rate))


def _integrate(spec: ProblemSpec, grid: RadialGrid, u0, u1):
    """Advance to blow-up or t_max.  Returns (trace, outcome)."""
    wave = spec.equation == WAVE
    damping = spec.damping
    dt = spec.cfl * spec.dx
    dt_min = 1e-12 * dt
    stride = spec.snapshot_stride
    level = spec.cascade_start
    if level is None:
        level = default_cascade_start(spec.p, spec.equation, dt, float(np.max(np.abs(u0))))

    times, us, uts, dts = [], [], [], []
    nt, nsup, nl2, nen = [], [], [], []

    def record(t, u, energy):
        nt.append(t)
        nsup.append(float(np.max(np.abs(u))))
        nl2.append(math.sqrt(max(grid.integrate(u * u), 0.0)))
        nen.append(energy)

    if stride:
        times.append(0.0)
        us.append(u0.copy())
        uts.append(u1.copy() if wave else np.zeros_like(u0))
    if wave:
        record(0.0, u0, 0.5 * grid.integrate(u1 * u1) + 0.5 * grid.stiffness(u0, u0))
        state = start_wave(grid, u0, u1, dt, damping, spec.p)
        record(state.t, state.u, wave_energy(grid, state.u, u0, dt))
        dts.append(dt)
    else:
        record(0.0, u0, 0.5 * grid.stiffness(u0, u0))
        state = HeatState(0.0, u0)
    step = 1 if wave else 0
    outcome = "completed"
    while True:
        if not np.isfinite(nsup[-1]):
            outcome = "blowup"
            break
        if nsup[-1] >= spec.blowup_threshold:
            outcome = "blowup"
            break
        if state.t >= spec.t_max:
            break
        while nsup[-1] >= level:
            dt *= 0.5
            level *= 2.0
        if dt < dt_min:
            outcome = DT_COLLAPSE
            break
        if wave:
            new = step_wave(state, dt, grid, damping, spec.p)
        else:
            new = step_heat(state, dt, grid, damping, spec.p)
        if not np.all(np.isfinite(new.u)):
            outcome = "blowup"
            break
        if wave:
            if stride and step % stride == 0:
                # level `step` is state.u; its central u_t needs the new level
                times.append(state.t)
                us.append(state.u.copy())
                uts.append((new.u - state.u_prev) / (state.dt_prev + dt))
            energy = wave_energy(grid, new.u, state.u, dt)
        else:
            energy = 0.5 * grid.stiffness(new.u, new.u)
        step += 1
        if not wave and stride and step % stride == 0:
            times.append(new.t)
            us.append(new.u.copy())
            uts.append((new.u - state.u) / dt)
        record(new.t, new.u, energy)
        dts.append(dt)
        state = new
    m = grid.size
    trace = SolutionTrace(
        spec.n, grid.r,
        np.array(times), np.array(us).reshape(-1, m), np.array(uts).reshape(-1, m),
        np.array(dts),
        {"t": np.array(nt), "sup_u": np.array(nsup), "l2_u": np.array(nl2),
         "energy": np.array(nen)},
    )
    return trace, outcome


def _report_from(trace: SolutionTrace, outcome: str, spec: ProblemSpec) -> Optional[BlowupReport]:
    if outcome == "completed":
        return None
    t = trace.norms["t"]
    sup = trace.norms["sup_u"]
    t_last = float(t[-1])
    last_dt = float(trace.dt_history[-1]) if trace.dt_history.size else spec.cfl * spec.dx
    if outcome == DT_COLLAPSE:
        return BlowupReport(t_last, t_last, t_last + last_dt, DT_COLLAPSE, dx=spec.dx)
    fit = estimate_blowup_time(t, sup, spec.p, spec.equation, spec.blowup_threshold)
    if fit is None:
        return BlowupReport(t_last, t_last, t_last + last_dt, CROSSING, dx=spec.dx)
    T, r2 = fit
    # heuristic bracket: allow twice the extrapolated remaining time
    return BlowupReport(T, t_last, t_last + 2.0 * (T - t_last) + last_dt, FIT,
                        dx=spec.dx, fit_quality=r2)


def run(spec: ProblemSpec, check_resolution: bool = False, rtol: float = 0.05):
    """Integrate ``spec`` until blow-up or t_max.

    Near blow-up dt is halved each time sup|u| doubles.  Returns
    ``(trace, report)`` with ``report`` None if the run reached t_max.  With
    ``check_resolution`` the problem is re-run at dx/2; the report then carries
    the finer estimate and ``converged`` records whether the two agree to
    ``rtol``.  Non-convergence is reported, not raised.
    """
    grid = RadialGrid(spec.n, spec.dx, spec.radius)
    u0, u1, _ = make_initial_data(spec, grid)
    trace, outcome = _integrate(spec, grid, u0, u1)
    report = _report_from(trace, outcome, spec)
    if not check_resolution or report is None:
        return trace, report
    fine_spec = spec.refined(2)
    fgrid = RadialGrid(fine_spec.n, fine_spec.dx, fine_spec.radius)
    fu0, fu1, _ = make_initial_data(fine_spec, fgrid)
    ftrace, foutcome = _integrate(fine_spec, fgrid, fu0, fu1)
    freport = _report_from(ftrace, foutcome, fine_spec)
    if freport is None:
        log.warning("dx/2 run reached t_max without blow-up (eps=%g)", spec.epsilon)
        return trace, replace(report, converged=False, resolution_pair=(report.T_est, math.inf))
    rel = abs(report.T_est - freport.T_est) / freport.T_est
    converged = rel <= rtol
    if not converged:
        log.warning("T estimates disagree by %.1f%% at dx=%g vs dx/2 (eps=%g)",
                    100 * rel, spec.dx, spec.epsilon)
    return trace, replace(freport, converged=converged,
                          resolution_pair=(report.T_est, freport.T_est))
