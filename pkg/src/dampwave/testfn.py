"""Bump test functions φ, η, their scalings ψ_{τ,R}, and their derivative bounds."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

# exp(-1/s) underflows double precision once 1/s exceeds ~745
_LOG_TINY = -700.0


def _radius(x, n: int | None):
    x = np.asarray(x, dtype=float)
    if n is None:
        return np.abs(x)
    # trailing axis of length n holds coordinates
    return np.sqrt(np.sum(x * x, axis=-1))


def phi_radial(r):
    """φ as a function of |x|: exp(-1/(1-r^2)) inside the unit ball, else 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    s = 1.0 - r[inside] ** 2
    out[inside] = np.exp(-1.0 / s)
    return out[()]


def phi_radial_derivatives(r, n: int = 1):
    """Return (φ, φ_r, Δφ) of the radial bump in dimension ``n``.

    Δφ = φ (4r²/s⁴ - 8r²/s³ - 2n/s²) with s = 1 - r²; all three are exactly 0
    for r >= 1.
    """
    r = np.asarray(r, dtype=float)
    f = np.zeros_like(r)
    fr = np.zeros_like(r)
    lap = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    s = 1.0 - ri * ri
    with np.errstate(under="ignore"):
        e = np.exp(-1.0 / s)
        f[inside] = e
        fr[inside] = -2.0 * ri / s**2 * e
        lap[inside] = e * (4.0 * ri**2 / s**4 - 8.0 * ri**2 / s**3 - 2.0 * n / s**2)
    return f[()], fr[()], lap[()]


def phi(x, n: int | None = None):
    """φ(x).  Scalars/1-D arrays are |x|-values in 1D; pass ``n`` for points in R^n."""
    return phi_radial(_radius(x, n))


def grad_phi(x, n: int | None = None):
    x = np.asarray(x, dtype=float)
    r = _radius(x, n)
    _, fr, _ = phi_radial_derivatives(r, 1 if n is None else n)
    if n is None:
        return fr * np.sign(x)
    # ∇φ = φ_r x/r = -2 x φ / s²; finite at r = 0
    s = 1.0 - r**2
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        coef = np.where(r < 1.0, -2.0 * phi_radial(r) / np.where(r < 1.0, s, 1.0) ** 2, 0.0)
    return coef[..., None] * x


def laplacian_phi(x, n: int | None = None):
    r = _radius(x, n)
    return phi_radial_derivatives(r, 1 if n is None else n)[2]


def _eta_h(t):
    # η = 1/(1 + exp(h)) on (1/2, 1)
    return 1.0 / (1.0 - t * t) - 1.0 / (t * t - 0.25)


def eta_derivatives(t):
    """Return (η, η', η'') on t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("eta is defined for t >= 0")
    e0 = np.where(t <= 0.5, 1.0, 0.0)
    e1 = np.zeros_like(t)
    e2 = np.zeros_like(t)
    mid = (t > 0.5) & (t < 1.0)
    tm = t[mid]
    a = 1.0 - tm * tm
    b = tm * tm - 0.25
    h = 1.0 / a - 1.0 / b
    h1 = 2.0 * tm / a**2 + 2.0 * tm / b**2
    h2 = 2.0 / a**2 + 8.0 * tm**2 / a**3 + 2.0 / b**2 - 8.0 * tm**2 / b**3
    with np.errstate(under="ignore", over="ignore"):
        eta_v = expit(-h)
        one_minus = expit(h)
        w = eta_v * one_minus
        d1 = -w * h1
        d2 = -(d1 * (1.0 - 2.0 * eta_v) * h1 + w * h2)
    e0[mid] = eta_v
    e1[mid] = d1
    e2[mid] = d2
    return e0[()], e1[()], e2[()]


def eta(t):
    return eta_derivatives(t)[0]


def eta_prime(t):
    return eta_derivatives(t)[1]


def eta_double_prime(t):
    return eta_derivatives(t)[2]


class ScaledTestFunction:
    """ψ_{τ,R}(t,x) = η(t/τ) φ(x/R) on radial coordinates, with its derivatives."""

    def __init__(self, tau: float, R: float, n: int):
        if tau <= 0 or R <= 0:
            raise ValueError("tau and R must be positive")
        self.tau = float(tau)
        self.R = float(R)
        self.n = int(n)

    def time_factors(self, t):
        """(η_τ, ∂_t η_τ, ∂_t² η_τ) at times t."""
        e0, e1, e2 = eta_derivatives(np.asarray(t, dtype=float) / self.tau)
        return e0, e1 / self.tau, e2 / self.tau**2

    def space_factors(self, r):
        """(φ_R, Δφ_R) at radii r."""
        f, _, lap = phi_radial_derivatives(np.asarray(r, dtype=float) / self.R, self.n)
        return f, lap / self.R**2

    def __call__(self, t, r):
        et = self.time_factors(t)[0]
        fr = self.space_factors(r)[0]
        return np.multiply.outer(et, fr)

    def dt(self, t, r):
        return np.multiply.outer(self.time_factors(t)[1], self.space_factors(r)[0])

    def dtt(self, t, r):
        return np.multiply.outer(self.time_factors(t)[2], self.space_factors(r)[0])

    def laplacian(self, t, r):
        return np.multiply.outer(self.time_factors(t)[0], self.space_factors(r)[1])


def psi(tau: float, R: float, n: int) -> ScaledTestFunction:
    return ScaledTestFunction(tau, R, n)


def _log_phi_ratio(r, p: float, n: int):
    """log(|Δφ| / φ^{1/p}) computed without forming φ."""
    s = 1.0 - r * r
    poly = np.abs(4.0 * r**2 / s**4 - 8.0 * r**2 / s**3 - 2.0 * n / s**2)
    with np.errstate(divide="ignore"):
        return np.log(poly) - (1.0 - 1.0 / p) / s, -1.0 / s


def _log_eta_ratios(t, p: float):
    a = 1.0 - t * t
    b = t * t - 0.25
    h = 1.0 / a - 1.0 / b
    h1 = 2.0 * t / a**2 + 2.0 * t / b**2
    h2 = 2.0 / a**2 + 8.0 * t**2 / a**3 + 2.0 / b**2 - 8.0 * t**2 / b**3
    sp_pos = np.logaddexp(0.0, h)  # -log η
    sp_neg = np.logaddexp(0.0, -h)  # -log(1-η)
    log_w = -sp_pos - sp_neg
    eta_v = expit(-h)
    with np.errstate(divide="ignore"):
        log_r1 = np.log(np.abs(h1)) + log_w + sp_pos / p
        log_r2 = np.log(np.abs((1.0 - 2.0 * eta_v) * h1**2 - h2)) + log_w + sp_pos / p
    return log_r1, log_r2, -sp_pos


def bump_grids(points: int = 100_000, refine: int = 2000):
    """Uniform grids on (0,1) for r and on (1/2,1) for t, plus geometric clustering
    toward the support boundaries where the bound ratios peak."""
    g = np.geomspace(1e-6, 0.2, refine)
    r = np.unique(np.concatenate([np.linspace(0.0, 1.0, points, endpoint=False), 1.0 - g]))
    t_mid = np.linspace(0.5, 1.0, points + 1)[1:-1]
    t = np.unique(np.concatenate([t_mid, 1.0 - g * 0.5, 0.5 + g * 0.5]))
    return r, t


def verify_bump_bounds(p: float, n: int = 1, points: int = 100_000, refine: int = 2000) -> dict:
    """Empirical suprema of |Δφ|/φ^{1/p}, |η'|/η^{1/p}, |η''|/η^{1/p}.

    Points where φ (resp. η) < 1e-300 are treated as ratio 0.  The ratios are
    evaluated in log space so the boundary layer never produces 0/0.
    """
    if not p > 1.0:
        raise ValueError("p must exceed 1")
    r, t = bump_grids(points, refine)
    cutoff = np.log(1e-300)
    lr, lphi = _log_phi_ratio(r, p, n)
    lr = np.where(lphi < cutoff, -np.inf, lr)
    l1, l2, leta = _log_eta_ratios(t, p)
    l1 = np.where(leta < cutoff, -np.inf, l1)
    l2 = np.where(leta < cutoff, -np.inf, l2)
    out = {
        "C_phi": float(np.exp(lr.max())),
        "C_eta1": float(np.exp(l1.max())),
        "C_eta2": float(np.exp(l2.max())),
    }
    if not all(np.isfinite(v) for v in out.values()):
        raise FloatingPointError(f"bump bound ratio diverged: {out}")
    return out


def young_gap(a: float, b: float, c: float) -> float:
    """(1-b) b^{b/(1-b)} a^{1/(1-b)} - (a c^b - c); nonnegative for a > 0, 0 < b < 1, c >= 0."""
    if not (a > 0 and 0 < b < 1 and c >= 0):
        raise ValueError("young_gap needs a > 0, 0 < b < 1, c >= 0")
    bound = (1.0 - b) * b ** (b / (1.0 - b)) * a ** (1.0 / (1.0 - b))
    gap = bound - (a * c**b - c)
    if gap < -1e-12 * max(1.0, abs(bound)):
        raise ArithmeticError(f"Young-type inequality violated: gap={gap}")
    return gap
