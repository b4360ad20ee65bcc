import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dampwave import certify
from dampwave.certify import (Certificate, StrideError, check_chain, choose_R, empirical_R0,
                              eval_D, eval_I_and_K, eval_J, tau0)
from dampwave.solver import ProblemSpec, SolutionTrace, run
from dampwave.testfn import ScaledTestFunction
from dampwave.theory import AdmissibilityError, DampingSpec, Gauge, kappa

BUMP_1D_INTEGRAL = 0.8879876323361588756


@pytest.fixture(scope="module")
def blowup_traces():
    """1D blow-up traces (n=1, p=2, α=β=0, ε=1) at dx and dx/2, every step stored."""
    out = {}
    for dx in (0.1, 0.05):
        out[dx] = run(ProblemSpec(n=1, p=2.0, dx=dx, t_max=20.0, snapshot_stride=1))
    return out


def _manufactured_trace(n, tau, dt=None, dr=0.004, L=4.0):
    dt = dt or tau / 4000
    t = np.arange(0.0, tau + 0.5 * dt, dt)
    r = np.arange(0.0, L + 0.5 * dr, dr)
    u = np.cos(np.outer(t, np.ones_like(r))) * np.exp(-r**2)
    ut = -np.sin(np.outer(t, np.ones_like(r))) * np.exp(-r**2)
    empty = np.array([])
    return SolutionTrace(n, r, t, u, ut, empty, {})


def _oracle(n, tau, R, damping, p, nodes=400):
    """Tensor Gauss-Legendre quadrature of the four space-time integrands."""
    g = Gauge(damping.beta)
    psi = ScaledTestFunction(tau, R, n)
    x, wx = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * R * (x + 1)
    wr = 0.5 * R * wx * 2 * math.pi ** (n / 2) / math.gamma(n / 2) * r ** (n - 1)
    f0, lap = psi.space_factors(r)
    br = (1 + r * r) ** (-damping.alpha / 2)
    out = []
    for k, lo in ((0, 0.0), (1, tau / 2), (2, 0.0), (3, tau / 2)):
        t = lo + 0.5 * (tau - lo) * (x + 1)
        wt = 0.5 * (tau - lo) * wx
        e0, e1, e2 = psi.time_factors(t)
        gt, gp = np.asarray(g(t)), np.asarray(g.derivative(t))
        u = np.outer(np.cos(t), np.exp(-r * r))
        integrand = [np.outer(gt * e0, f0) * np.abs(u) ** p, np.outer(gt * e2, f0) * u,
                     -np.outer(gt * e0, lap) * u, np.outer((gp - 1) * e1, br * f0) * u][k]
        out.append(float(wt @ integrand @ wr))
    return out


def test_oracle_quadrature_is_converged():
    d = DampingSpec(0.0, 0.5)
    a, b = _oracle(2, 3.0, 2.0, d, 2.0, 300), _oracle(2, 3.0, 2.0, d, 2.0, 400)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-13)


@pytest.mark.parametrize("n,damping", [(1, DampingSpec(0.5, 0.0)), (2, DampingSpec(0.0, 0.5)),
                                       (3, DampingSpec(0.0, -0.5))])
def test_manufactured_functionals_match_quadrature_oracle(n, damping):
    tau, R, p = 3.0, 2.0, 2.0
    cert = eval_I_and_K(_manufactured_trace(n, tau), tau, R, damping, p, epsilon=1.0)
    for got, want in zip((cert.I, cert.K1, cert.K2, cert.K3), _oracle(n, tau, R, damping, p)):
        assert got == pytest.approx(want, rel=1e-4, abs=1e-10)


def test_zero_trace_gives_zero_functionals():
    tr = _manufactured_trace(2, 2.0, dr=0.05)
    tr.u[:] = 0.0
    tr.ut[:] = 0.0
    c = eval_I_and_K(tr, 2.0, 1.5, DampingSpec(0.5, 0.0), 2.0, 1.0)
    assert c.I == c.K1 == c.K2 == c.K3 == 0.0
    assert c.J == 0.0
    rep = check_chain(c, 1.0)
    assert not rep.applicable


def test_K3_with_beta_zero_has_minus_one_factor():
    # g ≡ 1, g' ≡ 0: K3 = -∬ <x>^{-α} u ∂_tψ
    tau, R = 2.0, 1.5
    tr = _manufactured_trace(1, tau, dr=0.01)
    damping = DampingSpec(0.5, 0.0)
    c = eval_I_and_K(tr, tau, R, damping, 2.0, 1.0)
    psi = ScaledTestFunction(tau, R, 1)
    _, e1, _ = psi.time_factors(tr.times)
    f0, _ = psi.space_factors(tr.r)
    w = certify._trapezoid_weights(tr.r, 1)
    br = (1 + tr.r**2) ** -0.25
    direct = -np.trapezoid(e1 * (tr.u @ (w * br * f0)), tr.times)
    assert c.K3 == pytest.approx(direct, rel=1e-12)
    assert c.K3 != 0.0


def test_stride_guard():
    tr = _manufactured_trace(1, 2.0, dt=2.0 / 40, dr=0.05)
    with pytest.raises(StrideError):
        eval_I_and_K(tr, 2.0, 1.0, DampingSpec(), 2.0, 1.0)


def test_tau_beyond_trace_rejected():
    tr = _manufactured_trace(1, 2.0, dr=0.05)
    with pytest.raises(ValueError):
        eval_I_and_K(tr, 5.0, 1.0, DampingSpec(), 2.0, 1.0)


def test_certificates_need_theorem_mode():
    tr = _manufactured_trace(1, 2.0, dr=0.05)
    with pytest.raises(AdmissibilityError):
        eval_I_and_K(tr, 2.0, 1.0, DampingSpec(0.3, 0.3, exploratory=True), 2.0, 1.0)


def test_eval_J_zero_data():
    r = np.linspace(0, 3, 301)
    assert eval_J(r, 2, 0 * r, 0 * r, 2.0, 1.0, DampingSpec()) == 0.0


def test_eval_J_saturates(blowup_traces):
    trace, _ = blowup_traces[0.05]
    damping = DampingSpec()
    Js = [eval_J(trace.r, 1, trace.u[0], trace.ut[0], R, 1.0, damping) for R in (10, 20, 40)]
    limit = math.exp(-1) * BUMP_1D_INTEGRAL
    gaps = [abs(J - limit) for J in Js]
    assert Js[0] < Js[1] < Js[2] < limit
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3 * limit


def test_empirical_R0_and_tau0(blowup_traces):
    trace, _ = blowup_traces[0.05]
    R_grid = np.geomspace(0.2, 40.0, 120)
    R0, Js = empirical_R0(trace.r, 1, trace.u[0], trace.ut[0], 1.0, DampingSpec(), R_grid)
    assert 0.2 < R0 < 40.0
    assert np.all(Js[R_grid >= R0] >= 0.5 * Js.max())
    assert np.all(np.diff(Js) > 0)  # J_R increases with R for this data
    t0 = tau0(R0, 0.0, 0.0)
    assert t0 == max(1.0, R0**2)
    assert choose_R(t0, 1, 2.0, 0.0, 0.0, R0=R0) == pytest.approx(max(R0, 1.0))


def test_empirical_R0_rejects_negative_data():
    r = np.linspace(0, 3, 301)
    with pytest.raises(ValueError):
        empirical_R0(r, 1, -np.exp(-r**2), 0 * r, 1.0, DampingSpec(), [1.0, 2.0])


def test_choose_R_branches():
    assert choose_R(16.0, 1, 2.0, 0.0, 0.0) == pytest.approx(4.0)
    # n = 1, α = 0.9, p = 1.05: αq = 18.9 > n
    assert choose_R(16.0, 1, 1.05, 0.9, 0.0) == 16.0
    tau = tau0(3.0, 0.5, 0.0)
    assert choose_R(tau, 2, 2.0, 0.5, 0.0) == pytest.approx(3.0)


@settings(max_examples=200, deadline=None)
@given(R0=st.floats(0.1, 50.0), alpha=st.floats(0.0, 0.9), beta=st.floats(-0.9, 0.9),
       stretch=st.floats(1.0, 100.0), p=st.floats(1.05, 3.0), alpha_zero=st.booleans())
def test_choose_R_exceeds_R0_beyond_tau0(R0, alpha, beta, stretch, p, alpha_zero):
    alpha, beta = (0.0, beta) if alpha_zero else (alpha, 0.0)
    tau = tau0(R0, alpha, beta) * stretch
    R = choose_R(tau, 2, p, alpha, beta, R0=R0)  # raises if R < R0
    assert R >= R0 * (1 - 1e-12) or tau0(R0, alpha, beta) == 1.0 and R >= 1.0


def test_D_grows_with_R():
    vals = [eval_D(5.0, R, 2, 1.6, DampingSpec(0.5, 0.0)) for R in (10, 100, 1e3, 1e4)]
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] > 10 * vals[0]


def test_D_summands_under_coupling():
    # α = β = 0, p = 2, n = 1, R = τ^{1/2}: the Laplacian and damping summands
    # balance exactly (both τ^{1/4}); the ∂_t² summand is lower order by 1/τ.
    for tau in (4.0, 100.0, 1e4):
        R = choose_R(tau, 1, 2.0, 0.0, 0.0)
        t1 = tau**-1 * R**0.5
        t2 = tau * R ** (-2 + 0.5)
        t3 = R**0.5
        assert t2 == pytest.approx(t3)
        assert t1 == pytest.approx(t3 / tau)
        assert eval_D(tau, R, 1, 2.0, DampingSpec()) == pytest.approx(tau**-0.5 * (t1 + t2 + t3))


@pytest.mark.parametrize("n,p,alpha,beta", [(1, 2.0, 0.0, 0.0), (1, 2.0, 0.0, 0.5),
                                            (2, 1.6, 0.5, 0.0), (3, 1.5, 0.0, -0.5)])
def test_log_D_q_slope_is_minus_kappa(n, p, alpha, beta):
    damping = DampingSpec(alpha, beta)
    q = p / (p - 1)
    taus = np.array([1e8, 1e10])
    logs = [q * math.log(eval_D(t, choose_R(t, n, p, alpha, beta), n, p, damping)) for t in taus]
    slope = (logs[1] - logs[0]) / math.log(taus[1] / taus[0])
    assert slope == pytest.approx(-kappa(n, p, damping), abs=1e-3)


def test_literal_D_differs():
    d = DampingSpec()
    assert eval_D(9.0, 3.0, 1, 2.0, d, literal=True) != eval_D(9.0, 3.0, 1, 2.0, d)
    assert eval_D(9.0, 3.0, 2, 2.0, d, literal=True) == pytest.approx(eval_D(9.0, 3.0, 2, 2.0, d))


def _certs(trace, T, dx):
    out = []
    for frac in (0.25, 0.5, 0.75):
        tau = frac * T
        R = choose_R(tau, 1, 2.0, 0.0, 0.0)
        out.append(eval_I_and_K(trace, tau, R, DampingSpec(), 2.0, 1.0))
    return out


def test_weak_identity_residual_converges(blowup_traces):
    res = {}
    for dx, (trace, rep) in blowup_traces.items():
        certs = _certs(trace, rep.T_est, dx)
        for c in certs:
            assert c.I >= 0.0
            assert c.J > 0.0
        res[dx] = np.array([c.identity_residual for c in certs])
    assert np.all(res[0.05] < 1e-3)
    assert np.all(res[0.1] / res[0.05] >= 3.0)


def test_chain_constant_bounded_and_stable(blowup_traces):
    spreads = []
    for dx, (trace, rep) in blowup_traces.items():
        chain = check_chain(_certs(trace, rep.T_est, dx), 1.0, max_spread=2.5)
        assert chain.applicable and chain.bounded
        assert all(np.isfinite(chain.C1)) and all(c > 0 for c in chain.C1)
        assert all(cf > 0 for cf in chain.C_feasible)
        spreads.append(chain.spread)
    # the spread is a property of the solution, not of the grid
    assert spreads[0] == pytest.approx(spreads[1], rel=0.02)


def test_write_certificates(tmp_path, blowup_traces):
    trace, rep = blowup_traces[0.1]
    path = tmp_path / "certificates.csv"
    certify.write_certificates(path, _certs(trace, rep.T_est, 0.1))
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,R,I,J,K1,K2,K3,residual,D,C_empirical"
    assert len(lines) == 4
    assert float(lines[1].split(",")[0]) == pytest.approx(0.25 * rep.T_est)


def test_certificate_row_full_precision():
    c = Certificate(1 / 3, 1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1e-7, 0.7, 1.0, 2.0, 1.0)
    assert float(c.row()[0]) == 1 / 3
