import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fpprop.coefficients import (TOL_QUAD, CoefficientSet, Constant, FpeCoefficients, Function,
                                 Poly, Table, TensorSchedule, alphas, from_fpe, integrate_scalar,
                                 to_fpe, z_map)
from fpprop.errors import CoefficientError, DomainError
from fpprop.randomized import random_coefficients, random_fpe, random_scalar

from conftest import simpson


def test_integrate_zero():
    assert integrate_scalar(Constant(0.0), 1.0) == 0.0


def test_integrate_constant():
    assert integrate_scalar(Constant(2.5), 3.0) == pytest.approx(7.5, rel=1e-15)


def test_integrate_identity_poly():
    f = Poly([0.0, 1.0])
    expected = simpson(f, 0.0, 2.0)
    assert expected == pytest.approx(2.0, rel=1e-14)
    assert integrate_scalar(f, 2.0) == pytest.approx(2.0, rel=1e-15)


def test_integrate_function_schedule_uses_quadrature():
    f = Function(np.sin, 3.0)
    assert integrate_scalar(f, 2.0) == pytest.approx(1 - np.cos(2.0), rel=1e-12)
    # vectorized integral comes from the Hermite cache
    assert f.integral(np.array([0.5, 2.9])) == pytest.approx(1 - np.cos([0.5, 2.9]), rel=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_integrals_match_simpson(seed):
    rng = np.random.default_rng(seed)
    f = random_scalar(rng, 2.0)
    t = float(rng.uniform(0.0, 2.0))
    brute = simpson(f, 0.0, t, n=200, breaks=f.breakpoints)
    got = integrate_scalar(f, t)
    assert abs(got - brute) <= 10 * TOL_QUAD * max(abs(brute), 1e-3)


def test_table_schedule_checks():
    with pytest.raises(CoefficientError):
        Table([0.1, 1.0], [1.0, 2.0])
    with pytest.raises(CoefficientError):
        Table([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    f = Table([0.0, 1.0, 2.0], [1.0, 3.0, 0.0])
    assert f(np.array([0.0, 1.0, 2.0])) == pytest.approx([1.0, 3.0, 0.0])
    with pytest.raises(DomainError):
        f(2.5)
    with pytest.raises(DomainError):
        integrate_scalar(f, -0.1)


@pytest.mark.parametrize("sched", [
    Constant(1.3), Poly([1.0, -2.0, 0.5]), Table([0.0, 0.4, 1.5, 3.0], [1.0, -1.0, 2.0, 0.0]),
])
def test_shifted_schedule(sched):
    s = np.linspace(0.0, 1.4, 9)
    g = sched.shifted(0.7)
    assert g(s) == pytest.approx(sched(s + 0.7), abs=1e-14)
    assert g.integral(s) == pytest.approx(sched.integral(s + 0.7) - sched.integral(0.7), abs=1e-13)


def test_alphas_zero_coefficients():
    ic = alphas(CoefficientSet.zeros(2), 1.7)
    assert ic.alpha1 == 0 and ic.alpha3 == 0
    assert not np.any(ic.alpha2) and not np.any(ic.shift) and not np.any(ic.tau)


def test_alphas_at_zero_are_exactly_zero(rng):
    c = random_coefficients(rng, 3)
    ic = alphas(c, 0.0)
    for v in (ic.alpha1, ic.alpha2, ic.alpha3, ic.shift, ic.tau):
        assert np.all(np.asarray(v) == 0.0)


def _nested_oracle(c, t):
    """tau and shift by nested scipy quad; independent of the alphas path."""
    n = c.dim

    def a3int(s):
        return integrate.quad(lambda u: float(c.a3(u)), 0.0, s, epsabs=1e-14, epsrel=1e-13)[0]

    pts = list(c.breakpoints[(c.breakpoints > 0) & (c.breakpoints < t)]) or None
    shift = [integrate.quad(lambda s, i=i: float(c.a2(s)[i]) * np.exp(a3int(s)), 0, t,
                            points=pts, epsrel=1e-12)[0] for i in range(n)]
    tau = np.array([[integrate.quad(lambda s, i=i, j=j: c.a4(s)[i, j] * np.exp(2 * a3int(s)),
                                    0, t, points=pts, epsrel=1e-12)[0] for j in range(n)]
                    for i in range(n)])
    return np.array(shift), tau


def test_alphas_ou_tau():
    c = CoefficientSet(1, 0.0, [0.0], 1.0, 1.0)
    for t in (0.3, 1.0, 2.0):
        ic = alphas(c, t)
        assert ic.tau[0, 0] == pytest.approx((np.exp(2 * t) - 1) / 2, rel=1e-13)
        assert _nested_oracle(c, t)[1][0, 0] == pytest.approx((np.exp(2 * t) - 1) / 2, rel=1e-11)


def test_alphas_shift():
    c = CoefficientSet(1, 0.0, [1.0], 1.0, 0.0)
    for t in (0.5, 1.5):
        assert alphas(c, t).shift[0] == pytest.approx(np.exp(t) - 1, rel=1e-13)
        assert _nested_oracle(c, t)[0][0] == pytest.approx(np.exp(t) - 1, rel=1e-11)


def test_alphas_against_nested_quadrature(rng):
    for n in (1, 2):
        c = random_coefficients(rng, n)
        t = 1.3
        ic = alphas(c, t)
        shift, tau = _nested_oracle(c, t)
        assert ic.shift == pytest.approx(shift, rel=1e-9, abs=1e-11)
        assert ic.tau == pytest.approx(tau, rel=1e-9, abs=1e-11)


def test_alphas_function_schedules():
    c = CoefficientSet(1, Function(np.cos, 2.0), [Function(np.sin, 2.0)], Function(lambda s: 0.5 * s, 2.0),
                       Function(lambda s: 1 + s * s, 2.0))
    ic = alphas(c, 1.5)
    shift, tau = _nested_oracle(c, 1.5)
    assert ic.alpha1 == pytest.approx(np.sin(1.5), rel=1e-12)
    assert ic.alpha3 == pytest.approx(0.25 * 1.5 ** 2, rel=1e-12)
    assert ic.shift == pytest.approx(shift, rel=1e-9)
    assert ic.tau == pytest.approx(tau, rel=1e-9)


def test_alpha_derivatives_match_coefficients(rng):
    c = random_coefficients(rng, 2, smooth=True)
    h = 1e-4
    for t in (0.4, 1.1):
        d1 = (alphas(c, t + h).alpha1 - alphas(c, t - h).alpha1) / (2 * h)
        d3 = (alphas(c, t + h).alpha3 - alphas(c, t - h).alpha3) / (2 * h)
        assert d1 == pytest.approx(float(c.a1(t)), abs=1e-6)
        assert d3 == pytest.approx(float(c.a3(t)), abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tau_symmetric_psd_and_monotone(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    c = random_coefficients(rng, n)
    t1, t2 = np.sort(rng.uniform(0, c.horizon, 2))
    tau1, tau2 = alphas(c, t1).tau, alphas(c, t2).tau
    eps = 1e-12
    assert np.array_equal(tau2, tau2.T)
    norm = np.linalg.norm(tau2, 2)
    assert np.linalg.eigvalsh(tau2)[0] >= -eps * norm
    assert np.linalg.eigvalsh(tau2 - tau1)[0] >= -eps * norm


def test_z_map_examples():
    zero = CoefficientSet.zeros(2)
    x = np.array([0.3, -1.2])
    assert z_map(zero, 1.0, x) == pytest.approx(x)
    c = CoefficientSet(1, 0.0, [0.0], 1.0, 0.0)
    assert z_map(c, 1.0, [2.0])[0] == pytest.approx(2 * np.e, rel=1e-14)
    c = CoefficientSet(1, 0.0, [3.0], 0.0, 0.0)
    assert z_map(c, 2.0, [0.0])[0] == pytest.approx(6.0, rel=1e-14)


def test_from_fpe_zero():
    c = from_fpe(FpeCoefficients(2, [0.0, 0.0], 0.0, [0.0, 0.0, 0.0]))
    assert c.generator_at(0.7)[0] == 0.0
    ts = np.linspace(0, 1, 5)
    assert not np.any(c.a2(ts)) and not np.any(c.a3(ts)) and not np.any(c.a4(ts))


def test_from_fpe_ou():
    c = from_fpe(FpeCoefficients(1, [0.0], -1.0, 1.0))
    a1, a2, a3, a4 = c.generator_at(0.3)
    assert (a1, a3, a2[0], a4[0, 0]) == (1.0, 1.0, 0.0, 1.0)


def test_from_fpe_drift_slope_in_2d():
    c = from_fpe(FpeCoefficients(2, [0.0, 0.0], 0.7, [1.0, 0.0, 1.0]))
    assert float(c.a1(0.5)) == pytest.approx(-1.4)


def test_from_fpe_is_linear_in_b1_and_D(rng):
    f = random_fpe(rng, 2)
    g = random_fpe(rng, 2)
    ts = np.linspace(0, 2, 11)
    summed = FpeCoefficients(
        2,
        [Table(ts, f.b1(ts)[:, i] + g.b1(ts)[:, i]) for i in range(2)],
        f.b2,
        TensorSchedule(2, [Table(ts, f.D.upper_values(ts)[:, k] + g.D.upper_values(ts)[:, k])
                           for k in range(3)]),
    )
    cf, cg, cs = from_fpe(f), from_fpe(g), from_fpe(summed)
    assert cs.a2(ts) == pytest.approx(cf.a2(ts) + cg.a2(ts), abs=1e-12)
    assert cs.a4(ts) == pytest.approx(cf.a4(ts) + cg.a4(ts), abs=1e-12)


def test_to_fpe_roundtrip_and_rejection(rng):
    f = random_fpe(rng, 2)
    back = to_fpe(from_fpe(f))
    ts = np.linspace(0, 2, 17)
    assert back.b1(ts) == pytest.approx(f.b1(ts), abs=1e-14)
    assert back.b2(ts) == pytest.approx(f.b2(ts), abs=1e-14)
    with pytest.raises(CoefficientError):
        to_fpe(CoefficientSet(1, 0.3, [0.0], 1.0, 1.0))


def test_non_psd_tensor_rejected():
    with pytest.raises(CoefficientError):
        CoefficientSet(2, 0.0, [0.0, 0.0], 0.0, [1.0, 2.0, 1.0])
    with pytest.raises(CoefficientError):
        CoefficientSet(1, 0.0, [0.0], 0.0, Table([0.0, 1.0, 2.0], [1.0, 1.0, -0.5]))


def test_dimension_mismatch_rejected():
    with pytest.raises(CoefficientError):
        CoefficientSet(2, 0.0, [0.0], 0.0, [1.0, 0.0, 1.0])


def test_horizon_beyond_table_domain():
    with pytest.raises(DomainError):
        CoefficientSet(1, Table([0.0, 1.0], [0.0, 1.0]), [0.0], 0.0, 1.0, horizon=2.0)
