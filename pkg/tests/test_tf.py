from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eadrc.errors import (
    AlgebraicLoop,
    DomainMismatch,
    HasDelay,
    Indeterminate,
    InvalidParameters,
    NyquistExceeded,
    ZeroNumerator,
)
from eadrc.tf import (
    Continuous,
    Discrete,
    FactoredTF,
    Polynomial,
    RationalTF,
    dc_gain,
    freq_eval,
    poly_mul,
    response,
    simplify,
    tf_feedback,
    tf_inverse,
    tf_scale,
    tf_series,
    tf_sum,
)


def _tf(num, den, domain=None) -> RationalTF:
    return RationalTF.from_coeffs(num, den, domain)


def test_polynomial_trims_trailing_zeros():
    p = Polynomial((1.0, 2.0, 0.0, 0.0))
    assert p.coeffs == (1.0, 2.0)
    assert p.degree == 1
    assert Polynomial((0.0, 0.0)).is_zero
    assert Polynomial.from_descending((1.0, 3.0)).coeffs == (3.0, 1.0)


def test_poly_mul_examples():
    assert poly_mul(Polynomial((1.0,)), Polynomial((0.0, 1.0))).coeffs == (0.0, 1.0)
    assert poly_mul(Polynomial((1.0, 1.0)), Polynomial((1.0, 1.0))).coeffs == (1.0, 2.0, 1.0)
    sq = poly_mul(Polynomial((-0.9, 1.0)), Polynomial((-0.9, 1.0)))
    assert sq.coeffs == pytest.approx((0.81, -1.8, 1.0))
    assert poly_mul(Polynomial((0.0,)), Polynomial((1.0, 2.0))).is_zero


_poly = st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=5).filter(
    lambda c: abs(c[-1]) >= 1e-3
)


@settings(max_examples=100, deadline=None)
@given(a=_poly, b=_poly, c=_poly)
def test_poly_mul_commutative_and_associative(a: list[float], b: list[float], c: list[float]):
    pa, pb, pc = Polynomial(tuple(a)), Polynomial(tuple(b)), Polynomial(tuple(c))
    # rounding scales with the product of absolute coefficients, not with the result
    ab_bound = np.convolve(np.abs(a), np.abs(b))
    abc_bound = np.convolve(ab_bound, np.abs(c))
    atol = 1e-12 * max(1.0, float(np.max(ab_bound)))
    np.testing.assert_allclose(poly_mul(pa, pb).coeffs, poly_mul(pb, pa).coeffs, rtol=0, atol=atol)
    atol = 1e-12 * max(1.0, float(np.max(abc_bound)))
    left = poly_mul(poly_mul(pa, pb), pc).coeffs
    right = poly_mul(pa, poly_mul(pb, pc)).coeffs
    np.testing.assert_allclose(left, right, rtol=0, atol=atol)
    assert poly_mul(pa, pb).degree == pa.degree + pb.degree


def test_polynomial_rejects_bad_input():
    with pytest.raises(InvalidParameters):
        Polynomial(())
    with pytest.raises(InvalidParameters):
        Polynomial((1.0, math.nan))
    with pytest.raises(InvalidParameters):
        _tf((1.0,), (0.0,))


def test_domain_validation():
    with pytest.raises(InvalidParameters):
        Discrete(0.0)
    with pytest.raises(InvalidParameters):
        Continuous(-0.1)


def test_series_domain_mismatch():
    c = _tf((1.0,), (1.0, 1.0))
    d1 = _tf((1.0,), (-0.5, 1.0), Discrete(1e-3))
    d2 = _tf((1.0,), (-0.5, 1.0), Discrete(2e-3))
    with pytest.raises(DomainMismatch):
        tf_series(c, d1)
    with pytest.raises(DomainMismatch):
        tf_series(d1, d2)
    assert tf_series(d1, d1).domain == Discrete(1e-3)


def test_series_adds_delays():
    g = _tf((1.0,), (1.0, 1.0), Continuous(0.2))
    h = _tf((2.0,), (1.0,), Continuous(0.1))
    assert tf_series(g, h).delay == pytest.approx(0.3)


def test_feedback_integrator():
    closed = tf_feedback(_tf((1.0,), (0.0, 1.0)), RationalTF.gain(1.0))
    assert isinstance(closed, RationalTF)
    assert closed.num.coeffs == (1.0,)
    assert closed.den.coeffs == (1.0, 1.0)


def test_feedback_algebraic_loop():
    with pytest.raises(AlgebraicLoop):
        tf_feedback(RationalTF.gain(1.0), RationalTF.gain(-1.0))


def test_feedback_with_delay_stays_factored():
    g = _tf((1.0,), (1.0, 1.0), Continuous(0.2))
    closed = tf_feedback(g, RationalTF.gain(1.0))
    assert isinstance(closed, FactoredTF)
    assert dc_gain(closed) == pytest.approx(0.5)
    w = np.array([0.5, 2.0])
    gv = response(g, w)
    np.testing.assert_allclose(response(closed, w), gv / (1.0 + gv), rtol=1e-12)


def test_inverse_and_sum_errors():
    with pytest.raises(ZeroNumerator):
        tf_inverse(_tf((0.0,), (1.0, 1.0)))
    with pytest.raises(HasDelay):
        tf_inverse(_tf((1.0,), (1.0, 1.0), Continuous(0.2)))
    with pytest.raises(HasDelay):
        tf_sum(_tf((1.0,), (1.0, 1.0), Continuous(0.2)), _tf((1.0,), (1.0, 1.0)))
    inv = tf_inverse(_tf((2.0,), (1.0, 1.0)))
    assert inv.num.coeffs == (1.0, 1.0)
    assert inv.den.coeffs == (2.0,)


def test_freq_eval_first_order_lag():
    fr = freq_eval(_tf((1.0,), (1.0, 1.0)), [1.0])
    assert fr.magnitude[0] == pytest.approx(1.0 / math.sqrt(2.0))
    assert fr.magnitude_db()[0] == pytest.approx(-10.0 * math.log10(2.0))
    assert fr.phase_deg()[0] == pytest.approx(-45.0)


def test_freq_eval_delay_phase():
    fr = freq_eval(_tf((1.0,), (1.0, 1.0), Continuous(0.2)), [1.0])
    assert fr.magnitude[0] == pytest.approx(1.0 / math.sqrt(2.0))
    assert fr.phase_deg()[0] == pytest.approx(-45.0 - math.degrees(0.2))


def test_freq_eval_grid_checks():
    g = _tf((1.0,), (1.0, 1.0))
    with pytest.raises(InvalidParameters):
        freq_eval(g, [2.0, 1.0])
    with pytest.raises(InvalidParameters):
        freq_eval(g, [1.0, math.inf])
    ts = 1e-3
    d = _tf((0.1,), (-0.9, 1.0), Discrete(ts))
    freq_eval(d, [1.0, math.pi / ts])
    with pytest.raises(NyquistExceeded):
        freq_eval(d, [1.0, 1.01 * math.pi / ts])


def test_freq_eval_pole_on_axis_is_infinite():
    fr = freq_eval(_tf((1.0,), (0.0, 1.0)), [0.0, 1.0])
    assert math.isinf(fr.magnitude[0])
    assert fr.magnitude[1] == pytest.approx(1.0)


def test_dc_gain_cases():
    assert dc_gain(_tf((2.0,), (4.0, 1.0))) == pytest.approx(0.5)
    assert dc_gain(_tf((1.0,), (0.0, 1.0))) == math.inf
    with pytest.raises(Indeterminate):
        dc_gain(_tf((0.0, 1.0), (0.0, 1.0)))
    assert dc_gain(_tf((0.1,), (-0.9, 1.0), Discrete(1e-3))) == pytest.approx(1.0)
    assert dc_gain(_tf((1.0,), (-1.0, 1.0), Discrete(1e-3))) == math.inf


def test_simplify_cancels_common_root():
    g = _tf((1.0, 1.0), (2.0, 3.0, 1.0))
    s = simplify(g)
    assert s.num.degree == 0
    assert s.den.coeffs == pytest.approx((2.0, 1.0))
    assert simplify(_tf((3.0, 1.0), (2.0, 3.0, 1.0))) == _tf((3.0, 1.0), (2.0, 3.0, 1.0))


def test_scale_keeps_denominator():
    g = tf_scale(_tf((1.0,), (1.0, 1.0)), -2.0)
    assert g.num.coeffs == (-2.0,)
    assert g.den.coeffs == (1.0, 1.0)


_coef = st.floats(min_value=0.1, max_value=10.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(a=_coef, b=_coef, c=_coef, k=_coef)
def test_feedback_matches_pointwise_formula(a: float, b: float, c: float, k: float):
    g = _tf((k,), (a, b, 1.0))
    h = _tf((c, 1.0), (1.0,))
    w = np.logspace(-2, 2, 40)
    gv, hv = response(g, w), response(h, w)
    closed = tf_feedback(g, h)
    np.testing.assert_allclose(response(closed, w), gv / (1.0 + gv * hv), rtol=1e-9)
