import math
from fractions import Fraction

import pytest

from trieclt import ProbModel, SpanUndetermined, entropy, rho, span, symmetric


def test_validation():
    with pytest.raises(ValueError):
        ProbModel(probs=(1.0,))
    with pytest.raises(ValueError):
        ProbModel(probs=(0.0, 1.0))
    with pytest.raises(ValueError):
        ProbModel(probs=(0.3, 0.6))
    with pytest.raises(ValueError):
        ProbModel(probs=(0.5, 0.5), rationals=(Fraction(1, 3), Fraction(2, 3)))


def test_pmin_pmax():
    m = ProbModel(probs=(0.3, 0.7))
    assert m.pmin == 0.3 and m.pmax == 0.7
    assert 0.0 < m.pmin <= m.pmax < 1.0


def test_entropy_uniform_binary():
    assert entropy(symmetric(2)) == pytest.approx(math.log(2), abs=1e-15)


def test_entropy_asymmetric():
    m = ProbModel(probs=(0.3, 0.7))
    assert entropy(m) == pytest.approx(0.6108643020548935, abs=1e-12)


def test_entropy_symmetric_r_ary():
    for r in (2, 3, 4, 7):
        assert entropy(symmetric(r)) == pytest.approx(math.log(r), abs=1e-12)


def test_rho_basics():
    m = symmetric(2)
    assert rho(m, 2) == pytest.approx(0.5)
    for probs in ((0.3, 0.7), (0.2, 0.3, 0.5)):
        assert rho(ProbModel(probs=probs), 1) == pytest.approx(1.0, abs=1e-12)


def test_rho_derivative_is_minus_entropy():
    m = ProbModel(probs=(0.3, 0.7))
    h = 1e-5
    d = (rho(m, 1 + h) - rho(m, 1 - h)) / (2 * h)
    assert d == pytest.approx(-entropy(m), abs=1e-6)


def test_rho_complex():
    m = symmetric(2)
    z = rho(m, complex(2, 1))
    assert z == pytest.approx(2 * 0.5 ** complex(2, 1))


def test_span_symmetric_binary():
    assert span(symmetric(2)) == pytest.approx(math.log(2), abs=1e-15)


def test_span_quarter_is_zero():
    m = ProbModel(probs=(0.25, 0.75),
                  rationals=(Fraction(1, 4), Fraction(3, 4)))
    assert span(m) == 0.0


def test_span_half_quarter_quarter():
    m = ProbModel(probs=(0.5, 0.25, 0.25),
                  rationals=(Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)))
    assert span(m) == pytest.approx(math.log(2), abs=1e-15)


def test_span_sym4_is_log4():
    assert span(symmetric(4)) == pytest.approx(math.log(4), abs=1e-14)


def test_span_p37_zero(p37):
    assert span(p37) == 0.0


def test_span_declared_override():
    m = ProbModel(probs=(0.3, 0.7), declared_span=0.0)
    assert span(m) == 0.0


def test_span_decimals_raise():
    with pytest.raises(SpanUndetermined):
        span(ProbModel(probs=(0.3, 0.7)))


def test_span_dyadic_decimals_ok():
    assert span(ProbModel(probs=(0.5, 0.25, 0.25))) == pytest.approx(math.log(2))


def test_prefix_prob():
    m = ProbModel(probs=(0.3, 0.7))
    assert m.prefix_prob(()) == 1.0
    assert m.prefix_prob((0, 1, 1)) == pytest.approx(0.3 * 0.7 * 0.7)


def test_roundtrip_dict(p37):
    d = p37.to_dict()
    again = ProbModel.from_dict(d)
    assert again.probs == p37.probs
    assert again.rationals == p37.rationals
