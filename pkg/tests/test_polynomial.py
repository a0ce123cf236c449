import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridlab.errors import DomainError
from hybridlab.polynomial import PolynomialObservable

Q, P = sympy.symbols("q p")


def sympy_terms(text):
    """Independent grammar oracle: sympy parses the same text with ^ as power."""
    expr = sympy.sympify(text.replace("^", "**"), locals={"q": Q, "p": P})
    poly = sympy.Poly(sympy.expand(expr), Q, P)
    return {(int(a), int(b)): float(c) for (a, b), c in poly.terms() if c != 0}


def as_dict(poly):
    return {(a, b): c for c, a, b in poly.terms}


@pytest.mark.parametrize("text", [
    "0.5*p^2 + 0.5*q^2",
    "0.5*q^2 + p",
    "q",
    "-q + 3",
    "2*q^3*p - 1.5e-1*p^2 + 4",
    "  1*q*q*p ",
    "q^2*p^0",
])
def test_parse_matches_sympy(text):
    assert as_dict(PolynomialObservable.parse(text)) == pytest.approx(sympy_terms(text))


def test_two_term_potential():
    V = PolynomialObservable.parse("0.5*q^2 + p")
    assert len(V.terms) == 2
    assert V(2.0, 3.0) == pytest.approx(5.0)


@pytest.mark.parametrize("bad", ["", "q^", "2*", "q + + p", "x", "q^-1", "2 q", "q^1.5", "*q"])
def test_malformed_rejected(bad):
    with pytest.raises(DomainError):
        PolynomialObservable.parse(bad)


def test_error_reports_column():
    with pytest.raises(DomainError, match="column 5"):
        PolynomialObservable.parse("q + x")


def test_zero_and_degree():
    assert PolynomialObservable.parse("q - q").is_zero
    assert PolynomialObservable.parse("q^2*p + 1").degree == 3
    assert str(PolynomialObservable()) == "0"


def test_to_operator_is_diagonal(ref_grid):
    op = PolynomialObservable.parse("q^2 + p").to_operator(ref_grid)
    assert not op.has_dyads
    q, p = ref_grid.mesh()
    assert np.allclose(op.diag, q**2 + p)


terms = st.lists(
    st.tuples(st.floats(-5, 5, allow_nan=False).filter(lambda c: abs(c) > 1e-3),
              st.integers(0, 3), st.integers(0, 3)),
    min_size=1, max_size=5)


@settings(max_examples=60, deadline=None)
@given(terms)
def test_text_round_trip(ts):
    poly = PolynomialObservable(tuple(ts))
    if poly.is_zero:
        return
    back = PolynomialObservable.parse(str(poly))
    assert back == poly


@settings(max_examples=60, deadline=None)
@given(terms, st.floats(-2, 2), st.floats(-2, 2))
def test_derivatives_match_sympy(ts, q, p):
    poly = PolynomialObservable(tuple(ts))
    expr = sum(c * Q**a * P**b for c, a, b in poly.terms) if poly.terms else sympy.Integer(0)
    dq = float(sympy.diff(expr, Q).subs({Q: q, P: p}))
    dp = float(sympy.diff(expr, P).subs({Q: q, P: p}))
    assert poly.dq()(q, p) == pytest.approx(dq, rel=1e-9, abs=1e-9)
    assert poly.dp()(q, p) == pytest.approx(dp, rel=1e-9, abs=1e-9)
