import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odekit import expr as ex
from odekit.errors import DomainError, ExprSyntaxError, MissingBindingError, UnknownSymbolError

TABLE = ex.SymbolTable(["S", "I", "R"], ["beta", "gamma", "N"])


def p(s, table=TABLE):
    return ex.parse(s, table)


# -- parse ---------------------------------------------------------------------

def test_parse_infection_rate_is_a_product_with_inverse_N():
    e = p("beta*S*I/N")
    assert isinstance(e, ex.Mul)
    assert ex.free_symbols(e) == {"beta", "S", "I", "N"}
    assert ex.canonical_equal(e, ex.mul(ex.Symbol("beta"), ex.Symbol("S"), ex.Symbol("I"),
                                        ex.pow_(ex.Symbol("N"), ex.MINUS_ONE)))


def test_parse_zero_literal():
    assert p("0") == ex.ZERO


def test_negated_power_matches_direct_arithmetic():
    table = ex.SymbolTable([], ["a", "b"])
    e = ex.parse("-(a+b)^2", table)
    rng = np.random.default_rng(0)
    for a, b in rng.normal(size=(20, 2)):
        assert math.isclose(ex.evaluate(e, {"a": a, "b": b}), -((a + b) ** 2), rel_tol=1e-12)


def test_precedence_and_associativity():
    table = ex.SymbolTable([], ["a", "b", "c"])
    vals = {"a": 2.0, "b": 3.0, "c": 0.5}
    cases = {
        "a+b*c": 2 + 3 * 0.5,
        "a-b-c": 2 - 3 - 0.5,
        "a/b/c": 2 / 3 / 0.5,
        "a^b^c": 2 ** (3 ** 0.5),
        "-a^2": -4.0,
        "a**b": 8.0,
        "(a+b)*c": 2.5,
        "-a*-b": 6.0,
    }
    for src, want in cases.items():
        assert math.isclose(ex.evaluate(ex.parse(src, table), vals), want, rel_tol=1e-14), src


def test_syntax_error_reports_position():
    with pytest.raises(ExprSyntaxError) as info:
        p("beta*S*")
    assert info.value.position is not None
    with pytest.raises(ExprSyntaxError):
        p("beta*(S")
    with pytest.raises(ExprSyntaxError):
        p("beta $ S")
    with pytest.raises(ExprSyntaxError):
        p("")


def test_unknown_symbol_and_function():
    with pytest.raises(UnknownSymbolError) as info:
        p("beta*X")
    assert info.value.name == "X"
    with pytest.raises(ExprSyntaxError):
        p("foo(S)")


def test_decimal_literals_are_exact():
    assert ex.canonical_equal(ex.parse("1.0/3.0"), ex.parse("1/3"))
    assert ex.canonical_equal(ex.parse("0.1+0.2"), ex.parse("0.3"))


def test_symbol_table_rules():
    with pytest.raises(ValueError):
        ex.SymbolTable(["S", "S"])
    with pytest.raises(ValueError):
        ex.SymbolTable(["t"])
    with pytest.raises(ValueError):
        ex.SymbolTable(["1x"])
    assert "t" in ex.SymbolTable(["S"])


# -- evaluate --------------------------------------------------------------------

def test_evaluate_infection_rate_by_hand():
    vals = {"beta": 3.6, "S": 505828.96, "I": 20.5, "N": 7781984.0}
    assert math.isclose(ex.evaluate(p("beta*S*I/N"), vals), 3.6 * 505828.96 * 20.5 / 7781984.0,
                        rel_tol=1e-15)


def test_evaluate_trivial():
    assert ex.evaluate(ex.parse("5")) == 5.0
    assert ex.evaluate(ex.parse("exp(0)")) == 1.0


def test_evaluate_domain_errors():
    with pytest.raises(DomainError):
        ex.evaluate(p("S/I"), {"S": 1.0, "I": 0.0})
    with pytest.raises(DomainError):
        ex.evaluate(p("log(S)"), {"S": 0.0})
    with pytest.raises(DomainError):
        ex.evaluate(p("log(S)"), {"S": -1.0})
    with pytest.raises(MissingBindingError):
        ex.evaluate(p("S*I"), {"S": 1.0})


# -- differentiate -------------------------------------------------------------

def test_derivative_of_infection_rate():
    d = ex.differentiate(p("beta*S*I/N"), "S")
    assert ex.canonical_equal(d, p("beta*I/N"))
    assert ex.is_zero(ex.differentiate(p("gamma"), "S"))


def test_derivative_of_exponential_against_finite_differences():
    table = ex.SymbolTable([], ["x"])
    e = ex.parse("exp(2*x)", table)
    d = ex.differentiate(e, "x")
    for x in (-1.0, 0.0, 1.0):
        h = 1e-5
        fd = (ex.evaluate(e, {"x": x + h}) - ex.evaluate(e, {"x": x - h})) / (2 * h)
        assert abs(ex.evaluate(d, {"x": x}) - fd) / abs(fd) < 1e-8


@pytest.mark.parametrize("src", ["sin(S)*cos(I)", "sqrt(S*I)", "log(S)/I", "abs(S-I)", "S^3*I^-2"])
def test_function_derivatives_against_finite_differences(src):
    e = p(src)
    vals = {"S": 1.7, "I": 0.6}
    for name in ("S", "I"):
        d = ex.evaluate(ex.differentiate(e, name), vals)
        h = 1e-6
        up, dn = dict(vals), dict(vals)
        up[name] += h
        dn[name] -= h
        fd = (ex.evaluate(e, up) - ex.evaluate(e, dn)) / (2 * h)
        assert math.isclose(d, fd, rel_tol=1e-6, abs_tol=1e-9)


# -- expansion and canonical equality ------------------------------------------

def test_expand_I_equation():
    terms = ex.expand_to_terms(p("beta*S*I/N - gamma*I"))
    got = sorted((t.sign, ex.to_string(t.term)) for t in terms)
    assert len(terms) == 2
    signs = {ex.term_key(t.term): t.sign for t in terms}
    assert signs[ex.term_key(p("beta*S*I/N"))] == 1
    assert signs[ex.term_key(p("gamma*I"))] == -1, got


def test_expand_single_symbol():
    terms = ex.expand_to_terms(p("S"))
    assert len(terms) == 1 and terms[0].sign == 1 and terms[0].term == ex.Symbol("S")


def test_expand_difference_times_symbol():
    table = ex.SymbolTable([], ["a", "b", "c"])
    e = ex.parse("(a-b)*c", table)
    terms = ex.expand_to_terms(e)
    assert sorted(t.sign for t in terms) == [-1, 1]
    back = ex.from_terms(terms)
    rng = np.random.default_rng(1)
    for vals in rng.normal(size=(20, 3)):
        b = dict(zip("abc", vals))
        assert math.isclose(ex.evaluate(back, b), ex.evaluate(e, b), rel_tol=1e-12, abs_tol=1e-12)


def test_canonical_equal_examples():
    assert ex.canonical_equal(p("S*beta*I/N"), p("beta*I*S/N"))
    assert ex.canonical_equal(p("I*(S*beta/N-gamma)"), p("I*S*beta/N-gamma*I"))
    table = ex.SymbolTable([], ["x"])
    assert not ex.canonical_equal(ex.parse("x+1", table), ex.parse("x-1", table))


def test_positive_mode_drops_abs_of_positive_monomial():
    table = ex.SymbolTable([], ["a", "b"])
    lhs = ex.parse("sqrt(a/b^2)", table)
    rhs = ex.parse("sqrt(a)/abs(b)", table)
    assert ex.canonical_equal(lhs, rhs, positive=True)
    assert not ex.canonical_equal(lhs, rhs)


def test_printing():
    assert ex.to_string(p("beta*S*I/N")) == "beta*S*I/N"
    assert ex.to_latex(p("beta*S*I/N")) == r"\frac{\beta S I}{N}"
    assert ex.latex_symbol("lambda_h") == r"\lambda_{h}"


def test_compiled_functions_match_evaluate():
    exprs = [p("beta*S*I/N"), p("gamma*I + t")]
    fn = ex.lambdify(exprs, ["t", "S", "I", "beta", "gamma", "N"])
    vals = dict(t=0.5, S=10.0, I=2.0, beta=0.3, gamma=0.1, N=12.0)
    got = fn(*vals.values())
    assert got == [ex.evaluate(e, vals) for e in exprs]
    with pytest.raises(ZeroDivisionError):
        fn(0.0, 1.0, 1.0, 1.0, 1.0, 0.0)


# -- properties ----------------------------------------------------------------

NAMES = ["a", "b", "c"]
PTABLE = ex.SymbolTable([], NAMES)

leaf = st.one_of(st.sampled_from(NAMES), st.integers(1, 5).map(str))


def _combine(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda t: f"({t[0]}{t[1]}{t[2]})")
    division = st.tuples(children, st.sampled_from(NAMES)).map(lambda t: f"({t[0]}/{t[1]})")
    power = st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}")
    unary = children.map(lambda c: f"(-{c})")
    return st.one_of(binary, division, power, unary)


expressions = st.recursive(leaf, _combine, max_leaves=8)
points = st.tuples(*[st.floats(0.5, 2.0) for _ in NAMES])


def _close(x, y):
    return math.isclose(x, y, rel_tol=1e-9, abs_tol=1e-9 * max(1.0, abs(x), abs(y)))


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_print_parse_round_trip(src):
    e = ex.parse(src, PTABLE)
    assert ex.canonical_equal(ex.parse(ex.to_string(e), PTABLE), e)


@settings(max_examples=150, deadline=None)
@given(expressions, points)
def test_expansion_preserves_value(src, pt):
    e = ex.parse(src, PTABLE)
    vals = dict(zip(NAMES, pt))
    assert _close(ex.evaluate(ex.from_terms(ex.expand_to_terms(e)), vals), ex.evaluate(e, vals))


@settings(max_examples=100, deadline=None)
@given(expressions, expressions)
def test_differentiation_is_linear(s1, s2):
    a, b = ex.parse(s1, PTABLE), ex.parse(s2, PTABLE)
    lhs = ex.differentiate(ex.add(a, b), "a")
    rhs = ex.add(ex.differentiate(a, "a"), ex.differentiate(b, "a"))
    assert ex.canonical_equal(lhs, rhs)


monomials = st.tuples(st.integers(1, 4), *[st.integers(-2, 3) for _ in NAMES]).map(
    lambda t: f"{t[0]}*a^{t[1]}*b^{t[2]}*c^{t[3]}")


@settings(max_examples=100, deadline=None)
@given(monomials, monomials)
def test_product_rule(s1, s2):
    a, b = ex.parse(s1, PTABLE), ex.parse(s2, PTABLE)
    lhs = ex.differentiate(ex.mul(a, b), "b")
    rhs = ex.add(ex.mul(ex.differentiate(a, "b"), b), ex.mul(a, ex.differentiate(b, "b")))
    assert ex.canonical_equal(lhs, rhs)
