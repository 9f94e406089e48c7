import math

import numpy as np
import pytest

from frontshift import exprlang as el

VARS = ["x1", "x2", "v1", "v2"]


def test_parse_precedence_pow_over_add():
    ast = el.parse("v1^2 + v2^2", VARS)
    assert ast == el.Add(el.Pow(el.Var("v1"), el.Const(2.0)),
                         el.Pow(el.Var("v2"), el.Const(2.0)))


def test_parse_unary_minus_binds_tighter_than_mul():
    ast = el.parse("-x1*x2", VARS)
    assert ast == el.Mul(el.Neg(el.Var("x1")), el.Var("x2"))


def test_parse_unknown_identifier():
    with pytest.raises(el.UnknownIdentifierError) as info:
        el.parse("x3", ["x1", "x2"])
    assert "x3" in str(info.value)


def test_parse_left_associativity():
    assert el.parse("x1 - x2 - v1", VARS) == el.Sub(
        el.Sub(el.Var("x1"), el.Var("x2")), el.Var("v1"))
    assert el.parse("x1/x2/v1", VARS) == el.Div(
        el.Div(el.Var("x1"), el.Var("x2")), el.Var("v1"))


def test_parse_unary_minus_below_pow():
    # standard precedence: ^ binds tighter than unary minus
    assert el.parse("-x1^2", VARS) == el.Neg(
        el.Pow(el.Var("x1"), el.Const(2.0)))


def test_parse_syntax_error_offset():
    with pytest.raises(el.ExprSyntaxError) as info:
        el.parse("x1+*x2", VARS)
    assert info.value.offset == 3
    assert "byte 3" in str(info.value)


def test_parse_rejects_nonconstant_exponent():
    with pytest.raises(el.ExprSyntaxError):
        el.parse("x1^x2", VARS)
    # constant base with variable exponent stays legal
    el.parse("2^x1", VARS)


def test_parse_rejects_empty():
    with pytest.raises(el.ExprSyntaxError):
        el.parse("   ", VARS)


def test_evaluate_examples():
    assert el.evaluate(el.parse("v1^2+v2^2", VARS), {"v1": 3, "v2": 4}) == 25
    assert el.evaluate(el.parse("sin(0)", []), {}) == 0.0


def test_evaluate_domain_errors():
    with pytest.raises(el.ExprDomainError):
        el.evaluate(el.parse("1/x1", VARS), {"x1": 0.0})
    with pytest.raises(el.ExprDomainError):
        el.evaluate(el.parse("ln(x1)", VARS), {"x1": -1.0})
    with pytest.raises(el.ExprDomainError):
        el.evaluate(el.parse("sqrt(x1)", VARS), {"x1": -4.0})


def test_differentiate_examples():
    assert el.differentiate(el.parse("x1*x2", VARS), "x1") == el.Var("x2")
    assert el.differentiate(el.parse("sin(x1)", VARS), "x2") == el.Const(0.0)
    d = el.differentiate(el.parse("sqrt(v1^2+v2^2)", VARS), "v1")
    assert el.evaluate(d, {"v1": 3, "v2": 4}) == pytest.approx(0.6, abs=1e-12)


def test_simplify_examples():
    assert el.simplify(el.parse("0*x1 + 1*v2", VARS)) == el.Var("v2")
    assert el.simplify(el.parse("x1^1", VARS)) == el.Var("x1")
    assert el.simplify(el.parse("2*3", VARS)) == el.Const(6.0)


def _random_ast(rng, depth):
    """Bounded expression generator; ln and abs are exercised separately
    because finite differences misbehave at their domain boundaries."""
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.4:
            return el.Const(round(float(rng.uniform(-2.0, 2.0)), 3))
        return el.Var(VARS[rng.integers(len(VARS))])
    pick = rng.random()
    left = _random_ast(rng, depth - 1)
    right = _random_ast(rng, depth - 1)
    if pick < 0.2:
        return el.Add(left, right)
    if pick < 0.4:
        return el.Sub(left, right)
    if pick < 0.6:
        return el.Mul(left, right)
    if pick < 0.7:
        return el.Div(left, right)
    if pick < 0.8:
        return el.Pow(left, el.Const(float(rng.integers(1, 4))))
    func = ("sin", "cos", "exp", "sqrt", "tan")[rng.integers(5)]
    return el.Call(func, left)


def _random_binding(rng):
    return {name: float(rng.uniform(0.4, 2.0)) for name in VARS}


def test_derivative_matches_central_differences():
    rng = np.random.default_rng(42)
    accepted = 0
    attempts = 0
    while accepted < 1000 and attempts < 20000:
        attempts += 1
        ast = _random_ast(rng, 3)
        b = _random_binding(rng)
        var = VARS[rng.integers(len(VARS))]
        h = 1e-6 * max(1.0, abs(b[var]))
        try:
            sym = el.evaluate(el.differentiate(ast, var), b)
            up = dict(b, **{var: b[var] + h})
            dn = dict(b, **{var: b[var] - h})
            fd = (el.evaluate(ast, up) - el.evaluate(ast, dn)) / (2.0 * h)
        except el.ExprError:
            continue
        if not (math.isfinite(sym) and math.isfinite(fd)):
            continue
        if abs(sym) > 1e3 or abs(el.evaluate(ast, b)) > 1e3:
            continue
        accepted += 1
        assert abs(fd - sym) <= 1e-6 * max(1.0, abs(sym)), (
            el.to_source(ast), var, b, sym, fd)
    assert accepted == 1000


def test_abs_derivative_away_from_zero():
    d = el.differentiate(el.parse("abs(x1)", VARS), "x1")
    assert el.evaluate(d, {"x1": 2.5}) == 1.0
    assert el.evaluate(d, {"x1": -2.5}) == -1.0
    with pytest.raises(el.ExprDomainError):
        el.evaluate(d, {"x1": 0.0})


def test_simplify_preserves_evaluate():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        ast = _random_ast(rng, 3)
        b = _random_binding(rng)
        try:
            before = el.evaluate(ast, b)
        except el.ExprError:
            continue
        after = el.evaluate(el.simplify(ast), b)
        checked += 1
        if before == after:
            continue
        # folding may commute operations; stay within an ulp
        assert after == pytest.approx(before, rel=4e-16, abs=5e-324)


def test_printer_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(500):
        ast = _random_ast(rng, 3)
        printed = el.to_source(ast)
        assert el.parse(printed, VARS) == ast
    for text in ("v1^2 + v2^2", "-x1*x2", "sin(x1)/cos(x2)",
                 "x1^-2", "(x1 + x2)*v1"):
        ast = el.parse(text, VARS)
        assert el.parse(el.to_source(ast), VARS) == ast


def test_compiled_matches_evaluate():
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 300:
        ast = _random_ast(rng, 3)
        b = _random_binding(rng)
        try:
            ref = el.evaluate(ast, b)
        except el.ExprError:
            continue
        fn = el.compile_fn(ast, VARS)
        args = tuple(np.array([b[name]]) for name in VARS)
        got = float(np.asarray(fn(*args)).ravel()[0])
        checked += 1
        assert got == pytest.approx(ref, rel=1e-15, abs=1e-300)
