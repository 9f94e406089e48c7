"""Scalar expressions in chart coordinates and velocities.

Recursive-descent parser, exact symbolic differentiation, and a small
simplifier.  Every exact derivative used by the geometry and dynamics
layers (metric derivatives, force gradients) is produced here; numeric
differencing is reserved for test oracles.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | ident | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | tan | exp | ln | sqrt | abs

The exponent of ``^`` must fold to a constant unless the base is itself
constant; this keeps differentiation closed-form.  General powers remain
expressible as ``exp(ln(b)*e)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "abs")

_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


class ExprError(ValueError):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"syntax error at byte {offset}: {message}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at byte {offset}")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError):
    """Evaluation hit a domain restriction (ln of non-positive, x/0, ...)."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"domain error at byte {offset}: {message}")
        self.offset = offset


@dataclass(frozen=True)
class Node:
    """AST node.  ``pos`` is the source byte offset, ignored by equality."""

    pos: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Const(Node):
    value: float = 0.0


@dataclass(frozen=True)
class Var(Node):
    name: str = ""


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


ExprAst = Node


class _Parser:
    def __init__(self, source: str, names: Sequence[str]):
        self.src = source
        self.names = set(names)
        self.i = 0

    def _skip_ws(self):
        while self.i < len(self.src) and self.src[self.i].isspace():
            self.i += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.src[self.i] if self.i < len(self.src) else ""

    def _take(self, ch: str):
        if self._peek() != ch:
            raise ExprSyntaxError(f"expected {ch!r}", self.i)
        self.i += 1

    def parse(self) -> Node:
        node = self._expr()
        self._skip_ws()
        if self.i != len(self.src):
            raise ExprSyntaxError(f"unexpected {self.src[self.i]!r}", self.i)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while True:
            ch = self._peek()
            if ch == "+":
                pos = self.i
                self.i += 1
                node = Add(node, self._term(), pos=pos)
            elif ch == "-":
                pos = self.i
                self.i += 1
                node = Sub(node, self._term(), pos=pos)
            else:
                return node

    def _term(self) -> Node:
        node = self._factor()
        while True:
            ch = self._peek()
            if ch == "*":
                pos = self.i
                self.i += 1
                node = Mul(node, self._factor(), pos=pos)
            elif ch == "/":
                pos = self.i
                self.i += 1
                node = Div(node, self._factor(), pos=pos)
            else:
                return node

    def _factor(self) -> Node:
        if self._peek() == "-":
            pos = self.i
            self.i += 1
            arg = self._factor()
            # Fold a negated literal so printing round-trips exactly.
            if isinstance(arg, Const):
                return Const(-arg.value, pos=pos)
            return Neg(arg, pos=pos)
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self._peek() != "^":
            return base
        pos = self.i
        self.i += 1
        exponent = self._factor()
        folded = simplify(exponent)
        base_folds = isinstance(simplify(base), Const)
        if not isinstance(folded, Const) and not base_folds:
            raise ExprSyntaxError("non-constant exponent", pos)
        if isinstance(folded, Const):
            exponent = Const(folded.value, pos=exponent.pos)
        return Pow(base, exponent, pos=pos)

    def _atom(self) -> Node:
        self._skip_ws()
        if self.i >= len(self.src):
            raise ExprSyntaxError("unexpected end of input", self.i)
        ch = self.src[self.i]
        if ch == "(":
            self.i += 1
            node = self._expr()
            self._take(")")
            return node
        m = _NUMBER_RE.match(self.src, self.i)
        if m:
            pos = self.i
            self.i = m.end()
            return Const(float(m.group(0)), pos=pos)
        m = _IDENT_RE.match(self.src, self.i)
        if m:
            pos = self.i
            name = m.group(0)
            self.i = m.end()
            if name in FUNCTIONS and self._peek() == "(":
                self.i += 1
                arg = self._expr()
                self._take(")")
                return Call(name, arg, pos=pos)
            if name not in self.names:
                raise UnknownIdentifierError(name, pos)
            return Var(name, pos=pos)
        raise ExprSyntaxError(f"unexpected {ch!r}", self.i)


def parse(source: str, names: Iterable[str]) -> Node:
    """Parse ``source`` against the declared variable names."""
    names = list(names)
    if len(set(names)) != len(names):
        raise ValueError("variable names must be pairwise distinct")
    if not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(source, names).parse()


_UNARY_MATH: Mapping[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}


def evaluate(node: Node, bindings: Mapping[str, float]) -> float:
    """Evaluate to an IEEE double.  Domain errors carry the node offset."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return float(bindings[node.name])
        except KeyError:
            raise UnknownIdentifierError(node.name, node.pos) from None
    if isinstance(node, Neg):
        return -evaluate(node.arg, bindings)
    if isinstance(node, Add):
        return evaluate(node.left, bindings) + evaluate(node.right, bindings)
    if isinstance(node, Sub):
        return evaluate(node.left, bindings) - evaluate(node.right, bindings)
    if isinstance(node, Mul):
        return evaluate(node.left, bindings) * evaluate(node.right, bindings)
    if isinstance(node, Div):
        denom = evaluate(node.right, bindings)
        if denom == 0.0:
            raise ExprDomainError("division by zero", node.pos)
        return evaluate(node.left, bindings) / denom
    if isinstance(node, Pow):
        base = evaluate(node.base, bindings)
        expo = evaluate(node.exponent, bindings)
        try:
            return math.pow(base, expo)
        except (ValueError, OverflowError) as exc:
            raise ExprDomainError(f"pow: {exc}", node.pos) from None
    if isinstance(node, Call):
        arg = evaluate(node.arg, bindings)
        if node.func == "ln" and arg <= 0.0:
            raise ExprDomainError("ln of non-positive value", node.pos)
        if node.func == "sqrt" and arg < 0.0:
            raise ExprDomainError("sqrt of negative value", node.pos)
        try:
            return _UNARY_MATH[node.func](arg)
        except (ValueError, OverflowError) as exc:
            raise ExprDomainError(f"{node.func}: {exc}", node.pos) from None
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Node) -> set[str]:
    """Names of all variables occurring in the expression."""
    out: set[str] = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Var):
            out.add(cur.name)
        elif isinstance(cur, Neg):
            stack.append(cur.arg)
        elif isinstance(cur, (Add, Sub, Mul, Div)):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, Pow):
            stack.extend((cur.base, cur.exponent))
        elif isinstance(cur, Call):
            stack.append(cur.arg)
    return out


class NonDifferentiableError(ExprError):
    pass


def differentiate(node: Node, var: str) -> Node:
    """Exact symbolic partial derivative, returned in simplified form."""
    return simplify(_diff(node, var))


def _diff(node: Node, var: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return Neg(_diff(node.arg, var))
    if isinstance(node, Add):
        return Add(_diff(node.left, var), _diff(node.right, var))
    if isinstance(node, Sub):
        return Sub(_diff(node.left, var), _diff(node.right, var))
    if isinstance(node, Mul):
        return Add(
            Mul(_diff(node.left, var), node.right),
            Mul(node.left, _diff(node.right, var)),
        )
    if isinstance(node, Div):
        return Div(
            Sub(
                Mul(_diff(node.left, var), node.right),
                Mul(node.left, _diff(node.right, var)),
            ),
            Pow(node.right, Const(2.0)),
        )
    if isinstance(node, Pow):
        expo = simplify(node.exponent)
        if isinstance(expo, Const):
            c = expo.value
            return Mul(
                Mul(Const(c), Pow(node.base, Const(c - 1.0))),
                _diff(node.base, var),
            )
        base = simplify(node.base)
        if isinstance(base, Const):
            return Mul(
                Mul(node, Call("ln", base)),
                _diff(node.exponent, var),
            )
        raise NonDifferentiableError(
            "power with non-constant base and exponent")
    if isinstance(node, Call):
        u = node.arg
        du = _diff(u, var)
        if node.func == "sin":
            return Mul(Call("cos", u), du)
        if node.func == "cos":
            return Neg(Mul(Call("sin", u), du))
        if node.func == "tan":
            return Div(du, Pow(Call("cos", u), Const(2.0)))
        if node.func == "exp":
            return Mul(Call("exp", u), du)
        if node.func == "ln":
            return Div(du, u)
        if node.func == "sqrt":
            return Div(du, Mul(Const(2.0), Call("sqrt", u)))
        if node.func == "abs":
            # d|u| = u/|u| * du; the u=0 case surfaces as a division-by-zero
            # domain error at evaluation time.
            return Mul(Div(u, Call("abs", u)), du)
    raise TypeError(f"not an expression node: {node!r}")


def _is_const(node: Node, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def simplify(node: Node) -> Node:
    """Constant folding plus x+0, x*1, x*0, x^1 rewrites, to fixpoint."""
    while True:
        new = _simplify_once(node)
        if new == node:
            return new
        node = new


def _simplify_once(node: Node) -> Node:
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, Neg):
        arg = _simplify_once(node.arg)
        if isinstance(arg, Const):
            return Const(-arg.value)
        if isinstance(arg, Neg):
            return arg.arg
        return Neg(arg, pos=node.pos)
    if isinstance(node, Call):
        arg = _simplify_once(node.arg)
        if isinstance(arg, Const):
            try:
                return Const(evaluate(Call(node.func, arg), {}))
            except ExprDomainError:
                pass
        return Call(node.func, arg, pos=node.pos)
    if isinstance(node, Pow):
        base = _simplify_once(node.base)
        expo = _simplify_once(node.exponent)
        if _is_const(expo, 1.0):
            return base
        if _is_const(expo, 0.0):
            return Const(1.0)
        if isinstance(base, Const) and isinstance(expo, Const):
            try:
                return Const(evaluate(Pow(base, expo), {}))
            except ExprDomainError:
                pass
        return Pow(base, expo, pos=node.pos)

    left = _simplify_once(node.left)
    right = _simplify_once(node.right)
    if isinstance(node, Add):
        if _is_const(left, 0.0):
            return right
        if _is_const(right, 0.0):
            return left
    elif isinstance(node, Sub):
        if _is_const(right, 0.0):
            return left
        if _is_const(left, 0.0):
            return Neg(right)
    elif isinstance(node, Mul):
        if _is_const(left, 0.0) or _is_const(right, 0.0):
            return Const(0.0)
        if _is_const(left, 1.0):
            return right
        if _is_const(right, 1.0):
            return left
    elif isinstance(node, Div):
        if _is_const(right, 1.0):
            return left
    rebuilt = type(node)(left, right, pos=node.pos)
    if isinstance(left, Const) and isinstance(right, Const):
        try:
            return Const(evaluate(rebuilt, {}))
        except ExprDomainError:
            pass
    return rebuilt


_PRECEDENCE = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def to_source(node: Node) -> str:
    """Canonical printer; ``parse(to_source(a), ...) == a`` structurally."""
    return _print(node, 0)


def _print(node: Node, parent_prec: int) -> str:
    if isinstance(node, Const):
        text = repr(node.value)
        if text.endswith(".0"):
            text = text[:-2]
        if node.value < 0.0 and parent_prec > 1:
            return f"({text})"
        return text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_print(node.arg, 0)})"
    prec = _PRECEDENCE[type(node)]
    if isinstance(node, Neg):
        text = f"-{_print(node.arg, prec)}"
    elif isinstance(node, Add):
        text = f"{_print(node.left, prec)} + {_print(node.right, prec + 1)}"
    elif isinstance(node, Sub):
        text = f"{_print(node.left, prec)} - {_print(node.right, prec + 1)}"
    elif isinstance(node, Mul):
        text = f"{_print(node.left, prec)}*{_print(node.right, prec + 1)}"
    elif isinstance(node, Div):
        text = f"{_print(node.left, prec)}/{_print(node.right, prec + 1)}"
    elif isinstance(node, Pow):
        text = (f"{_print(node.base, prec + 1)}"
                f"^{_print(node.exponent, prec + 1)}")
    else:
        raise TypeError(f"not an expression node: {node!r}")
    return f"({text})" if prec < parent_prec else text


_NUMPY_FUNCS = {
    "sin": "np.sin",
    "cos": "np.cos",
    "tan": "np.tan",
    "exp": "np.exp",
    "ln": "np.log",
    "sqrt": "np.sqrt",
    "abs": "np.abs",
}


def compile_fn(node: Node, names: Sequence[str]) -> Callable[..., np.ndarray]:
    """Compile to a vectorized callable over positional array arguments.

    The fast path for integration: no domain checking, IEEE semantics
    (divisions by zero become inf/nan and are caught by the integrator's
    non-finite abort).  ``evaluate`` stays the checked reference.
    """
    undeclared = variables(node) - set(names)
    if undeclared:
        raise UnknownIdentifierError(sorted(undeclared)[0], node.pos)
    body = _emit(node)
    src = f"def _compiled({', '.join(names)}):\n    return {body}\n"
    scope: dict = {"np": np}
    exec(src, scope)
    return scope["_compiled"]


def _emit(node: Node) -> str:
    if isinstance(node, Const):
        # parenthesized so that e.g. (-2)**2 keeps pow from capturing the sign
        return f"({node.value!r})" if node.value < 0 else repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_emit(node.arg)})"
    if isinstance(node, Add):
        return f"({_emit(node.left)} + {_emit(node.right)})"
    if isinstance(node, Sub):
        return f"({_emit(node.left)} - {_emit(node.right)})"
    if isinstance(node, Mul):
        return f"({_emit(node.left)}*{_emit(node.right)})"
    if isinstance(node, Div):
        return f"({_emit(node.left)}/{_emit(node.right)})"
    if isinstance(node, Pow):
        return f"({_emit(node.base)}**{_emit(node.exponent)})"
    if isinstance(node, Call):
        return f"{_NUMPY_FUNCS[node.func]}({_emit(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")
