"""Text expressions for right-hand sides f(t, x).

Grammar (lowest to highest precedence)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | NAME '(' sum ')' | '(' sum ')'

Implicit multiplication is rejected. Error offsets are 1-based character
positions in the source text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "tanh", "abs", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("t", "x")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        detail = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownNameError(ExprError):
    pass


class EvalDomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, subexpression: "Expr"):
        self.subexpression = subexpression
        super().__init__(f"{message} in `{to_text(subexpression)}`")


class NotDifferentiableError(ExprError):
    pass


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Num | Const | Var | Param | Neg | Call | BinOp


# ------------------------------------------------------------------ parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", bad + 1)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    tokens.append(("end", "", len(src) + 1))
    return tokens


class _Parser:
    def __init__(self, src: str, params: frozenset[str] | None):
        self.tokens = _tokenize(src)
        self.i = 0
        self.params = params

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.peek()
        if text != value or kind == "end":
            raise ExprSyntaxError(
                "unexpected end of input" if kind == "end" else f"unexpected {text!r}",
                off,
                repr(value),
            )
        self.take()

    def parse(self) -> Expr:
        node = self.sum()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off, "operator or end of input")
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.product())
        return node

    def product(self) -> Expr:
        node = self.unary()
        while True:
            kind, text, off = self.peek()
            if kind == "op" and text in ("*", "/"):
                self.take()
                node = BinOp(text, node, self.unary())
            elif kind in ("num", "name") or text == "(":
                raise ExprSyntaxError("implicit multiplication", off, "operator")
            else:
                return node

    def unary(self) -> Expr:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownNameError(f"unknown function {text!r} at offset {off}")
                self.take()
                arg = self.sum()
                self.expect(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} needs an argument", self.peek()[2], "'('")
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Const(text)
            if self.params is not None and text not in self.params:
                raise UnknownNameError(f"unknown identifier {text!r} at offset {off}")
            return Param(text)
        if text == "(":
            node = self.sum()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", off, "number, name or '('")
        raise ExprSyntaxError(f"unexpected {text!r}", off, "number, name or '('")


def parse(source: str, params: Mapping[str, float] | None = None) -> Expr:
    """Parse `source` into an expression tree.

    When `params` is given, identifiers other than t, x, pi, e and the keys
    of `params` are rejected at parse time.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 1, "expression")
    names = frozenset(params) if params is not None else None
    return _Parser(source, names).parse()


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Print with just enough parentheses to re-parse to the same tree."""
    return _text(e, 0)


def _text(e: Expr, ctx: int) -> str:
    # ctx: 0 sum, 1 right of +/-, 2 product, 3 right of * /, 4 unary, 5 power base
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        return f"({s})" if ctx >= 5 and (e.value < 0 or "e" in s) else s
    if isinstance(e, (Const, Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_text(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _text(e.arg, 4)
        return f"({s})" if ctx >= 5 else s
    if e.op == "^":
        s = f"{_text(e.left, 5)}^{_text(e.right, 4)}"
        return f"({s})" if ctx >= 5 else s
    prec = _PREC[e.op]
    left_ctx = 0 if prec == 1 else 2
    right_ctx = 1 if prec == 1 else 3
    s = f"{_text(e.left, left_ctx)}{e.op}{_text(e.right, right_ctx)}"
    need = (prec == 1 and ctx >= 1) or (prec == 2 and ctx >= 3)
    return f"({s})" if need else s


# ------------------------------------------------------------- evaluation


def free_params(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, (Neg, Call)):
        return free_params(e.arg)
    if isinstance(e, BinOp):
        return free_params(e.left) | free_params(e.right)
    return set()


def depends_on(e: Expr, var: str) -> bool:
    if isinstance(e, Var):
        return e.name == var
    if isinstance(e, (Neg, Call)):
        return depends_on(e.arg, var)
    if isinstance(e, BinOp):
        return depends_on(e.left, var) or depends_on(e.right, var)
    return False


def _check_params(e: Expr, params: Mapping[str, float]) -> None:
    missing = free_params(e) - set(params)
    if missing:
        raise UnknownNameError(f"unbound parameter(s): {', '.join(sorted(missing))}")


def _bad(v) -> bool:
    return bool(np.any(~np.isfinite(v)))


def _ev(e: Expr, t, x, p: Mapping[str, float]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Var):
        return t if e.name == "t" else x
    if isinstance(e, Param):
        return p[e.name]
    if isinstance(e, Neg):
        return -_ev(e.arg, t, x, p)
    if isinstance(e, Call):
        a = _ev(e.arg, t, x, p)
        if e.func == "ln":
            if np.any(np.asarray(a) <= 0):
                raise EvalDomainError("logarithm of non-positive value", e)
            return np.log(a)
        if e.func == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise EvalDomainError("square root of negative value", e)
            return np.sqrt(a)
        out = _UNARY[e.func](a)
        if _bad(out) and not _bad(a):
            raise EvalDomainError("non-finite result", e)
        return out
    a = _ev(e.left, t, x, p)
    b = _ev(e.right, t, x, p)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if np.any(np.asarray(b) == 0):
            raise EvalDomainError("division by zero", e)
        return a / b
    out = np.power(a, b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) else _scalar_pow(a, b, e)
    if _bad(out) and not (_bad(a) or _bad(b)):
        raise EvalDomainError("non-finite power", e)
    return out


def _scalar_pow(a: float, b: float, e: Expr) -> float:
    try:
        out = a**b
    except ZeroDivisionError:
        raise EvalDomainError("zero to a negative power", e) from None
    except OverflowError:
        raise EvalDomainError("overflow in power", e) from None
    if isinstance(out, complex):
        raise EvalDomainError("negative base with fractional exponent", e)
    return out


_UNARY: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
}


def evaluate(e: Expr, t, x, params: Mapping[str, float] | None = None):
    """Evaluate `e` at (t, x); arrays broadcast elementwise.

    Raises EvalDomainError on ln/sqrt outside the domain, division by zero
    or any other non-finite intermediate.
    """
    params = params or {}
    _check_params(e, params)
    with np.errstate(all="ignore"):
        out = _ev(e, t, x, params)
        if np.ndim(t) == 0 and np.ndim(x) == 0:
            out = float(out)
        else:
            out = np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(t, x).shape).copy()
    if _bad(out):
        raise EvalDomainError("non-finite result", e)
    return out


# Alias kept for the operation name used throughout the package.
eval_expr = evaluate


class _Fallback(Exception):
    pass


def _build(e: Expr, p: Mapping[str, float]) -> Callable:
    """Closure tree for fast repeated evaluation.

    Nodes that can leave their domain check cheaply and bail out; the caller
    then re-runs the checked evaluator to report the offending subexpression.
    """
    if isinstance(e, Num):
        v = e.value
        return lambda t, x: v
    if isinstance(e, Const):
        v = CONSTANTS[e.name]
        return lambda t, x: v
    if isinstance(e, Var):
        return (lambda t, x: t) if e.name == "t" else (lambda t, x: x)
    if isinstance(e, Param):
        v = float(p[e.name])
        return lambda t, x: v
    if isinstance(e, Neg):
        a = _build(e.arg, p)
        return lambda t, x: -a(t, x)
    if isinstance(e, Call):
        a = _build(e.arg, p)
        fn = np.log if e.func == "ln" else np.sqrt if e.func == "sqrt" else _UNARY[e.func]
        if e.func in ("sin", "cos", "tanh", "abs"):
            return lambda t, x: fn(a(t, x))

        def call(t, x):
            out = fn(a(t, x))
            if _bad(out):
                raise _Fallback
            return out

        return call
    a, b = _build(e.left, p), _build(e.right, p)
    if e.op == "+":
        return lambda t, x: a(t, x) + b(t, x)
    if e.op == "-":
        return lambda t, x: a(t, x) - b(t, x)
    if e.op == "*":
        return lambda t, x: a(t, x) * b(t, x)
    if e.op == "/":

        def div(t, x):
            d = b(t, x)
            if np.any(np.asarray(d) == 0):
                raise _Fallback
            return a(t, x) / d

        return div
    if isinstance(e.right, Num) and float(e.right.value).is_integer() and e.right.value >= 0:
        k = int(e.right.value)
        if k == 2:
            return lambda t, x: a(t, x) * a(t, x)
        return lambda t, x: a(t, x) ** k

    def pw(t, x):
        u, v = a(t, x), b(t, x)
        out = np.power(np.asarray(u, dtype=float), v)
        if _bad(out):
            raise _Fallback
        return out

    return pw


def compile_expr(e: Expr, params: Mapping[str, float] | None = None) -> Callable:
    """Bind parameters and return ``f(t, x)`` operating on floats or arrays.

    Results agree bit for bit with `evaluate`; domain problems are reported
    through the checked evaluator.
    """
    bound = dict(params or {})
    _check_params(e, bound)
    fast = _build(e, bound)

    def f(t, x):
        try:
            with np.errstate(all="ignore"):
                out = fast(t, x)
        except _Fallback:
            return evaluate(e, t, x, bound)
        if np.ndim(t) == 0 and np.ndim(x) == 0:
            out = float(out)
        else:
            out = np.asarray(out, dtype=float)
            shape = np.broadcast(t, x).shape
            if out.shape != shape:
                out = np.broadcast_to(out, shape).copy()
        if _bad(out):
            return evaluate(e, t, x, bound)
        return out

    f.expression = e
    return f


# --------------------------------------------------------- differentiation


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def _fold(e: Expr) -> Expr:
    """Constant folding plus the 0/1 identities it implies."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        a = _fold(e.arg)
        if isinstance(a, Num):
            return Num(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        a = _fold(e.arg)
        if isinstance(a, Num) and e.func not in ("ln", "sqrt"):
            with np.errstate(all="ignore"):
                v = float(_UNARY[e.func](a.value))
            if math.isfinite(v):  # otherwise leave it for the evaluator to report
                return Num(v)
        return Call(e.func, a)
    if isinstance(e, BinOp):
        a, b = _fold(e.left), _fold(e.right)
        if isinstance(a, Num) and isinstance(b, Num):
            try:
                return Num(float(_ev(BinOp(e.op, a, b), 0.0, 0.0, {})))
            except (EvalDomainError, ZeroDivisionError):
                return BinOp(e.op, a, b)
        if e.op == "+":
            if _is(a, 0):
                return b
            if _is(b, 0):
                return a
        elif e.op == "-":
            if _is(b, 0):
                return a
            if _is(a, 0):
                return _fold(Neg(b))
        elif e.op == "*":
            if _is(a, 0) or _is(b, 0):
                return Num(0.0)
            if _is(a, 1):
                return b
            if _is(b, 1):
                return a
            if _is(a, -1):
                return _fold(Neg(b))
            if not _has_var(b) and _has_var(a):
                return BinOp("*", b, a)
        elif e.op == "/":
            if _is(a, 0) and not _is(b, 0):
                return Num(0.0)
            if _is(b, 1):
                return a
        elif e.op == "^":
            if _is(b, 1):
                return a
            if _is(b, 0):
                return Num(1.0)
        return BinOp(e.op, a, b)
    return e


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, (Num, Const, Param)):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.name == v else 0.0)
    if isinstance(e, Neg):
        return Neg(_d(e.arg, v))
    if isinstance(e, Call):
        u = e.arg
        du = _d(u, v)
        if e.func == "sin":
            outer = Call("cos", u)
        elif e.func == "cos":
            outer = Neg(Call("sin", u))
        elif e.func == "tan":
            outer = BinOp("/", Num(1.0), BinOp("^", Call("cos", u), Num(2.0)))
        elif e.func == "exp":
            outer = Call("exp", u)
        elif e.func == "ln":
            outer = BinOp("/", Num(1.0), u)
        elif e.func == "tanh":
            outer = BinOp("-", Num(1.0), BinOp("^", Call("tanh", u), Num(2.0)))
        elif e.func == "sqrt":
            outer = BinOp("/", Num(1.0), BinOp("*", Num(2.0), Call("sqrt", u)))
        else:
            raise NotDifferentiableError(f"{e.func} is not differentiable")
        return BinOp("*", outer, du)
    a, b = e.left, e.right
    if e.op in ("+", "-"):
        return BinOp(e.op, _d(a, v), _d(b, v))
    if e.op == "*":
        return BinOp("+", BinOp("*", _d(a, v), b), BinOp("*", a, _d(b, v)))
    if e.op == "/":
        num = BinOp("-", BinOp("*", _d(a, v), b), BinOp("*", a, _d(b, v)))
        return BinOp("/", num, BinOp("^", b, Num(2.0)))
    # power
    if not depends_on(b, v):
        # d(a^c) = c * a^(c-1) * a'
        return BinOp("*", BinOp("*", b, BinOp("^", a, BinOp("-", b, Num(1.0)))), _d(a, v))
    # general case via a^b = exp(b ln a)
    return BinOp("*", e, BinOp("+", BinOp("*", _d(b, v), Call("ln", a)), BinOp("/", BinOp("*", b, _d(a, v)), a)))


def _has_var(e: Expr) -> bool:
    return depends_on(e, "t") or depends_on(e, "x")


def _has_abs(e: Expr) -> bool:
    if isinstance(e, Call):
        return e.func == "abs" or _has_abs(e.arg)
    if isinstance(e, Neg):
        return _has_abs(e.arg)
    if isinstance(e, BinOp):
        return _has_abs(e.left) or _has_abs(e.right)
    return False


def differentiate(e: Expr, var: str = "x") -> Expr:
    if var not in VARIABLES:
        raise ValueError(f"can only differentiate with respect to t or x, not {var!r}")
    if _has_abs(e):
        raise NotDifferentiableError("abs() is not differentiable")
    return _fold(_d(e, var))


def simplify(e: Expr) -> Expr:
    return _fold(e)
