"""Infix expression parsing and forward-mode differentiation.

Expressions are parsed into a small immutable AST and compiled into a tree of
closures.  Evaluation works on plain floats or on :class:`Dual` numbers, so the
same compiled expression yields values and exact first derivatives.

Duals carry an integer tag.  Each call to :func:`partial` draws a fresh,
larger tag, and operations between duals of different tags treat the
lower-tag operand as a constant.  This lets derivatives nest (for example the
gradient of a partial derivative) without perturbation confusion.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

__all__ = [
    "Dual", "ExprError", "ExprSyntaxError", "DomainError", "UnknownFunctionError",
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "parse", "unparse", "variables", "compile_ast", "eval_dual", "evaluate",
    "partial", "jacobian", "value", "exp", "ln", "sin", "cos", "sqrt", "fabs", "FUNCTIONS",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownFunctionError(ExprError):
    def __init__(self, name, offset):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown function '{name}' at offset {offset}")


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message, subexpr=None):
        self.subexpr = subexpr
        super().__init__(message if subexpr is None else f"{message} in '{subexpr}'")


# ---------------------------------------------------------------------------
# dual numbers

_tags = itertools.count(1)


class Dual:
    """First-order dual number ``val + der*e`` with a perturbation tag."""

    __slots__ = ("val", "der", "tag")

    def __init__(self, val, der=0.0, tag=0):
        self.val = val
        self.der = der
        self.tag = tag

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r}, tag={self.tag})"

    def __add__(self, o):
        if isinstance(o, Dual):
            if o.tag > self.tag:
                return o.__radd__(self)
            if o.tag == self.tag:
                return Dual(self.val + o.val, self.der + o.der, self.tag)
        return Dual(self.val + o, self.der, self.tag)

    def __radd__(self, o):
        return Dual(o + self.val, self.der, self.tag)

    def __sub__(self, o):
        if isinstance(o, Dual):
            if o.tag > self.tag:
                return o.__rsub__(self)
            if o.tag == self.tag:
                return Dual(self.val - o.val, self.der - o.der, self.tag)
        return Dual(self.val - o, self.der, self.tag)

    def __rsub__(self, o):
        return Dual(o - self.val, -self.der, self.tag)

    def __neg__(self):
        return Dual(-self.val, -self.der, self.tag)

    def __pos__(self):
        return self

    def __mul__(self, o):
        if isinstance(o, Dual):
            if o.tag > self.tag:
                return o.__rmul__(self)
            if o.tag == self.tag:
                return Dual(self.val * o.val, self.der * o.val + self.val * o.der, self.tag)
        return Dual(self.val * o, self.der * o, self.tag)

    def __rmul__(self, o):
        return Dual(o * self.val, o * self.der, self.tag)

    def __truediv__(self, o):
        if isinstance(o, Dual):
            if o.tag > self.tag:
                return o.__rtruediv__(self)
            if o.tag == self.tag:
                q = self.val / o.val
                return Dual(q, (self.der - q * o.der) / o.val, self.tag)
        return Dual(self.val / o, self.der / o, self.tag)

    def __rtruediv__(self, o):
        q = o / self.val
        return Dual(q, -q * self.der / self.val, self.tag)

    def __pow__(self, o):
        if isinstance(o, Dual) and o.tag >= self.tag:
            if o.tag > self.tag:
                return o.__rpow__(self)
            return exp(o * ln(self))
        if value(o) == 0:
            return Dual(self.val ** 0, 0.0 * self.der, self.tag)
        return Dual(self.val ** o, o * self.val ** (o - 1) * self.der, self.tag)

    def __rpow__(self, o):
        # constant base, dual exponent
        if value(o) == 0:
            return Dual(o ** self.val, 0.0 * self.der, self.tag)
        p = o ** self.val
        return Dual(p, p * ln(o) * self.der, self.tag)

    # comparisons act on the primal value (used only for branching)
    def __lt__(self, o):
        return value(self) < value(o)

    def __le__(self, o):
        return value(self) <= value(o)

    def __gt__(self, o):
        return value(self) > value(o)

    def __ge__(self, o):
        return value(self) >= value(o)

    def __float__(self):
        return float(value(self))


Scalar = Union[float, Dual]


def value(x) -> float:
    """Primal value of a (possibly nested) dual."""
    while isinstance(x, Dual):
        x = x.val
    return x


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, e * x.der, x.tag)
    try:
        return math.exp(x)
    except OverflowError:
        raise DomainError(f"exp overflow at {x!r}") from None


def ln(x):
    if isinstance(x, Dual):
        return Dual(ln(x.val), x.der / x.val, x.tag)
    if x <= 0:
        raise DomainError(f"ln of non-positive value {x!r}")
    return math.log(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.val), cos(x.val) * x.der, x.tag)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.val), -sin(x.val) * x.der, x.tag)
    return math.cos(x)


def sqrt(x):
    if isinstance(x, Dual):
        if value(x) <= 0:
            raise DomainError(f"sqrt not differentiable at {value(x)!r}")
        s = sqrt(x.val)
        return Dual(s, x.der / (2 * s), x.tag)
    if x < 0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def fabs(x):
    if isinstance(x, Dual):
        sgn = 1.0 if value(x) > 0 else (-1.0 if value(x) < 0 else 0.0)
        return Dual(fabs(x.val), sgn * x.der, x.tag)
    return abs(x)


def _power(base, expo):
    b, e = value(base), value(expo)
    if isinstance(expo, Dual):
        if b <= 0:
            raise DomainError("power with variable exponent needs a positive base")
        return base ** expo
    if b < 0 and not float(e).is_integer():
        raise DomainError(f"negative base {b!r} with non-integer exponent {e!r}")
    if b == 0 and e < 1 and isinstance(base, Dual) and e != 0:
        raise DomainError("power not differentiable at zero base")
    return base ** expo


FUNCTIONS: dict[str, Callable] = {
    "exp": exp, "ln": ln, "sin": sin, "cos": cos, "sqrt": sqrt, "abs": fabs,
}


def partial(fn, args, k):
    """Value and exact partial derivative of ``fn(*args)`` in argument ``k``."""
    tag = next(_tags)
    args = list(args)
    args[k] = Dual(args[k], 1.0, tag)
    r = fn(*args)
    if isinstance(r, Dual) and r.tag == tag:
        return r.val, r.der
    return r, 0.0


def _der(r, tag):
    return r.der if isinstance(r, Dual) and r.tag == tag else 0.0


def _val(r, tag):
    return r.val if isinstance(r, Dual) and r.tag == tag else r


def jacobian(fn, x):
    """Values and Jacobian of a vector function ``fn(list) -> list``.

    Returns ``(values, J)`` with ``J[i][k] = d fn_i / d x_k`` as nested lists,
    so results stay differentiable when ``x`` already holds duals.
    """
    x = list(x)
    vals, cols = None, []
    for k in range(len(x)):
        tag = next(_tags)
        xs = list(x)
        xs[k] = Dual(x[k], 1.0, tag)
        r = fn(xs)
        cols.append([_der(ri, tag) for ri in r])
        if vals is None:
            vals = [_val(ri, tag) for ri in r]
    if vals is None:
        vals = list(fn(x))
    return vals, [list(row) for row in zip(*cols)] if cols else [[] for _ in vals]


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)
_OPERAND_START = {"number", "identifier", "'('", "'-'", "'+'"}


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = []  # (kind, text, char offset)
        pos = 0
        while True:
            m = _TOKEN.match(src, pos)
            if m is None:
                rest = src[pos:]
                if rest.strip() == "":
                    break
                off = pos + (len(rest) - len(rest.lstrip()))
                raise ExprSyntaxError(f"unexpected character {src[off]!r}", self._bytes(off))
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.toks.append(("end", "", len(src)))
        self.i = 0

    def _bytes(self, char_off):
        return len(self.src[:char_off].encode("utf-8"))

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, expected):
        kind, text, off = self.peek()
        what = "end of input" if kind == "end" else f"token {text!r}"
        raise ExprSyntaxError(f"unexpected {what}", self._bytes(off), expected)

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail({"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, off = self.peek()
        if kind == "num":
            self.take()
            return Num(float(text))
        if kind == "id":
            self.take()
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(text, self._bytes(off))
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            return Var(text)
        if kind == "op" and text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(_OPERAND_START)

    def expect(self, ch):
        kind, text, _ = self.peek()
        if kind == "op" and text == ch:
            self.take()
            return
        self.fail({f"'{ch}'", "'+'", "'-'", "'*'", "'/'", "'^'"})


def parse(source: str) -> Node:
    """Parse an infix expression.

    ``^`` is right-associative and binds tighter than unary minus, which binds
    tighter than ``*``/``/``, which bind tighter than ``+``/``-``.

    Raises
    ------
    ExprSyntaxError
        With the byte offset of the offending token and the expected-token set.
    UnknownFunctionError
        For a call to a name outside :data:`FUNCTIONS`.
    """
    return _Parser(source).parse()


def unparse(node: Node) -> str:
    """Render an AST so that ``parse(unparse(a)) == a``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{unparse(node.arg)})"
    if isinstance(node, BinOp):
        return f"({unparse(node.left)} {node.op} {unparse(node.right)})"
    if isinstance(node, Call):
        return f"{node.fn}({unparse(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


def compile_ast(node: Node, constants: Mapping[str, float] | None = None):
    """Compile ``node`` into a callable ``env -> value``.

    Names found in ``constants`` are folded in; all other names are looked up
    in the ``env`` mapping at call time.  The callable works on floats and on
    :class:`Dual` values.
    """
    constants = dict(constants or {})

    def build(n):
        if isinstance(n, Num):
            v = n.value
            return lambda env: v
        if isinstance(n, Var):
            name = n.name
            if name in constants:
                v = constants[name]
                return lambda env: v

            def var(env):
                try:
                    return env[name]
                except KeyError:
                    raise ExprError(f"unbound variable '{name}'") from None
            return var
        if isinstance(n, Neg):
            a = build(n.arg)
            return lambda env: -a(env)
        if isinstance(n, Call):
            a = build(n.arg)
            fn = FUNCTIONS[n.fn]

            def call(env):
                try:
                    return fn(a(env))
                except DomainError as e:
                    raise DomainError(str(e), unparse(n)) from None
            return call
        l, r = build(n.left), build(n.right)
        op = n.op
        if op == "+":
            return lambda env: l(env) + r(env)
        if op == "-":
            return lambda env: l(env) - r(env)
        if op == "*":
            return lambda env: l(env) * r(env)
        if op == "/":
            def div(env):
                den = r(env)
                if value(den) == 0:
                    raise DomainError("division by zero", unparse(n))
                return l(env) / den
            return div

        def pw(env):
            try:
                return _power(l(env), r(env))
            except (DomainError, ZeroDivisionError, OverflowError) as e:
                raise DomainError(str(e) or "invalid power", unparse(n)) from None
        return pw

    return build(node)


def evaluate(node: Node, bindings: Mapping[str, float]) -> float:
    return compile_ast(node)(bindings)


def eval_dual(node: Node, bindings: Mapping[str, float], seed: str) -> tuple[float, float]:
    """Value and exact partial derivative of ``node`` with respect to ``seed``."""
    if seed not in bindings:
        raise ExprError(f"seed variable '{seed}' is not bound")
    missing = variables(node) - set(bindings)
    if missing:
        raise ExprError(f"unbound variables: {', '.join(sorted(missing))}")
    fn = compile_ast(node)
    env = dict(bindings)

    def at(s):
        env[seed] = s
        return fn(env)

    v, d = partial(at, [bindings[seed]], 0)
    return float(v), float(d)


class Expr:
    """A parsed expression that remembers its source text."""

    __slots__ = ("source", "ast")

    def __init__(self, source: str):
        self.source = source
        self.ast = parse(source)

    def __repr__(self):
        return f"Expr({self.source!r})"

    @property
    def names(self) -> set[str]:
        return variables(self.ast)

    def compile(self, constants=None):
        return compile_ast(self.ast, constants)
