"""Arithmetic expressions for metric coefficients and warp functions.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' ['-' | '+'] NUMBER)*
    atom    := NUMBER | 'pi' | NAME | FUNC '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.  Expressions
compile to a linear ``Tape`` that evaluates either plain values or
second-order jets over a batch of points.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ArityError, DomainError, ExprSyntaxError, UnknownIdentifier
from .jets import Jet2

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")


# --------------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Pi, Var, Neg, BinOp, Pow, Call]


def variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Num, Pi)):
        return set()
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.arg)


# ------------------------------------------------------------------------ parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    while True:
        m = _TOKEN.match(source, pos)
        if m is None:
            rest = source[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad, ("number", "name", "operator"))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, names):
        self.tokens = _tokenize(source)
        self.i = 0
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.peek()
        if value != text or kind == "end":
            raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", pos, (repr(text),))
        self.i += 1

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
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1.0
            if self.peek()[0] == "op" and self.peek()[1] in ("-", "+"):
                sign = -1.0 if self.take()[1] == "-" else 1.0
            kind, value, pos = self.take()
            if kind != "num":
                raise ExprSyntaxError("exponent must be a numeric literal", pos, ("number",))
            node = Pow(node, sign * float(value))
        return node

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifier(value)
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ArityError(f"{value} takes 1 argument, got {len(args)}")
                return Call(value, args[0])
            if value == "pi":
                return Pi()
            if value in FUNCTIONS:
                raise ExprSyntaxError(f"function {value!r} needs an argument list", pos + len(value), ("'('",))
            if self.names is not None and value not in self.names:
                raise UnknownIdentifier(value)
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(
            f"unexpected {value or 'end of input'!r}", pos, ("number", "name", "'('", "'-'")
        )


def parse(source: str, names: Iterable[str] | None = None) -> Expr:
    """Parse ``source`` into an expression tree.

    When ``names`` is given, any variable outside it raises
    ``UnknownIdentifier``.
    """
    if not isinstance(source, str) or source.strip() == "":
        raise ExprSyntaxError("empty expression", 0, ("expression",))
    p = _Parser(source, None if names is None else set(names))
    node = p.expr()
    kind, value, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {value!r}", pos, ("operator", "end of input"))
    return node


def as_expr(e, names=None) -> Expr:
    if isinstance(e, str):
        return parse(e, names)
    if isinstance(e, (int, float)):
        return Num(float(e))
    return e


# ----------------------------------------------------------------------- printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _num(x: float) -> str:
    return repr(float(x))


def to_string(e: Expr) -> str:
    """Render with the minimum parentheses that re-parse to the same tree."""
    if isinstance(e, Num):
        s = _num(e.value)
        return s if e.value >= 0 else f"({s})"
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        return f"-{inner}" if _prec(e.arg) >= 3 else f"-({inner})"
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) < 4:
            base = f"({base})"
        return f"{base}^{_num(e.exponent)}"
    p = _PREC[e.op]
    left = to_string(e.left)
    right = to_string(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ------------------------------------------------------- construction helpers

def _is_num(e, v=None):
    return isinstance(e, Num) and (v is None or e.value == v)


def add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, c: float) -> Expr:
    if c == 0.0:
        return Num(1.0)
    if c == 1.0:
        return a
    return Pow(a, float(c))


def call(f: str, a: Expr) -> Expr:
    return Call(f, a)


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (Num, Pi)):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    return Call(e.func, substitute(e.arg, mapping))


def differentiate(e: Expr, name: str) -> Expr:
    """Exact partial derivative with respect to variable ``name``."""
    if isinstance(e, Var):
        return Num(1.0 if e.name == name else 0.0)
    if isinstance(e, (Num, Pi)):
        return Num(0.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, name))
    if isinstance(e, BinOp):
        da, db = differentiate(e.left, name), differentiate(e.right, name)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.right), mul(e.left, db))
        # (a/b)' = a'/b - a b' / b^2
        return sub(div(da, e.right), div(mul(e.left, db), power(e.right, 2.0)))
    if isinstance(e, Pow):
        du = differentiate(e.base, name)
        return mul(mul(Num(e.exponent), power(e.base, e.exponent - 1.0)), du)
    du = differentiate(e.arg, name)
    if _is_num(du, 0.0):
        return Num(0.0)
    u = e.arg
    outer = {
        "sin": lambda: call("cos", u),
        "cos": lambda: neg(call("sin", u)),
        "exp": lambda: e,
        "log": lambda: div(Num(1.0), u),
        "sqrt": lambda: div(Num(0.5), e),
        "tanh": lambda: sub(Num(1.0), power(e, 2.0)),
    }[e.func]()
    return mul(outer, du)


# -------------------------------------------------------------------------- tape

@dataclass(frozen=True)
class Tape:
    """Linearised instruction list; register ``k`` holds the k-th result.

    Instructions are tuples ``(opcode, *operands)`` where operands are
    register indices, coordinate indices (``var``) or literals
    (``const``, ``pow`` exponent).
    """

    instructions: tuple
    arity: int
    names: tuple

    @property
    def is_constant(self) -> bool:
        return all(ins[0] != "var" for ins in self.instructions)

    def _run(self, points, make_var, make_const, unary):
        regs = []
        for ins in self.instructions:
            op = ins[0]
            if op == "var":
                regs.append(make_var(ins[1]))
            elif op == "const":
                regs.append(make_const(ins[1]))
            elif op == "neg":
                regs.append(-regs[ins[1]])
            elif op == "+":
                regs.append(regs[ins[1]] + regs[ins[2]])
            elif op == "-":
                regs.append(regs[ins[1]] - regs[ins[2]])
            elif op == "*":
                regs.append(regs[ins[1]] * regs[ins[2]])
            elif op == "/":
                regs.append(unary("div", regs[ins[1]], regs[ins[2]]))
            elif op == "pow":
                regs.append(unary("pow", regs[ins[1]], ins[2]))
            else:
                regs.append(unary(op, regs[ins[1]]))
        return regs[-1]

    def value(self, points) -> np.ndarray:
        """Plain floating-point evaluation; ``points[..., arity]``."""
        x = np.asarray(points, dtype=float)
        batch = x.shape[:-1]

        def unary(op, a, b=None):
            a = np.broadcast_to(np.asarray(a, dtype=float), batch) if op != "div" else a
            if op == "div":
                if np.any(np.asarray(b) == 0.0):
                    raise DomainError("division by zero")
                return a / b
            if op == "pow":
                if float(b).is_integer():
                    if b < 0 and np.any(a == 0.0):
                        raise DomainError("negative power of zero")
                    return a ** int(b)
                if np.any(a <= 0.0):
                    raise DomainError(f"non-integer power {b} of non-positive base")
                return a**b
            if op in ("log", "sqrt") and np.any(a <= 0.0):
                raise DomainError(f"{op} of non-positive argument")
            return getattr(np, op)(a)

        out = self._run(x, lambda k: x[..., k], lambda c: c, unary)
        return np.broadcast_to(np.asarray(out, dtype=float), batch).copy()

    def jet(self, points) -> Jet2:
        """Second-order jet evaluation over ``points[..., arity]``."""
        x = np.asarray(points, dtype=float)
        batch, n = x.shape[:-1], self.arity

        def unary(op, a, b=None):
            if op == "div":
                if isinstance(a, Jet2):
                    return a / b
                return b.reciprocal() * a if isinstance(b, Jet2) else a / _nonzero(b)
            if not isinstance(a, Jet2):
                a = Jet2.constant(a, batch, n)
            if op == "pow":
                return a**b
            return getattr(a, op)()

        out = self._run(x, lambda k: Jet2.variable(x[..., k], k, n), lambda c: c, unary)
        if not isinstance(out, Jet2):
            out = Jet2.constant(out, batch, n)
        return out


def _nonzero(b):
    if b == 0:
        raise DomainError("division by zero")
    return b


def compile_expr(e, chart_vars: Sequence[str]) -> Tape:
    """Linearise ``e`` (an Expr or source string) over ``chart_vars``.

    Constant subtrees fold at compile time; repeated subtrees share a
    register.
    """
    chart_vars = tuple(chart_vars)
    e = as_expr(e, chart_vars)
    missing = variables(e) - set(chart_vars)
    if missing:
        raise UnknownIdentifier(sorted(missing)[0])
    instructions = []
    memo = {}

    def emit(ins):
        if ins in memo:
            return memo[ins]
        instructions.append(ins)
        memo[ins] = len(instructions) - 1
        return memo[ins]

    def fold(node):
        # returns (is_constant, value_or_register)
        if isinstance(node, Num):
            return True, node.value
        if isinstance(node, Pi):
            return True, math.pi
        if isinstance(node, Var):
            return False, emit(("var", chart_vars.index(node.name)))
        if isinstance(node, Neg):
            c, v = fold(node.arg)
            return (True, -v) if c else (False, emit(("neg", v)))
        if isinstance(node, Pow):
            c, v = fold(node.base)
            if c:
                return True, _const_eval("pow", v, node.exponent)
            return False, emit(("pow", v, node.exponent))
        if isinstance(node, Call):
            c, v = fold(node.arg)
            if c:
                return True, _const_eval(node.func, v)
            return False, emit((node.func, v))
        cl, vl = fold(node.left)
        cr, vr = fold(node.right)
        if cl and cr:
            return True, _const_eval(node.op, vl, vr)
        ra = vl if not cl else emit(("const", vl))
        rb = vr if not cr else emit(("const", vr))
        return False, emit((node.op, ra, rb))

    is_const, v = fold(e)
    if is_const:
        emit(("const", v))
    return Tape(tuple(instructions), len(chart_vars), chart_vars)


def _const_eval(op, a, b=None):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise DomainError("division by zero")
        return a / b
    if op == "pow":
        if not float(b).is_integer() and a <= 0:
            raise DomainError(f"non-integer power {b} of non-positive base")
        if b < 0 and a == 0:
            raise DomainError("negative power of zero")
        return float(a) ** b
    if op in ("log", "sqrt") and a <= 0:
        raise DomainError(f"{op} of non-positive argument")
    return float(getattr(math, op)(a))
