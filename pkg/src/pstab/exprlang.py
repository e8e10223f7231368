"""Tiny arithmetic expression language for coefficient and forcing fields.

Config files describe space-time fields as strings such as ``"0.05*cos(x)"`` or
``"sin(2*x)*exp(-t)"``. This module parses them into a small immutable AST and
evaluates that AST in IEEE double precision with plain ``math`` calls (scalar
evaluation is deliberate: field sampling happens once per grid, and scalar
``math`` semantics are reproducible bit for bit across platforms, which the
round-trip tests rely on).

Grammar, tightest binding first:

    ^            right associative
    unary -
    * /
    + -          binary, left associative

Identifiers are fixed: variables ``x``, ``y``, ``t``, the constant ``pi`` and
the functions sin, cos, exp, log, abs, min, max, tanh, sqrt. There are no user
definitions and no assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    ArityMismatch,
    DomainError,
    ExprSyntaxError,
    UnknownIdentifier,
)

__all__ = [
    "Expr",
    "Num",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "evaluate",
    "pretty_print",
    "free_variables",
]

_FUNCTIONS = {
    "sin": (math.sin, 1),
    "cos": (math.cos, 1),
    "exp": (math.exp, 1),
    "log": (math.log, 1),
    "abs": (abs, 1),
    "min": (min, 2),
    "max": (max, 2),
    "tanh": (math.tanh, 1),
    "sqrt": (math.sqrt, 1),
}

_VARIABLES = ("x", "y", "t")
_CONSTANTS = {"pi": math.pi}

# binding powers; the right operand of ^ is parsed at _POW - 1, which is what
# makes it right associative, and a unary minus operand is parsed at _UNARY so
# that -2^2 == -(2^2) while -2*3 == (-2)*3
_ADD, _MUL, _UNARY, _POW = 10, 20, 30, 40


class Expr:
    """Base class for AST nodes. Nodes are frozen and compare structurally."""

    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Const(Expr):
    name: str
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "ident", one of "+-*/^(,)" or "end"
    text: str
    pos: int


def _lex(source):
    tokens = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            start = i
            while i < n and source[i].isdigit():
                i += 1
            if i < n and source[i] == ".":
                i += 1
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "eE":
                j = i + 1
                if j < n and source[j] in "+-":
                    j += 1
                if j < n and source[j].isdigit():
                    i = j
                    while i < n and source[i].isdigit():
                        i += 1
                else:
                    raise ExprSyntaxError("malformed exponent", j, ("digit",))
            tokens.append(_Token("num", source[start:i], start))
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            tokens.append(_Token("ident", source[start:i], start))
            continue
        if ch in "+-*/^(),":
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i, ("expression",))
    tokens.append(_Token("end", "", n))
    return tokens


_MAX_DEPTH = 300  # keeps adversarial input clear of the interpreter stack limit


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _lex(source)
        self.pos = 0
        self.depth = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.peek()
        if tok.kind != kind:
            raise ExprSyntaxError(
                f"unexpected {tok.kind!r}", tok.pos, (repr(kind),)
            )
        return self.advance()

    def parse(self):
        expr = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(
                f"trailing input {tok.text!r}", tok.pos, ("operator", "end of input")
            )
        return expr

    def expression(self, min_bp):
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            raise ExprSyntaxError(
                "expression nested too deeply", self.peek().pos, ()
            )
        try:
            lhs = self.prefix()
            while True:
                tok = self.peek()
                if tok.kind in "+-" and _ADD > min_bp:
                    self.advance()
                    lhs = BinOp(tok.kind, lhs, self.expression(_ADD))
                elif tok.kind in "*/" and _MUL > min_bp:
                    self.advance()
                    lhs = BinOp(tok.kind, lhs, self.expression(_MUL))
                elif tok.kind == "^" and _POW > min_bp:
                    self.advance()
                    lhs = BinOp("^", lhs, self.expression(_POW - 1))
                else:
                    return lhs
        finally:
            self.depth -= 1

    def prefix(self):
        tok = self.advance()
        if tok.kind == "num":
            try:
                value = float(tok.text)
            except ValueError:
                # isdigit() admits unicode digits that float() rejects
                raise ExprSyntaxError(
                    f"malformed number {tok.text!r}", tok.pos, ()
                ) from None
            if math.isinf(value):
                raise ExprSyntaxError("number literal overflows", tok.pos, ())
            return Num(value)
        if tok.kind == "-":
            return Neg(self.expression(_UNARY))
        if tok.kind == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        if tok.kind == "ident":
            return self.identifier(tok)
        raise ExprSyntaxError(
            f"unexpected {tok.kind!r}",
            tok.pos,
            ("number", "identifier", "'('", "'-'"),
        )

    def identifier(self, tok):
        name = tok.text
        if name in _CONSTANTS:
            return Const(name, _CONSTANTS[name])
        if name in _VARIABLES:
            return Var(name)
        if name in _FUNCTIONS:
            _, arity = _FUNCTIONS[name]
            self.expect("(")
            args = [self.expression(0)]
            while self.peek().kind == ",":
                self.advance()
                args.append(self.expression(0))
            self.expect(")")
            if len(args) != arity:
                raise ArityMismatch(
                    f"{name} takes {arity} argument(s), got {len(args)}",
                    tok.pos,
                    (f"{arity} argument(s)",),
                )
            return Call(name, tuple(args))
        raise UnknownIdentifier(
            f"unknown identifier {name!r}", tok.pos, ("x", "y", "t", "pi", "function")
        )


def parse(source):
    """Parse ``source`` into an :class:`Expr`.

    Raises :class:`ExprSyntaxError` (or a subclass) with the byte offset of the
    offending token and the set of token kinds that would have been accepted.
    """
    return _Parser(source).parse()


def free_variables(expr):
    """Set of variable names (subset of x, y, t) appearing in ``expr``."""
    out = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack.append(node.lhs)
            stack.append(node.rhs)
        elif isinstance(node, Call):
            stack.extend(node.args)
    return out


def evaluate(expr, x=0.0, y=None, t=0.0):
    """Evaluate ``expr`` at a point, in IEEE double precision.

    ``y`` stays unbound for one-dimensional domains; referencing it then raises
    :class:`UnknownIdentifier`. log and sqrt outside their real domain, zero
    division, and overflow raise :class:`DomainError`.
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        if expr.name == "x":
            return x
        if expr.name == "t":
            return t
        if y is None:
            raise UnknownIdentifier("variable 'y' is not bound here", 0, ())
        return y
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, x, y, t)
    if isinstance(expr, BinOp):
        a = evaluate(expr.lhs, x, y, t)
        b = evaluate(expr.rhs, x, y, t)
        op = expr.op
        try:
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                return a / b
            return math.pow(a, b)
        except ZeroDivisionError:
            raise DomainError(f"division by zero ({a!r} {op} {b!r})") from None
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{a!r} ^ {b!r}: {exc}") from None
    if isinstance(expr, Call):
        args = [evaluate(a, x, y, t) for a in expr.args]
        if expr.name == "log" and args[0] <= 0.0:
            raise DomainError(f"log of nonpositive value {args[0]!r}")
        if expr.name == "sqrt" and args[0] < 0.0:
            raise DomainError(f"sqrt of negative value {args[0]!r}")
        fn, _ = _FUNCTIONS[expr.name]
        try:
            return fn(*args)
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{expr.name}{tuple(args)!r}: {exc}") from None
    raise TypeError(f"not an Expr node: {expr!r}")


def _prec(node):
    if isinstance(node, BinOp):
        return {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "^": _POW}[node.op]
    if isinstance(node, Neg):
        return _UNARY
    return 100


def pretty_print(expr):
    """Render ``expr`` back to source.

    Minimal parenthesization: ``parse(pretty_print(parse(s)))`` is structurally
    identical to ``parse(s)`` for every valid ``s``.
    """
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, (Const, Var)):
        return expr.name
    if isinstance(expr, Neg):
        inner = pretty_print(expr.operand)
        if _prec(expr.operand) < _UNARY:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(expr, BinOp):
        bp = _prec(expr)
        lhs = pretty_print(expr.lhs)
        rhs = pretty_print(expr.rhs)
        if expr.op == "^":
            # right associative: parenthesize an equal-precedence left child
            if _prec(expr.lhs) <= bp:
                lhs = f"({lhs})"
            if _prec(expr.rhs) < bp:
                rhs = f"({rhs})"
        else:
            if _prec(expr.lhs) < bp:
                lhs = f"({lhs})"
            if _prec(expr.rhs) <= bp:
                rhs = f"({rhs})"
        return f"{lhs}{expr.op}{rhs}"
    if isinstance(expr, Call):
        return f"{expr.name}(" + ", ".join(pretty_print(a) for a in expr.args) + ")"
    raise TypeError(f"not an Expr node: {expr!r}")
