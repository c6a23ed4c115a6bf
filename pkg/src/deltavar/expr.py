"""Expression parsing and forward-mode differentiation for integrands.

Lagrangians, dynamics right-hand sides, and constraint integrands come in
as text over the variables

    t           current time
    mu          graininess at the current time (bound from the scale)
    y[i]        state component i
    dy[i][j]    j-th delta derivative of component i (dy[i] means dy[i][1])
    u[i]        control component i

with ``+ - * / ^`` (caret is exponentiation, right associative, binding
tighter than unary minus), parentheses, numeric literals, and the unary
functions sin, cos, exp, log, sqrt.  ``abs`` is rejected: integrands are
assumed continuously differentiable and the checkers rely on that.

Grammar (EBNF):

    expr    = term , { ( "+" | "-" ) , term } ;
    term    = factor , { ( "*" | "/" ) , factor } ;
    factor  = "-" , factor | power ;
    power   = atom , [ "^" , factor ] ;
    atom    = NUMBER | variable | FUNC , "(" , expr , ")" | "(" , expr , ")" ;
    variable = "t" | "mu" | ("y" | "u") , "[" , INT , "]"
             | "dy" , "[" , INT , "]" , [ "[" , INT , "]" ] ;

Evaluation is vector-forward-mode: every node carries its value together
with the gradient with respect to all declared variables, so one pass
yields the integrand and every first partial exactly to rounding.  The
values may be numpy arrays (one entry per grid point), which is how the
solvers evaluate a whole trajectory in a single tree walk.  Only first
partials are automated; delta derivatives of sampled partials are taken
by the timescale module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ArityError, EvalDomainError, ParseError

_FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


# --- AST -------------------------------------------------------------------

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
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Arity:
    """Declared dimensions: n states, derivative orders up to r, m controls."""

    n: int
    r: int
    m: int

    def __post_init__(self):
        if self.n < 0 or self.r < 0 or self.m < 0:
            raise ValueError("arity components must be nonnegative")

    def var_names(self) -> list[str]:
        """Canonical variable order: t, mu, states, derivatives, controls."""
        names = ["t", "mu"]
        names += [f"y[{i}]" for i in range(self.n)]
        names += [f"dy[{i}][{j}]" for i in range(self.n) for j in range(1, self.r + 1)]
        names += [f"u[{i}]" for i in range(self.m)]
        return names

    def slot(self, name: str) -> int:
        return self.var_names().index(name)


# --- parser ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^()\[\]]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m or m.end() == pos:
            rest = src[pos:].lstrip()
            if not rest:
                break
            bad_at = len(src) - len(rest)
            raise ParseError(f"unexpected character {rest[0]!r}", bad_at)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("sym", m.group("sym"), m.start("sym")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, arity: Arity):
        self.src = src
        self.arity = arity
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_sym(self, sym: str):
        kind, text, off = self.next()
        if kind != "sym" or text != sym:
            raise ParseError(f"expected {sym!r}, found {text!r}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text in "+-":
                self.next()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text in "*/":
                self.next()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "sym" and text == "-":
            self.next()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "sym" and text == "^":
            self.next()
            # right associative; the exponent may carry a unary minus
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        kind, text, off = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "sym" and text == "(":
            node = self.expr()
            self.expect_sym(")")
            return node
        if kind == "ident":
            return self.ident(text, off)
        raise ParseError(f"expected a value, found {text!r}" if text else "unexpected end of input", off)

    def bracket_int(self) -> int:
        self.expect_sym("[")
        kind, text, off = self.next()
        if kind != "num" or not re.fullmatch(r"\d+", text):
            raise ParseError(f"expected a nonnegative integer index, found {text!r}", off)
        self.expect_sym("]")
        return int(text)

    def ident(self, name: str, off: int) -> Node:
        if name == "t" or name == "mu":
            return Var(name)
        if name in ("y", "u", "dy"):
            idx = self.bracket_int()
            bound = self.arity.n if name in ("y", "dy") else self.arity.m
            if idx >= bound:
                raise ArityError(
                    f"{name}[{idx}] exceeds the declared dimension {bound}", off
                )
            if name == "y":
                return Var(f"y[{idx}]")
            if name == "u":
                return Var(f"u[{idx}]")
            order = 1
            kind, text, _ = self.peek()
            if kind == "sym" and text == "[":
                order = self.bracket_int()
            if not 1 <= order <= self.arity.r:
                raise ArityError(
                    f"dy[{idx}][{order}] exceeds the declared derivative order {self.arity.r}", off
                )
            return Var(f"dy[{idx}][{order}]")
        if name in _FUNCTIONS:
            self.expect_sym("(")
            node = self.expr()
            self.expect_sym(")")
            return Call(name, node)
        if name == "abs":
            raise ParseError("abs is not differentiable and is not supported", off)
        raise ParseError(f"unknown identifier {name!r}", off)


# --- printing ----------------------------------------------------------------

_LEVEL_ADD, _LEVEL_MUL, _LEVEL_UNARY, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _level(node: Node) -> int:
    if isinstance(node, BinOp):
        return {"+": _LEVEL_ADD, "-": _LEVEL_ADD, "*": _LEVEL_MUL, "/": _LEVEL_MUL, "^": _LEVEL_POW}[node.op]
    if isinstance(node, Neg):
        return _LEVEL_UNARY
    if isinstance(node, Num) and node.value < 0:
        return _LEVEL_UNARY
    return _LEVEL_ATOM


def _emit(node: Node, minimum: int) -> str:
    text = _format(node)
    if _level(node) < minimum:
        return f"({text})"
    return text


def _format(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _emit(node.arg, _LEVEL_UNARY)
    if isinstance(node, Call):
        return f"{node.fn}({_format(node.arg)})"
    if node.op in "+-":
        return f"{_emit(node.left, _LEVEL_ADD)} {node.op} {_emit(node.right, _LEVEL_ADD + 1)}"
    if node.op in "*/":
        return f"{_emit(node.left, _LEVEL_MUL)}{node.op}{_emit(node.right, _LEVEL_MUL + 1)}"
    # caret: left side must be atomic, right side may be unary or another power
    return f"{_emit(node.left, _LEVEL_ATOM)}^{_emit(node.right, _LEVEL_UNARY)}"


def format_expr(node: Node) -> str:
    return _format(node)


# --- transformation helpers ---------------------------------------------------

def subst(node: Node, mapping: Mapping[str, Node]) -> Node:
    """Replace variables by subtrees (used by the sigma-form and order reductions)."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return Neg(subst(node.arg, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, subst(node.left, mapping), subst(node.right, mapping))
    if isinstance(node, Call):
        return Call(node.fn, subst(node.arg, mapping))
    return node


def _collect_vars(node: Node, out: set[str]) -> None:
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _collect_vars(node.arg, out)
    elif isinstance(node, BinOp):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)
    elif isinstance(node, Call):
        _collect_vars(node.arg, out)


def _poly_degree(node: Node) -> int | None:
    """Total degree in the decision variables (y, dy, u); None if not polynomial.

    t and mu count as coefficients: exp(t)*y[0]^2 is still quadratic.
    """
    if isinstance(node, Num):
        return 0
    if isinstance(node, Var):
        return 0 if node.name in ("t", "mu") else 1
    if isinstance(node, Neg):
        return _poly_degree(node.arg)
    if isinstance(node, Call):
        d = _poly_degree(node.arg)
        if d == 0:
            return 0
        return None
    left = _poly_degree(node.left)
    right = _poly_degree(node.right)
    if left is None or right is None:
        return None
    if node.op in "+-":
        return max(left, right)
    if node.op == "*":
        return left + right
    if node.op == "/":
        return left if right == 0 else None
    # power: polynomial only for constant nonnegative integer exponents
    if isinstance(node.right, Num) and float(node.right.value).is_integer() and node.right.value >= 0:
        return left * int(node.right.value)
    if left == 0 and right == 0:
        return 0
    return None


# --- evaluation ----------------------------------------------------------------

def _eval(node: Node, env: Mapping[str, np.ndarray], slots: Mapping[str, int], nvars: int):
    """Return (value, gradient) with numpy broadcasting; gradient axis 0 is the variable."""
    if isinstance(node, Num):
        return node.value, 0.0
    if isinstance(node, Var):
        try:
            val = env[node.name]
        except KeyError:
            raise ValueError(f"no value assigned to variable {node.name}") from None
        val = np.asarray(val, dtype=float)
        grad = np.zeros((nvars,) + val.shape)
        grad[slots[node.name]] = 1.0
        return val, grad
    if isinstance(node, Neg):
        val, grad = _eval(node.arg, env, slots, nvars)
        return -val, -grad
    if isinstance(node, Call):
        val, grad = _eval(node.arg, env, slots, nvars)
        if node.fn == "sin":
            return np.sin(val), np.cos(val) * grad
        if node.fn == "cos":
            return np.cos(val), -np.sin(val) * grad
        if node.fn == "exp":
            out = np.exp(val)
            return out, out * grad
        if node.fn == "log":
            if np.any(np.asarray(val) <= 0):
                raise EvalDomainError("log of a nonpositive value")
            return np.log(val), grad / val
        if node.fn == "sqrt":
            if np.any(np.asarray(val) <= 0):
                raise EvalDomainError("sqrt of a nonpositive value")
            out = np.sqrt(val)
            return out, grad / (2.0 * out)
        raise ValueError(f"unknown function {node.fn}")  # unreachable after parsing
    lval, lgrad = _eval(node.left, env, slots, nvars)
    if node.op == "^":
        if isinstance(node.right, Num) and float(node.right.value).is_integer():
            k = int(node.right.value)
            if k < 0 and np.any(np.asarray(lval) == 0):
                raise EvalDomainError("zero raised to a negative power")
            if k == 0:
                return np.ones_like(np.asarray(lval, dtype=float)), 0.0 * lgrad
            return lval ** k, k * lval ** (k - 1) * lgrad
        rval, rgrad = _eval(node.right, env, slots, nvars)
        if np.any(np.asarray(lval) <= 0):
            raise EvalDomainError("power with non-integer exponent needs a positive base")
        out = lval ** rval
        return out, out * (rgrad * np.log(lval) + rval * lgrad / lval)
    rval, rgrad = _eval(node.right, env, slots, nvars)
    if node.op == "+":
        return lval + rval, lgrad + rgrad
    if node.op == "-":
        return lval - rval, lgrad - rgrad
    if node.op == "*":
        return lval * rval, lgrad * rval + lval * rgrad
    if np.any(np.asarray(rval) == 0):
        raise EvalDomainError("division by zero")
    return lval / rval, (lgrad * rval - lval * rgrad) / (rval * rval)


def _eval_value(node: Node, env: Mapping[str, np.ndarray]):
    """Value-only twin of ``_eval`` for hot paths that need no gradient."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return np.asarray(env[node.name], dtype=float)
        except KeyError:
            raise ValueError(f"no value assigned to variable {node.name}") from None
    if isinstance(node, Neg):
        return -_eval_value(node.arg, env)
    if isinstance(node, Call):
        val = _eval_value(node.arg, env)
        if node.fn == "sin":
            return np.sin(val)
        if node.fn == "cos":
            return np.cos(val)
        if node.fn == "exp":
            return np.exp(val)
        if node.fn == "log":
            if np.any(np.asarray(val) <= 0):
                raise EvalDomainError("log of a nonpositive value")
            return np.log(val)
        if np.any(np.asarray(val) <= 0):
            raise EvalDomainError("sqrt of a nonpositive value")
        return np.sqrt(val)
    lval = _eval_value(node.left, env)
    if node.op == "^":
        if isinstance(node.right, Num) and float(node.right.value).is_integer():
            k = int(node.right.value)
            if k < 0 and np.any(np.asarray(lval) == 0):
                raise EvalDomainError("zero raised to a negative power")
            return np.ones_like(np.asarray(lval, dtype=float)) if k == 0 else lval ** k
        rval = _eval_value(node.right, env)
        if np.any(np.asarray(lval) <= 0):
            raise EvalDomainError("power with non-integer exponent needs a positive base")
        return lval ** rval
    rval = _eval_value(node.right, env)
    if node.op == "+":
        return lval + rval
    if node.op == "-":
        return lval - rval
    if node.op == "*":
        return lval * rval
    if np.any(np.asarray(rval) == 0):
        raise EvalDomainError("division by zero")
    return lval / rval


@dataclass(frozen=True, eq=False)
class LagrangianExpr:
    """A parsed integrand together with its declared arity."""

    ast: Node
    arity: Arity

    def __post_init__(self):
        used: set[str] = set()
        _collect_vars(self.ast, used)
        allowed = set(self.arity.var_names())
        stray = used - allowed
        if stray:
            raise ArityError(f"variables {sorted(stray)} exceed the declared arity {self.arity}")
        object.__setattr__(self, "used_vars", frozenset(used))
        object.__setattr__(self, "_slots", {name: i for i, name in enumerate(self.arity.var_names())})

    def __eq__(self, other) -> bool:
        if not isinstance(other, LagrangianExpr):
            return NotImplemented
        return self.ast == other.ast and self.arity == other.arity

    def to_source(self) -> str:
        return format_expr(self.ast)

    def __repr__(self) -> str:
        return f"LagrangianExpr({self.to_source()!r}, {self.arity})"

    @property
    def nvars(self) -> int:
        return len(self._slots)

    def slot(self, name: str) -> int:
        return self._slots[name]

    def polynomial_degree(self) -> int | None:
        return _poly_degree(self.ast)

    def evaluate(self, env: Mapping[str, np.ndarray]):
        """Value and full gradient over ``env`` arrays (broadcast together).

        Returns (values, grads) where grads has one leading axis indexing
        the canonical variable order of the arity.
        """
        val, grad = _eval(self.ast, env, self._slots, self.nvars)
        val = np.asarray(val, dtype=float)
        grad = np.broadcast_to(np.asarray(grad, dtype=float), (self.nvars,) + val.shape).copy()
        return val, grad

    def evaluate_value(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        """Values only; used by forward simulation and exhaustive search."""
        return np.asarray(_eval_value(self.ast, env), dtype=float)

    def eval_with_partials(self, point: Mapping[str, float]) -> tuple[float, dict[str, float]]:
        """Value and one first partial per declared variable, at a scalar point.

        Every variable that appears in the expression must be assigned;
        declared-but-unused variables may be omitted (their partials are 0).
        """
        missing = [name for name in sorted(self.used_vars) if name not in point]
        if missing:
            raise ValueError(f"point is missing values for {missing}")
        val, grad = self.evaluate({k: np.asarray(float(v)) for k, v in point.items() if k in self._slots})
        partials = {name: float(grad[i]) for name, i in self._slots.items()}
        return float(val), partials

    def substituted(self, mapping: Mapping[str, Node], arity: Arity | None = None) -> "LagrangianExpr":
        return LagrangianExpr(subst(self.ast, mapping), arity or self.arity)


def parse(src: str, arity: Arity) -> LagrangianExpr:
    """Parse expression text into a validated ``LagrangianExpr``.

    Raises ParseError (with byte offset) on malformed input, unknown
    identifiers, and indices outside the declared arity.
    """
    if not src or not src.strip():
        raise ParseError("empty expression", 0)
    return LagrangianExpr(_Parser(src, arity).parse(), arity)
