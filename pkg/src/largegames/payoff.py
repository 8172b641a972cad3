"""A small expression language for payoffs ``v(a, mu)``.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := power (("*" | "/") power)*
    power  := unary ("^" power)?            # right associative
    unary  := "-" unary | atom              # binds tighter than "^": -x^2 == (-x)^2
    atom   := NUMBER | "(" expr ")" | call
    call   := "coord" "(" INT ")" | "isact" "(" LABEL ")" | "mu" "(" LABEL ")"
            | "avg" "(" expr ")" | FUNC "(" expr ("," expr)* ")"
    FUNC   := min | max | exp | log | abs | pow
    LABEL  := identifier | number | 'quoted' | "quoted"

``mu(x)`` is the summary's weight on point ``x``; ``isact(x)`` is 1 when the own
action is ``x``; ``coord(k)`` is the k-th coordinate of the own action;
``avg(e)`` is ``sum_j mu(j) * e`` with the own action rebound to ``j``.
"""
from __future__ import annotations

import math
import re
import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from largegames.errors import BindError, DomainError, EvaluationError, PayoffSyntaxError, StructuralError
from largegames.spaces import FiniteMetricSpace

MAX_AVG_DEPTH = 2
FUNCTIONS = {"min": (2, None), "max": (2, None), "exp": (1, 1), "log": (1, 1), "abs": (1, 1), "pow": (2, 2)}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

_loc = dict(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    value: float
    pos: Optional[tuple] = field(**_loc)

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v) or v < 0:
            raise DomainError(f"constants must be finite and nonnegative (use Neg), got {self.value!r}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Coord:
    k: int
    pos: Optional[tuple] = field(**_loc)


@dataclass(frozen=True)
class IsAct:
    label: str
    pos: Optional[tuple] = field(**_loc)


@dataclass(frozen=True)
class Mu:
    label: str
    pos: Optional[tuple] = field(**_loc)


@dataclass(frozen=True)
class Avg:
    expr: "Node"
    pos: Optional[tuple] = field(**_loc)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: Optional[tuple] = field(**_loc)


@dataclass(frozen=True)
class BinOp:
    left: "Node"
    right: "Node"
    pos: Optional[tuple] = field(**_loc)
    symbol = "?"


class Add(BinOp):
    symbol = "+"


class Sub(BinOp):
    symbol = "-"


class Mul(BinOp):
    symbol = "*"


class Div(BinOp):
    symbol = "/"


class Pow(BinOp):
    symbol = "^"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: Optional[tuple] = field(**_loc)


Node = Union[Const, Coord, IsAct, Mu, Avg, Neg, BinOp, Call]
_BINOPS = {"+": Add, "-": Sub, "*": Mul, "/": Div, "^": Pow}


def children(node) -> tuple:
    if isinstance(node, (Avg,)):
        return (node.expr,)
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def walk(node):
    yield node
    for c in children(node):
        yield from walk(c)


# ---------------------------------------------------------------------------
# Tokenizer and parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^'\n]*'|"[^"\n]*")
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = self._tokenize(text)
        self.i = 0
        self.avg_depth = 0

    def where(self, offset: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, offset) + 1
        col = offset - (self.text.rfind("\n", 0, offset) + 1) + 1
        return line, col

    def error(self, message: str, offset: int):
        line, col = self.where(offset)
        raise PayoffSyntaxError(message, line, col, self.text)

    def _tokenize(self, text):
        toks, pos = [], 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                self.error(f"unexpected character {text[pos]!r}", pos)
            if m.lastgroup != "ws":
                toks.append(_Tok(m.lastgroup, m.group(), pos))
            pos = m.end()
        toks.append(_Tok("eof", "", len(text)))
        return toks

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind not in ("op",):
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}", self.tok.offset)
        return self.take()

    def parse(self):
        if self.tok.kind == "eof":
            self.error("empty expression", 0)
        node = self.expr()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            t = self.take()
            node = _BINOPS[t.text](node, self.term(), pos=self.where(t.offset))
        return node

    def term(self):
        node = self.power()
        while self.tok.kind == "op" and self.tok.text in "*/":
            t = self.take()
            node = _BINOPS[t.text](node, self.power(), pos=self.where(t.offset))
        return node

    def power(self):
        base = self.unary()
        if self.tok.kind == "op" and self.tok.text == "^":
            t = self.take()
            return Pow(base, self.power(), pos=self.where(t.offset))
        return base

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            t = self.take()
            return Neg(self.unary(), pos=self.where(t.offset))
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.take()
            return Const(float(t.text), pos=self.where(t.offset))
        if t.kind == "op" and t.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "ident":
            return self.call()
        found = t.text or "end of input"
        self.error(f"expected a number, '(' or a function call, found {found!r}", t.offset)

    def label(self) -> str:
        t = self.tok
        if t.kind in ("ident", "number"):
            self.take()
            return t.text
        if t.kind == "string":
            self.take()
            return t.text[1:-1]
        self.error("expected a point label", t.offset)

    def call(self):
        name_tok = self.take()
        name, pos = name_tok.text, self.where(name_tok.offset)
        if self.tok.text != "(":
            self.error(f"expected '(' after {name!r}", self.tok.offset)
        self.take()
        if name == "coord":
            t = self.tok
            if t.kind != "number" or not t.text.isdigit():
                self.error("coord() takes a nonnegative integer index", t.offset)
            self.take()
            node = Coord(int(t.text), pos=pos)
        elif name in ("mu", "isact"):
            node = (Mu if name == "mu" else IsAct)(self.label(), pos=pos)
        elif name == "avg":
            self.avg_depth += 1
            if self.avg_depth > MAX_AVG_DEPTH:
                self.error(f"avg() nested deeper than {MAX_AVG_DEPTH}", name_tok.offset)
            inner = self.expr()
            self.avg_depth -= 1
            node = Avg(inner, pos=pos)
        elif name in FUNCTIONS:
            args = [self.expr()]
            while self.tok.text == "," and self.tok.kind == "op":
                self.take()
                args.append(self.expr())
            lo, hi = FUNCTIONS[name]
            if len(args) < lo or (hi is not None and len(args) > hi):
                want = f"{lo}" if lo == hi else (f"at least {lo}" if hi is None else f"{lo}-{hi}")
                self.error(f"{name}() takes {want} argument(s), got {len(args)}", name_tok.offset)
            node = Call(name, tuple(args), pos=pos)
        else:
            self.error(f"unknown function {name!r}", name_tok.offset)
        self.expect(")")
        return node


def parse(text: str) -> Node:
    """Parse payoff source into an AST; raises PayoffSyntaxError with line/column."""
    return _Parser(text).parse()


def avg_depth(node) -> int:
    own = 1 if isinstance(node, Avg) else 0
    return own + max((avg_depth(c) for c in children(node)), default=0)


# ---------------------------------------------------------------------------
# Canonical formatting
# ---------------------------------------------------------------------------

_BARE_LABEL = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _fmt_label(label: str) -> str:
    if _BARE_LABEL.fullmatch(label) and label not in FUNCTIONS:
        return label
    if "'" not in label:
        return f"'{label}'"
    if '"' not in label:
        return f'"{label}"'
    raise DomainError(f"label {label!r} cannot be written in payoff source")


def format(expr: Node) -> str:  # noqa: A001 - mirrors parse()
    """Canonical fully parenthesized source; ``parse(format(e)) == e``."""
    if isinstance(expr, Const):
        return repr(expr.value)
    if isinstance(expr, Coord):
        return f"coord({expr.k})"
    if isinstance(expr, IsAct):
        return f"isact({_fmt_label(expr.label)})"
    if isinstance(expr, Mu):
        return f"mu({_fmt_label(expr.label)})"
    if isinstance(expr, Avg):
        return f"avg({format(expr.expr)})"
    if isinstance(expr, Neg):
        return f"(-({format(expr.operand)}))"
    if isinstance(expr, BinOp):
        return f"({format(expr.left)} {expr.symbol} {format(expr.right)})"
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(format(a) for a in expr.args)})"
    raise StructuralError(f"not a payoff node: {expr!r}")


# ---------------------------------------------------------------------------
# Binding and evaluation
# ---------------------------------------------------------------------------

Fn = Callable[[int, list], float]


def _finite(x: float, node) -> float:
    if not math.isfinite(x):
        raise EvaluationError(f"non-finite value {x!r} in {format(node)}", node)
    return x


def _compile(node, space: FiniteMetricSpace) -> Fn:
    """Turn an AST into a closure ``f(action_index, weights_list) -> float``."""
    if isinstance(node, Const):
        v = node.value
        return lambda a, w: v
    if isinstance(node, Coord):
        col = [float(x) for x in space.coords[:, node.k]]
        return lambda a, w: col[a]
    if isinstance(node, IsAct):
        j = space.index(node.label)
        return lambda a, w: 1.0 if a == j else 0.0
    if isinstance(node, Mu):
        j = space.index(node.label)
        return lambda a, w: w[j]
    if isinstance(node, Avg):
        f = _compile(node.expr, space)
        n = len(space)

        def avg(a, w):
            return sum(w[j] * f(j, w) for j in range(n) if w[j] > 0.0)

        return avg
    if isinstance(node, Neg):
        f = _compile(node.operand, space)
        return lambda a, w: -f(a, w)
    if isinstance(node, BinOp):
        fl, fr = _compile(node.left, space), _compile(node.right, space)
        if isinstance(node, Add):
            return lambda a, w: fl(a, w) + fr(a, w)
        if isinstance(node, Sub):
            return lambda a, w: fl(a, w) - fr(a, w)
        if isinstance(node, Mul):
            return lambda a, w: fl(a, w) * fr(a, w)
        if isinstance(node, Div):

            def div(a, w):
                den = fr(a, w)
                if den == 0.0:
                    raise EvaluationError(f"division by zero in {format(node)}", node)
                return _finite(fl(a, w) / den, node)

            return div
        return _power(fl, fr, node)
    if isinstance(node, Call):
        fs = [_compile(x, space) for x in node.args]
        name = node.name
        if name == "min":
            return lambda a, w: min(f(a, w) for f in fs)
        if name == "max":
            return lambda a, w: max(f(a, w) for f in fs)
        if name == "abs":
            f0 = fs[0]
            return lambda a, w: abs(f0(a, w))
        if name == "exp":
            f0 = fs[0]

            def exp(a, w):
                try:
                    return math.exp(f0(a, w))
                except OverflowError:
                    raise EvaluationError(f"overflow in {format(node)}", node) from None

            return exp
        if name == "log":
            f0 = fs[0]

            def log(a, w):
                x = f0(a, w)
                if x <= 0.0:
                    raise EvaluationError(f"log of nonpositive value {x!r} in {format(node)}", node)
                return math.log(x)

            return log
        if name == "pow":
            return _power(fs[0], fs[1], node)
    raise StructuralError(f"cannot compile {node!r}")


def _power(fb, fe, node) -> Fn:
    def power(a, w):
        base, ex = fb(a, w), fe(a, w)
        if base == 0.0 and ex < 0:
            raise EvaluationError(f"zero to a negative power in {format(node)}", node)
        if base < 0.0 and not float(ex).is_integer():
            raise EvaluationError(f"negative base to a fractional power in {format(node)}", node)
        try:
            return _finite(math.pow(base, ex), node)
        except OverflowError:
            raise EvaluationError(f"overflow in {format(node)}", node) from None

    return power


def _check_binding(expr, space: FiniteMetricSpace):
    if avg_depth(expr) > MAX_AVG_DEPTH:
        raise BindError(f"avg() nested deeper than {MAX_AVG_DEPTH}")
    for node in walk(expr):
        if isinstance(node, (Mu, IsAct)) and node.label not in space.labels:
            kind = "mu" if isinstance(node, Mu) else "isact"
            raise BindError(f"unknown point label {node.label!r} in {kind}()", node, node.pos)
        if isinstance(node, Coord):
            if space.coords is None:
                raise BindError("coord() needs a space built from coordinates", node, node.pos)
            if node.k >= space.coords.shape[1]:
                raise BindError(f"coord({node.k}) out of range for {space.coords.shape[1]}-dimensional points", node, node.pos)


_PROBE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def default_probes(space: FiniteMetricSpace, interior: int = 64, seed: int = 0) -> list:
    """Simplex vertices, the uniform measure, and ``interior`` low-discrepancy interior points."""
    from largegames.measures import Measure
    from scipy.stats import qmc

    key = (interior, seed)
    cached = _PROBE_CACHE.setdefault(space, {})
    if key in cached:
        return cached[key]
    n = len(space)
    probes = [Measure.point(space, i) for i in range(n)]
    probes.append(Measure.uniform(space))
    if interior and n > 1:
        u = qmc.Halton(d=n, scramble=True, seed=seed).random(interior)
        # -log(1-u) is exponential; normalized exponentials are uniform on the simplex
        e = -np.log1p(-np.clip(u, 0.0, 1.0 - 1e-12)) + 1e-12
        for row in e / e.sum(axis=1, keepdims=True):
            probes.append(Measure(space, row))
    cached[key] = probes
    return probes


class Payoff:
    """An expression bound to an action space and validated by probing.

    Payoffs compare equal when their expressions are structurally equal and
    they are bound to the same space.
    """

    __slots__ = ("expr", "space", "source", "_fn", "__weakref__")

    def __init__(self, expr: Union[str, Node], space: FiniteMetricSpace, source: Optional[str] = None):
        if isinstance(expr, str):
            source = expr if source is None else source
            expr = parse(expr)
        _check_binding(expr, space)
        self.expr = expr
        self.space = space
        self.source = source if source is not None else format(expr)
        self._fn = _compile(expr, space)
        for probe in default_probes(space):
            w = probe.weights.tolist()
            for a in range(len(space)):
                try:
                    self._fn(a, w)
                except EvaluationError as exc:
                    raise BindError(
                        f"payoff {self.source!r} is undefined at action {space.labels[a]!r} "
                        f"and probe {probe!r}: {exc}",
                        exc.node,
                        getattr(exc.node, "pos", None),
                    ) from None
                except (OverflowError, ValueError, ZeroDivisionError) as exc:
                    raise BindError(f"payoff {self.source!r} is not finite: {exc}") from None

    def __call__(self, action: int, mu) -> float:
        return evaluate(self, action, mu)

    def values(self, mu) -> np.ndarray:
        """Payoff of every action against ``mu``."""
        w = mu.weights.tolist()
        return np.array([self._fn(a, w) for a in range(len(self.space))])

    def __eq__(self, other):
        if not isinstance(other, Payoff):
            return NotImplemented
        return self.space is other.space and self.expr == other.expr

    def __hash__(self):
        return hash((id(self.space), self.expr))

    def __repr__(self):
        return f"Payoff({self.source!r})"

    @property
    def flagged(self) -> bool:
        """True when the expression divides or takes logs (continuity is the author's responsibility)."""
        return any(isinstance(n, Div) or (isinstance(n, Call) and n.name == "log") for n in walk(self.expr))

    @property
    def mu_linear(self) -> bool:
        return mu_degree(self.expr) is not None and mu_degree(self.expr) <= 1


def bind(expr: Union[str, Node], space: FiniteMetricSpace) -> Payoff:
    return Payoff(expr, space)


def evaluate(v: Payoff, action: int, mu) -> float:
    if mu.space is not v.space:
        raise StructuralError("payoff and measure live on different spaces")
    if not 0 <= int(action) < len(v.space):
        raise StructuralError(f"action index {action} out of range")
    return v._fn(int(action), mu.weights.tolist())


def sup_norm_distance(v1: Payoff, v2: Payoff, probes: Optional[Sequence] = None) -> float:
    """Lower estimate of ``sup |v1 - v2|`` over all actions and the probe measures."""
    if v1.space is not v2.space:
        raise StructuralError("payoffs are bound to different spaces")
    if v1 == v2:
        return 0.0
    probes = default_probes(v1.space) if probes is None else list(probes)
    if not probes:
        raise DomainError("sup_norm_distance needs at least one probe")
    best = 0.0
    for mu in probes:
        if mu.space is not v1.space:
            raise StructuralError("probe measure lives on a different space")
        best = max(best, float(np.max(np.abs(v1.values(mu) - v2.values(mu)))))
    return best


# ---------------------------------------------------------------------------
# Static analysis
# ---------------------------------------------------------------------------


def mu_degree(node) -> Optional[int]:
    """Polynomial degree in the summary weights, or None if not polynomial."""
    if isinstance(node, (Const, Coord, IsAct)):
        return 0
    if isinstance(node, Mu):
        return 1
    if isinstance(node, Avg):
        d = mu_degree(node.expr)
        return None if d is None else d + 1
    if isinstance(node, Neg):
        return mu_degree(node.operand)
    if isinstance(node, (Add, Sub)):
        dl, dr = mu_degree(node.left), mu_degree(node.right)
        return None if dl is None or dr is None else max(dl, dr)
    if isinstance(node, Mul):
        dl, dr = mu_degree(node.left), mu_degree(node.right)
        return None if dl is None or dr is None else dl + dr
    if isinstance(node, Div):
        dl, dr = mu_degree(node.left), mu_degree(node.right)
        return dl if dr == 0 else None
    # Pow and function calls: polynomial only when the summary does not enter
    degs = [mu_degree(c) for c in children(node)]
    return 0 if all(d == 0 for d in degs) else None


def lipschitz_bound(v: Payoff) -> Optional[float]:
    """Bound L with ``|v(a, mu) - v(a, nu)| <= L * ||mu - nu||_1`` for every action.

    Returns None when a division, log or power is applied to a summary-dependent
    subterm. Summary-free subterms are bounded by evaluating them exactly.
    """
    space = v.space
    n = len(space)
    dummy = [1.0 / n] * n

    def rec(node) -> Optional[tuple[float, float]]:
        if not any(isinstance(x, (Mu, Avg)) for x in walk(node)):
            f = _compile(node, space)
            return max(abs(f(a, dummy)) for a in range(n)), 0.0
        if isinstance(node, Mu):
            return 1.0, 1.0
        if isinstance(node, Avg):
            r = rec(node.expr)
            return None if r is None else (r[0], r[0] + r[1])
        if isinstance(node, Neg) or (isinstance(node, Call) and node.name == "abs"):
            return rec(children(node)[0])
        if isinstance(node, (Add, Sub)):
            rl, rr = rec(node.left), rec(node.right)
            return None if rl is None or rr is None else (rl[0] + rr[0], rl[1] + rr[1])
        if isinstance(node, Mul):
            rl, rr = rec(node.left), rec(node.right)
            if rl is None or rr is None:
                return None
            return rl[0] * rr[0], rl[0] * rr[1] + rr[0] * rl[1]
        if isinstance(node, Call) and node.name in ("min", "max"):
            rs = [rec(c) for c in node.args]
            if any(r is None for r in rs):
                return None
            return max(r[0] for r in rs), max(r[1] for r in rs)
        if isinstance(node, Call) and node.name == "exp":
            r = rec(node.args[0])
            if r is None:
                return None
            return math.exp(r[0]), math.exp(r[0]) * r[1]
        return None

    r = rec(v.expr)
    return None if r is None else r[1]
