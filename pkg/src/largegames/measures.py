"""Finitely supported probability measures and two metrics between them.

``prohorov`` is the Lévy-Prohorov metric, with enlargements taken as open
neighbourhoods ``Q^eps = {y : d(x, y) < eps for some x in Q}``. ``bl_distance``
is the dual bounded-Lipschitz metric, the supremum of ``|∫ h d(P - H)|`` over
functions with ``sup|h| + Lip(h) <= 1``. Both metrize weak convergence.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np

from largegames._simplex import LPError, simplex_max
from largegames.errors import DomainError, StructuralError
from largegames.spaces import ActionSubset, FiniteMetricSpace

SUM_TOL = 1e-9
EXHAUSTIVE_MAX_SUPPORT = 20

__all__ = [
    "Measure",
    "mix",
    "weighted_empirical",
    "prohorov",
    "bl_distance",
    "pushforward",
    "format_weight",
]


def format_weight(x: float) -> str:
    return f"{float(x):.12g}"


@dataclass(frozen=True, eq=False)
class Measure:
    """Probability weights over the points of ``space``.

    Weights within ``SUM_TOL`` of summing to one are renormalized; anything
    further off is rejected. Tiny negative round-off (> -1e-12) is clipped.
    """

    space: FiniteMetricSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape != (len(self.space),):
            raise StructuralError(f"expected {len(self.space)} weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)):
            raise DomainError("measure weights must be finite")
        if np.any(w < -1e-12):
            raise DomainError(f"negative measure weight {w.min()!r}")
        w = np.maximum(w, 0.0)
        total = w.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise DomainError(f"measure weights sum to {total!r}, not 1")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point(cls, space: FiniteMetricSpace, i: Union[int, str]) -> "Measure":
        w = np.zeros(len(space))
        w[i if isinstance(i, (int, np.integer)) else space.index(i)] = 1.0
        return cls(space, w)

    @classmethod
    def uniform(cls, space: FiniteMetricSpace, on: Optional[ActionSubset] = None) -> "Measure":
        w = np.zeros(len(space))
        members = list(on.members) if on is not None else list(range(len(space)))
        w[members] = 1.0 / len(members)
        return cls(space, w)

    @classmethod
    def from_dict(cls, space: FiniteMetricSpace, mapping: Mapping[str, float]) -> "Measure":
        w = np.zeros(len(space))
        for label, value in mapping.items():
            w[space.index(label)] += float(value)
        return cls(space, w)

    def to_dict(self, digits: bool = False) -> dict:
        """Label -> weight over the support (weights as 12-significant-digit strings if ``digits``)."""
        out = {}
        for i in self.support:
            out[self.space.labels[i]] = format_weight(self.weights[i]) if digits else float(self.weights[i])
        return out

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.weights > 0)[0]

    def mass(self, subset: Union[ActionSubset, Iterable[int]]) -> float:
        idx = list(subset.members if isinstance(subset, ActionSubset) else subset)
        return float(self.weights[idx].sum())

    def __getitem__(self, key) -> float:
        if isinstance(key, str):
            key = self.space.index(key)
        return float(self.weights[key])

    def __eq__(self, other):
        if not isinstance(other, Measure):
            return NotImplemented
        return self.space is other.space and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((id(self.space), self.weights.tobytes()))

    def isclose(self, other: "Measure", atol: float = 1e-12) -> bool:
        _same_space(self, other)
        return bool(np.allclose(self.weights, other.weights, rtol=0.0, atol=atol))

    def __repr__(self):
        body = ", ".join(f"{k}: {format_weight(v)}" for k, v in self.to_dict().items())
        return f"Measure({{{body}}})"


def _same_space(p: Measure, h: Measure):
    if p.space is not h.space:
        raise StructuralError("measures live on different spaces")


def mix(components: Sequence[tuple[float, Measure]]) -> Measure:
    """Convex combination ``sum(mass * measure)``."""
    if not components:
        raise DomainError("mix of no components")
    space = components[0][1].space
    total = 0.0
    acc = np.zeros(len(space))
    for mass, m in components:
        if m.space is not space:
            raise StructuralError("mix: components live on different spaces")
        if mass < 0:
            raise DomainError(f"mix: negative mass {mass!r}")
        total += mass
        acc += mass * m.weights
    if abs(total - 1.0) > SUM_TOL:
        raise DomainError(f"mix: masses sum to {total!r}, not 1")
    return Measure(space, acc)


def weighted_empirical(space: FiniteMetricSpace, points: Sequence[int], weights: Sequence[float]) -> Measure:
    """Measure with weight ``weights[j]`` at ``points[j]``; duplicates accumulate."""
    pts = np.asarray(points, dtype=int).reshape(-1)
    wts = np.asarray(weights, dtype=float).reshape(-1)
    if pts.shape != wts.shape:
        raise StructuralError("points and weights differ in length")
    if pts.size and (pts.min() < 0 or pts.max() >= len(space)):
        raise StructuralError(f"point index out of range for {len(space)} points")
    if np.any(wts < 0):
        raise DomainError("negative empirical weight")
    return Measure(space, np.bincount(pts, weights=wts, minlength=len(space)))


def pushforward(
    m: Measure,
    mapping: Union[Mapping[int, int], Sequence[int], Callable[[int], int]],
    target: Optional[FiniteMetricSpace] = None,
) -> Measure:
    """Image measure of ``m`` under a point map into ``target`` (default: same space)."""
    target = m.space if target is None else target
    out = np.zeros(len(target))
    for i in m.support:
        try:
            j = mapping(int(i)) if callable(mapping) else mapping[int(i)]
        except (KeyError, IndexError):
            raise StructuralError(f"pushforward: support point {m.space.labels[i]!r} is unmapped") from None
        if not 0 <= int(j) < len(target):
            raise StructuralError(f"pushforward: image index {j} out of range")
        out[int(j)] += m.weights[i]
    return Measure(target, out)


# ---------------------------------------------------------------------------
# Prohorov metric
# ---------------------------------------------------------------------------


def _subset_table(values: np.ndarray) -> np.ndarray:
    """table[mask] = sum(values[b] for bits b of mask), built by doubling."""
    table = np.zeros(1 << len(values))
    for b, v in enumerate(values):
        half = 1 << b
        table[half : 2 * half] = table[:half] + v
    return table


def _union_table(neighbours: np.ndarray) -> np.ndarray:
    """table[mask] = bitwise OR of neighbours[b] for bits b of mask."""
    table = np.zeros(1 << len(neighbours), dtype=np.uint64)
    for b, nb in enumerate(neighbours):
        half = 1 << b
        table[half : 2 * half] = table[:half] | np.uint64(nb)
    return table


class _ExhaustiveSide:
    """Checks ``P(Q) <= eps + H(Q^eps)`` for every Q by enumerating subsets of supp P."""

    def __init__(self, d: np.ndarray, p_idx, p_w, h_idx, h_w):
        self.block = d[np.ix_(p_idx, h_idx)]
        self.p_table = _subset_table(p_w)
        self.h_table = _subset_table(h_w)
        self.bits = (np.uint64(1) << np.arange(len(h_idx), dtype=np.uint64))

    def deficiency(self, eps: float) -> float:
        """max over Q of P(Q) - H(Q^eps)."""
        adj = self.block < eps
        neighbours = [int(np.bitwise_or.reduce(self.bits[row])) if row.any() else 0 for row in adj]
        union = _union_table(np.array(neighbours, dtype=np.uint64))
        return float(np.max(self.p_table - self.h_table[union.astype(np.int64)]))

    def ok(self, eps: float) -> bool:
        return self.deficiency(eps) <= eps


class _FlowSide:
    """Same check via max flow: max_Q [P(Q) - H(Q^eps)] = 1 - maxflow."""

    def __init__(self, d: np.ndarray, p_idx, p_w, h_idx, h_w):
        self.block = d[np.ix_(p_idx, h_idx)]
        self.p_w = p_w
        self.h_w = h_w

    def deficiency(self, eps: float) -> float:
        g = nx.DiGraph()
        for i, w in enumerate(self.p_w):
            g.add_edge("s", ("p", i), capacity=float(w))
        for j, w in enumerate(self.h_w):
            g.add_edge(("h", j), "t", capacity=float(w))
        for i, j in zip(*np.nonzero(self.block < eps)):
            g.add_edge(("p", int(i)), ("h", int(j)))  # no capacity attribute: unbounded
        return 1.0 - nx.maximum_flow_value(g, "s", "t")

    def ok(self, eps: float) -> bool:
        return self.deficiency(eps) <= eps + 1e-12


def prohorov(p: Measure, h: Measure, tol: float = 1e-9, method: str = "auto") -> float:
    """Lévy-Prohorov distance, by bisection over eps on the two-sided condition.

    ``method`` is ``"exhaustive"`` (subset enumeration), ``"flow"`` (max-flow
    feasibility) or ``"auto"`` (exhaustive when the union of supports has at
    most 20 points).
    """
    _same_space(p, h)
    if tol <= 0:
        raise DomainError("tol must be positive")
    if np.array_equal(p.weights, h.weights):
        return 0.0
    union = np.union1d(p.support, h.support)
    if union.size == 1:
        return 0.0
    if method == "auto":
        method = "exhaustive" if union.size <= EXHAUSTIVE_MAX_SUPPORT else "flow"
    side = {"exhaustive": _ExhaustiveSide, "flow": _FlowSide}.get(method)
    if side is None:
        raise DomainError(f"unknown prohorov method {method!r}")
    d = p.space.dist
    ps, hs = p.support, h.support
    forward = side(d, ps, p.weights[ps], hs, h.weights[hs])
    backward = side(d, hs, h.weights[hs], ps, p.weights[ps])

    # eps = 1 is always feasible since P(Q) <= 1
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if forward.ok(mid) and backward.ok(mid):
            hi = mid
        else:
            lo = mid
    # Snap to the exact value. Neighbourhoods are constant for eps in (d_prev, hi],
    # where the condition reads eps >= deficiency; so the answer is that
    # deficiency if it exceeds d_prev, and d_prev otherwise.
    below = forward.block[forward.block < hi]
    d_prev = float(below.max()) if below.size else 0.0
    r = max(forward.deficiency(hi), backward.deficiency(hi))
    return min(hi, r) if r > d_prev else d_prev


# ---------------------------------------------------------------------------
# Dual bounded-Lipschitz metric
# ---------------------------------------------------------------------------


def _bl_lp(diff: np.ndarray, d: np.ndarray) -> float:
    """max sum h_i diff_i  s.t.  |h_i| <= m, |h_i - h_j| <= l d_ij, m + l <= 1.

    diff sums to zero, so shifting h by m changes nothing: with u = h + m the
    box becomes 0 <= u_i <= 2m. Variables are [u (k), m, l], all nonnegative.
    """
    k = diff.size
    nvar = k + 2
    rows = []
    for i in range(k):
        r = np.zeros(nvar)
        r[i] = 1.0
        r[k] = -2.0
        rows.append(r)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            r = np.zeros(nvar)
            r[i] = 1.0
            r[j] = -1.0
            r[k + 1] = -d[i, j]
            rows.append(r)
    budget = np.zeros(nvar)
    budget[k] = budget[k + 1] = 1.0
    rows.append(budget)
    A = np.array(rows)
    b = np.zeros(len(rows))
    b[-1] = 1.0
    c = np.concatenate([diff - diff.mean(), [0.0, 0.0]])
    value, _ = simplex_max(c, A, b)
    return value


def bl_distance(p: Measure, h: Measure) -> float:
    """Dual bounded-Lipschitz distance, exactly, as an LP over values on the joint support.

    Restricting test functions to the support loses nothing: any function on
    a subset with given sup and Lipschitz bounds extends to the whole space
    with the same bounds (McShane extension, then clipping).
    """
    _same_space(p, h)
    if np.array_equal(p.weights, h.weights):
        return 0.0
    union = np.union1d(p.support, h.support)
    if union.size == 1:
        return 0.0
    diff = p.weights[union] - h.weights[union]
    d = p.space.dist[np.ix_(union, union)]
    try:
        value = _bl_lp(diff, d)
    except LPError as exc:  # h = 0 is feasible and the budget bounds the objective
        raise RuntimeError(f"internal error in bounded-Lipschitz LP: {exc}") from exc
    return max(0.0, value)
