"""Finite metric spaces, action subsets and the Hausdorff distance.

A space is an ordered list of labelled points plus a validated distance
matrix. Everything downstream (measures, payoffs, games) refers to points by
integer index into a shared space, and "same space" means the same object.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from largegames.errors import DomainError, StructuralError

TRIANGLE_SLACK = 1e-9

__all__ = [
    "MetricViolation",
    "FiniteMetricSpace",
    "ActionSubset",
    "validate_metric",
    "hausdorff",
]


@dataclass(frozen=True)
class MetricViolation:
    kind: str  # "negative" | "diagonal" | "asymmetry" | "triangle" | "nonfinite"
    indices: tuple
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.indices}: {self.detail}"


def validate_metric(matrix, slack: float = TRIANGLE_SLACK) -> list[MetricViolation]:
    """Return every metric axiom violated by ``matrix``; empty iff it is a metric.

    Triangle violations are reported with their witness triple ``(i, j, k)``,
    meaning ``d[i][k] > d[i][j] + d[j][k]``.
    """
    d = np.asarray(matrix, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise StructuralError(f"distance matrix must be square, got shape {d.shape}")
    n = d.shape[0]
    report: list[MetricViolation] = []

    bad = ~np.isfinite(d)
    for i, j in zip(*np.nonzero(bad)):
        report.append(MetricViolation("nonfinite", (int(i), int(j)), f"d={d[i, j]}"))
    if report:
        return report

    for i, j in zip(*np.nonzero(d < 0)):
        report.append(MetricViolation("negative", (int(i), int(j)), f"d={d[i, j]!r}"))
    for i in np.nonzero(np.diag(d) != 0)[0]:
        report.append(MetricViolation("diagonal", (int(i), int(i)), f"d={d[i, i]!r}"))
    iu, ju = np.triu_indices(n, k=1)
    asym = np.abs(d[iu, ju] - d[ju, iu]) > slack
    for i, j in zip(iu[asym], ju[asym]):
        report.append(
            MetricViolation("asymmetry", (int(i), int(j)), f"d[{i}][{j}]={d[i, j]!r} != d[{j}][{i}]={d[j, i]!r}")
        )
    # excess[i, j, k] = d[i, k] - d[i, j] - d[j, k]
    excess = d[:, None, :] - d[:, :, None] - d[None, :, :]
    for i, j, k in zip(*np.nonzero(excess > slack)):
        report.append(
            MetricViolation(
                "triangle",
                (int(i), int(j), int(k)),
                f"d[{i}][{k}]={d[i, k]!r} > d[{i}][{j}]+d[{j}][{k}]={d[i, j] + d[j, k]!r}",
            )
        )
    return report


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Labelled points with a validated distance matrix.

    Equality is identity: two spaces built from the same data are still
    different spaces, which keeps "same space" checks cheap and explicit.
    """

    labels: tuple[str, ...]
    dist: np.ndarray
    coords: Optional[np.ndarray] = None
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise StructuralError(f"duplicate point labels: {dupes}")
        if not labels:
            raise StructuralError("a space needs at least one point")
        d = np.asarray(self.dist, dtype=float)
        if d.shape != (len(labels), len(labels)):
            raise StructuralError(f"distance matrix shape {d.shape} does not match {len(labels)} labels")
        violations = validate_metric(d)
        if violations:
            shown = "; ".join(str(v) for v in violations[:5])
            more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
            raise DomainError(f"not a metric: {shown}{more}")
        # symmetrize away sub-slack rounding so downstream code can rely on exact symmetry
        object.__setattr__(self, "dist", _frozen((d + d.T) / 2.0))
        if self.coords is not None:
            c = np.asarray(self.coords, dtype=float)
            if c.ndim != 2 or c.shape[0] != len(labels):
                raise StructuralError("coordinates must be one vector per point")
            object.__setattr__(self, "coords", _frozen(c))
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    @classmethod
    def from_matrix(cls, labels: Sequence[str], matrix) -> "FiniteMetricSpace":
        return cls(tuple(labels), np.asarray(matrix, dtype=float))

    @classmethod
    def from_coordinates(cls, labels: Sequence[str], coords) -> "FiniteMetricSpace":
        """Euclidean metric on the given coordinate vectors."""
        c = np.asarray(coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        diff = c[:, None, :] - c[None, :, :]
        return cls(tuple(labels), np.sqrt((diff**2).sum(axis=-1)), c)

    @classmethod
    def discrete(cls, labels: Sequence[str], scale: float = 1.0) -> "FiniteMetricSpace":
        n = len(labels)
        return cls(tuple(labels), scale * (1.0 - np.eye(n)))

    def __len__(self):
        return len(self.labels)

    def __repr__(self):
        return f"FiniteMetricSpace({list(self.labels)!r})"

    def index(self, label: str) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise StructuralError(f"unknown point label {label!r}") from None

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    def subset(self, members: Iterable) -> "ActionSubset":
        """Subset from point indices or labels."""
        idx = [m if isinstance(m, (int, np.integer)) else self.index(m) for m in members]
        return ActionSubset(self, tuple(int(i) for i in idx))

    def full(self) -> "ActionSubset":
        return ActionSubset(self, tuple(range(len(self))))


@dataclass(frozen=True)
class ActionSubset:
    """A nonempty set of point indices of ``space`` (kept sorted, deduplicated)."""

    space: FiniteMetricSpace
    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(sorted({int(m) for m in self.members}))
        if not members:
            raise DomainError("action subsets must be nonempty")
        n = len(self.space)
        if members[0] < 0 or members[-1] >= n:
            raise StructuralError(f"subset members {members} out of range for {n} points")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, i):
        return int(i) in self.members

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.space.labels[i] for i in self.members)

    def mask(self) -> np.ndarray:
        m = np.zeros(len(self.space), dtype=bool)
        m[list(self.members)] = True
        return m


def hausdorff(space: FiniteMetricSpace, s1: ActionSubset, s2: ActionSubset) -> float:
    if s1.space is not space or s2.space is not space:
        raise StructuralError("hausdorff: subsets must belong to the given space")
    if len(s1) == 0 or len(s2) == 0:
        raise DomainError("hausdorff: empty subset")
    block = space.dist[np.ix_(s1.members, s2.members)]
    return float(max(block.min(axis=1).max(), block.min(axis=0).max()))
