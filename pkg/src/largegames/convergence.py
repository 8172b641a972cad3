"""Finite games converging to a limit game, and the experiments run on them.

Three things live here: discretization of a limit game into ``n`` equal-weight
players, a weak-convergence diagnostic on characteristics distributions, and
the two flagship experiments (concentration of the empirical action
distribution, and closed-graph verification along a game sequence).

Random streams are derived from ``(seed, n, trial)`` so that every trial is
reproducible on its own and reports do not depend on execution order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from largegames.errors import DomainError, StructuralError
from largegames.finite_games import (
    FinitePlayerGame,
    MixedProfile,
    Player,
    check_profile,
    solve_rsne,
    summary,
)
from largegames.limit_game import LimitGame, psi_gap, solve_limit_rsne
from largegames.measures import Measure, bl_distance, prohorov, weighted_empirical
from largegames.payoff import Payoff, sup_norm_distance
from largegames.spaces import ActionSubset, FiniteMetricSpace, hausdorff

SCHEMES = ("quota", "iid")
QUANTILES = (0.1, 0.5, 0.9)

__all__ = [
    "GameSequenceSpec",
    "ExperimentReport",
    "discretize",
    "characteristics_distance",
    "characteristics_bl",
    "concentration_experiment",
    "chebyshev_check",
    "closed_graph_experiment",
    "limit_gap",
]


@dataclass(frozen=True)
class GameSequenceSpec:
    limit: LimitGame
    sizes: tuple
    scheme: str = "quota"
    master_seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise DomainError("sizes must be nonempty")
        if any(n < 1 for n in sizes):
            raise DomainError(f"sizes must be positive, got {list(sizes)}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise DomainError(f"sizes must be strictly increasing, got {list(sizes)}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")


def _plain(x):
    """JSON-friendly copy of a record value."""
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _check_finite(x, where: str):
    if isinstance(x, float) and not math.isfinite(x):
        raise DomainError(f"non-finite value in report field {where}")
    if isinstance(x, dict):
        for k, v in x.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(x, list):
        for k, v in enumerate(x):
            _check_finite(v, f"{where}[{k}]")


def _flatten(record: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in record.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out


def _table(rows: Sequence[dict]) -> str:
    flat = [_flatten(r) for r in rows]
    columns: list = []
    for r in flat:
        columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in flat:
        writer.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


@dataclass
class ExperimentReport:
    """Per-n records (sorted by n), optional per-trial rows, and run metadata.

    ``wall_time_s`` is the only field that varies between identical runs.
    """

    records: list
    metadata: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)

    def __post_init__(self):
        self.records = sorted((_plain(r) for r in self.records), key=lambda r: r["n"])
        self.trials = sorted((_plain(r) for r in self.trials), key=lambda r: (r["n"], r["trial"]))
        self.metadata = _plain(self.metadata)
        _check_finite(self.records, "records")
        _check_finite(self.trials, "trials")

    def column(self, name: str) -> list:
        return [r[name] for r in self.records]

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "records": self.records, "trials": self.trials}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        return _table(self.records)

    def trials_csv(self) -> str:
        return _table(self.trials)

    def write(self, prefix: str) -> list:
        """Write ``prefix.json``, ``prefix.csv`` and, if any, ``prefix.trials.csv``."""
        paths = [f"{prefix}.json", f"{prefix}.csv"]
        with open(paths[0], "w") as fh:
            fh.write(self.to_json())
        with open(paths[1], "w") as fh:
            fh.write(self.to_csv())
        if self.trials:
            paths.append(f"{prefix}.trials.csv")
            with open(paths[2], "w") as fh:
                fh.write(self.trials_csv())
        return paths


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------


def quota_counts(masses: Sequence[float], n: int) -> np.ndarray:
    """Largest-remainder apportionment of ``n`` seats; ties go to the lower index."""
    exact = np.round(np.asarray(masses, dtype=float) * n, 9)
    counts = np.floor(exact).astype(int)
    rest = exact - counts
    order = sorted(range(len(rest)), key=lambda t: (-rest[t], t))
    for t in order[: n - int(counts.sum())]:
        counts[t] += 1
    return counts


def discretize(limit: LimitGame, n: int, scheme: str = "quota", seed: int = 0) -> FinitePlayerGame:
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if scheme == "quota":
        counts = quota_counts(limit.masses, n)
        kinds = np.repeat(np.arange(len(limit.types)), counts)
    elif scheme == "iid":
        rng = np.random.default_rng([seed, n])
        kinds = np.sort(rng.choice(len(limit.types), size=n, p=limit.masses / limit.masses.sum()))
    else:
        raise DomainError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    players = tuple(
        Player(1.0 / n, limit.types[t].feasible, limit.types[t].payoff, int(t)) for t in kinds
    )
    return FinitePlayerGame(limit.space, players)


# ---------------------------------------------------------------------------
# Characteristics
# ---------------------------------------------------------------------------


def characteristics_distance(c1: tuple, c2: tuple, probes=None) -> float:
    (f1, v1), (f2, v2) = c1, c2
    if not (f1.space is f2.space is v1.space is v2.space):
        raise StructuralError("characteristics live on different action spaces")
    return max(hausdorff(f1.space, f1, f2), sup_norm_distance(v1, v2, probes))


def _characteristics_space(chars: list, probes) -> tuple[FiniteMetricSpace, list]:
    """Metric space of distinct characteristics, with distance-0 points merged.

    Returns the space and, for each input characteristic, its point index.
    """
    k = len(chars)
    d = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d[i, j] = d[j, i] = characteristics_distance(chars[i], chars[j], probes)
    rep = list(range(k))
    for i in range(k):
        for j in range(i):
            if rep[j] == j and d[i, j] == 0.0:
                rep[i] = j
                break
    keep = sorted(set(rep))
    where = {r: p for p, r in enumerate(keep)}
    space = FiniteMetricSpace.from_matrix([f"c{p}" for p in range(len(keep))], d[np.ix_(keep, keep)])
    return space, [where[rep[i]] for i in range(k)]


def characteristics_bl(finite: FinitePlayerGame, limit: LimitGame, probes=None) -> float:
    if finite.space is not limit.space:
        raise StructuralError("finite and limit games use different action spaces")
    chars: list = []
    index: dict = {}

    def point(f: ActionSubset, v: Payoff) -> int:
        key = (f, v)
        if key not in index:
            index[key] = len(chars)
            chars.append(key)
        return index[key]

    fin = [(point(p.feasible, p.payoff), p.weight) for p in finite.players]
    lim = [(point(t.feasible, t.payoff), t.mass) for t in limit.types]
    space, where = _characteristics_space(chars, probes)

    def measure(pairs):
        w = np.zeros(len(space))
        for c, m in pairs:
            w[where[c]] += m
        return Measure(space, w)

    return bl_distance(measure(fin), measure(lim))


# ---------------------------------------------------------------------------
# Concentration
# ---------------------------------------------------------------------------


def _sample_actions(G: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One independent draw per row of the strategy matrix ``G``."""
    cum = np.cumsum(G, axis=1)
    u = rng.random(G.shape[0]) * cum[:, -1]
    x = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(x, G.shape[1] - 1)


def _stats(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    out = {f"q{int(round(q * 100)):02d}": float(np.quantile(v, q)) for q in QUANTILES}
    out["mean"] = float(v.mean())
    out["stderr"] = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return out


def concentration_experiment(
    game: FinitePlayerGame, profile: MixedProfile, trials: int = 200, seed: int = 0
) -> ExperimentReport:
    """Distance between the realized and the mean action distribution, per trial."""
    if trials < 1:
        raise DomainError("trials must be at least 1")
    check_profile(game, profile)
    t0 = time.perf_counter()
    G = profile.matrix()
    lam = game.weights
    mean = summary(game, profile)
    rows = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, game.n, trial])
        emp = weighted_empirical(game.space, _sample_actions(G, rng), lam)
        rows.append({"n": game.n, "trial": trial, "bl": bl_distance(emp, mean), "prohorov": prohorov(emp, mean)})
    record = {
        "n": game.n,
        "sup_weight": game.sup_weight,
        "trials": trials,
        "bl": _stats([r["bl"] for r in rows]),
        "prohorov": _stats([r["prohorov"] for r in rows]),
        "wall_time_s": time.perf_counter() - t0,
    }
    meta = {"experiment": "concentration", "seed": seed, "trials": trials, "quantiles": list(QUANTILES)}
    return ExperimentReport([record], meta, rows)


def merge_reports(reports: Sequence[ExperimentReport], metadata: Optional[dict] = None) -> ExperimentReport:
    records = [r for rep in reports for r in rep.records]
    trials = [t for rep in reports for t in rep.trials]
    meta = dict(reports[0].metadata) if reports else {}
    meta.update(metadata or {})
    return ExperimentReport(records, meta, trials)


def bl_norm(space: FiniteMetricSpace, h) -> tuple[float, tuple]:
    """``sup|h| + Lip(h)`` and the pair attaining the Lipschitz constant (``(i, i)`` if constant)."""
    h = np.asarray(h, dtype=float)
    if h.shape != (len(space),):
        raise StructuralError(f"h has shape {h.shape}, expected ({len(space)},)")
    lip, pair = 0.0, (int(np.argmax(np.abs(h))),) * 2
    for i in range(len(space)):
        for j in range(i + 1, len(space)):
            r = abs(h[i] - h[j]) / space.dist[i, j]
            if r > lip:
                lip, pair = r, (i, j)
    return float(np.max(np.abs(h))) + lip, pair


def chebyshev_check(
    game: FinitePlayerGame,
    profile: MixedProfile,
    h,
    omega: float,
    trials: int = 2000,
    seed: int = 0,
    slack: float = 1e-12,
) -> tuple[float, float]:
    """Empirical ``P(|sum_j w_j (h(x_j) - E h(x_j))| > omega)`` and the bound ``sup w / omega^2``."""
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega!r}")
    if trials < 1:
        raise DomainError("trials must be at least 1")
    check_profile(game, profile)
    h = np.asarray(h, dtype=float)
    norm, (i, j) = bl_norm(game.space, h)
    if norm > 1.0 + slack:
        labels = game.space.labels
        raise DomainError(
            f"h has bounded-Lipschitz norm {norm:.12g} > 1; "
            f"worst pair ({labels[i]!r}, {labels[j]!r}) with values ({h[i]:.12g}, {h[j]:.12g})"
        )
    G = profile.matrix()
    lam = game.weights
    centre = float(lam @ (G @ h))
    exceed = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, game.n, trial])
        s = float(lam @ h[_sample_actions(G, rng)]) - centre
        exceed += abs(s) > omega
    return exceed / trials, game.sup_weight / omega**2


# ---------------------------------------------------------------------------
# Closed graph
# ---------------------------------------------------------------------------


def limit_gap(limit: LimitGame, finite: FinitePlayerGame, profile: MixedProfile) -> float:
    """Limit-game equilibrium shortfall of the type-averaged finite profile at its own summary.

    Types with no players in ``finite`` are skipped.
    """
    tau = summary(finite, profile)
    G = profile.matrix()
    kinds = np.array([-1 if p.type_index is None else p.type_index for p in finite.players])
    if np.any(kinds < 0):
        raise DomainError("limit_gap needs players tagged with their type (use discretize)")
    gap = 0.0
    for t, ty in enumerate(limit.types):
        rows = np.nonzero(kinds == t)[0]
        if rows.size == 0:
            continue
        avg = Measure(finite.space, G[rows].mean(axis=0))
        gap = max(gap, -psi_gap(ty.feasible, ty.payoff, avg, tau))
    return gap


def _measure_record(m: Measure) -> dict:
    return {lab: float(w) for lab, w in zip(m.space.labels, m.weights)}


def closed_graph_experiment(spec: GameSequenceSpec, solver_params: Optional[dict] = None, probes=None) -> ExperimentReport:
    """Solve the finite game at every size and measure how its equilibria approach the limit game."""
    params = {"method": "damped-br", "tol": 1e-6, "max_iter": 20000, "seed": spec.master_seed}
    params.update(solver_params or {})
    limit = spec.limit
    t0 = time.perf_counter()
    lim = solve_limit_rsne(limit, tol=params["tol"], max_iter=params["max_iter"])
    tau_star = Measure(limit.space, limit.masses @ lim.strategy.matrix())
    limit_time = time.perf_counter() - t0

    records, taus = [], []
    for n in spec.sizes:
        t0 = time.perf_counter()
        game = discretize(limit, n, spec.scheme, spec.master_seed)
        res = solve_rsne(game, **params)
        tau = summary(game, res.profile)
        rec = {
            "n": n,
            "sup_weight": game.sup_weight,
            "gap": res.gap,
            "converged": bool(res.converged),
            "flagged": not res.converged,
            "iterations": res.iterations,
            "characteristics_bl": characteristics_bl(game, limit, probes),
            "bl_to_previous": bl_distance(taus[-1], tau) if taus else None,
            "limit_gap": limit_gap(limit, game, res.profile),
            "bl_to_limit_rsne": bl_distance(tau, tau_star),
            "summary": _measure_record(tau),
            "wall_time_s": time.perf_counter() - t0,
        }
        taus.append(tau)
        records.append(rec)

    steps = [r["bl_to_previous"] for r in records[1:]]
    meta = {
        "experiment": "closed_graph",
        "scheme": spec.scheme,
        "master_seed": spec.master_seed,
        "sizes": list(spec.sizes),
        "solver": params,
        "probes": "default" if probes is None else f"{len(probes)} custom",
        "limit_rsne": {
            "gap": lim.gap,
            "converged": bool(lim.converged),
            "summary": _measure_record(tau_star),
            "wall_time_s": limit_time,
        },
        "cauchy_steps_decreasing": all(b < a for a, b in zip(steps, steps[1:])),
        "any_flagged": any(r["flagged"] for r in records),
    }
    return ExperimentReport(records, meta)
