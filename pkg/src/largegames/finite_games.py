"""Finite-player anonymous games, mixed profiles, payoff evaluators and solvers.

Three ways to value a player's position are provided:

* exact: the expectation over all joint pure outcomes of the other players,
  with the realized empirical summary plugged into the payoff;
* Monte Carlo: a seeded estimate of the same expectation with a standard error;
* mean-field: the payoff evaluated at the mean summary ``sum_j w_j g_j``
  (for a deviation to ``a'``, at ``w_i δ_a' + sum_{j != i} w_j g_j``).

For payoffs that are affine in the summary the first and third coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from largegames._polish import indifference_polish
from largegames.errors import CapacityError, DomainError, StructuralError
from largegames.measures import SUM_TOL, Measure
from largegames.payoff import Payoff
from largegames.spaces import ActionSubset, FiniteMetricSpace

ENUMERATION_CAP = 10**6
TIE_TOL = 1e-9

__all__ = [
    "Player",
    "FinitePlayerGame",
    "MixedProfile",
    "summary",
    "deviation_summary",
    "mean_field_payoff",
    "exact_expected_payoff",
    "mc_expected_payoff",
    "rsne_gap_exact",
    "rsne_gap_meanfield",
    "solve_rsne",
    "refine_rsne",
    "SolveResult",
]


@dataclass(frozen=True)
class Player:
    weight: float
    feasible: ActionSubset
    payoff: Payoff
    type_index: Optional[int] = None  # set when the player was generated from a limit-game type


@dataclass(frozen=True, eq=False)
class FinitePlayerGame:
    space: FiniteMetricSpace
    players: tuple

    def __post_init__(self):
        players = tuple(self.players)
        object.__setattr__(self, "players", players)
        if not players:
            raise DomainError("a game needs at least one player")
        for k, p in enumerate(players):
            if not p.weight > 0:
                raise DomainError(f"player {k} has nonpositive weight {p.weight!r}")
            if p.feasible.space is not self.space:
                raise StructuralError(f"player {k}: feasible set lives on another space")
            if p.payoff.space is not self.space:
                raise StructuralError(f"player {k}: payoff is bound to another space")
        total = sum(p.weight for p in players)
        if abs(total - 1.0) > SUM_TOL:
            raise DomainError(f"player weights sum to {total!r}, not 1")

    @classmethod
    def equal_weights(cls, space, feasible_payoffs: Sequence[tuple], type_indices=None) -> "FinitePlayerGame":
        n = len(feasible_payoffs)
        kinds = type_indices if type_indices is not None else [None] * n
        return cls(space, tuple(Player(1.0 / n, f, v, t) for (f, v), t in zip(feasible_payoffs, kinds)))

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.players])

    @property
    def sup_weight(self) -> float:
        return max(p.weight for p in self.players)


@dataclass(frozen=True, eq=False)
class MixedProfile:
    """One measure per player on the common action space."""

    strategies: tuple

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))

    @classmethod
    def uniform(cls, game: FinitePlayerGame) -> "MixedProfile":
        return cls(tuple(Measure.uniform(game.space, p.feasible) for p in game.players))

    @classmethod
    def pure(cls, game: FinitePlayerGame, actions: Sequence) -> "MixedProfile":
        return cls(tuple(Measure.point(game.space, a) for a in actions))

    @classmethod
    def from_matrix(cls, game: FinitePlayerGame, matrix) -> "MixedProfile":
        return cls(tuple(Measure(game.space, row) for row in np.asarray(matrix, dtype=float)))

    def matrix(self) -> np.ndarray:
        return np.array([g.weights for g in self.strategies])

    def __getitem__(self, i) -> Measure:
        return self.strategies[i]

    def __len__(self):
        return len(self.strategies)


def check_profile(game: FinitePlayerGame, profile: MixedProfile):
    if len(profile) != game.n:
        raise StructuralError(f"profile has {len(profile)} strategies for {game.n} players")
    for k, (p, g) in enumerate(zip(game.players, profile.strategies)):
        if g.space is not game.space:
            raise StructuralError(f"player {k}: strategy lives on another space")
        if abs(g.mass(p.feasible) - 1.0) > SUM_TOL:
            raise DomainError(f"player {k}: strategy puts mass {1 - g.mass(p.feasible):.3g} outside the feasible set")


def _point(space, a) -> int:
    return int(a) if isinstance(a, (int, np.integer)) else space.index(a)


# ---------------------------------------------------------------------------
# Summaries and mean-field payoffs
# ---------------------------------------------------------------------------


def summary(game: FinitePlayerGame, profile: MixedProfile) -> Measure:
    check_profile(game, profile)
    return Measure(game.space, game.weights @ profile.matrix())


def deviation_summary(game: FinitePlayerGame, i: int, a_prime, profile: MixedProfile) -> Measure:
    """Mean summary when player ``i`` switches to the pure action ``a_prime``."""
    check_profile(game, profile)
    a = _point(game.space, a_prime)
    p = game.players[i]
    if a not in p.feasible:
        raise DomainError(f"action {game.space.labels[a]!r} is not feasible for player {i}")
    w = game.weights @ profile.matrix() - p.weight * profile[i].weights
    w[a] += p.weight
    return Measure(game.space, w)


def mean_field_payoff(game: FinitePlayerGame, i: int, strat: Union[Measure, int, str], tau: Measure) -> float:
    p = game.players[i]
    if isinstance(strat, Measure):
        if abs(strat.mass(p.feasible) - 1.0) > SUM_TOL:
            raise DomainError(f"strategy is not supported on player {i}'s feasible set")
        values = p.payoff.values(tau)
        return float(strat.weights[strat.support] @ values[strat.support])
    a = _point(game.space, strat)
    if a not in p.feasible:
        raise DomainError(f"action {game.space.labels[a]!r} is not feasible for player {i}")
    return p.payoff(a, tau)


def _classes(game: FinitePlayerGame, G: np.ndarray) -> dict:
    """Group players that are interchangeable under the current strategy matrix."""
    groups: dict = {}
    for i, p in enumerate(game.players):
        key = (id(p.payoff), p.weight, p.feasible.members, G[i].tobytes())
        groups.setdefault(key, []).append(i)
    return groups


def _meanfield_table(game: FinitePlayerGame, G: np.ndarray):
    """Per player: mean-field equilibrium payoff E_i and deviation payoffs D_i(a) (-inf if infeasible)."""
    lam = game.weights
    tau = lam @ G
    tau_list = tau.tolist()
    k = len(game.space)
    E = np.empty(game.n)
    D = np.full((game.n, k), -np.inf)
    for members in _classes(game, G).values():
        i = members[0]
        p = game.players[i]
        fn = p.payoff._fn
        g = G[i]
        e = sum(g[a] * fn(a, tau_list) for a in p.feasible.members if g[a] > 0)
        base = tau - p.weight * g
        row = np.full(k, -np.inf)
        for a in p.feasible.members:
            dev = base.copy()
            dev[a] += p.weight
            row[a] = fn(a, dev.tolist())
        E[members] = e
        D[members] = row
    return E, D


def _gap_from_table(E, D) -> float:
    return max(0.0, float(np.max(D - E[:, None])))


def rsne_gap_meanfield(game: FinitePlayerGame, profile: MixedProfile) -> float:
    """max over players and feasible deviations of the mean-field gain, floored at 0."""
    check_profile(game, profile)
    return _gap_from_table(*_meanfield_table(game, profile.matrix()))


# ---------------------------------------------------------------------------
# Exact expectation by enumeration
# ---------------------------------------------------------------------------


def _others_distribution(game: FinitePlayerGame, G: np.ndarray, i: int):
    """Distribution of ``sum_{j != i} w_j δ_{x_j}`` as (states, probabilities).

    Players are folded in one at a time and identical partial sums are merged,
    which is exact and keeps the state count polynomial for equal weights.
    """
    k = len(game.space)
    states = np.zeros((1, k))
    probs = np.ones(1)
    for j, p in enumerate(game.players):
        if j == i:
            continue
        supp = np.nonzero(G[j] > 0)[0]
        step = np.zeros((supp.size, k))
        step[np.arange(supp.size), supp] = p.weight
        states = (states[:, None, :] + step[None, :, :]).reshape(-1, k)
        probs = (probs[:, None] * G[j, supp][None, :]).ravel()
        keys = np.round(states, 12)
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        probs = np.bincount(inverse.ravel(), weights=probs, minlength=uniq.shape[0])
        states = states[first]
    return states, probs


def _enumeration_size(game, G, i, with_own: bool) -> int:
    size = 1
    for j in range(game.n):
        if j != i or with_own:
            size *= int(np.count_nonzero(G[j] > 0))
    return size


def _exact_deviation_values(game: FinitePlayerGame, G: np.ndarray, i: int, actions, cap: int) -> dict:
    if _enumeration_size(game, G, i, with_own=True) > cap:
        raise CapacityError(
            f"exact enumeration for player {i} exceeds the cap of {cap} joint outcomes; use mc_expected_payoff"
        )
    p = game.players[i]
    states, probs = _others_distribution(game, G, i)
    out = {}
    for a in actions:
        total = 0.0
        for s, pr in zip(states, probs):
            s = s.copy()
            s[a] += p.weight
            total += pr * p.payoff._fn(a, s.tolist())
        out[a] = total
    return out


def exact_expected_payoff(
    game: FinitePlayerGame,
    i: int,
    profile: MixedProfile,
    deviation=None,
    cap: int = ENUMERATION_CAP,
) -> float:
    """Expected payoff of player ``i`` with the realized empirical summary.

    Without ``deviation`` player i's action is drawn from its strategy; with a
    deviation ``a'`` it is fixed and contributes ``w_i δ_a'`` to the summary.
    """
    check_profile(game, profile)
    G = profile.matrix()
    p = game.players[i]
    if deviation is not None:
        a = _point(game.space, deviation)
        if a not in p.feasible:
            raise DomainError(f"action {game.space.labels[a]!r} is not feasible for player {i}")
        return _exact_deviation_values(game, G, i, [a], cap)[a]
    own = [int(a) for a in np.nonzero(G[i] > 0)[0]]
    values = _exact_deviation_values(game, G, i, own, cap)
    return float(sum(G[i, a] * values[a] for a in own))


def _exact_table(game: FinitePlayerGame, G: np.ndarray, cap: int):
    k = len(game.space)
    E = np.empty(game.n)
    D = np.full((game.n, k), -np.inf)
    # players interchangeable under G face the same distribution of the others
    for members in _classes(game, G).values():
        i = members[0]
        p = game.players[i]
        vals = _exact_deviation_values(game, G, i, p.feasible.members, cap)
        row = np.full(k, -np.inf)
        for a, v in vals.items():
            row[a] = v
        E[members] = sum(G[i, a] * vals[a] for a in p.feasible.members if G[i, a] > 0)
        D[members] = row
    return E, D


def rsne_gap_exact(game: FinitePlayerGame, profile: MixedProfile, cap: int = ENUMERATION_CAP) -> float:
    """Largest gain from a pure deviation under exact expectations; 0 at an exact equilibrium."""
    check_profile(game, profile)
    return _gap_from_table(*_exact_table(game, profile.matrix(), cap))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def mc_expected_payoff(
    game: FinitePlayerGame,
    i: int,
    profile: MixedProfile,
    deviation=None,
    samples: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """Sample mean and standard error of the payoff over independent joint draws."""
    if samples < 2:
        raise DomainError("mc_expected_payoff needs at least 2 samples")
    check_profile(game, profile)
    G = profile.matrix()
    p = game.players[i]
    k = len(game.space)
    rng = np.random.default_rng([seed, i])
    cdf = np.cumsum(G, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random((samples, game.n))
    draws = (u[:, :, None] >= cdf[None, :, :]).sum(axis=2)
    if deviation is not None:
        a = _point(game.space, deviation)
        if a not in p.feasible:
            raise DomainError(f"action {game.space.labels[a]!r} is not feasible for player {i}")
        draws[:, i] = a
    states = np.zeros((samples, k))
    np.add.at(states, (np.repeat(np.arange(samples), game.n), draws.ravel()), np.tile(game.weights, samples))

    cache: dict = {}
    values = np.empty(samples)
    for s in range(samples):
        key = (int(draws[s, i]), np.round(states[s], 12).tobytes())
        if key not in cache:
            cache[key] = p.payoff._fn(key[0], states[s].tolist())
        values[s] = cache[key]
    if np.ptp(values) == 0.0:  # no spread: avoid round-off from the summation
        return float(values[0]), 0.0
    estimate = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(samples))
    return estimate, stderr


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


class SolveResult(NamedTuple):
    profile: MixedProfile
    gap: float
    converged: bool
    iterations: int


def _best_response(game: FinitePlayerGame, D: np.ndarray, tie_tol: float) -> np.ndarray:
    best = D.max(axis=1, keepdims=True)
    br = (D >= best - tie_tol).astype(float)
    return br / br.sum(axis=1, keepdims=True)


def _initial(game: FinitePlayerGame, method: str, seed: int) -> np.ndarray:
    k = len(game.space)
    G = np.zeros((game.n, k))
    if method == "damped-br":
        for i, p in enumerate(game.players):
            G[i, list(p.feasible.members)] = 1.0 / len(p.feasible)
    elif method == "fictitious-play":
        rng = np.random.default_rng(seed)
        for i, p in enumerate(game.players):
            G[i, p.feasible.members[rng.integers(len(p.feasible))]] = 1.0
    else:
        raise DomainError(f"unknown solver method {method!r}")
    return G


def solve_rsne(
    game: FinitePlayerGame,
    method: str = "damped-br",
    tol: float = 1e-6,
    max_iter: int = 20_000,
    seed: int = 0,
    tie_tol: float = TIE_TOL,
    polish: bool = True,
    evaluator: str = "meanfield",
    cap: int = ENUMERATION_CAP,
) -> SolveResult:
    """Mean-field equilibrium by averaged best responses, certified by the mean-field gap.

    ``damped-br`` starts from uniform strategies, ``fictitious-play`` from a
    seeded random pure profile; both then update ``g <- (1 - a_k) g + a_k BR``
    with ``a_k = 1/(k+1)``. Best responses maximize the deviation payoff and
    split ties uniformly.

    With ``polish`` on, the iterate is refined by solving the support
    indifference conditions at iterations 8, 16, 32, ... and once more at the
    end; a refined profile is preferred whenever its re-measured gap is no
    worse than ``max(tol, best gap seen)``. Never raises on non-convergence.

    ``evaluator="exact"`` runs the same scheme on exact expected payoffs
    (enumeration, subject to ``cap``) and certifies with the exact gap.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if evaluator == "meanfield":
        table = lambda G: _meanfield_table(game, G)  # noqa: E731
    elif evaluator == "exact":
        table = lambda G: _exact_table(game, G, cap)  # noqa: E731
    else:
        raise DomainError(f"unknown evaluator {evaluator!r}")
    G = _initial(game, method, seed)
    best_G, best_gap = G, math.inf
    refined = None
    iterations = 0
    next_polish = 8
    for k in range(1, max_iter + 2):
        E, D = table(G)
        gap = _gap_from_table(E, D)
        if gap < best_gap:
            best_G, best_gap = G, gap
        if gap <= tol or k > max_iter:
            break
        if polish and k == next_polish:
            next_polish *= 2
            refined = _polish(game, G, evaluator, cap, scores=D)
            if refined is not None and refined[1] <= tol:
                break
        alpha = 1.0 / (k + 1)
        G = (1.0 - alpha) * G + alpha * _best_response(game, D, tie_tol)
        iterations = k

    profile = MixedProfile.from_matrix(game, best_G)
    if polish:
        if refined is None or refined[1] > tol:
            refined = _polish(game, best_G, evaluator, cap)
        if refined is not None and refined[1] <= max(tol, best_gap):
            profile, best_gap = refined
    return SolveResult(profile, best_gap, best_gap <= tol, iterations)


def refine_rsne(
    game: FinitePlayerGame,
    profile: MixedProfile,
    evaluator: str = "exact",
    cap: int = ENUMERATION_CAP,
    tol: float = 1e-10,
    max_iter: int = 2000,
) -> tuple[MixedProfile, float]:
    """Solve the support indifference conditions starting from ``profile``.

    If that does not bring the gap under ``tol``, fall back to averaged best
    responses on the chosen evaluator (up to ``max_iter`` steps). Returns the
    best of the input and the candidates under the evaluator's gap
    (``"exact"`` or ``"meanfield"``).
    """
    check_profile(game, profile)
    if evaluator not in ("exact", "meanfield"):
        raise DomainError(f"unknown evaluator {evaluator!r}")
    G = profile.matrix()
    E, D = _exact_table(game, G, cap) if evaluator == "exact" else _meanfield_table(game, G)
    start_gap = _gap_from_table(E, D)
    best = (profile, start_gap)
    refined = _polish(game, G, evaluator, cap, scores=D)
    if refined is not None and refined[1] <= best[1]:
        best = refined
    if best[1] > tol:
        res = solve_rsne(game, tol=tol, max_iter=max_iter, evaluator=evaluator, cap=cap)
        if res.gap < best[1]:
            best = (res.profile, res.gap)
    return best


def _polish(game: FinitePlayerGame, G0: np.ndarray, evaluator: str, cap: int, scores=None):
    """Indifference between deviation payoffs (mean-field or exact) on each class's support.

    For the exact evaluator this is precisely the equilibrium condition on
    the support, since the exact equilibrium payoff is linear in the own
    strategy.
    """
    classes = list(_classes(game, G0).values())

    def values(G, i, actions):
        if evaluator == "exact":
            vals = _exact_deviation_values(game, G, i, actions, cap)
            return [vals[a] for a in actions]
        p = game.players[i]
        base = game.weights @ G - p.weight * G[i]
        out = []
        for a in actions:
            dev = base.copy()
            dev[a] += p.weight
            out.append(p.payoff._fn(a, dev.tolist()))
        return out

    def certify(G):
        try:
            profile = MixedProfile.from_matrix(game, G)
            check_profile(game, profile)
        except (DomainError, StructuralError):
            return None
        if evaluator == "exact":
            return _gap_from_table(*_exact_table(game, G, cap))
        return _gap_from_table(*_meanfield_table(game, G))

    found = indifference_polish(G0, classes, values, certify, scores)
    if found is None:
        return None
    G, gap = found
    return MixedProfile.from_matrix(game, G), gap
