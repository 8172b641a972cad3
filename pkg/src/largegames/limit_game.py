"""The limit (nonatomic) game, held in distribution form.

The player space is represented only through its image distribution on
characteristics: finitely many types, each a (feasible set, payoff) pair with
a positive mass. A strategy assigns each type a measure on its feasible set;
its societal summary is the mass-weighted mixture.

Checking randomized equilibria against pure deviations only is exact, because
the expected payoff is linear in the deviating measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from largegames._polish import indifference_polish
from largegames.errors import DomainError, NEDPreconditionError, StructuralError
from largegames.measures import SUM_TOL, Measure, pushforward
from largegames.payoff import Payoff
from largegames.spaces import ActionSubset, FiniteMetricSpace

TIE_TOL = 1e-9

__all__ = [
    "PlayerType",
    "Characteristic",
    "LimitGame",
    "TypeStrategy",
    "societal_summary",
    "psi_gap",
    "rsne_check",
    "pure_ne_check",
    "solve_limit_rsne",
    "induced_distribution",
    "ned_check",
    "ned_report",
    "ProductSpace",
]


@dataclass(frozen=True)
class Characteristic:
    """A point of the characteristics space: feasible set and payoff."""

    feasible: ActionSubset
    payoff: Payoff

    def describe(self) -> str:
        return f"{{{', '.join(self.feasible.labels)}}} / {self.payoff.source}"


@dataclass(frozen=True)
class PlayerType:
    mass: float
    feasible: ActionSubset
    payoff: Payoff
    name: Optional[str] = None

    @property
    def characteristic(self) -> Characteristic:
        return Characteristic(self.feasible, self.payoff)


@dataclass(frozen=True, eq=False)
class LimitGame:
    space: FiniteMetricSpace
    types: tuple

    def __post_init__(self):
        types = tuple(self.types)
        object.__setattr__(self, "types", types)
        if not types:
            raise DomainError("a limit game needs at least one type")
        for t, ty in enumerate(types):
            if not ty.mass > 0:
                raise DomainError(f"type {t} has nonpositive mass {ty.mass!r}")
            if ty.feasible.space is not self.space or ty.payoff.space is not self.space:
                raise StructuralError(f"type {t} is defined on another space")
        total = sum(ty.mass for ty in types)
        if abs(total - 1.0) > SUM_TOL:
            raise DomainError(f"type masses sum to {total!r}, not 1")

    @property
    def masses(self) -> np.ndarray:
        return np.array([ty.mass for ty in self.types])

    def type_name(self, t: int) -> str:
        return self.types[t].name or f"type{t}"

    def distribution_form(self) -> list[tuple[Characteristic, float]]:
        """Distinct characteristics with their total mass, in first-appearance order."""
        merged: dict = {}
        for ty in self.types:
            c = ty.characteristic
            merged[c] = merged.get(c, 0.0) + ty.mass
        return list(merged.items())


@dataclass(frozen=True, eq=False)
class TypeStrategy:
    """One measure per type on the common action space."""

    strategies: tuple

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))

    @classmethod
    def uniform(cls, game: LimitGame) -> "TypeStrategy":
        return cls(tuple(Measure.uniform(game.space, ty.feasible) for ty in game.types))

    @classmethod
    def pure(cls, game: LimitGame, actions: Sequence) -> "TypeStrategy":
        return cls(tuple(Measure.point(game.space, a) for a in actions))

    @classmethod
    def from_matrix(cls, game: LimitGame, matrix) -> "TypeStrategy":
        return cls(tuple(Measure(game.space, row) for row in np.asarray(matrix, dtype=float)))

    def matrix(self) -> np.ndarray:
        return np.array([g.weights for g in self.strategies])

    def __getitem__(self, t) -> Measure:
        return self.strategies[t]

    def __len__(self):
        return len(self.strategies)


def check_strategy(game: LimitGame, strategy: TypeStrategy):
    if len(strategy) != len(game.types):
        raise StructuralError(f"strategy has {len(strategy)} entries for {len(game.types)} types")
    for t, (ty, g) in enumerate(zip(game.types, strategy.strategies)):
        if g.space is not game.space:
            raise StructuralError(f"type {t}: strategy lives on another space")
        if abs(g.mass(ty.feasible) - 1.0) > SUM_TOL:
            raise DomainError(f"type {t}: strategy puts mass outside the feasible set")


def societal_summary(game: LimitGame, strategy: TypeStrategy) -> Measure:
    check_strategy(game, strategy)
    return Measure(game.space, game.masses @ strategy.matrix())


def psi_gap(feasible: ActionSubset, payoff: Payoff, strat: Measure, tau: Measure) -> float:
    """``min_{a' in feasible} (∫ v(a, tau) strat(da) - v(a', tau))``: zero iff optimal, negative otherwise."""
    if abs(strat.mass(feasible) - 1.0) > SUM_TOL:
        raise DomainError("strategy is not supported on the feasible set")
    values = payoff.values(tau)
    supp = strat.support
    expected = float(strat.weights[supp] @ values[supp])
    return expected - float(values[list(feasible.members)].max())


class RSNECheck(NamedTuple):
    is_equilibrium: bool
    worst_gap: float  # largest shortfall -psi over types (>= 0)
    witness_type: int
    witness_action: int


def rsne_check(game: LimitGame, strategy: TypeStrategy, tol: float = 0.0) -> RSNECheck:
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    tau = societal_summary(game, strategy)
    worst = (math.inf, 0, 0)
    for t, ty in enumerate(game.types):
        psi = psi_gap(ty.feasible, ty.payoff, strategy[t], tau)
        if psi < worst[0]:
            values = ty.payoff.values(tau)
            members = list(ty.feasible.members)
            worst = (psi, t, members[int(np.argmax(values[members]))])
    psi, t, a = worst
    return RSNECheck(psi >= -tol, max(0.0, -psi), t, a)


def pure_ne_check(game: LimitGame, actions: Sequence, tol: float = 0.0) -> bool:
    """Pure-strategy equilibrium test with the summary as the image of type masses under the assignment."""
    assignment = [a if isinstance(a, (int, np.integer)) else game.space.index(a) for a in actions]
    types_space = FiniteMetricSpace.discrete([f"t{t}" for t in range(len(game.types))])
    tau = pushforward(Measure(types_space, game.masses), lambda t: assignment[t], game.space)
    for t, ty in enumerate(game.types):
        if assignment[t] not in ty.feasible:
            raise DomainError(f"type {t}: assigned action is not feasible")
        own = ty.payoff(assignment[t], tau)
        if any(ty.payoff(a, tau) > own + tol for a in ty.feasible.members):
            return False
    return True


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


class LimitSolveResult(NamedTuple):
    strategy: TypeStrategy
    gap: float
    converged: bool
    iterations: int


def _limit_gap(game: LimitGame, G: np.ndarray) -> tuple[float, np.ndarray]:
    tau = Measure(game.space, game.masses @ G)
    gap = 0.0
    V = np.full(G.shape, -np.inf)
    for t, ty in enumerate(game.types):
        values = ty.payoff.values(tau)
        members = list(ty.feasible.members)
        V[t, members] = values[members]
        gap = max(gap, float(values[members].max() - G[t] @ np.where(np.isfinite(V[t]), V[t], 0.0)))
    return gap, V


def solve_limit_rsne(
    game: LimitGame,
    tol: float = 1e-6,
    max_iter: int = 20_000,
    tie_tol: float = TIE_TOL,
    polish: bool = True,
) -> LimitSolveResult:
    """Damped best-response iteration on the summary, ``a_k = 1/(k+1)``, from uniform strategies.

    Each type best-responds to the current summary (uniform over the
    ``tie_tol``-argmax); the strategy is the running average of responses.
    Refinement on supports works as in the finite solver. Deterministic;
    returns the best strategy seen with its re-measured gap, never raises.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    G = TypeStrategy.uniform(game).matrix()
    best_G, best_gap = G, math.inf
    refined = None
    iterations = 0
    next_polish = 8
    for k in range(1, max_iter + 2):
        gap, V = _limit_gap(game, G)
        if gap < best_gap:
            best_G, best_gap = G, gap
        if gap <= tol or k > max_iter:
            break
        if polish and k == next_polish:
            next_polish *= 2
            refined = _polish_limit(game, G, V)
            if refined is not None and refined[1] <= tol:
                break
        br = (V >= V.max(axis=1, keepdims=True) - tie_tol).astype(float)
        br /= br.sum(axis=1, keepdims=True)
        alpha = 1.0 / (k + 1)
        G = (1.0 - alpha) * G + alpha * br
        iterations = k

    strategy = TypeStrategy.from_matrix(game, best_G)
    if polish:
        if refined is None or refined[1] > tol:
            refined = _polish_limit(game, best_G)
        if refined is not None and refined[1] <= max(tol, best_gap):
            strategy, best_gap = refined
    return LimitSolveResult(strategy, best_gap, best_gap <= tol, iterations)


def _polish_limit(game: LimitGame, G0: np.ndarray, scores=None):
    masses = game.masses

    def values(G, t, actions):
        w = (masses @ G).tolist()
        fn = game.types[t].payoff._fn
        return [fn(a, w) for a in actions]

    def certify(G):
        try:
            check_strategy(game, TypeStrategy.from_matrix(game, G))
        except (DomainError, StructuralError):
            return None
        return _limit_gap(game, G)[0]

    found = indifference_polish(G0, [[t] for t in range(len(game.types))], values, certify, scores)
    if found is None:
        return None
    return TypeStrategy.from_matrix(game, found[0]), found[1]


# ---------------------------------------------------------------------------
# Equilibrium distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProductSpace(FiniteMetricSpace):
    """Points are (characteristic index, action index) pairs.

    The metric is the max of the discrete metric on characteristics and the
    action metric, so both marginal maps are 1-Lipschitz.
    """

    characteristics: tuple = ()
    pairs: tuple = ()
    action_space: Optional[FiniteMetricSpace] = None

    @classmethod
    def build(cls, characteristics: Sequence[Characteristic], action_space: FiniteMetricSpace) -> "ProductSpace":
        pairs = [(c, a) for c, ch in enumerate(characteristics) for a in ch.feasible.members]
        labels = [f"c{c}|{action_space.labels[a]}" for c, a in pairs]
        cs = np.array([c for c, _ in pairs])
        acts = np.array([a for _, a in pairs], dtype=int)
        dist = np.maximum((cs[:, None] != cs[None, :]).astype(float), action_space.dist[np.ix_(acts, acts)])
        return cls(tuple(labels), dist, None, tuple(characteristics), tuple(pairs), action_space)

    def characteristic_marginal(self, m: Measure) -> np.ndarray:
        out = np.zeros(len(self.characteristics))
        for (c, _), w in zip(self.pairs, m.weights):
            out[c] += w
        return out

    def action_marginal(self, m: Measure) -> Measure:
        return pushforward(m, lambda i: self.pairs[i][1], self.action_space)


def induced_distribution(game: LimitGame, strategy: TypeStrategy) -> Measure:
    """Joint law of (characteristic, action): weight ``mass_t * g_t(a)`` on ``((A_t, v_t), a)``."""
    check_strategy(game, strategy)
    form = game.distribution_form()
    chars = [c for c, _ in form]
    space = ProductSpace.build(chars, game.space)
    index = {pair: k for k, pair in enumerate(space.pairs)}
    w = np.zeros(len(space))
    for ty, g in zip(game.types, strategy.strategies):
        c = chars.index(ty.characteristic)
        for a in g.support:
            w[index[(c, int(a))]] += ty.mass * g.weights[a]
    return Measure(space, w)


class NEDAtom(NamedTuple):
    characteristic: int
    action: int
    weight: float
    gap: float  # best feasible payoff minus the atom's payoff (>= 0)


def ned_report(dist: Measure, game: LimitGame, tol: float = 1e-9) -> list[NEDAtom]:
    """Per-atom best-response gaps after checking the characteristics marginal."""
    space = dist.space
    if not isinstance(space, ProductSpace):
        raise StructuralError("ned_check needs a distribution on a characteristics x actions ProductSpace")
    if space.action_space is not game.space:
        raise StructuralError("distribution and game use different action spaces")
    target = dict(game.distribution_form())
    marginal = space.characteristic_marginal(dist)
    for c, ch in enumerate(space.characteristics):
        want = target.get(ch, 0.0)
        if abs(marginal[c] - want) > tol:
            raise NEDPreconditionError(
                f"characteristic {ch.describe()} has mass {marginal[c]:.12g}, game has {want:.12g}", ch
            )
    for ch, mass in target.items():
        if ch not in space.characteristics and mass > tol:
            raise NEDPreconditionError(f"characteristic {ch.describe()} (mass {mass:.12g}) is missing", ch)

    tau_a = space.action_marginal(dist)
    atoms = []
    for k in dist.support:
        c, a = space.pairs[k]
        ch = space.characteristics[c]
        values = ch.payoff.values(tau_a)
        best = float(values[list(ch.feasible.members)].max())
        atoms.append(NEDAtom(c, a, float(dist.weights[k]), best - float(values[a])))
    return atoms


def ned_check(dist: Measure, game: LimitGame, tol: float = 1e-9) -> bool:
    """True iff every positive-weight atom plays a best response to the action marginal (within ``tol``)."""
    return all(atom.gap <= tol for atom in ned_report(dist, game, tol))
