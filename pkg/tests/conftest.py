import numpy as np
import pytest

from largegames.finite_games import FinitePlayerGame, MixedProfile, Player
from largegames.payoff import bind
from largegames.spaces import FiniteMetricSpace


def random_space(rng, k=None, dim=2):
    """Euclidean space on k random points (labels p0, p1, ...)."""
    k = int(rng.integers(2, 7)) if k is None else k
    coords = rng.normal(size=(k, dim)) * rng.uniform(0.1, 1.5)
    return FiniteMetricSpace.from_coordinates([f"p{i}" for i in range(k)], coords)


def random_weights(rng, k, sparse=True):
    w = rng.dirichlet(np.ones(k))
    if sparse:
        keep = rng.random(k) < 0.7
        keep[rng.integers(k)] = True
        w = w * keep
    return w / w.sum()


@pytest.fixture
def line3():
    return FiniteMetricSpace.from_coordinates(["x", "y", "z"], [[0.0], [0.4], [1.0]])


@pytest.fixture
def two_points():
    return FiniteMetricSpace.discrete(["a", "b"])


def random_limit_game(rng, k=None, types=None):
    """Random limit game on a discrete space with quadratic congestion-style payoffs."""
    from largegames.limit_game import LimitGame, PlayerType

    k = int(rng.integers(2, 4)) if k is None else k
    types = int(rng.integers(1, 4)) if types is None else types
    S = FiniteMetricSpace.discrete(["a", "b", "c"][:k])
    masses = rng.dirichlet(np.ones(types))
    out = []
    for t in range(types):
        members = [x for x in range(k) if rng.random() < 0.8] or [int(rng.integers(k))]
        terms = []
        for x in S.labels:
            u, c, q = np.round(rng.uniform([0, 0, 0], [1, 1.5, 1]), 3)
            terms.append(f"isact({x})*({u} - {c}*mu({x}) - {q}*mu({x})^2)")
        out.append(PlayerType(float(masses[t]), S.subset(members), bind(" + ".join(terms), S), f"t{t}"))
    total = sum(ty.mass for ty in out)
    out = [PlayerType(ty.mass / total, ty.feasible, ty.payoff, ty.name) for ty in out]
    return LimitGame(S, tuple(out))


def random_payoff(rng, S, kind="quadratic"):
    """Random payoff on a discrete space.

    ``quadratic`` multiplies summary weights; ``affine`` is affine in mu for
    each own action; ``separable`` adds an own-action part to a summary part.
    """
    labels = S.labels
    terms = []
    for x in labels:
        c0, c1, c2 = np.round(rng.uniform(0, 1, 3), 3)
        y = labels[rng.integers(len(labels))]
        if kind == "separable":
            terms.append(f"{c0}*isact({x}) - {c1}*mu({x})")
        elif kind == "affine":
            terms.append(f"isact({x})*({c0} - {c1}*mu({x}))")
        else:
            terms.append(f"isact({x})*({c0} - {c1}*mu({x}) + {c2}*mu({x})*mu({y}))")
    return bind(" + ".join(terms), S)


def random_game(rng, kind="quadratic", n=None, k=None):
    k = int(rng.integers(2, 4)) if k is None else k
    n = int(rng.integers(1, 5)) if n is None else n
    S = FiniteMetricSpace.discrete(["a", "b", "c"][:k])
    w = rng.dirichlet(np.ones(n))
    players = []
    for j in range(n):
        members = [x for x in range(k) if rng.random() < 0.7] or [int(rng.integers(k))]
        players.append(Player(float(w[j]), S.subset(members), random_payoff(rng, S, kind)))
    w_sum = sum(p.weight for p in players)
    players = [Player(p.weight / w_sum, p.feasible, p.payoff) for p in players]
    return FinitePlayerGame(S, tuple(players))


def random_profile(rng, game):
    rows = []
    for p in game.players:
        g = np.zeros(len(game.space))
        g[list(p.feasible.members)] = rng.dirichlet(np.ones(len(p.feasible)))
        rows.append(g)
    return MixedProfile.from_matrix(game, np.array(rows))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
