import numpy as np
import pytest

from conftest import random_limit_game
from largegames.errors import DomainError, NEDPreconditionError, StructuralError
from largegames.limit_game import (
    LimitGame,
    PlayerType,
    ProductSpace,
    TypeStrategy,
    induced_distribution,
    ned_check,
    ned_report,
    psi_gap,
    pure_ne_check,
    rsne_check,
    societal_summary,
    solve_limit_rsne,
)
from largegames.measures import Measure
from largegames.payoff import bind
from largegames.spaces import FiniteMetricSpace


def single(expr, labels=("a", "b")):
    S = FiniteMetricSpace.discrete(list(labels))
    return LimitGame(S, (PlayerType(1.0, S.full(), bind(expr, S)),))


def congestion():
    S = FiniteMetricSpace.discrete(["a", "b"])
    return LimitGame(S, (PlayerType(1.0, S.full(), bind("isact(a)*(0-mu(a)) + isact(b)*(0-mu(b))", S)),))


def two_type():
    S = FiniteMetricSpace.discrete(["a", "b"])
    return LimitGame(
        S,
        (
            PlayerType(0.5, S.full(), bind("isact(a)*(1 - mu(a)) + isact(b)*(0.7 - 0.5*mu(b))", S)),
            PlayerType(0.5, S.full(), bind("isact(a)*(0.4 - mu(a)) + isact(b)*(1 - 2*mu(b))", S)),
        ),
    )


def psi_oracle(game, strategy, t):
    """Direct evaluation of min over feasible a' of (expected own payoff - payoff of a')."""
    tau = sum(ty.mass * np.asarray(g.weights) for ty, g in zip(game.types, strategy.strategies))
    mu = Measure(game.space, tau / tau.sum())
    ty, g = game.types[t], strategy[t]
    own = sum(g.weights[a] * ty.payoff(a, mu) for a in range(len(game.space)) if g.weights[a] > 0)
    return min(own - ty.payoff(a, mu) for a in ty.feasible.members)


def random_strategy(rng, game):
    rows = []
    for ty in game.types:
        g = np.zeros(len(game.space))
        g[list(ty.feasible.members)] = rng.dirichlet(np.ones(len(ty.feasible)))
        rows.append(g)
    return TypeStrategy.from_matrix(game, np.array(rows))


# --- construction ---------------------------------------------------------


def test_invariants():
    S = FiniteMetricSpace.discrete(["a", "b"])
    v = bind("mu(a)", S)
    with pytest.raises(DomainError):
        LimitGame(S, (PlayerType(0.7, S.full(), v),))
    with pytest.raises(DomainError):
        LimitGame(S, ())
    with pytest.raises(DomainError):
        LimitGame(S, (PlayerType(1.0, S.full(), v), PlayerType(0.0, S.full(), v)))
    other = FiniteMetricSpace.discrete(["a", "b"])
    with pytest.raises(StructuralError):
        LimitGame(S, (PlayerType(1.0, other.full(), v),))
    game = LimitGame(S, (PlayerType(1.0, S.subset(["a"]), v),))
    with pytest.raises(DomainError):
        societal_summary(game, TypeStrategy([Measure.uniform(S)]))
    with pytest.raises(StructuralError):
        societal_summary(game, TypeStrategy.uniform(single("mu(a)")))


def test_summary_examples():
    game = two_type()
    S = game.space
    assert societal_summary(game, TypeStrategy.pure(game, ["a", "a"])) == Measure.point(S, 0)
    assert np.allclose(societal_summary(game, TypeStrategy.pure(game, ["a", "b"])).weights, [0.5, 0.5])
    assert np.allclose(societal_summary(game, TypeStrategy.uniform(game)).weights, [0.5, 0.5])


def test_summary_is_linear():
    rng = np.random.default_rng(0)
    for _ in range(30):
        game = random_limit_game(rng)
        s1, s2 = random_strategy(rng, game), random_strategy(rng, game)
        t = rng.random()
        mixed = TypeStrategy.from_matrix(game, t * s1.matrix() + (1 - t) * s2.matrix())
        want = t * societal_summary(game, s1).weights + (1 - t) * societal_summary(game, s2).weights
        assert np.allclose(societal_summary(game, mixed).weights, want, atol=1e-14)


def test_distribution_form_merges_equal_characteristics():
    S = FiniteMetricSpace.discrete(["a", "b"])
    v = bind("1 - mu(a)", S)
    game = LimitGame(S, (PlayerType(0.2, S.full(), v), PlayerType(0.5, S.subset(["a"]), v), PlayerType(0.3, S.full(), bind("1-mu( a )", S))))
    form = game.distribution_form()
    assert [round(m, 12) for _, m in form] == [0.5, 0.5]


# --- psi and rsne_check ---------------------------------------------------


def test_psi_examples():
    game = single("isact(a) + 0.5*isact(b)")
    S, ty = game.space, game.types[0]
    tau = Measure.uniform(S)
    assert psi_gap(ty.feasible, ty.payoff, Measure.point(S, "a"), tau) == 0.0
    assert psi_gap(ty.feasible, ty.payoff, Measure.point(S, "b"), tau) == pytest.approx(-0.5)
    cong = congestion().types[0]
    assert psi_gap(cong.feasible, cong.payoff, tau, tau) == 0.0
    with pytest.raises(DomainError):
        psi_gap(S.subset(["a"]), ty.payoff, tau, tau)


def test_psi_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        game = random_limit_game(rng)
        strat = random_strategy(rng, game)
        tau = societal_summary(game, strat)
        for t, ty in enumerate(game.types):
            assert psi_gap(ty.feasible, ty.payoff, strat[t], tau) == pytest.approx(psi_oracle(game, strat, t), abs=1e-12)
        check = rsne_check(game, strat)
        worst = min(psi_oracle(game, strat, t) for t in range(len(game.types)))
        assert check.worst_gap == pytest.approx(max(0.0, -worst), abs=1e-12)
        assert check.is_equilibrium == (worst >= 0)


def test_rsne_check_examples():
    dom = single("isact(a)")
    ok = rsne_check(dom, TypeStrategy.pure(dom, ["a"]))
    assert ok.is_equilibrium and ok.worst_gap == 0.0
    bad = rsne_check(dom, TypeStrategy.pure(dom, ["b"]))
    assert not bad.is_equilibrium
    assert (bad.witness_type, bad.witness_action, bad.worst_gap) == (0, 0, 1.0)
    cong = congestion()
    assert rsne_check(cong, TypeStrategy.uniform(cong)).is_equilibrium
    assert rsne_check(dom, TypeStrategy.pure(dom, ["b"]), tol=1.0).is_equilibrium
    with pytest.raises(DomainError):
        rsne_check(dom, TypeStrategy.pure(dom, ["a"]), tol=-1)


def test_pure_profiles_agree_with_pure_check():
    rng = np.random.default_rng(2)
    for _ in range(200):
        game = random_limit_game(rng)
        actions = [ty.feasible.members[rng.integers(len(ty.feasible))] for ty in game.types]
        assert pure_ne_check(game, actions) == rsne_check(game, TypeStrategy.pure(game, actions)).is_equilibrium


def test_pure_check_rejects_infeasible():
    S = FiniteMetricSpace.discrete(["a", "b"])
    game = LimitGame(S, (PlayerType(1.0, S.subset(["a"]), bind("mu(a)", S)),))
    with pytest.raises(DomainError):
        pure_ne_check(game, ["b"])


# --- solver ---------------------------------------------------------------


def test_solver_examples():
    res = solve_limit_rsne(single("isact(a) + 0.2*mu(b)", ("a", "b", "c")))
    assert res.converged and res.gap == 0.0
    assert res.strategy[0] == Measure.point(res.strategy[0].space, "a")
    res = solve_limit_rsne(congestion())
    assert res.gap <= 1e-6
    assert np.allclose(res.strategy[0].weights, [0.5, 0.5], atol=1e-6)
    with pytest.raises(DomainError):
        solve_limit_rsne(congestion(), tol=0)


def test_solver_two_type_interior():
    game = two_type()
    res = solve_limit_rsne(game, tol=1e-10)
    assert res.converged
    assert rsne_check(game, res.strategy, tol=1e-10).is_equilibrium
    a = solve_limit_rsne(game)
    b = solve_limit_rsne(game)
    assert np.array_equal(a.strategy.matrix(), b.strategy.matrix())


def test_solver_random_games_pass_ned():
    rng = np.random.default_rng(3)
    for _ in range(30):
        game = random_limit_game(rng)
        res = solve_limit_rsne(game)
        assert res.gap == pytest.approx(rsne_check(game, res.strategy).worst_gap, abs=1e-15)
        if res.gap <= 1e-6:
            assert ned_check(induced_distribution(game, res.strategy), game, tol=2e-6)


# --- induced distributions and NED ----------------------------------------


def test_induced_distribution_examples():
    dom = single("isact(a)")
    d = induced_distribution(dom, TypeStrategy.pure(dom, ["a"]))
    assert isinstance(d.space, ProductSpace)
    assert d.support.tolist() == [0] and d.space.pairs[0] == (0, 0)
    game = two_type()
    d = induced_distribution(game, TypeStrategy.uniform(game))
    assert np.allclose(d.weights, 0.25)


def test_induced_distribution_marginals():
    rng = np.random.default_rng(4)
    for _ in range(50):
        game = random_limit_game(rng)
        strat = random_strategy(rng, game)
        d = induced_distribution(game, strat)
        form = game.distribution_form()
        assert np.allclose(d.space.characteristic_marginal(d), [m for _, m in form], atol=1e-12)
        assert np.allclose(d.space.action_marginal(d).weights, societal_summary(game, strat).weights, atol=1e-12)


def test_ned_examples():
    dom = single("isact(a)")
    assert ned_check(induced_distribution(dom, TypeStrategy.pure(dom, ["a"])), dom)
    assert not ned_check(induced_distribution(dom, TypeStrategy.pure(dom, ["b"])), dom)
    g = congestion()
    assert ned_check(induced_distribution(g, TypeStrategy.uniform(g)), g)
    report = ned_report(induced_distribution(dom, TypeStrategy.pure(dom, ["b"])), dom)
    assert [(a.characteristic, a.action, a.weight, a.gap) for a in report] == [(0, 1, 1.0, 1.0)]


def test_ned_precondition():
    game = two_type()
    d = induced_distribution(game, TypeStrategy.uniform(game))
    skewed = Measure(d.space, [0.4, 0.4, 0.1, 0.1])
    with pytest.raises(NEDPreconditionError) as info:
        ned_check(skewed, game)
    assert info.value.characteristic == d.space.characteristics[0]
    with pytest.raises(StructuralError):
        ned_check(Measure.uniform(game.space), game)
    other = single("isact(a)")
    with pytest.raises(StructuralError):
        ned_check(d, other)
