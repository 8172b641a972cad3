import csv
import io
import json
import math

import numpy as np
import pytest

from conftest import random_limit_game
from largegames.convergence import (
    ExperimentReport,
    GameSequenceSpec,
    bl_norm,
    characteristics_bl,
    characteristics_distance,
    chebyshev_check,
    closed_graph_experiment,
    concentration_experiment,
    discretize,
    limit_gap,
    merge_reports,
    quota_counts,
)
from largegames.errors import DomainError, StructuralError
from largegames.finite_games import FinitePlayerGame, MixedProfile, summary
from largegames.limit_game import LimitGame, PlayerType
from largegames.measures import Measure
from largegames.payoff import bind
from largegames.spaces import FiniteMetricSpace
from oracles import binomial_stderr, bl_oracle, hausdorff_oracle


def congestion_limit():
    S = FiniteMetricSpace.discrete(["a", "b"])
    return LimitGame(S, (PlayerType(1.0, S.full(), bind("isact(a)*(0-mu(a)) + isact(b)*(0-mu(b))", S)),))


def dominant_limit():
    S = FiniteMetricSpace.discrete(["a", "b", "c"])
    return LimitGame(S, (PlayerType(1.0, S.full(), bind("isact(a) + 0.5*mu(b)", S)),))


def two_type_limit(m=0.5):
    S = FiniteMetricSpace.discrete(["a", "b"])
    return LimitGame(
        S,
        (
            PlayerType(m, S.full(), bind("isact(a)*(1 - mu(a)) + isact(b)*(0.7 - 0.5*mu(b))", S)),
            PlayerType(1 - m, S.full(), bind("isact(a)*(0.4 - mu(a)) + isact(b)*(1 - 2*mu(b))", S)),
        ),
    )


# --- specs and discretization ---------------------------------------------


def test_spec_validation():
    g = congestion_limit()
    with pytest.raises(DomainError):
        GameSequenceSpec(g, (10, 10))
    with pytest.raises(DomainError):
        GameSequenceSpec(g, (0, 5))
    with pytest.raises(DomainError):
        GameSequenceSpec(g, ())
    with pytest.raises(DomainError):
        GameSequenceSpec(g, (1, 2), scheme="lottery")
    assert GameSequenceSpec(g, [1, 2]).sizes == (1, 2)


def test_quota_counts():
    assert quota_counts([0.5, 0.5], 4).tolist() == [2, 2]
    assert quota_counts([0.5, 0.5], 3).tolist() == [2, 1]  # tie goes to the lower index
    assert quota_counts([0.6, 0.4], 10).tolist() == [6, 4]
    assert quota_counts([0.2, 0.3, 0.5], 7).tolist() == [1, 2, 4]
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = rng.dirichlet(np.ones(int(rng.integers(1, 6))))
        n = int(rng.integers(1, 500))
        c = quota_counts(m, n)
        assert c.sum() == n and np.all(np.abs(c - m * n) < 1)


def test_discretize_examples():
    single = discretize(congestion_limit(), 7)
    assert single.n == 7 and np.allclose(single.weights, 1 / 7)
    assert len({(p.feasible, p.payoff) for p in single.players}) == 1
    g = discretize(two_type_limit(), 4)
    assert [p.type_index for p in g.players] == [0, 0, 1, 1]
    assert g.sup_weight == 0.25
    with pytest.raises(DomainError):
        discretize(congestion_limit(), 0)
    with pytest.raises(DomainError):
        discretize(congestion_limit(), 3, scheme="other")


def test_iid_discretize_is_seeded():
    lim = two_type_limit(0.3)
    a = [p.type_index for p in discretize(lim, 50, "iid", seed=4).players]
    b = [p.type_index for p in discretize(lim, 50, "iid", seed=4).players]
    c = [p.type_index for p in discretize(lim, 50, "iid", seed=5).players]
    assert a == b and a != c


# --- characteristics ------------------------------------------------------


def test_characteristics_distance_examples():
    S = FiniteMetricSpace.discrete(["a", "b"])
    v = bind("mu(a)", S)
    assert characteristics_distance((S.full(), v), (S.full(), v)) == 0.0
    want = hausdorff_oracle(S.dist, [0], [0, 1])
    assert characteristics_distance((S.subset(["a"]), v), (S.full(), v)) == want == 1.0
    assert characteristics_distance((S.full(), v), (S.full(), bind("mu(a) + 0.3", S))) == pytest.approx(0.3)
    other = FiniteMetricSpace.discrete(["a", "b"])
    with pytest.raises(StructuralError):
        characteristics_distance((S.full(), v), (other.full(), bind("mu(a)", other)))


def test_characteristics_bl_quota():
    lim = two_type_limit(0.5)
    assert characteristics_bl(discretize(lim, 10), lim) == pytest.approx(0.0, abs=1e-12)
    lim = two_type_limit(0.3141)
    prev = math.inf
    for n in (3, 10, 100, 1000):
        d = characteristics_bl(discretize(lim, n), lim)
        assert d <= len(lim.types) / n + 1e-12
        assert d < prev
        prev = d


def test_characteristics_bl_iid_shrinks():
    lim = two_type_limit(0.37)
    medians = [
        np.median([characteristics_bl(discretize(lim, n, "iid", seed=s), lim) for s in range(20)])
        for n in (10, 100, 1000)
    ]
    assert medians[0] > medians[1] > medians[2]


# --- concentration --------------------------------------------------------


def cong_game(n):
    return discretize(congestion_limit(), n)


def test_concentration_pure_profile_is_exact():
    game = cong_game(5)
    prof = MixedProfile.pure(game, ["a", "b", "a", "a", "b"])
    rep = concentration_experiment(game, prof, trials=20)
    assert all(t["bl"] == 0.0 and t["prohorov"] == 0.0 for t in rep.trials)


def test_concentration_single_player_mean():
    game = cong_game(1)
    rep = concentration_experiment(game, MixedProfile.uniform(game), trials=400, seed=3)
    # both draws sit at the same distance from the mean (1/2, 1/2)
    want = bl_oracle(game.space.dist, [1.0, 0.0], [0.5, 0.5])
    assert want == pytest.approx(1 / 3, abs=1e-6)
    assert all(t["bl"] == pytest.approx(want, abs=1e-6) for t in rep.trials)
    assert rep.records[0]["bl"]["mean"] == pytest.approx(1 / 3, abs=1e-9)
    assert rep.records[0]["sup_weight"] == 1.0


def test_concentration_reproducible():
    game = cong_game(30)
    prof = MixedProfile.uniform(game)
    a = concentration_experiment(game, prof, trials=25, seed=1)
    b = concentration_experiment(game, prof, trials=25, seed=1)
    assert a.trials == b.trials
    strip = lambda r: {k: v for k, v in r.items() if k != "wall_time_s"}  # noqa: E731
    assert [strip(r) for r in a.records] == [strip(r) for r in b.records]
    with pytest.raises(DomainError):
        concentration_experiment(game, prof, trials=0)


def test_empirical_distribution_is_unbiased():
    from largegames.convergence import _sample_actions

    rng = np.random.default_rng(0)
    game = discretize(random_limit_game(rng, k=3, types=2), 12)
    G = np.array([np.where(p.feasible.mask(), rng.dirichlet(np.ones(3)), 0.0) for p in game.players])
    G /= G.sum(axis=1, keepdims=True)
    mean = summary(game, MixedProfile.from_matrix(game, G)).weights
    trials = 4000
    draws = np.zeros((trials, 3))
    for t in range(trials):
        np.add.at(draws[t], _sample_actions(G, np.random.default_rng([9, t])), game.weights)
    est = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / math.sqrt(trials)
    assert np.all(np.abs(est - mean) <= 3 * se + 1e-12)


# --- Chebyshev ------------------------------------------------------------


def test_bl_norm():
    S = FiniteMetricSpace.from_coordinates(["x", "y", "z"], [[0.0], [0.5], [2.0]])
    norm, pair = bl_norm(S, [0.1, 0.3, 0.2])
    assert norm == pytest.approx(0.3 + 0.4) and pair == (0, 1)
    assert bl_norm(S, [0.2, 0.2, 0.2]) == (0.2, (0, 0))
    with pytest.raises(StructuralError):
        bl_norm(S, [0.1, 0.2])


def test_chebyshev_constant_and_bound():
    game = discretize(random_limit_game(np.random.default_rng(1), k=3, types=1), 100)
    prof = MixedProfile.uniform(game)
    tail, bound = chebyshev_check(game, prof, [0.3, 0.3, 0.3], omega=1e-9, trials=50)
    assert tail == 0.0
    tail, bound = chebyshev_check(game, prof, [0.4, -0.1, 0.0], omega=0.5, trials=200)
    assert bound == (1 / 100) / 0.5**2 == 0.04
    assert tail <= bound + 3 * binomial_stderr(bound, 200)


def test_chebyshev_rejects_large_norm():
    game = discretize(congestion_limit(), 4)
    with pytest.raises(DomainError, match="'a', 'b'"):
        chebyshev_check(game, MixedProfile.uniform(game), [0.5, -0.5], omega=0.1)
    with pytest.raises(DomainError):
        chebyshev_check(game, MixedProfile.uniform(game), [0.1, 0.1], omega=0)


def test_chebyshev_reproducible():
    game = discretize(congestion_limit(), 20)
    prof = MixedProfile.uniform(game)
    assert chebyshev_check(game, prof, [0.4, -0.1], 0.05, trials=300, seed=2) == chebyshev_check(
        game, prof, [0.4, -0.1], 0.05, trials=300, seed=2
    )


# --- closed graph ---------------------------------------------------------


def test_closed_graph_congestion():
    rep = closed_graph_experiment(GameSequenceSpec(congestion_limit(), (2, 10, 50)))
    for r in rep.records:
        assert r["gap"] <= 1e-6 and r["limit_gap"] <= 1e-6
        assert r["summary"] == pytest.approx({"a": 0.5, "b": 0.5}, abs=1e-6)
        assert r["characteristics_bl"] == 0.0
    assert not rep.metadata["any_flagged"]


def test_closed_graph_dominant():
    rep = closed_graph_experiment(GameSequenceSpec(dominant_limit(), (3, 30)))
    for r in rep.records:
        assert r["gap"] == 0.0 and r["limit_gap"] == 0.0
        assert r["summary"] == {"a": 1.0, "b": 0.0, "c": 0.0}
        assert r["bl_to_limit_rsne"] == 0.0
    assert rep.records[1]["bl_to_previous"] == 0.0


def test_closed_graph_two_type():
    rep = closed_graph_experiment(GameSequenceSpec(two_type_limit(0.6), (10, 50, 100)))
    assert all(r["gap"] <= 1e-6 for r in rep.records)
    gaps = rep.column("limit_gap")
    assert gaps[0] > gaps[1] > gaps[2]
    assert rep.metadata["limit_rsne"]["converged"]
    assert [r["n"] for r in rep.records] == [10, 50, 100]


def test_limit_gap_needs_types():
    lim = congestion_limit()
    S = lim.space
    game = FinitePlayerGame.equal_weights(S, [(S.full(), lim.types[0].payoff)] * 2)
    with pytest.raises(DomainError):
        limit_gap(lim, game, MixedProfile.uniform(game))


def test_limit_gap_skips_empty_types():
    lim = two_type_limit(0.9)
    game = discretize(lim, 1)
    assert [p.type_index for p in game.players] == [0]
    prof = MixedProfile.pure(game, ["a"])
    tau = Measure.point(lim.space, "a")
    v = lim.types[0].payoff
    assert limit_gap(lim, game, prof) == pytest.approx(max(0.0, v(1, tau) - v(0, tau)))


# --- reports --------------------------------------------------------------


def test_report_round_trip(tmp_path):
    game = discretize(congestion_limit(), 10)
    rep = concentration_experiment(game, MixedProfile.uniform(game), trials=5)
    paths = rep.write(str(tmp_path / "conc"))
    assert [p.rsplit("/", 1)[1] for p in paths] == ["conc.json", "conc.csv", "conc.trials.csv"]
    data = json.loads(open(paths[0]).read())
    assert data["records"] == rep.records and data["metadata"]["seed"] == 0
    rows = list(csv.DictReader(io.StringIO(open(paths[1]).read())))
    assert float(rows[0]["bl.q50"]) == rep.records[0]["bl"]["q50"]
    trials = list(csv.DictReader(io.StringIO(rep.trials_csv())))
    assert len(trials) == 5 and trials[0]["trial"] == "0"


def test_report_sorting_merge_and_finiteness():
    a = ExperimentReport([{"n": 50, "x": 1.0}], {"seed": 1})
    b = ExperimentReport([{"n": 10, "x": 2.0}])
    merged = merge_reports([a, b], {"note": "m"})
    assert merged.column("n") == [10, 50] and merged.metadata == {"seed": 1, "note": "m"}
    with pytest.raises(DomainError, match="records"):
        ExperimentReport([{"n": 1, "x": float("nan")}])
    with pytest.raises(DomainError):
        ExperimentReport([{"n": 1, "nested": {"y": float("inf")}}])
