import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_space, random_weights
from largegames.errors import DomainError, StructuralError
from largegames.measures import (
    Measure,
    bl_distance,
    format_weight,
    mix,
    prohorov,
    pushforward,
    weighted_empirical,
)
from largegames.spaces import FiniteMetricSpace
from oracles import bl_oracle, prohorov_oracle


def pair_space(d):
    return FiniteMetricSpace.from_matrix(["x", "y"], [[0.0, d], [d, 0.0]])


# Oracle outputs (tests/oracles.py: exhaustive-subset bisection and the
# (m, l)-grid LP), rounded to 9 digits and frozen here.
FROZEN = [
    # (distance matrix, P, H, prohorov, bl)
    ([[0, 0.4], [0.4, 0]], (1, 0), (0, 1), 0.4, 0.333333409),
    ([[0, 1.0], [1.0, 0]], (1, 0), (0, 1), 1.0, 0.666666730),
    ([[0, 1.0], [1.0, 0]], (0.5, 0.5), (1, 0), 0.5, 0.333333365),
    ([[0, 0.3], [0.3, 0]], (0.5, 0.5), (1, 0), 0.3, 0.130434824),
    ([[0, 2.5], [2.5, 0]], (0.2, 0.8), (0.7, 0.3), 0.5, 0.555555578),
    ([[0, 0.4, 1], [0.4, 0, 0.6], [1, 0.6, 0]], (0.2, 0.3, 0.5), (0.6, 0.1, 0.3), 0.4, 0.186666675),
]


@pytest.mark.parametrize("d,p,h,rho,beta", FROZEN)
def test_frozen_values(d, p, h, rho, beta):
    S = FiniteMetricSpace.from_matrix([f"p{i}" for i in range(len(p))], d)
    P, H = Measure(S, p), Measure(S, h)
    assert prohorov(P, H) == pytest.approx(rho, abs=1e-6)
    assert bl_distance(P, H) == pytest.approx(beta, abs=1e-6)


@pytest.mark.parametrize("d", [0.05, 0.2, 0.4, 1.0, 1.5, 3.0])
def test_point_mass_closed_forms(d):
    S = pair_space(d)
    x, y = Measure.point(S, "x"), Measure.point(S, "y")
    assert prohorov(x, y) == pytest.approx(min(d, 1.0), abs=1e-12)
    assert bl_distance(x, y) == pytest.approx(2 * d / (2 + d), abs=1e-12)


def test_measure_validation_and_renormalization(two_points):
    m = Measure(two_points, [0.5, 0.5 + 5e-10])
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DomainError):
        Measure(two_points, [0.5, 0.6])
    with pytest.raises(DomainError):
        Measure(two_points, [1.1, -0.1])
    with pytest.raises(StructuralError):
        Measure(two_points, [1.0])


def test_measure_constructors(line3):
    u = Measure.uniform(line3)
    assert np.allclose(u.weights, 1 / 3)
    on = Measure.uniform(line3, line3.subset(["x", "z"]))
    assert on.to_dict() == {"x": 0.5, "z": 0.5}
    assert Measure.from_dict(line3, {"y": 1}) == Measure.point(line3, "y")
    assert list(on.support) == [0, 2]
    assert on.mass(line3.subset(["x"])) == 0.5
    assert on["z"] == 0.5 and on[1] == 0.0


def test_mix(line3):
    P = Measure.uniform(line3)
    assert mix([(1.0, P)]) == P
    xy = mix([(0.5, Measure.point(line3, "x")), (0.5, Measure.point(line3, "y"))])
    assert xy.to_dict() == {"x": 0.5, "y": 0.5}
    assert mix([(0.2, P), (0.3, P), (0.5, P)]).isclose(P)
    with pytest.raises(DomainError):
        mix([(0.5, P), (0.4, P)])
    with pytest.raises(StructuralError):
        mix([(0.5, P), (0.5, Measure.uniform(pair_space(1.0)))])


def test_weighted_empirical(line3):
    assert weighted_empirical(line3, [0], [1.0]) == Measure.point(line3, 0)
    m = weighted_empirical(line3, [0, 0, 1], [0.25, 0.25, 0.5])
    assert np.allclose(m.weights, [0.5, 0.5, 0.0])
    assert weighted_empirical(line3, [2] * 7, [1 / 7] * 7).isclose(Measure.point(line3, 2))
    with pytest.raises(StructuralError):
        weighted_empirical(line3, [3], [1.0])


def test_pushforward(two_points, line3):
    m = Measure(two_points, [0.3, 0.7])
    assert pushforward(m, {0: 0, 1: 1}) == m
    assert np.allclose(pushforward(m, {0: 1, 1: 0}).weights, [0.7, 0.3])
    assert pushforward(m, lambda i: 2, line3) == Measure.point(line3, 2)
    with pytest.raises(StructuralError):
        pushforward(m, {0: 0})


def test_mismatched_spaces(two_points):
    other = pair_space(1.0)
    with pytest.raises(StructuralError):
        prohorov(Measure.point(two_points, 0), Measure.point(other, 0))
    with pytest.raises(StructuralError):
        bl_distance(Measure.point(two_points, 0), Measure.point(other, 0))


def test_prohorov_and_bl_match_oracles_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(40):
        S = random_space(rng, int(rng.integers(2, 6)))
        p, q = random_weights(rng, len(S)), random_weights(rng, len(S))
        P, Q = Measure(S, p), Measure(S, q)
        assert prohorov(P, Q) == pytest.approx(prohorov_oracle(S.dist, P.weights, Q.weights), abs=1e-6)
        assert bl_distance(P, Q) == pytest.approx(bl_oracle(S.dist, P.weights, Q.weights), abs=1e-6)


def test_flow_and_exhaustive_agree():
    rng = np.random.default_rng(3)
    for _ in range(60):
        S = random_space(rng, int(rng.integers(2, 8)))
        P, Q = Measure(S, random_weights(rng, len(S))), Measure(S, random_weights(rng, len(S)))
        assert prohorov(P, Q, method="flow") == pytest.approx(prohorov(P, Q, method="exhaustive"), abs=1e-9)


def test_large_support_uses_flow():
    rng = np.random.default_rng(5)
    S = random_space(rng, 30)
    P, Q = Measure(S, random_weights(rng, 30, sparse=False)), Measure(S, random_weights(rng, 30, sparse=False))
    r = prohorov(P, Q)
    assert 0 < r <= 1
    assert r == pytest.approx(prohorov(P, Q, method="flow"), abs=1e-12)


def test_bounds_and_relation():
    rng = np.random.default_rng(9)
    for _ in range(200):
        S = random_space(rng)
        P, Q = Measure(S, random_weights(rng, len(S))), Measure(S, random_weights(rng, len(S)))
        rho, beta = prohorov(P, Q), bl_distance(P, Q)
        assert 0 <= beta <= 2 + 1e-12
        assert 0 <= rho <= max(1.0, S.diameter) + 1e-12
        assert beta <= 2 * rho + 1e-9


def _axioms(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, int(rng.integers(2, 7)))
    P, Q, R = (Measure(S, random_weights(rng, len(S))) for _ in range(3))
    for dist in (prohorov, bl_distance):
        pq, qp = dist(P, Q), dist(Q, P)
        assert abs(pq - qp) <= 1e-7
        assert dist(P, P) == 0.0
        assert (pq <= 1e-7) == np.allclose(P.weights, Q.weights, atol=1e-9)
        assert pq <= dist(P, R) + dist(R, Q) + 1e-7


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_axioms_property(seed):
    _axioms(seed)


def test_convergence_agreement_between_metrics():
    """Both metrics go to zero along convergent sequences and stay away along non-convergent ones."""
    rng = np.random.default_rng(21)
    for _ in range(100):
        S = random_space(rng, int(rng.integers(2, 6)))
        P = Measure(S, random_weights(rng, len(S)))
        far = Measure(S, random_weights(rng, len(S)))
        tail = Measure(S, (1 - 1e-4) * P.weights + 1e-4 * far.weights)
        assert prohorov(tail, P) < 1e-3 and bl_distance(tail, P) < 1e-3
    for _ in range(100):
        S = random_space(rng, int(rng.integers(2, 6)))
        P = Measure.point(S, 0)
        away = Measure(S, 0.5 * P.weights + 0.5 * Measure.point(S, len(S) - 1).weights)
        floor = 0.5 * min(1.0, S.dist[0, -1])
        assert prohorov(away, P) >= floor - 1e-9
        assert bl_distance(away, P) >= floor / (1 + S.dist[0, -1]) - 1e-9


def test_format_weight_has_twelve_digits():
    assert format_weight(1 / 3) == "0.333333333333"
    assert format_weight(2 / 3) == "0.666666666667"
