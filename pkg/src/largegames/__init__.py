"""Equilibria, probability metrics and convergence experiments for large anonymous games."""
from largegames.convergence import (
    ExperimentReport,
    GameSequenceSpec,
    characteristics_bl,
    characteristics_distance,
    chebyshev_check,
    closed_graph_experiment,
    concentration_experiment,
    discretize,
)
from largegames.errors import (
    BindError,
    CapacityError,
    DomainError,
    EvaluationError,
    LargeGamesError,
    NEDPreconditionError,
    PayoffSyntaxError,
    ScenarioError,
    StructuralError,
)
from largegames.finite_games import (
    FinitePlayerGame,
    MixedProfile,
    Player,
    deviation_summary,
    exact_expected_payoff,
    mc_expected_payoff,
    mean_field_payoff,
    refine_rsne,
    rsne_gap_exact,
    rsne_gap_meanfield,
    solve_rsne,
    summary,
)
from largegames.limit_game import (
    LimitGame,
    PlayerType,
    TypeStrategy,
    induced_distribution,
    ned_check,
    psi_gap,
    pure_ne_check,
    rsne_check,
    societal_summary,
    solve_limit_rsne,
)
from largegames.measures import Measure, bl_distance, mix, prohorov, pushforward, weighted_empirical
from largegames.payoff import Payoff, bind, evaluate, format, parse, sup_norm_distance
from largegames.scenario import Scenario, load_scenario
from largegames.spaces import ActionSubset, FiniteMetricSpace, hausdorff, validate_metric

__version__ = "0.1.0"

__all__ = [
    "ActionSubset",
    "bind",
    "BindError",
    "bl_distance",
    "CapacityError",
    "characteristics_bl",
    "characteristics_distance",
    "chebyshev_check",
    "closed_graph_experiment",
    "concentration_experiment",
    "deviation_summary",
    "discretize",
    "DomainError",
    "evaluate",
    "EvaluationError",
    "exact_expected_payoff",
    "ExperimentReport",
    "FiniteMetricSpace",
    "FinitePlayerGame",
    "format",
    "GameSequenceSpec",
    "hausdorff",
    "induced_distribution",
    "LargeGamesError",
    "LimitGame",
    "load_scenario",
    "mc_expected_payoff",
    "mean_field_payoff",
    "Measure",
    "mix",
    "MixedProfile",
    "ned_check",
    "NEDPreconditionError",
    "parse",
    "Payoff",
    "PayoffSyntaxError",
    "Player",
    "PlayerType",
    "prohorov",
    "psi_gap",
    "pure_ne_check",
    "pushforward",
    "refine_rsne",
    "rsne_check",
    "rsne_gap_exact",
    "rsne_gap_meanfield",
    "Scenario",
    "ScenarioError",
    "societal_summary",
    "solve_limit_rsne",
    "solve_rsne",
    "StructuralError",
    "summary",
    "sup_norm_distance",
    "TypeStrategy",
    "validate_metric",
    "weighted_empirical",
]
