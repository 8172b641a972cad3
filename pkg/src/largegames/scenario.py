"""YAML scenario files: parsing, validation with field paths and line numbers.

A scenario looks like::

    space:
      points: [a, b]
      coordinates: [[0.0], [1.0]]   # or  matrix: [[0, 1], [1, 0]]  (default: discrete metric)
    types:
      - name: commuters
        mass: 0.6
        feasible: [a, b]            # default: every point
        payoff: "isact(a)*(1 - mu(a)) + isact(b)*(0.7 - 0.5*mu(b))"
    measures:                       # optional named measures, for `metric`
      p: {a: 0.5, b: 0.5}
    finite_game:                    # optional explicit finite game
      players:
        - weight: 0.5
          feasible: [a]
          payoff: "isact(a)"
          strategy: {a: 1}          # optional
    experiment:                     # optional; these are the defaults
      sizes: [10, 50, 100, 500]
      scheme: quota
      trials: 200
      tol: 1.0e-6
      seed: 0
      max_iter: 20000
      method: damped-br
      profile: solved               # profile used by `concentrate`: solved | uniform

Every problem found is reported with the dotted field path (for example
``types[1].payoff`` or ``types.mass``) and the line it sits on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from largegames.errors import BindError, LargeGamesError, PayoffSyntaxError, ScenarioError
from largegames.finite_games import FinitePlayerGame, MixedProfile, Player
from largegames.limit_game import LimitGame, PlayerType
from largegames.measures import SUM_TOL, Measure
from largegames.payoff import Payoff
from largegames.spaces import FiniteMetricSpace

EXPERIMENT_DEFAULTS = {
    "sizes": [10, 50, 100, 500],
    "scheme": "quota",
    "trials": 200,
    "tol": 1e-6,
    "seed": 0,
    "max_iter": 20000,
    "method": "damped-br",
    "profile": "solved",
}
TOP_LEVEL = ("space", "types", "measures", "finite_game", "experiment")


@dataclass
class Issue:
    field: str
    line: Optional[int]
    message: str
    warning: bool = False

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        kind = "warning" if self.warning else "error"
        return f"{where}{kind}: {self.field}: {self.message}"

    def to_error(self) -> ScenarioError:
        return ScenarioError(self.message, self.field, self.line)


@dataclass
class Scenario:
    space: FiniteMetricSpace
    limit: LimitGame
    measures: dict = field(default_factory=dict)
    finite: Optional[FinitePlayerGame] = None
    finite_profile: Optional[MixedProfile] = None
    experiment: dict = field(default_factory=lambda: dict(EXPERIMENT_DEFAULTS))
    warnings: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


def _line_map(node, path: str, out: dict):
    """Record the 1-based line of every mapping key and sequence item under ``path``."""
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            sub = f"{path}.{key.value}" if path else str(key.value)
            out[sub] = key.start_mark.line + 1
            _line_map(value, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for k, item in enumerate(node.value):
            sub = f"{path}[{k}]"
            out[sub] = item.start_mark.line + 1
            _line_map(item, sub, out)


class _Checker:
    def __init__(self, lines: dict):
        self.lines = lines
        self.issues: list[Issue] = []

    def line(self, path: str) -> Optional[int]:
        while path:
            if path in self.lines:
                return self.lines[path]
            cut = max(path.rfind("."), path.rfind("["))
            path = path[:cut] if cut > 0 else ""
        return None

    def error(self, path: str, message: str, line: Optional[int] = None):
        self.issues.append(Issue(path, line if line is not None else self.line(path), message))

    def warn(self, path: str, message: str):
        self.issues.append(Issue(path, self.line(path), message, warning=True))

    def number(self, value, path: str, integer: bool = False):
        try:
            x = float(value) if not isinstance(value, bool) else math.nan
        except (TypeError, ValueError):
            x = math.nan
        if not math.isfinite(x) or (integer and x != int(x)):
            self.error(path, f"expected {'an integer' if integer else 'a finite number'}, got {value!r}")
            return None
        return int(x) if integer else x


def _labels(ck: _Checker, space, value, path: str):
    if value is None:
        return space.full()
    if not isinstance(value, list) or not value:
        ck.error(path, "expected a nonempty list of point labels")
        return None
    bad = [str(v) for v in value if str(v) not in space.labels]
    if bad:
        ck.error(path, f"unknown point label(s) {bad}")
        return None
    return space.subset([str(v) for v in value])


def _payoff(ck: _Checker, space, text, path: str, cache: dict):
    if not isinstance(text, str) or not text.strip():
        ck.error(path, "expected a payoff expression string")
        return None
    if text in cache:
        return cache[text]
    try:
        v = Payoff(text, space)
    except PayoffSyntaxError as exc:
        ck.error(path, f"syntax error: {exc}")
        return None
    except BindError as exc:
        ck.error(path, f"bind error: {exc}")
        return None
    except LargeGamesError as exc:
        ck.error(path, str(exc))
        return None
    if v.flagged:
        ck.warn(path, "uses division or log; continuity in the summary is not checked")
    cache[text] = v
    return v


def _measure(ck: _Checker, space, value, path: str):
    if not isinstance(value, dict) or not value:
        ck.error(path, "expected a mapping from point labels to weights")
        return None
    weights = np.zeros(len(space))
    ok = True
    for lab, w in value.items():
        if str(lab) not in space.labels:
            ck.error(f"{path}.{lab}", f"unknown point label {str(lab)!r}")
            ok = False
            continue
        x = ck.number(w, f"{path}.{lab}")
        if x is None:
            ok = False
        elif x < 0:
            ck.error(f"{path}.{lab}", f"negative weight {x!r}")
            ok = False
        else:
            weights[space.index(str(lab))] += x
    if not ok:
        return None
    if abs(weights.sum() - 1.0) > SUM_TOL:
        ck.error(path, f"weights sum to {weights.sum()!r}, not 1")
        return None
    return Measure(space, weights)


def _space(ck: _Checker, block):
    if not isinstance(block, dict):
        ck.error("space", "missing or not a mapping")
        return None
    points = block.get("points")
    if not isinstance(points, list) or not points:
        ck.error("space.points", "expected a nonempty list of labels")
        return None
    labels = [str(p) for p in points]
    if len(set(labels)) != len(labels):
        ck.error("space.points", "duplicate labels")
        return None
    unknown = set(block) - {"points", "coordinates", "matrix"}
    for key in sorted(unknown):
        ck.error(f"space.{key}", "unknown key")
    if "coordinates" in block and "matrix" in block:
        ck.error("space", "give either coordinates or matrix, not both")
        return None
    try:
        if "coordinates" in block:
            c = np.asarray(block["coordinates"], dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.ndim != 2 or c.shape[0] != len(labels) or not np.all(np.isfinite(c)):
                ck.error("space.coordinates", f"expected {len(labels)} finite coordinate vectors")
                return None
            return FiniteMetricSpace.from_coordinates(labels, c)
        if "matrix" in block:
            m = np.asarray(block["matrix"], dtype=float)
            return FiniteMetricSpace.from_matrix(labels, m)
        return FiniteMetricSpace.discrete(labels)
    except (TypeError, ValueError, LargeGamesError) as exc:
        ck.error("space.matrix" if "matrix" in block else "space", str(exc))
        return None


def _types(ck: _Checker, space, block, cache):
    if not isinstance(block, list) or not block:
        ck.error("types", "expected a nonempty list of types")
        return None
    types, masses, ok = [], [], True
    for t, entry in enumerate(block):
        path = f"types[{t}]"
        if not isinstance(entry, dict):
            ck.error(path, "expected a mapping")
            ok = False
            continue
        for key in sorted(set(entry) - {"name", "mass", "feasible", "payoff"}):
            ck.error(f"{path}.{key}", "unknown key")
        mass = ck.number(entry.get("mass"), f"{path}.mass")
        if mass is not None and mass <= 0:
            ck.error(f"{path}.mass", f"mass must be positive, got {mass!r}")
            mass = None
        feasible = _labels(ck, space, entry.get("feasible"), f"{path}.feasible")
        payoff = _payoff(ck, space, entry.get("payoff"), f"{path}.payoff", cache)
        if mass is None or feasible is None or payoff is None:
            ok = False
            continue
        masses.append(mass)
        types.append(PlayerType(mass, feasible, payoff, str(entry.get("name", f"type{t}"))))
    if not ok:
        return None
    total = sum(masses)
    if abs(total - 1.0) > SUM_TOL:
        ck.error("types.mass", f"type masses sum to {total:.12g}, not 1", ck.line("types"))
        return None
    return LimitGame(space, types)


def _finite(ck: _Checker, space, block, cache):
    if not isinstance(block, dict) or not isinstance(block.get("players"), list) or not block["players"]:
        ck.error("finite_game.players", "expected a nonempty list of players")
        return None, None
    players, strategies, ok = [], [], True
    for i, entry in enumerate(block["players"]):
        path = f"finite_game.players[{i}]"
        if not isinstance(entry, dict):
            ck.error(path, "expected a mapping")
            ok = False
            continue
        for key in sorted(set(entry) - {"weight", "feasible", "payoff", "strategy"}):
            ck.error(f"{path}.{key}", "unknown key")
        w = ck.number(entry.get("weight"), f"{path}.weight")
        if w is not None and w <= 0:
            ck.error(f"{path}.weight", f"weight must be positive, got {w!r}")
            w = None
        feasible = _labels(ck, space, entry.get("feasible"), f"{path}.feasible")
        payoff = _payoff(ck, space, entry.get("payoff"), f"{path}.payoff", cache)
        strat = None
        if "strategy" in entry:
            strat = _measure(ck, space, entry["strategy"], f"{path}.strategy")
            if strat is None:
                ok = False
            elif feasible is not None and abs(strat.mass(feasible) - 1.0) > SUM_TOL:
                ck.error(f"{path}.strategy", "puts mass outside the feasible set")
                ok = False
        if w is None or feasible is None or payoff is None:
            ok = False
            continue
        players.append(Player(w, feasible, payoff))
        strategies.append(strat)
    if not ok:
        return None, None
    total = sum(p.weight for p in players)
    if abs(total - 1.0) > SUM_TOL:
        ck.error("finite_game.players.weight", f"player weights sum to {total:.12g}, not 1", ck.line("finite_game.players"))
        return None, None
    game = FinitePlayerGame(space, players)
    profile = None
    if any(s is not None for s in strategies):
        if any(s is None for s in strategies):
            ck.error("finite_game.players", "either every player or no player gives a strategy")
            return game, None
        profile = MixedProfile(strategies)
    return game, profile


def _experiment(ck: _Checker, block):
    exp = dict(EXPERIMENT_DEFAULTS)
    if block is None:
        return exp
    if not isinstance(block, dict):
        ck.error("experiment", "expected a mapping")
        return exp
    for key in sorted(set(block) - set(EXPERIMENT_DEFAULTS)):
        ck.error(f"experiment.{key}", "unknown key")
    if "sizes" in block:
        sizes = block["sizes"]
        vals = [ck.number(s, f"experiment.sizes[{k}]", integer=True) for k, s in enumerate(sizes)] if isinstance(sizes, list) else None
        if not sizes or vals is None:
            ck.error("experiment.sizes", "expected a nonempty list of player counts")
        elif None not in vals:
            if any(n < 1 for n in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
                ck.error("experiment.sizes", f"sizes must be positive and strictly increasing, got {vals}")
            else:
                exp["sizes"] = vals
    for key in ("trials", "seed", "max_iter"):
        if key in block:
            x = ck.number(block[key], f"experiment.{key}", integer=True)
            if x is not None and (x < 0 or (key != "seed" and x < 1)):
                ck.error(f"experiment.{key}", f"out of range: {x}")
            elif x is not None:
                exp[key] = x
    if "tol" in block:
        x = ck.number(block["tol"], "experiment.tol")
        if x is not None and x <= 0:
            ck.error("experiment.tol", f"tol must be positive, got {x!r}")
        elif x is not None:
            exp["tol"] = x
    choices = {"scheme": ("quota", "iid"), "method": ("damped-br", "fictitious-play"), "profile": ("solved", "uniform")}
    for key, allowed in choices.items():
        if key in block:
            if block[key] not in allowed:
                ck.error(f"experiment.{key}", f"expected one of {list(allowed)}, got {block[key]!r}")
            else:
                exp[key] = block[key]
    return exp


def check_scenario(text: str) -> tuple[Optional[Scenario], list[Issue]]:
    """Parse and validate scenario text. The scenario is None iff an error (not a warning) was found."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        return None, [Issue("<file>", line, f"YAML syntax error: {getattr(exc, 'problem', exc)}")]
    lines: dict = {}
    if root is not None:
        _line_map(root, "", lines)
    ck = _Checker(lines)
    if not isinstance(data, dict):
        ck.error("<file>", "top level must be a mapping")
        return None, ck.issues
    for key in sorted(set(data) - set(TOP_LEVEL), key=str):
        ck.error(str(key), "unknown top-level key")
    cache: dict = {}
    space = _space(ck, data.get("space"))
    limit = finite = profile = None
    measures = {}
    if space is not None:
        limit = _types(ck, space, data.get("types"), cache)
        for name, m in (data.get("measures") or {}).items():
            meas = _measure(ck, space, m, f"measures.{name}")
            if meas is not None:
                measures[str(name)] = meas
        if data.get("measures") is not None and not isinstance(data.get("measures"), dict):
            ck.error("measures", "expected a mapping of named measures")
        if "finite_game" in data:
            finite, profile = _finite(ck, space, data["finite_game"], cache)
    experiment = _experiment(ck, data.get("experiment"))
    issues = ck.issues
    if any(not i.warning for i in issues) or limit is None:
        return None, issues
    warnings = [i for i in issues if i.warning]
    return Scenario(space, limit, measures, finite, profile, experiment, warnings, data), issues


def load_scenario(path: str) -> Scenario:
    """Read and validate a scenario file; raise ScenarioError on the first error."""
    with open(path) as fh:
        text = fh.read()
    scenario, issues = check_scenario(text)
    if scenario is None:
        first = next(i for i in issues if not i.warning)
        err = first.to_error()
        err.issues = issues
        raise err
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    """Canonical YAML text for ``scenario`` (loads back to an equivalent scenario)."""
    space = scenario.space
    out: dict[str, Any] = {"space": {"points": list(space.labels)}}
    if space.coords is not None:
        out["space"]["coordinates"] = space.coords.tolist()
    else:
        out["space"]["matrix"] = space.dist.tolist()
    out["types"] = [
        {
            "name": scenario.limit.type_name(t),
            "mass": float(ty.mass),
            "feasible": list(ty.feasible.labels),
            "payoff": ty.payoff.source,
        }
        for t, ty in enumerate(scenario.limit.types)
    ]
    if scenario.measures:
        out["measures"] = {k: m.to_dict() for k, m in scenario.measures.items()}
    if scenario.finite is not None:
        players = []
        for i, p in enumerate(scenario.finite.players):
            entry = {"weight": float(p.weight), "feasible": list(p.feasible.labels), "payoff": p.payoff.source}
            if scenario.finite_profile is not None:
                entry["strategy"] = scenario.finite_profile[i].to_dict()
            players.append(entry)
        out["finite_game"] = {"players": players}
    out["experiment"] = dict(scenario.experiment)
    return yaml.safe_dump(out, sort_keys=False)
