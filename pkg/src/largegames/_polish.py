"""Support-indifference refinement shared by the finite and limit solvers.

Averaged best-response iterations approach an equilibrium at rate ~1/k, far
too slowly for certified gaps of 1e-6. Once the iterate has found the right
supports, the equilibrium solves a small square system: each class of
interchangeable rows is indifferent among the actions it plays. We guess the
support from the iterate at a few thresholds and hand the system to a
Powell hybrid root finder.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

THRESHOLDS = (1e-2, 1e-3, 1e-6)
VALUE_WINDOWS = (1e-2, 1e-3)


def indifference_polish(
    G0: np.ndarray,
    classes: Sequence[Sequence[int]],
    values: Callable[[np.ndarray, int, tuple], Sequence[float]],
    certify: Callable[[np.ndarray], Optional[float]],
    scores: Optional[np.ndarray] = None,
    residual_tol: float = 1e-9,
):
    """Return ``(G, gap)`` for the best refined strategy matrix, or None.

    ``values(G, row, actions)`` gives the payoffs whose equality defines
    indifference for the class containing ``row``; ``certify(G)`` re-measures
    the gap of a candidate (None if the candidate is invalid). Supports are
    guessed from the weights of ``G0`` and, if given, from ``scores`` (payoff
    of each action at ``G0``, -inf when infeasible): actions within a window
    of the best score.
    """
    guesses = [
        tuple(tuple(int(a) for a in np.nonzero(G0[m[0]] > thr)[0]) for m in classes) for thr in THRESHOLDS
    ]
    if scores is not None:
        for win in VALUE_WINDOWS:
            guesses.append(
                tuple(
                    tuple(int(a) for a in np.nonzero(scores[m[0]] >= scores[m[0]].max() - win)[0])
                    for m in classes
                )
            )
    best = None
    tried = set()
    for supports in guesses:
        if any(not s for s in supports) or supports in tried:
            continue
        tried.add(supports)
        free = [(c, s) for c, s in enumerate(supports) if len(s) > 1]

        def build(x, supports=supports, free=free):
            G = np.zeros_like(G0)
            for c, s in enumerate(supports):
                if len(s) == 1:
                    G[list(classes[c]), s[0]] = 1.0
            pos = 0
            for c, s in free:
                w = np.empty(len(s))
                w[:-1] = x[pos : pos + len(s) - 1]
                w[-1] = 1.0 - w[:-1].sum()
                pos += len(s) - 1
                G[np.ix_(list(classes[c]), list(s))] = w
            return G

        def residual(x, build=build, free=free):
            G = build(x)
            out = []
            for c, s in free:
                d = np.asarray(values(G, classes[c][0], s), dtype=float)
                out.extend(d[1:] - d[0])
            return np.array(out)

        x0 = []
        for c, s in free:
            w = G0[classes[c][0], list(s)]
            x0.extend((w / w.sum())[:-1])
        try:
            if free:
                with np.errstate(all="ignore"):
                    sol = optimize.root(residual, np.array(x0), method="hybr", options={"xtol": 1e-14})
                x = sol.x
                if not np.all(np.isfinite(x)) or np.max(np.abs(residual(x))) > residual_tol:
                    continue
            else:
                x = np.array([])
            G = build(x)
        except (ValueError, ArithmeticError):
            continue
        if G.min() < -1e-12:
            continue
        G = np.maximum(G, 0.0)
        G /= G.sum(axis=1, keepdims=True)
        gap = certify(G)
        if gap is not None and (best is None or gap < best[1]):
            best = (G, gap)
    return best
