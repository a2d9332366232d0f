"""Exact references for small instances.

``exact_enumerate`` scores every p-subset.  ``vertex_oracle`` solves the
upgrade knapsack by listing the vertices of its feasible polytope (each arc
at 0 or its cap, except at most one partially filled arc); it shares no code
with the greedy solver it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .instance import Instance
from .paths import PathCache
from .upgrade import IMPROVE_TOL, ArcWeights, EvaluatedSolution, Evaluator, UpgradePlan

DEFAULT_EXACT_LIMIT = 5_000_000
MAX_VERTEX_ITEMS = 15


class LimitExceeded(RuntimeError):
    def __init__(self, what: str, required: int, limit: int):
        self.required = required
        self.limit = limit
        super().__init__(f"{what}: {required} exceeds the limit of {limit}")


@dataclass
class OptimalResult:
    best: EvaluatedSolution
    ties: int
    explored: int


def exact_enumerate(
    instance: Instance,
    cache: PathCache,
    limit: int = DEFAULT_EXACT_LIMIT,
    evaluator: Evaluator | None = None,
) -> OptimalResult:
    """Optimal median set by full enumeration (lexicographically first on ties).

    ``ties`` counts the sets within ``IMPROVE_TOL`` of the optimum.
    """
    n, p = instance.n, instance.p
    total = comb(n, p)
    if total > limit:
        raise LimitExceeded(f"C({n},{p}) median sets", total, limit)
    ev = evaluator if evaluator is not None else Evaluator(instance, cache)
    values = np.empty(total)
    best, best_f = None, np.inf
    for k, S in enumerate(combinations(range(1, n + 1), p)):
        f = ev(S)
        values[k] = f
        if f < best_f:
            best, best_f = S, f
    ties = int(np.count_nonzero(values <= best_f + IMPROVE_TOL))
    return OptimalResult(ev.solution(best), ties, total)


@lru_cache(maxsize=None)
def _subset_bits(k: int) -> np.ndarray:
    codes = np.arange(2**k, dtype=np.int64)
    return ((codes[:, None] >> np.arange(k)) & 1).astype(bool)


def vertex_oracle(w, u, budget: float, max_items: int = MAX_VERTEX_ITEMS) -> tuple[np.ndarray, float]:
    """Best upgrade vector over all LP vertices; returns ``(b, gain)``."""
    w = np.asarray(w, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    items = np.flatnonzero(w > 0)
    k = len(items)
    if k > max_items:
        raise LimitExceeded("positive-weight arcs", k, max_items)
    b = np.zeros(len(w))
    if k == 0 or budget <= 0:
        return b, 0.0
    wi, ui = w[items], u[items]
    bits = _subset_bits(k)
    spent = bits @ ui
    full_gain = bits @ (wi * ui)
    feasible = spent <= budget
    bits, spent, full_gain = bits[feasible], spent[feasible], full_gain[feasible]
    left = budget - spent
    partial = np.minimum(ui[None, :], left[:, None])
    extra = np.where(bits, 0.0, wi[None, :] * partial)
    pick = extra.argmax(axis=1)
    gains = full_gain + extra[np.arange(len(pick)), pick]
    row = int(gains.argmax())
    b[items[bits[row]]] = ui[bits[row]]
    if not bits[row, pick[row]] and extra[row, pick[row]] > 0:
        b[items[pick[row]]] = partial[row, pick[row]]
    return b, float(gains[row])


def knapsack_vertex_oracle(weights: ArcWeights, instance: Instance) -> UpgradePlan:
    b, gain = vertex_oracle(weights.w, instance.u, instance.budget)
    return UpgradePlan(b, gain)
