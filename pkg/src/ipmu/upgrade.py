"""Evaluation of median sets: assignment, arc weights and the upgrade knapsack.

Given medians ``S`` every client is served by the median reaching it fastest
(ties: cheaper path, then lower median id).  Each arc's weight is the demand
routed over it.  Spending the budget on arcs is then a bounded fractional
knapsack, solved greedily by weight.  ``F(S)`` is the served cost minus the
upgrade gain.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .instance import Instance
from .paths import PathCache

# Absolute margin a candidate must beat the incumbent by to count as an improvement.
IMPROVE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Assignment:
    medians: tuple[int, ...]
    serving: np.ndarray  # serving[i - 1] = median id serving client i


@dataclass(frozen=True, eq=False)
class ArcWeights:
    w: np.ndarray


@dataclass(frozen=True, eq=False)
class UpgradePlan:
    b: np.ndarray
    gain: float

    @property
    def spent(self) -> float:
        return float(self.b.sum())


@dataclass(frozen=True, eq=False)
class EvaluatedSolution:
    medians: tuple[int, ...]
    assignment: Assignment
    weights: ArcWeights
    plan: UpgradePlan
    base_cost: float
    objective: float


def median_key(S: Iterable[int]) -> tuple[int, ...]:
    key = tuple(sorted(int(s) for s in S))
    if len(set(key)) != len(key):
        raise ValueError(f"duplicate medians in {key}")
    return key


def _serving(cache: PathCache, med0: np.ndarray) -> np.ndarray:
    """0-based serving median per client; ``med0`` must be sorted ascending."""
    t = cache.c1[:, med0]
    c = cache.c2[:, med0]
    fastest = t == t.min(axis=1, keepdims=True)
    cost = np.where(fastest, c, np.inf)
    best = fastest & (cost == cost.min(axis=1, keepdims=True))
    # argmax returns the first True, i.e. the lowest median id
    return med0[best.argmax(axis=1)]


def assign(cache: PathCache, S: Iterable[int]) -> Assignment:
    key = median_key(S)
    if not key:
        raise ValueError("cannot assign clients to an empty median set")
    n = cache.n
    if key[0] < 1 or key[-1] > n:
        raise ValueError(f"median ids must lie in 1..{n}, got {key}")
    serving = _serving(cache, np.array(key) - 1) + 1
    serving.flags.writeable = False
    return Assignment(key, serving)


def _weights_from_serving(cache: PathCache, demand_rows: np.ndarray, serving0: np.ndarray, m: int) -> np.ndarray:
    arcs = cache.paths[serving0, np.arange(len(serving0))]
    on = arcs >= 0
    return np.bincount(arcs[on], weights=demand_rows[on], minlength=m)


def _demand_rows(instance: Instance, cache: PathCache) -> np.ndarray:
    return np.broadcast_to(instance.demand[:, None], (instance.n, cache.paths.shape[2]))


def arc_weights(cache: PathCache, assignment: Assignment, instance: Instance) -> ArcWeights:
    """Demand carried by each arc under the assignment's served paths."""
    w = _weights_from_serving(cache, _demand_rows(instance, cache), assignment.serving - 1, instance.m)
    return ArcWeights(w)


def greedy_upgrade(w: np.ndarray, u: np.ndarray, budget: float) -> tuple[np.ndarray, float]:
    """Bounded fractional knapsack: fill arcs in decreasing weight order.

    Ties in weight go to the lower arc id.  Arcs of weight zero get nothing.
    Returns the per-arc amounts and the total gain ``sum(w * b)``.
    """
    w = np.asarray(w, dtype=np.float64)
    b = np.zeros(len(w))
    pos = np.flatnonzero(w > 0)
    if budget <= 0 or len(pos) == 0:
        return b, 0.0
    order = pos[np.lexsort((pos, -w[pos]))]
    caps = np.asarray(u, dtype=np.float64)[order]
    before = np.concatenate(([0.0], np.cumsum(caps)[:-1]))
    take = np.clip(budget - before, 0.0, caps)
    b[order] = take
    return b, float(w[order] @ take)


def relax_edges(weights: ArcWeights, instance: Instance) -> UpgradePlan:
    b, gain = greedy_upgrade(weights.w, instance.u, instance.budget)
    b.flags.writeable = False
    return UpgradePlan(b, gain)


def evaluate(instance: Instance, cache: PathCache, S: Iterable[int]) -> EvaluatedSolution:
    """F(S) for a complete or partial median set."""
    assignment = assign(cache, S)
    serving0 = assignment.serving - 1
    base = float(instance.demand @ cache.c2[np.arange(instance.n), serving0])
    weights = arc_weights(cache, assignment, instance)
    plan = relax_edges(weights, instance)
    return EvaluatedSolution(assignment.medians, assignment, weights, plan, base, base - plan.gain)


def objective_with_plan(instance: Instance, cache: PathCache, medians: Iterable[int], b) -> float:
    """Objective of ``medians`` under a given upgrade vector, summed client by client."""
    assignment = assign(cache, medians)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for i in range(instance.n):
        j = int(assignment.serving[i]) - 1
        row = cache.paths[j, i]
        reduction = float(b[row[row >= 0]].sum())
        total += float(instance.demand[i]) * (float(cache.c2[i, j]) - reduction)
    return total


class Evaluator:
    """Memoized ``F`` over median sets of one instance.

    ``additions`` scores ``S + {i}`` for many candidates at once by updating
    the current assignment instead of recomputing it; with ``debug`` set (or
    ``IPMU_DEBUG=1``) every 100th incremental result is checked against the
    plain evaluation.
    """

    def __init__(self, instance: Instance, cache: PathCache, debug: bool | None = None):
        self.instance = instance
        self.cache = cache
        self.debug = bool(int(os.environ.get("IPMU_DEBUG", "0"))) if debug is None else debug
        self._rows = _demand_rows(instance, cache)
        self._memo: dict[tuple[int, ...], float] = {}
        self._incremental_calls = 0
        self.evaluations = 0

    def _score(self, serving0: np.ndarray) -> float:
        self.evaluations += 1
        inst = self.instance
        base = float(inst.demand @ self.cache.c2[np.arange(inst.n), serving0])
        w = _weights_from_serving(self.cache, self._rows, serving0, inst.m)
        _, gain = greedy_upgrade(w, inst.u, inst.budget)
        return base - gain

    def __call__(self, S: Iterable[int]) -> float:
        key = median_key(S)
        value = self._memo.get(key)
        if value is None:
            if not key:
                return np.inf
            value = self._score(_serving(self.cache, np.array(key) - 1))
            self._memo[key] = value
        return value

    def solution(self, S: Iterable[int]) -> EvaluatedSolution:
        return evaluate(self.instance, self.cache, S)

    def additions(self, S: Iterable[int], candidates: Iterable[int]) -> np.ndarray:
        """``F(S + {i})`` for each candidate ``i`` not in ``S``."""
        base = median_key(S)
        candidates = [int(i) for i in candidates]
        out = np.empty(len(candidates))
        cur = _serving(self.cache, np.array(base) - 1) if base else None
        for k, i in enumerate(candidates):
            key = median_key(base + (i,))
            value = self._memo.get(key)
            if value is None:
                value = self._score(self._add_serving(cur, i - 1))
                self._memo[key] = value
                self._incremental_calls += 1
                if self.debug and self._incremental_calls % 100 == 0:
                    self._crosscheck(key, value)
            out[k] = value
        return out

    def _add_serving(self, cur: np.ndarray | None, i0: int) -> np.ndarray:
        n = self.cache.n
        if cur is None:
            return np.full(n, i0)
        c1, c2 = self.cache.c1, self.cache.c2
        rows = np.arange(n)
        t_new, t_cur = c1[:, i0], c1[rows, cur]
        k_new, k_cur = c2[:, i0], c2[rows, cur]
        better = (t_new < t_cur) | ((t_new == t_cur) & ((k_new < k_cur) | ((k_new == k_cur) & (i0 < cur))))
        return np.where(better, i0, cur)

    def _crosscheck(self, key, value) -> None:
        plain = evaluate(self.instance, self.cache, key).objective
        if plain != value:
            raise AssertionError(f"incremental F{key} = {value!r} but full evaluation gives {plain!r}")
