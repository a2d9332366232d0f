"""Median selection heuristics: greedy (Kuehn-Hamburger) and GRASP.

All objective values come from an :class:`~ipmu.upgrade.Evaluator`, so every
candidate set is scored with its optimal upgrade plan.  Improvements must beat
the incumbent by more than ``IMPROVE_TOL``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .instance import Instance
from .paths import PathCache
from .upgrade import IMPROVE_TOL, EvaluatedSolution, Evaluator, median_key

BEST = "best"
FIRST = "first"


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.51
    ls_strategy: str = BEST
    max_iters: int = 100
    max_iters_wi: int = 29
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.ls_strategy not in (BEST, FIRST):
            raise ValueError(f"ls_strategy must be {BEST!r} or {FIRST!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 <= self.max_iters_wi <= self.max_iters:
            raise ValueError("max_iters_wi must lie in [0, max_iters]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SearchResult:
    best: EvaluatedSolution
    iterations_run: int
    iterations_at_best: int
    wall_time: float
    trace: list[tuple[float, float]] = field(default_factory=list)
    evaluations: int = 0


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream seeded through ``SeedSequence`` (portable across platforms)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def hamming(S: Iterable[int], S2: Iterable[int]) -> int:
    a, b = set(S), set(S2)
    if len(a) != len(b):
        raise ValueError(f"sets differ in size ({len(a)} vs {len(b)})")
    return len(a ^ b) // 2


def _evaluator(instance, cache, evaluator):
    return evaluator if evaluator is not None else Evaluator(instance, cache)


def kh_construct(instance: Instance, cache: PathCache, evaluator: Evaluator | None = None) -> EvaluatedSolution:
    """Add the median giving the lowest ``F`` until ``p`` are open."""
    ev = _evaluator(instance, cache, evaluator)
    S: tuple[int, ...] = ()
    while len(S) < instance.p:
        cands = [i for i in range(1, instance.n + 1) if i not in S]
        scores = ev.additions(S, cands)
        S = median_key(S + (cands[int(np.argmin(scores))],))
    return ev.solution(S)


def grasp_construct(
    instance: Instance,
    cache: PathCache,
    alpha: float,
    rng: np.random.Generator,
    evaluator: Evaluator | None = None,
) -> tuple[int, ...]:
    """Greedy randomized construction with a value-based restricted candidate list."""
    ev = _evaluator(instance, cache, evaluator)
    S: tuple[int, ...] = ()
    cl = list(range(1, instance.n + 1))
    while len(S) < instance.p:
        scores = ev.additions(S, cl)
        f_min, f_max = float(scores.min()), float(scores.max())
        # rounding in the threshold must never exclude the argmin
        mu = max(f_max + alpha * (f_min - f_max), f_min)
        rcl = [i for i, f in zip(cl, scores) if f <= mu]
        pick = rcl[int(rng.integers(len(rcl)))]
        S = median_key(S + (pick,))
        cl.remove(pick)
    return S


def swap_neighbors(S: tuple[int, ...], n: int):
    """Yield ``(removed, added, neighbor)`` in ascending (removed, added) order."""
    inside = set(S)
    outside = [a for a in range(1, n + 1) if a not in inside]
    for r in S:
        rest = [s for s in S if s != r]
        for a in outside:
            yield r, a, tuple(sorted(rest + [a]))


def best_neighbor(ev: Evaluator, S: tuple[int, ...], n: int) -> tuple[tuple[int, ...] | None, float]:
    """Lowest-``F`` swap neighbor; ties go to the lexicographically smallest set."""
    best, best_f = None, np.inf
    for _, _, nb in swap_neighbors(S, n):
        f = ev(nb)
        if f < best_f or (f == best_f and nb < best):
            best, best_f = nb, f
    return best, best_f


def swap_descent(ev: Evaluator, S: Iterable[int], strategy: str = BEST):
    """Swap local search from ``S``.

    Returns ``(local_optimum, value, trajectory)`` where the trajectory lists
    every visited set with its value, starting with ``S``.
    """
    cur = median_key(S)
    n = ev.instance.n
    f_cur = ev(cur)
    trajectory = [(cur, f_cur)]
    while True:
        if strategy == BEST:
            nb, f_nb = best_neighbor(ev, cur, n)
            if nb is None or not f_nb < f_cur - IMPROVE_TOL:
                break
        elif strategy == FIRST:
            for _, _, nb in swap_neighbors(cur, n):
                f_nb = ev(nb)
                if f_nb < f_cur - IMPROVE_TOL:
                    break
            else:
                break
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        cur, f_cur = nb, f_nb
        trajectory.append((cur, f_cur))
    return cur, f_cur, trajectory


def local_search(
    instance: Instance,
    cache: PathCache,
    S: Iterable[int],
    strategy: str = BEST,
    evaluator: Evaluator | None = None,
) -> EvaluatedSolution:
    S = median_key(S)
    if len(S) != instance.p:
        raise ValueError(f"local search needs exactly p={instance.p} medians, got {len(S)}")
    ev = _evaluator(instance, cache, evaluator)
    final, _, _ = swap_descent(ev, S, strategy)
    return ev.solution(final)


def grasp(
    instance: Instance,
    cache: PathCache,
    config: SearchConfig = SearchConfig(),
    evaluator: Evaluator | None = None,
) -> SearchResult:
    """Multi-start GRASP.

    Both stopping guards use ``<=``, so up to ``max_iters + 1`` iterations
    may run.
    """
    ev = _evaluator(instance, cache, evaluator)
    rng = make_rng(config.seed)
    start_evals = ev.evaluations
    t0 = time.perf_counter()

    best: tuple[int, ...] | None = None
    best_f = np.inf
    iters = iters_wi = at_best = 0
    trace: list[tuple[float, float]] = []
    while iters <= config.max_iters and iters_wi <= config.max_iters_wi:
        iters += 1
        iters_wi += 1
        built = grasp_construct(instance, cache, config.alpha, rng, ev)
        improved, f, _ = swap_descent(ev, built, config.ls_strategy)
        trace.append((ev(built), f))
        if f < best_f - IMPROVE_TOL or best is None:
            best, best_f = improved, f
            iters_wi = 0
            at_best = iters

    return SearchResult(
        best=ev.solution(best),
        iterations_run=iters,
        iterations_at_best=at_best,
        wall_time=time.perf_counter() - t0,
        trace=trace,
        evaluations=ev.evaluations - start_evals,
    )
