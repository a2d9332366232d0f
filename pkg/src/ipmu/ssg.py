"""Search Space Graph: every p-subset linked to its best improving swap neighbor.

Nodes are indexed by the lexicographic rank of their median set.  Following
successors is exactly the trajectory of best-improvement local search, so the
graph is a forest whose roots are the local optima.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .instance import Instance
from .oracle import LimitExceeded
from .paths import PathCache
from .search import best_neighbor
from .upgrade import IMPROVE_TOL, Evaluator, median_key

DEFAULT_SSG_LIMIT = 2_000_000


def rank_subset(S, n: int) -> int:
    """Lexicographic rank of a p-subset of ``1..n`` (0-based)."""
    S = median_key(S)
    p = len(S)
    r = 0
    prev = 0
    for k, s in enumerate(S):
        for v in range(prev + 1, s):
            r += comb(n - v, p - k - 1)
        prev = s
    return r


def unrank_subset(r: int, n: int, p: int) -> tuple[int, ...]:
    if not 0 <= r < comb(n, p):
        raise IndexError(f"rank {r} out of range for C({n},{p})")
    out = []
    v = 1
    for k in range(p):
        while True:
            block = comb(n - v, p - k - 1)
            if r < block:
                break
            r -= block
            v += 1
        out.append(v)
        v += 1
    return tuple(out)


@dataclass(frozen=True, eq=False)
class SSG:
    n: int
    p: int
    objective: np.ndarray
    succ: np.ndarray  # successor rank, -1 for local optima

    @property
    def size(self) -> int:
        return len(self.succ)

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.succ >= 0))

    def medians(self, r: int) -> tuple[int, ...]:
        return unrank_subset(r, self.n, self.p)

    def rank(self, S) -> int:
        return rank_subset(S, self.n)

    def chase(self, r: int) -> int:
        while self.succ[r] >= 0:
            r = int(self.succ[r])
        return r


@dataclass
class SSGStats:
    local_optima: int
    roots: np.ndarray
    basin_sizes: np.ndarray
    root_of: np.ndarray
    global_value: float
    global_basin_share: float


def build_ssg(
    instance: Instance,
    cache: PathCache,
    limit: int = DEFAULT_SSG_LIMIT,
    evaluator: Evaluator | None = None,
) -> SSG:
    n, p = instance.n, instance.p
    total = comb(n, p)
    if total > limit:
        raise LimitExceeded(f"C({n},{p}) search-space nodes", total, limit)
    ev = evaluator if evaluator is not None else Evaluator(instance, cache)
    subsets = list(combinations(range(1, n + 1), p))
    objective = np.array([ev(S) for S in subsets])
    succ = np.full(total, -1, dtype=np.int64)
    for r, S in enumerate(subsets):
        nb, f = best_neighbor(ev, S, n)
        if nb is not None and f < objective[r] - IMPROVE_TOL:
            succ[r] = rank_subset(nb, n)
    objective.flags.writeable = False
    succ.flags.writeable = False
    return SSG(n, p, objective, succ)


def ssg_stats(ssg: SSG) -> SSGStats:
    root_of = np.full(ssg.size, -1, dtype=np.int64)
    succ = ssg.succ
    for start in range(ssg.size):
        chain = []
        r = start
        while root_of[r] < 0 and succ[r] >= 0:
            chain.append(r)
            r = int(succ[r])
        root = r if root_of[r] < 0 else int(root_of[r])
        root_of[r] = root
        root_of[chain] = root
    roots = np.flatnonzero(succ < 0)
    sizes = np.bincount(root_of, minlength=ssg.size)[roots]
    global_value = float(ssg.objective.min())
    in_global = ssg.objective[root_of] <= global_value + IMPROVE_TOL
    return SSGStats(
        local_optima=len(roots),
        roots=roots,
        basin_sizes=sizes,
        root_of=root_of,
        global_value=global_value,
        global_basin_share=float(in_global.mean()),
    )


def stats_csv(ssg: SSG, stats: SSGStats) -> str:
    """One row per local optimum: rank, objective, basin size, median set."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["rank", "objective", "basin_size", "medians"])
    for r, size in zip(stats.roots.tolist(), stats.basin_sizes.tolist()):
        meds = " ".join(map(str, ssg.medians(r)))
        out.writerow([r, repr(float(ssg.objective[r])), size, meds])
    return buf.getvalue()


def export_dot(ssg: SSG, collapse_above: int | None = None, precision: int = 2) -> str:
    """DOT digraph of the forest; local optima are drawn as filled double circles.

    Basins larger than ``collapse_above`` are drawn as a single box labelled
    with the root value and the basin size.
    """
    stats = ssg_stats(ssg)
    sizes = dict(zip(stats.roots.tolist(), stats.basin_sizes.tolist()))
    collapsed = {r for r, s in sizes.items() if collapse_above is not None and s > collapse_above}
    fmt = f"{{:.{precision}f}}"

    lines = ["digraph SSG {", '  node [shape=circle, fontsize=8, label=""];']
    for r in range(ssg.size):
        root = int(stats.root_of[r])
        if root in collapsed and r != root:
            continue
        value = fmt.format(float(ssg.objective[r]))
        tip = " ".join(map(str, ssg.medians(r)))
        if root in collapsed:
            lines.append(
                f'  s{r} [shape=box, style=filled, fillcolor=lightgray, '
                f'label="{value}\\n{sizes[root]} sets", tooltip="{tip}"];'
            )
        elif ssg.succ[r] < 0:
            lines.append(
                f'  s{r} [shape=doublecircle, style=filled, fillcolor=tomato, label="{value}", tooltip="{tip}"];'
            )
        else:
            lines.append(f'  s{r} [label="{value}", tooltip="{tip}"];')
    for r in range(ssg.size):
        nxt = int(ssg.succ[r])
        if nxt < 0 or int(stats.root_of[r]) in collapsed:
            continue
        lines.append(f"  s{r} -> s{nxt};")
    lines.append("}")
    return "\n".join(lines) + "\n"
