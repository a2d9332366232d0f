"""Fastest-path precomputation.

For every source node ``j`` a Dijkstra run over outgoing arcs labels each
node with the pair ``(time, cost)`` compared lexicographically, so among
equally fast paths the cheaper one wins.  Remaining ties go to the
predecessor with the smaller node id.  The result is one shortest-path tree
per source, which fixes the path ``FP(i, j)`` used for every client.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .instance import Instance


class UnreachableError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PathCache:
    """Fastest-path data for all (client, source) pairs.

    ``c1[i, j]`` / ``c2[i, j]`` hold time and cost of the chosen path from
    source ``j`` to client ``i`` (0-based indices, i.e. node id - 1).
    ``pred_arc[j, v]`` is the arc entering ``v`` in the tree rooted at ``j``
    (-1 at the root).  ``paths[j, i]`` lists the arc ids of FP(i, j) padded
    with -1.
    """

    c1: np.ndarray
    c2: np.ndarray
    pred_arc: np.ndarray
    paths: np.ndarray
    arc_src: np.ndarray

    @property
    def n(self) -> int:
        return self.c1.shape[0]

    @property
    def pred(self) -> np.ndarray:
        """Predecessor node ids (1-based, 0 at the root), indexed ``[source, node]``."""
        return np.where(self.pred_arc >= 0, self.arc_src[np.maximum(self.pred_arc, 0)], 0)


def _single_source(source: int, n: int, out_arcs, c1, c2, dst0):
    d1 = [np.inf] * n
    d2 = [np.inf] * n
    pred_node = [n] * n
    pred_arc = [-1] * n
    done = [False] * n
    d1[source] = 0.0
    d2[source] = 0.0
    heap = [(0.0, 0.0, source)]
    while heap:
        a, b, v = heapq.heappop(heap)
        if done[v] or a != d1[v] or b != d2[v]:
            continue
        done[v] = True
        for arc in out_arcs[v]:
            w = dst0[arc]
            if done[w]:
                continue
            na = a + c1[arc]
            nb = b + c2[arc]
            if na < d1[w] or (na == d1[w] and nb < d2[w]):
                d1[w], d2[w] = na, nb
                pred_node[w], pred_arc[w] = v, arc
                heapq.heappush(heap, (na, nb, w))
            elif na == d1[w] and nb == d2[w] and v < pred_node[w]:
                pred_node[w], pred_arc[w] = v, arc
    return d1, d2, pred_arc


def _unroll_paths(pred_arc: np.ndarray, src0: np.ndarray) -> np.ndarray:
    n = pred_arc.shape[0]
    rows = np.arange(n)[:, None]
    cur = np.broadcast_to(np.arange(n), (n, n)).copy()
    steps = []
    while True:
        arc = pred_arc[rows, cur]
        live = arc >= 0
        if not live.any():
            break
        steps.append(arc)
        cur = np.where(live, src0[np.maximum(arc, 0)], cur)
        if len(steps) > n:
            raise RuntimeError("predecessor table contains a cycle")
    if not steps:
        return np.full((n, n, 1), -1, dtype=np.int32)
    return np.stack(steps, axis=-1).astype(np.int32)


def compute_path_cache(instance: Instance) -> PathCache:
    n = instance.n
    src0 = (instance.src - 1).astype(np.int64)
    dst0 = (instance.dst - 1).tolist()
    c1 = instance.c1.tolist()
    c2 = instance.c2.tolist()
    out_arcs: list[list[int]] = [[] for _ in range(n)]
    for a, s in enumerate(src0.tolist()):
        out_arcs[s].append(a)

    C1 = np.empty((n, n))
    C2 = np.empty((n, n))
    pred_arc = np.empty((n, n), dtype=np.int64)
    for j in range(n):
        d1, d2, pa = _single_source(j, n, out_arcs, c1, c2, dst0)
        C1[:, j] = d1
        C2[:, j] = d2
        pred_arc[j] = pa

    bad = np.argwhere(~np.isfinite(C1))
    if len(bad):
        i, j = bad[0]
        raise UnreachableError(f"client {i + 1} is unreachable from node {j + 1}")

    paths = _unroll_paths(pred_arc, src0)
    for arr in (C1, C2, pred_arc, paths):
        arr.flags.writeable = False
    return PathCache(c1=C1, c2=C2, pred_arc=pred_arc, paths=paths, arc_src=instance.src)


def path_arcs(cache: PathCache, i: int, j: int) -> frozenset[int]:
    """Arc ids on the chosen fastest path from median ``j`` to client ``i``."""
    n = cache.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"node ids must lie in 1..{n}, got ({i}, {j})")
    row = cache.paths[j - 1, i - 1]
    return frozenset(int(a) for a in row[row >= 0])
