import math

import numpy as np
import pytest

from ipmu import GenSpec, Instance, compute_path_cache, generate_instance, line3

A, B, C, D, E = 1, 2, 3, 4, 5


def worked_example() -> Instance:
    """Five-node example: medians {A, B}, clients D and E share arc (A, E).

    u = c2, unit demands, p = 2, B = 2.  Certified by enumeration in
    test_oracle: {A, B} is the unique optimum with value 7.
    """
    arcs = [
        (A, E, 1, 3), (E, D, 1, 2), (B, C, 1, 3),
        (E, A, 2, 6), (D, E, 2, 4), (C, B, 2, 4), (A, B, 2, 4), (B, A, 3, 4),
    ]
    return Instance.from_arcs(5, [(s, d, t, c, c) for s, d, t, c in arcs], [1] * 5, p=2, budget=2)


def simple_paths(instance: Instance, src: int, dst: int):
    """All simple directed paths src -> dst as lists of arc ids (brute force)."""
    out_arcs = {}
    for arc in instance.arcs:
        out_arcs.setdefault(arc.src, []).append(arc)
    found = []

    def walk(v, visited, path):
        if v == dst:
            found.append(list(path))
            return
        for arc in out_arcs.get(v, []):
            if arc.dst not in visited:
                visited.add(arc.dst)
                path.append(arc.id)
                walk(arc.dst, visited, path)
                path.pop()
                visited.remove(arc.dst)

    walk(src, {src}, [])
    return found


def brute_force_labels(instance: Instance, src: int, dst: int):
    """(min time, min cost among the fastest) over all simple paths."""
    best = (math.inf, math.inf)
    for path in simple_paths(instance, src, dst):
        t = sum(instance.c1[a] for a in path)
        c = sum(instance.c2[a] for a in path)
        if t < best[0] - 1e-12 or (abs(t - best[0]) <= 1e-12 and c < best[1]):
            best = (t, c)
    return best


@pytest.fixture
def l3():
    return line3()


@pytest.fixture
def l3_cache(l3):
    return compute_path_cache(l3)


@pytest.fixture
def example():
    return worked_example()


def random_instance(seed, n=8, m=None, p=2, budget=50.0, kind="R", density=0.5, demand=(1, 1)):
    spec = GenSpec(n=n, p=p, budget=budget, kind=kind, m=m, density=None if m else density,
                   demand_range=demand, seed=seed)
    return generate_instance(spec)


@pytest.fixture(scope="session")
def small_instances():
    out = []
    for seed in range(12):
        inst = random_instance(seed, n=7 + seed % 4, p=2 + seed % 2, kind="PR"[seed % 2],
                               budget=[0.0, 20.0, 100.0][seed % 3], demand=(1, 3))
        out.append((inst, compute_path_cache(inst)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)
