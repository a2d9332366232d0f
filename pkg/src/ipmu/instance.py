"""Problem instances: data model, validation, random generation and text I/O.

Node ids are 1-based everywhere a user can see them (files, records, the
public API).  Internally arrays are indexed by ``id - 1``.

Text format::

    IPMU 1
    n m p B
    <node_id> <demand>          (n lines)
    <src> <dst> <c1> <c2> <u>   (m lines)

Blank lines and anything after ``#`` are ignored.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MAGIC = "IPMU"
VERSION = 1


class InstanceFormatError(ValueError):
    """Raised by :func:`parse_instance`; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


class Arc(NamedTuple):
    id: int
    src: int
    dst: int
    c1: float
    c2: float
    u: float


class Violation(NamedTuple):
    severity: str  # "error" or "warning"
    message: str
    witness: tuple | None = None

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """A directed graph with time (c1) and cost (c2) arc weights.

    Arcs are kept in canonical order, ascending by ``(src, dst)``; an arc's
    id is its position in that order.  Construction only checks array shapes,
    use :func:`validate` for the model invariants.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    u: np.ndarray
    demand: np.ndarray
    p: int
    budget: float
    _arc_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = len(self.src)
        if not (len(self.dst) == len(self.c1) == len(self.c2) == len(self.u) == m):
            raise ValueError("arc arrays must all have the same length")
        if len(self.demand) != self.n:
            raise ValueError(f"demand has {len(self.demand)} entries, expected n={self.n}")
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        order = np.lexsort((dst, src))
        object.__setattr__(self, "src", _frozen(src[order], np.int64))
        object.__setattr__(self, "dst", _frozen(dst[order], np.int64))
        for name in ("c1", "c2", "u"):
            vals = np.asarray(getattr(self, name), dtype=np.float64)[order]
            object.__setattr__(self, name, _frozen(vals, np.float64))
        object.__setattr__(self, "demand", _frozen(self.demand, np.float64))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "budget", float(self.budget))
        index = {}
        for a, (s, d) in enumerate(zip(self.src.tolist(), self.dst.tolist())):
            index.setdefault((s, d), a)
        object.__setattr__(self, "_arc_index", index)

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[Sequence], demand, p: int, budget: float) -> "Instance":
        """Build from ``(src, dst, c1, c2, u)`` tuples in any order."""
        rows = [tuple(a[-5:]) for a in arcs]
        if rows:
            src, dst, c1, c2, u = zip(*rows)
        else:
            src = dst = c1 = c2 = u = ()
        return cls(n=n, src=src, dst=dst, c1=c1, c2=c2, u=u, demand=demand, p=p, budget=budget)

    @property
    def m(self) -> int:
        return len(self.src)

    @property
    def arcs(self) -> list[Arc]:
        return [
            Arc(a, int(s), int(d), float(x), float(y), float(z))
            for a, (s, d, x, y, z) in enumerate(zip(self.src, self.dst, self.c1, self.c2, self.u))
        ]

    def arc_id(self, src: int, dst: int) -> int:
        return self._arc_index[(src, dst)]

    def replace(self, **changes) -> "Instance":
        fields = dict(
            n=self.n, src=self.src, dst=self.dst, c1=self.c1, c2=self.c2, u=self.u,
            demand=self.demand, p=self.p, budget=self.budget,
        )
        fields.update(changes)
        return Instance(**fields)

    def without_arc(self, src: int, dst: int) -> "Instance":
        keep = np.ones(self.m, dtype=bool)
        keep[self.arc_id(src, dst)] = False
        return self.replace(
            src=self.src[keep], dst=self.dst[keep], c1=self.c1[keep], c2=self.c2[keep], u=self.u[keep]
        )


# ---------------------------------------------------------------------------
# validation


def _reach(n: int, adjacency: list[list[int]], start: int) -> np.ndarray:
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adjacency[v]:
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    return seen


def unreachable_pair(instance: Instance) -> tuple[int, int] | None:
    """Return some ``(src, dst)`` with dst not reachable from src, or None.

    Strong connectivity holds iff node 1 reaches everything and everything
    reaches node 1, so two BFS runs suffice.
    """
    n = instance.n
    fwd: list[list[int]] = [[] for _ in range(n)]
    bwd: list[list[int]] = [[] for _ in range(n)]
    for s, d in zip(instance.src.tolist(), instance.dst.tolist()):
        if 1 <= s <= n and 1 <= d <= n:
            fwd[s - 1].append(d - 1)
            bwd[d - 1].append(s - 1)
    out = _reach(n, fwd, 0)
    if not out.all():
        return (1, int(np.flatnonzero(~out)[0]) + 1)
    back = _reach(n, bwd, 0)
    if not back.all():
        return (int(np.flatnonzero(~back)[0]) + 1, 1)
    return None


def validate(instance: Instance) -> list[Violation]:
    """Check every model invariant; warnings do not make an instance invalid."""
    out: list[Violation] = []
    n, p = instance.n, instance.p
    if n < 2:
        out.append(Violation("error", f"n must be at least 2, got {n}"))
    if not 1 <= p < n:
        out.append(Violation("error", f"p must satisfy 1 ≤ p < n (p={p}, n={n})"))
    if not instance.budget >= 0:
        out.append(Violation("error", f"budget must be nonnegative, got {instance.budget}"))
    bad = np.flatnonzero(~(instance.demand >= 0))
    for i in bad[:5]:
        out.append(Violation("error", f"node {i + 1} has negative demand {instance.demand[i]}", (int(i) + 1,)))

    seen = set()
    ids_ok = True
    for arc in instance.arcs:
        where = f"arc {arc.id} ({arc.src}->{arc.dst})"
        if not (1 <= arc.src <= n and 1 <= arc.dst <= n):
            out.append(Violation("error", f"{where}: node id out of range 1..{n}"))
            ids_ok = False
        if arc.src == arc.dst:
            out.append(Violation("error", f"{where}: self-loop"))
        if (arc.src, arc.dst) in seen:
            out.append(Violation("error", f"{where}: duplicate arc"))
        seen.add((arc.src, arc.dst))
        for name in ("c1", "c2", "u"):
            value = getattr(arc, name)
            if not value >= 0:
                out.append(Violation("error", f"{where}: {name} must be nonnegative, got {value}"))
        if arc.u > arc.c2:
            out.append(Violation(
                "warning", f"{where}: u={arc.u} exceeds c2={arc.c2}; upgraded cost may go negative"
            ))

    if ids_ok and n >= 1:
        pair = unreachable_pair(instance)
        if pair is not None:
            s, d = pair
            out.append(Violation("error", f"node {d} unreachable from node {s}", pair))
    return out


def errors(violations: Iterable[Violation]) -> list[Violation]:
    return [v for v in violations if v.is_error]


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class GenSpec:
    n: int
    p: int
    budget: float
    kind: str = "P"
    m: int | None = None
    density: float | None = None
    demand_range: tuple[int, int] = (1, 1)
    seed: int = 0

    @property
    def gamma(self) -> int:
        return self.n * (self.n - 1)

    def arc_count(self) -> int:
        if self.m is not None:
            return int(self.m)
        if self.density is None:
            raise ValueError("GenSpec needs either m or density")
        return int(round(self.density * self.gamma))

    def check(self) -> None:
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if not 1 <= self.p < self.n:
            raise ValueError(f"p must satisfy 1 ≤ p < n (p={self.p}, n={self.n})")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.kind not in ("P", "R"):
            raise ValueError(f"kind must be 'P' or 'R', got {self.kind!r}")
        lo, hi = self.demand_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad demand range {self.demand_range}")
        m = self.arc_count()
        if m < self.n:
            raise ValueError(f"m={m} is below n={self.n}; no room for the connectivity cycle")
        if m > self.gamma:
            raise ValueError(f"m={m} exceeds n(n-1)={self.gamma}")


def generate_instance(spec: GenSpec) -> Instance:
    """Random strongly connected instance, deterministic in ``spec.seed``.

    A random Hamiltonian cycle is laid down first, the remaining arcs are
    drawn uniformly among the unused ordered pairs.  ``c1 ~ U(0, 100)``;
    R-type draws ``c2 ~ U(0, 100)`` independently while P-type sets
    ``c2 = c1 + U(1, 1.5)``.  Upgrade caps equal ``c2``.
    """
    spec.check()
    n, m = spec.n, spec.arc_count()
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    perm = rng.permutation(n)
    cycle_src = perm
    cycle_dst = np.roll(perm, -1)
    used = np.zeros((n, n), dtype=bool)
    used[cycle_src, cycle_dst] = True
    np.fill_diagonal(used, True)
    free = np.flatnonzero(~used.ravel())
    extra = np.sort(rng.choice(free, size=m - n, replace=False)) if m > n else np.empty(0, dtype=np.int64)
    src = np.concatenate([cycle_src, extra // n]) + 1
    dst = np.concatenate([cycle_dst, extra % n]) + 1

    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    c1 = rng.uniform(0.0, 100.0, size=m)
    if spec.kind == "R":
        c2 = rng.uniform(0.0, 100.0, size=m)
    else:
        c2 = c1 + rng.uniform(1.0, 1.5, size=m)
    lo, hi = spec.demand_range
    demand = rng.integers(lo, hi, size=n, endpoint=True).astype(np.float64)
    return Instance(n=n, src=src, dst=dst, c1=c1, c2=c2, u=c2.copy(), demand=demand, p=spec.p, budget=spec.budget)


# ---------------------------------------------------------------------------
# text I/O


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def serialize_instance(instance: Instance, comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(f"{MAGIC} {VERSION}")
    lines.append(f"{instance.n} {instance.m} {instance.p} {_fmt(instance.budget)}")
    for i, w in enumerate(instance.demand.tolist(), start=1):
        lines.append(f"{i} {_fmt(w)}")
    for arc in instance.arcs:
        lines.append(f"{arc.src} {arc.dst} {_fmt(arc.c1)} {_fmt(arc.c2)} {_fmt(arc.u)}")
    return "\n".join(lines) + "\n"


def read_comments(text: str) -> list[str]:
    """Full-line ``#`` comments, without the marker."""
    return [ln.strip()[1:].strip() for ln in text.splitlines() if ln.strip().startswith("#")]


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].split()
        if body:
            yield lineno, body


def _num(tok: str, lineno: int, what: str, kind=float):
    try:
        value = kind(tok)
    except ValueError:
        raise InstanceFormatError(f"cannot read {what} from {tok!r}", lineno) from None
    if kind is float and not np.isfinite(value):
        raise InstanceFormatError(f"{what} must be finite, got {tok!r}", lineno)
    return value


def parse_instance(text: str) -> Instance:
    lines = list(_tokens(text))
    if not lines:
        raise InstanceFormatError("empty input")
    lineno, head = lines[0]
    if len(head) != 2 or head[0] != MAGIC:
        raise InstanceFormatError(f"expected header '{MAGIC} {VERSION}'", lineno)
    if _num(head[1], lineno, "version", int) != VERSION:
        raise InstanceFormatError(f"unsupported version {head[1]}", lineno)
    if len(lines) < 2:
        raise InstanceFormatError("missing 'n m p B' line")
    lineno, dims = lines[1]
    if len(dims) != 4:
        raise InstanceFormatError("expected 'n m p B'", lineno)
    n = _num(dims[0], lineno, "n", int)
    m = _num(dims[1], lineno, "m", int)
    p = _num(dims[2], lineno, "p", int)
    budget = _num(dims[3], lineno, "B")
    if n < 2 or m < 0:
        raise InstanceFormatError(f"bad sizes n={n}, m={m}", lineno)
    if not 1 <= p < n:
        raise InstanceFormatError(f"p must satisfy 1 ≤ p < n (p={p}, n={n})", lineno)
    if budget < 0:
        raise InstanceFormatError(f"budget must be nonnegative, got {budget}", lineno)

    body = lines[2:]
    if len(body) != n + m:
        have_nodes = min(len(body), n)
        have_arcs = max(len(body) - n, 0)
        raise InstanceFormatError(
            f"expected {n} node lines and {m} arc lines, found {have_nodes} and {have_arcs}"
        )

    demand = np.full(n, np.nan)
    for lineno, tok in body[:n]:
        if len(tok) != 2:
            raise InstanceFormatError("expected 'node_id demand'", lineno)
        i = _num(tok[0], lineno, "node id", int)
        if not 1 <= i <= n:
            raise InstanceFormatError(f"node id {i} out of range 1..{n}", lineno)
        if not np.isnan(demand[i - 1]):
            raise InstanceFormatError(f"node {i} listed twice", lineno)
        w = _num(tok[1], lineno, "demand")
        if w < 0:
            raise InstanceFormatError(f"negative demand {w} for node {i}", lineno)
        demand[i - 1] = w

    arcs = []
    seen = set()
    for lineno, tok in body[n:]:
        if len(tok) != 5:
            raise InstanceFormatError("expected 'src dst c1 c2 u'", lineno)
        s = _num(tok[0], lineno, "src", int)
        d = _num(tok[1], lineno, "dst", int)
        for node in (s, d):
            if not 1 <= node <= n:
                raise InstanceFormatError(f"node id {node} out of range 1..{n}", lineno)
        if s == d:
            raise InstanceFormatError(f"self-loop on node {s}", lineno)
        if (s, d) in seen:
            raise InstanceFormatError(f"duplicate arc {s}->{d}", lineno)
        seen.add((s, d))
        vals = [_num(t, lineno, name) for t, name in zip(tok[2:], ("c1", "c2", "u"))]
        for v, name in zip(vals, ("c1", "c2", "u")):
            if v < 0:
                raise InstanceFormatError(f"negative {name} {v} on arc {s}->{d}", lineno)
        arcs.append((s, d, *vals))
    return Instance.from_arcs(n, arcs, demand, p, budget)


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def save_instance(instance: Instance, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_instance(instance, comments))


def line3() -> Instance:
    """Three-node reference instance used throughout the tests and docs."""
    arcs = [
        (1, 2, 1.0, 2.0, 2.0),
        (2, 1, 1.0, 2.0, 2.0),
        (2, 3, 1.0, 4.0, 4.0),
        (3, 2, 1.0, 4.0, 4.0),
    ]
    return Instance.from_arcs(3, arcs, [1.0, 1.0, 1.0], p=1, budget=3.0)
