"""Vertex partitions of finite graphs: densities, INT_f indices, weak regularity.

A set B is encoded as a 0/1 vector x.  With S the n x k part-indicator
matrix and d the density matrix, the discrepancy of B is

    e(G[B]) - 1/2 sum_ij d_ij |B cap P_i| |B cap P_j| = 1/2 x^T K x,
    K = A - S d S^T,

so witness search is a maximisation of |x^T K x| over the hypercube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import StepGraphon, int_f
from .functionals import NEG_SQUARE, ConcaveFunctional, get_functional

EXHAUSTIVE_MAX_N = 12
EXHAUSTIVE_MAX_K = 3
WITNESS_EXHAUSTIVE_MAX_N = 16


@dataclass(frozen=True, eq=False)
class Graph:
    adjacency: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        A = A.astype(bool)
        if not np.array_equal(A, A.T):
            i, j = np.argwhere(A != A.T)[0]
            raise ValueError(f"adjacency not symmetric at ({i}, {j})")
        if A.diagonal().any():
            raise ValueError(f"loop at vertex {int(np.flatnonzero(A.diagonal())[0])}")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(np.zeros((n, n), dtype=bool))

    @classmethod
    def gnp(cls, n: int, p: float, seed) -> "Graph":
        rng = np.random.default_rng(seed)
        upper = np.triu(rng.random((n, n)) < p, 1)
        return cls(upper | upper.T)

    @classmethod
    def complete_bipartite(cls, a: int, b: int) -> "Graph":
        side = np.r_[np.zeros(a, bool), np.ones(b, bool)]
        return cls(side[:, None] != side[None, :])

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        A = np.zeros((n, n), dtype=bool)
        idx = np.arange(n)
        A[idx, (idx + 1) % n] = True
        return cls(A | A.T)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        A = np.zeros((n, n), dtype=bool)
        for u, v in edges:
            if u == v:
                raise ValueError(f"loop at vertex {u}")
            A[u, v] = A[v, u] = True
        return cls(A)

    @classmethod
    def from_edge_list(cls, text: str, n: int | None = None) -> "Graph":
        """Parse one ``u v`` pair per line (0-based); ``#`` starts a comment."""
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'u v', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        return cls.from_edges(n, edges)

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_edge_list(Path(path).read_text())

    def edge_list(self) -> str:
        u, v = np.nonzero(np.triu(self.adjacency, 1))
        return "".join(f"{a} {b}\n" for a, b in zip(u, v))

    def as_graphon(self) -> StepGraphon:
        """Equal-measure {0,1}-valued step graphon of the adjacency matrix."""
        return StepGraphon(np.full(self.n, 1.0 / self.n), self.adjacency.astype(float))


@dataclass(frozen=True, eq=False)
class VertexPartition:
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a non-empty vector")
        if a.min() < 0:
            raise ValueError("part indices must be non-negative")
        counts = np.bincount(a)
        if np.any(counts == 0):
            raise ValueError(f"part {int(np.flatnonzero(counts == 0)[0])} is empty")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def trivial(cls, n: int) -> "VertexPartition":
        return cls(np.zeros(n, dtype=int))

    @classmethod
    def discrete(cls, n: int) -> "VertexPartition":
        return cls(np.arange(n))

    @classmethod
    def from_parts(cls, n: int, parts) -> "VertexPartition":
        a = np.full(n, -1)
        for i, part in enumerate(parts):
            a[list(part)] = i
        if np.any(a < 0):
            raise ValueError("parts do not cover every vertex")
        return cls(a)

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def n_parts(self) -> int:
        return int(self.assignment.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment)

    def parts(self) -> list:
        return [np.flatnonzero(self.assignment == i) for i in range(self.n_parts)]

    def indicator(self) -> np.ndarray:
        S = np.zeros((self.n, self.n_parts))
        S[np.arange(self.n), self.assignment] = 1.0
        return S

    def canonical(self) -> "VertexPartition":
        """Relabel parts in order of their lowest vertex."""
        _, first = np.unique(self.assignment, return_index=True)
        order = np.argsort(first)
        relabel = np.empty_like(order)
        relabel[order] = np.arange(order.size)
        return VertexPartition(relabel[self.assignment])

    def same_as(self, other: "VertexPartition") -> bool:
        return np.array_equal(self.canonical().assignment, other.canonical().assignment)

    def to_list(self) -> list:
        return self.assignment.tolist()


def _check(G: Graph, P: VertexPartition):
    if P.n != G.n:
        raise ValueError(f"partition covers {P.n} vertices, graph has {G.n}")


def _densities_from_counts(E: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    denom = np.outer(sizes, sizes).astype(float)
    return np.divide(E, denom, out=np.zeros_like(E, dtype=float), where=denom > 0)


def edge_counts(G: Graph, P: VertexPartition) -> np.ndarray:
    """Ordered adjacent pairs between parts (S^T A S)."""
    _check(G, P)
    S = P.indicator()
    return S.T @ G.adjacency.astype(float) @ S


def densities(G: Graph, P: VertexPartition) -> np.ndarray:
    """d_ij = ordered adjacent pairs between P_i and P_j over |P_i||P_j|."""
    return _densities_from_counts(edge_counts(G, P), P.sizes)


def quotient_graphon(G: Graph, P: VertexPartition) -> StepGraphon:
    return StepGraphon(P.sizes / G.n, densities(G, P))


def _index_from_counts(E, sizes, n, f) -> float:
    d = _densities_from_counts(E, sizes)
    w = np.outer(sizes, sizes) / float(n * n)
    return float(np.sum(w * f(d)))


def partition_index(G: Graph, P: VertexPartition, f=NEG_SQUARE) -> float:
    """INT_f(G; P) = sum_ij |P_i||P_j|/n^2 f(d_ij)."""
    f = get_functional(f)
    return _index_from_counts(edge_counts(G, P), P.sizes, G.n, f)


# ---------------------------------------------------------------------------
# witness search


@dataclass(frozen=True, eq=False)
class RegularityReport:
    epsilon: float
    regular: bool
    witness: np.ndarray | None
    violation: float
    method: str = "local_search"
    # the largest discrepancy found, witness or not
    best_set: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.regular and not self.violation > self.epsilon:
            raise ValueError("an irregular report needs violation > epsilon")


def discrepancy_matrix(G: Graph, P: VertexPartition) -> np.ndarray:
    S = P.indicator()
    return G.adjacency.astype(float) - S @ densities(G, P) @ S.T


def violation(G: Graph, P: VertexPartition, B) -> float:
    """|e(G[B]) - 1/2 sum d_ij |B cap P_i||B cap P_j|| / n^2."""
    x = _as_indicator(B, G.n)
    K = discrepancy_matrix(G, P)
    return abs(0.5 * float(x @ K @ x)) / G.n**2


def _as_indicator(B, n: int) -> np.ndarray:
    B = np.asarray(B)
    if B.dtype == bool and B.size == n:
        return B.astype(float)
    x = np.zeros(n)
    x[B.astype(int)] = 1.0
    return x


def _flip_search(K: np.ndarray, x: np.ndarray, sign: float):
    """Best-improvement single-vertex flips maximising sign * x^T K x."""
    Q = sign * K
    diag = Q.diagonal()
    g = Q @ x
    q = float(x @ g)
    while True:
        delta = 1.0 - 2.0 * x
        gain = 2.0 * delta * g + diag
        v = int(np.argmax(gain))
        if gain[v] <= 1e-9:
            return q, x
        x[v] += delta[v]
        g += Q[:, v] * delta[v]
        q += gain[v]


def max_discrepancy_local(K: np.ndarray, restarts: int, seed: int):
    n = K.shape[0]
    best_q, best_x = -1.0, np.zeros(n)
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        start = (rng.random(n) < 0.5).astype(float)
        for sign in (1.0, -1.0):
            q, x = _flip_search(K, start.copy(), sign)
            if q > best_q + 1e-12:
                best_q, best_x = q, x
    return best_q, best_x


def max_discrepancy_exhaustive(K: np.ndarray):
    n = K.shape[0]
    X = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)
    q = np.abs(np.einsum("si,ij,sj->s", X, K, X))
    i = int(np.argmax(q))
    return float(q[i]), X[i]


def weak_regularity_check(
    G: Graph,
    P: VertexPartition,
    eps: float,
    restarts: int = 50,
    seed: int = 0,
    method: str = "auto",
) -> RegularityReport:
    """Look for a set B whose edge count the density model misses by > eps n^2.

    ``method`` is ``exhaustive`` (all 2^n sets, n <= 16), ``local_search``
    (flip search from ``restarts`` random starts seeded ``seed + r``), or
    ``auto``.  A regular report from local search only means that no
    witness was found.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check(G, P)
    K = discrepancy_matrix(G, P)
    if method == "auto":
        method = "exhaustive" if G.n <= WITNESS_EXHAUSTIVE_MAX_N else "local_search"
    if method == "exhaustive":
        q, x = max_discrepancy_exhaustive(K)
    elif method == "local_search":
        q, x = max_discrepancy_local(K, restarts, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    v = float(0.5 * abs(q) / G.n**2)
    B = np.flatnonzero(x > 0.5)
    if v > eps:
        return RegularityReport(eps, False, B, v, method, B)
    return RegularityReport(eps, True, None, v, method, B)


def index_pump(G: Graph, P: VertexPartition, B):
    """Split every part C into C cap B and C minus B; returns (partition, changed)."""
    _check(G, P)
    x = _as_indicator(B, G.n).astype(int)
    labels = 2 * P.assignment + x
    _, new = np.unique(labels, return_inverse=True)
    Q = VertexPartition(new).canonical()
    return Q, Q.n_parts != P.n_parts


@dataclass(frozen=True)
class PumpRound:
    round: int
    parts: int
    index: float
    violation: float
    decrease: float
    # decrease compared with the two candidate constants
    meets_quarter_eps2: bool
    meets_4v2: bool


class PumpCapError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def weak_regularity_partition(
    G: Graph,
    eps: float,
    seed: int = 0,
    restarts: int = 50,
    method: str = "auto",
    max_rounds: int | None = None,
):
    """Pump a weak eps-regular partition starting from the single-part partition.

    Returns ``(partition, trace)``; ``trace[0]`` describes the start and each
    later row one pump.  Every pump must strictly decrease INT_{-x^2}.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    cap = math.ceil(4.0 / eps**2) if max_rounds is None else max_rounds
    P = VertexPartition.trivial(G.n)
    index = partition_index(G, P, NEG_SQUARE)
    trace = []
    for rnd in range(cap + 1):
        rep = weak_regularity_check(G, P, eps, restarts=restarts, seed=seed + 1000 * rnd, method=method)
        if rnd == 0:
            trace.append(PumpRound(0, P.n_parts, index, rep.violation, 0.0, True, True))
        else:
            trace[-1] = PumpRound(**{**trace[-1].__dict__, "violation": rep.violation})
        if rep.regular:
            return P, trace
        if rnd == cap:
            break
        P_new, changed = index_pump(G, P, rep.witness)
        new_index = partition_index(G, P_new, NEG_SQUARE)
        decrease = index - new_index
        if not changed or decrease <= 0:
            raise PumpCapError(f"pump in round {rnd + 1} did not decrease the index", trace)
        trace.append(
            PumpRound(
                rnd + 1,
                P_new.n_parts,
                new_index,
                float("nan"),
                decrease,
                decrease >= eps**2 / 4 - 1e-12,
                decrease >= 4 * rep.violation**2 - 1e-12,
            )
        )
        P, index = P_new, new_index
    raise PumpCapError(f"no weak {eps}-regular partition after {cap} pumps", trace)


# ---------------------------------------------------------------------------
# INT_f-minimising partitions


@dataclass(frozen=True, eq=False)
class MinPartitionResult:
    partition: VertexPartition
    index: float
    exhaustive: bool
    evaluated: int
    local_optima: tuple = field(default=(), repr=False)


def _rgs_exactly_k(n: int, k: int) -> np.ndarray:
    """All restricted growth strings of length n using exactly k labels."""
    grids = np.indices((k,) * (n - 1)).reshape(n - 1, -1).T if n > 1 else np.zeros((1, 0), int)
    X = np.concatenate([np.zeros((grids.shape[0], 1), int), grids], axis=1)
    prefix_max = np.maximum.accumulate(X, axis=1)
    ok = np.all(X[:, 1:] <= prefix_max[:, :-1] + 1, axis=1) & (prefix_max[:, -1] == k - 1)
    return X[ok]


def _indices_batch(A: np.ndarray, X: np.ndarray, k: int, f) -> np.ndarray:
    n = A.shape[0]
    S = np.eye(k)[X]
    E = np.einsum("pik,ij,pjl->pkl", S, A, S)
    sizes = S.sum(axis=1)
    denom = sizes[:, :, None] * sizes[:, None, :]
    d = np.divide(E, denom, out=np.zeros_like(E), where=denom > 0)
    return np.sum(denom / float(n * n) * f(d), axis=(1, 2))


def min_int_partition_exhaustive(G: Graph, k: int, f=NEG_SQUARE) -> MinPartitionResult:
    f = get_functional(f)
    if G.n > EXHAUSTIVE_MAX_N or k > EXHAUSTIVE_MAX_K:
        raise ValueError(f"exhaustive mode needs n <= {EXHAUSTIVE_MAX_N} and k <= {EXHAUSTIVE_MAX_K}")
    if k > G.n:
        raise ValueError(f"k = {k} exceeds n = {G.n}")
    X = _rgs_exactly_k(G.n, k)
    vals = _indices_batch(G.adjacency.astype(float), X, k, f)
    i = int(np.argmin(vals))
    return MinPartitionResult(VertexPartition(X[i]), float(vals[i]), True, len(X))


class _IncrementalIndex:
    def __init__(self, A, assign, k, f):
        self.A, self.k, self.f, self.n = A, k, f, A.shape[0]
        self.assign = assign.copy()
        self.S = np.eye(k)[assign]
        self.E = self.S.T @ A @ self.S
        self.sizes = self.S.sum(axis=0)
        self.value = _index_from_counts(self.E, self.sizes, self.n, f)

    def move_delta(self, v, b):
        """(new E, new sizes, new value) after moving v to part b."""
        a = self.assign[v]
        u = np.zeros(self.k)
        u[b] += 1.0
        u[a] -= 1.0
        r = self.A[v] @ self.S
        E = self.E + np.outer(u, r) + np.outer(r, u)
        sizes = self.sizes + u
        return E, sizes, _index_from_counts(E, sizes, self.n, self.f)

    def apply(self, v, b, E, sizes, value):
        a = self.assign[v]
        self.S[v, a], self.S[v, b] = 0.0, 1.0
        self.assign[v] = b
        self.E, self.sizes, self.value = E, sizes, value


def _local_min(A, assign, k, f, budget):
    st = _IncrementalIndex(A, assign, k, f)
    n = A.shape[0]
    used = 0
    improved = True
    while improved and used < budget:
        improved = False
        for v in range(n):
            a = st.assign[v]
            if st.sizes[a] <= 1:
                continue
            for b in range(k):
                if b == a:
                    continue
                E, sizes, val = st.move_delta(v, b)
                used += 1
                if val < st.value - 1e-12:
                    st.apply(v, b, E, sizes, val)
                    improved = True
                    break
            if improved or used >= budget:
                break
        if improved or used >= budget:
            continue
        # no single move helps: try swaps between parts
        for v in range(n):
            for w in range(v + 1, n):
                a, b = st.assign[v], st.assign[w]
                if a == b:
                    continue
                saved = (st.E, st.sizes, st.value)
                E, sizes, val = st.move_delta(v, b)
                st.apply(v, b, E, sizes, val)
                E2, sizes2, val2 = st.move_delta(w, a)
                used += 1
                if val2 < saved[2] - 1e-12:
                    st.apply(w, a, E2, sizes2, val2)
                    improved = True
                    break
                st.apply(v, a, *saved)
            if improved or used >= budget:
                break
    return st.value, st.assign.copy(), used


def min_int_partition(
    G: Graph,
    k: int,
    f=NEG_SQUARE,
    moves: int = 200000,
    seed: int = 0,
    restarts: int = 8,
    exhaustive: bool | None = None,
) -> MinPartitionResult:
    """A k-part partition with small INT_f(G; P).

    Exhaustive (certified) when requested or, by default, when n <= 12 and
    k <= 3; otherwise first-improvement local search over single-vertex
    moves and pairwise swaps from ``restarts`` random starts.
    """
    f = get_functional(f)
    n = G.n
    if k > n or k < 1:
        raise ValueError(f"k = {k} must lie in [1, n = {n}]")
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_MAX_N and k <= EXHAUSTIVE_MAX_K
    if exhaustive:
        return min_int_partition_exhaustive(G, k, f)
    A = G.adjacency.astype(float)
    if k == n:
        P = VertexPartition.discrete(n)
        return MinPartitionResult(P, partition_index(G, P, f), True, 1)
    if k == 1:
        P = VertexPartition.trivial(n)
        return MinPartitionResult(P, partition_index(G, P, f), True, 1)
    best, optima, total = None, [], 0
    per_start = max(1, moves // max(restarts, 1))
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        perm = rng.permutation(n)
        assign = np.empty(n, dtype=int)
        assign[perm[:k]] = np.arange(k)
        assign[perm[k:]] = rng.integers(0, k, n - k)
        val, assign, used = _local_min(A, assign, k, f, per_start)
        total += used
        optima.append((val, assign))
        if best is None or val < best[0] - 1e-12:
            best = (val, assign)
    P = VertexPartition(best[1]).canonical()
    return MinPartitionResult(P, partition_index(G, P, f), False, total, tuple(optima))


# ---------------------------------------------------------------------------
# finite index set


@dataclass(frozen=True)
class IndexStep:
    M: int
    index: float
    regular: bool
    violation: float
    exhaustive: bool


@dataclass(frozen=True)
class StabilityRow:
    M: int
    index: float
    gap: float
    regular: bool
    violation: float


@dataclass(frozen=True, eq=False)
class FiniteIndexReport:
    epsilon: float
    X: tuple
    M: int | None
    chain: list
    partition: VertexPartition | None
    stability: list = field(default_factory=list)


def index_set(eps: float, n: int | None = None) -> tuple:
    """{1, 2, 4, ..., 2^ceil(4/eps^2)}, truncated at n vertices."""
    top = math.ceil(4.0 / eps**2)
    X = [2**j for j in range(top + 1)]
    if n is not None:
        X = [m for m in X if m <= n]
    return tuple(X)


def _near_minimal(G, M, f, best, tol, seed, restarts):
    """Partitions with M parts and index within tol of ``best``: local optima
    from extra restarts plus single-vertex moves of the best partition."""
    found = {}
    P0 = best.partition
    cands = [P0]
    if not best.exhaustive or G.n > EXHAUSTIVE_MAX_N or M > EXHAUSTIVE_MAX_K:
        for _, a in best.local_optima:
            cands.append(VertexPartition(a))
    for v in range(G.n):
        for b in range(M):
            a = P0.assignment.copy()
            if a[v] == b or np.sum(a == a[v]) <= 1:
                continue
            a[v] = b
            cands.append(VertexPartition(a))
    out = []
    for P in cands:
        key = tuple(P.canonical().assignment)
        if key in found:
            continue
        val = partition_index(G, P, f)
        found[key] = val
        if val <= best.index + tol:
            out.append((P, val))
    return out


def finite_index_experiment(
    G: Graph,
    eps: float,
    f=NEG_SQUARE,
    seed: int = 0,
    restarts: int = 50,
    stability: bool = True,
    max_M: int | None = None,
) -> FiniteIndexReport:
    """Walk M through the index set and stop at the first M whose
    INT_f-minimising M-part partition is weak eps-regular."""
    f = get_functional(f)
    X = index_set(eps, G.n)
    if max_M is not None:
        X = tuple(m for m in X if m <= max_M)
    chain = []
    found_M, found_P, stab = None, None, []
    for M in X:
        res = min_int_partition(G, M, f, seed=seed)
        rep = weak_regularity_check(G, res.partition, eps, restarts=restarts, seed=seed)
        chain.append(IndexStep(M, res.index, rep.regular, rep.violation, res.exhaustive))
        if stability:
            for P, val in _near_minimal(G, M, f, res, eps**2 / 8, seed, restarts):
                r2 = weak_regularity_check(G, P, eps, restarts=restarts, seed=seed)
                stab.append(StabilityRow(M, val, val - res.index, r2.regular, r2.violation))
        if rep.regular:
            found_M, found_P = M, res.partition
            break
    return FiniteIndexReport(eps, X, found_M, chain, found_P, stab)


def int_f_of_quotient(G: Graph, P: VertexPartition, f=NEG_SQUARE) -> float:
    return int_f(quotient_graphon(G, P), get_functional(f))
