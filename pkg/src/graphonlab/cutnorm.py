"""Cut-norms of step kernels and cut-distances between step graphons.

For a kernel with steps of measure mu_i and values d_ij, a measurable set A
enters the integral only through the fractions t_i = |A cap I_i| / mu_i, so

    int_A int_B D = t^T M s,   M_ij = mu_i mu_j d_ij,

and the cut-norm is a box-constrained quadratic (symmetric mode, sup over A)
or bilinear (sup over A, B) optimisation over [0, 1]^k.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import GraphonError, Kernel, StepGraphon, apply_ordered_partition, merge_breaks, permute_cells

BILINEAR_MAX_K = 24
SYMMETRIC_EXACT_MAX_K = 3
_CHUNK = 1 << 15


class CutNormBudgetError(ValueError):
    """Exact enumeration requested beyond its budget."""


class HeuristicWarning(UserWarning):
    """The symmetric heuristic fell below the factor-2 certificate."""


@dataclass(frozen=True, eq=False)
class CutNormResult:
    value: float
    witness_a: np.ndarray
    witness_b: np.ndarray
    mode: str
    exact: bool
    sign: int = 1
    breaks: np.ndarray = field(default=None, repr=False)
    upper_bound: float | None = None

    def objective(self, D) -> float:
        """|t^T M s| recomputed from the witnesses."""
        return abs(D.set_integral(self.witness_a, self.witness_b))

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "mode": self.mode,
            "exact": self.exact,
            "sign": self.sign,
            "witness_a": np.asarray(self.witness_a).tolist(),
            "witness_b": np.asarray(self.witness_b).tolist(),
        }
        if self.breaks is not None:
            out["breaks"] = np.asarray(self.breaks).tolist()
        if self.upper_bound is not None:
            out["upper_bound"] = self.upper_bound
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _weights(D) -> np.ndarray:
    return np.outer(D.measures, D.measures) * D.values


def _bits(ints: np.ndarray, k: int) -> np.ndarray:
    return ((ints[:, None] >> np.arange(k)) & 1).astype(float)


def cutnorm_bilinear_exact(D, max_k: int = BILINEAR_MAX_K) -> CutNormResult:
    """Exact sup over A, B of |int_A int_B D|.

    For fixed t the best s is the indicator of the positive (or negative)
    column sums, and by bilinearity some optimal t is a 0/1 vector, so it
    suffices to enumerate t over {0, 1}^k.
    """
    k = D.k
    if k > max_k:
        raise CutNormBudgetError(
            f"{k} steps exceed the enumeration budget of {max_k}; use cutnorm_bilinear_heuristic"
        )
    M = _weights(D)
    best, best_t, best_sign = -1.0, 0, 1
    for start in range(0, 1 << k, _CHUNK):
        ints = np.arange(start, min(start + _CHUNK, 1 << k))
        C = _bits(ints, k) @ M
        pos = np.where(C > 0, C, 0.0).sum(axis=1)
        neg = -np.where(C < 0, C, 0.0).sum(axis=1)
        val = np.maximum(pos, neg)
        i = int(np.argmax(val))
        if val[i] > best:
            best, best_t = float(val[i]), int(ints[i])
            best_sign = 1 if pos[i] >= neg[i] else -1
    t = _bits(np.array([best_t]), k)[0]
    col = t @ M
    s = (col > 0 if best_sign > 0 else col < 0).astype(float)
    value = abs(float(t @ M @ s))
    return CutNormResult(value, t, s, "bilinear", True, best_sign, D.breaks)


def cutnorm_bilinear_heuristic(D, restarts: int = 16, rng_seed: int = 0) -> CutNormResult:
    """Alternating maximisation for kernels too large to enumerate; a lower bound."""
    M = _weights(D)
    k = D.k
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(rng_seed + r)
        for sign in (1, -1):
            Q = sign * M
            t = (rng.random(k) < 0.5).astype(float)
            prev = -np.inf
            for _ in range(1000):
                s = (t @ Q > 0).astype(float)
                t = (Q @ s > 0).astype(float)
                cur = float(t @ Q @ s)
                if cur <= prev + 1e-15:
                    break
                prev = cur
            if best is None or cur > best[0]:
                best = (cur, t.copy(), s.copy(), sign)
    val, t, s, sign = best
    return CutNormResult(abs(float(t @ M @ s)), t, s, "bilinear", False, sign, D.breaks)


def _box_qp_max(Q: np.ndarray):
    """Global max of t^T Q t over [0, 1]^k by enumerating faces of the box.

    The maximiser lies in the relative interior of some face, where it is a
    stationary point of the restricted quadratic.  Each face fixes every
    coordinate to 0, to 1, or leaves it free; the free block is solved by
    least squares and kept only if feasible.  On a singular face the quadratic
    is constant along the stationary set, which then meets a lower face, so
    no optimum is lost by discarding infeasible solutions.
    """
    k = Q.shape[0]
    best_val, best_t = -np.inf, None
    scale = max(1.0, float(np.abs(Q).max()))
    for status in itertools.product((1, 0, 2), repeat=k):
        status = np.array(status)
        free = status == 2
        t = np.where(free, 0.0, status.astype(float))
        if free.any():
            A = Q[np.ix_(free, free)]
            rhs = -Q[np.ix_(free, ~free)] @ t[~free]
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.abs(A @ sol - rhs).max(initial=0.0) > 1e-12 * scale:
                continue
            if np.any(sol < -1e-12) or np.any(sol > 1 + 1e-12):
                continue
            t[free] = np.clip(sol, 0.0, 1.0)
        val = float(t @ Q @ t)
        if val > best_val + 1e-15:
            best_val, best_t = val, t
    return best_val, best_t


def _coordinate_ascent(Q: np.ndarray, t: np.ndarray, max_sweeps: int = 1000):
    """Maximise t^T Q t by exact one-coordinate moves; ties go to t_i = 0."""
    t = t.astype(float).copy()
    g = Q @ t
    for _ in range(max_sweeps):
        moved = False
        for i in range(t.size):
            a = Q[i, i]
            b = 2.0 * (g[i] - a * t[i])
            cands = [1.0]
            if a < 0:
                x = -b / (2.0 * a)
                if 0.0 < x < 1.0:
                    cands.insert(0, x)
            best_x, best_v = 0.0, 0.0
            for x in cands:
                v = a * x * x + b * x
                if v > best_v + 1e-15:
                    best_x, best_v = x, v
            cur_v = a * t[i] ** 2 + b * t[i]
            if best_x != t[i] and best_v > cur_v + 1e-15:
                g += Q[:, i] * (best_x - t[i])
                t[i] = best_x
                moved = True
        if not moved:
            break
    return float(t @ Q @ t), t


def _symmetric_starts(D, k, restarts, rng_seed, bilinear):
    starts = [np.ones(k)]
    if bilinear is not None:
        a = bilinear.witness_a > 0.5
        b = bilinear.witness_b > 0.5
        # |e(A,B)| <= 2 max |q(S)| over these four sets
        for s in (a | b, a & ~b, b & ~a, a & b, a, b):
            starts.append(s.astype(float))
    for r in range(restarts):
        starts.append(np.random.default_rng(rng_seed + r).random(k))
    return starts


def cutnorm_symmetric(
    D,
    restarts: int = 16,
    rng_seed: int = 0,
    exact_max_k: int = SYMMETRIC_EXACT_MAX_K,
) -> CutNormResult:
    """sup over A of |int_A int_A D|.

    Exact (face enumeration) when the kernel has at most ``exact_max_k``
    steps; otherwise multi-start coordinate ascent, a lower bound.  Restart
    ``r`` is seeded with ``rng_seed + r``; ties between restarts keep the
    earliest.  When the exact bilinear value is available it is attached as
    ``upper_bound`` and a HeuristicWarning is raised if the heuristic falls
    below half of it.
    """
    k = D.k
    M = _weights(D)
    bil = cutnorm_bilinear_exact(D) if k <= BILINEAR_MAX_K else None
    if k <= exact_max_k:
        vp, tp = _box_qp_max(M)
        vn, tn = _box_qp_max(-M)
        exact = True
    else:
        vp = vn = -np.inf
        tp = tn = None
        for start in _symmetric_starts(D, k, restarts, rng_seed, bil):
            v, t = _coordinate_ascent(M, start)
            if v > vp + 1e-15:
                vp, tp = v, t
            v, t = _coordinate_ascent(-M, start)
            if v > vn + 1e-15:
                vn, tn = v, t
        exact = False
    sign, t = (1, tp) if vp >= vn else (-1, tn)
    value = abs(float(t @ M @ t))
    upper = bil.value if bil is not None else None
    if upper is not None and value < upper / 2 - 1e-9:
        warnings.warn(
            f"symmetric cut-norm {value:.6g} below half the bilinear value {upper:.6g}",
            HeuristicWarning,
            stacklevel=2,
        )
    return CutNormResult(value, t, t.copy(), "symmetric", exact, sign, D.breaks, upper)


def cutnorm(D, mode: str = "symmetric", **kw) -> CutNormResult:
    if mode == "symmetric":
        return cutnorm_symmetric(D, **kw)
    if mode == "bilinear":
        return cutnorm_bilinear_exact(D) if D.k <= BILINEAR_MAX_K else cutnorm_bilinear_heuristic(D, **kw)
    raise ValueError(f"unknown cut-norm mode {mode!r}")


@dataclass(frozen=True, eq=False)
class WitnessSet:
    """A set B with |int_B int_B (Gamma - W)| >= eps, as per-step fractions.

    B takes the leftmost ``fractions[i]`` share of each step of the
    difference kernel's grid.
    """

    fractions: np.ndarray
    breaks: np.ndarray
    deviation: float
    sign: int

    def intervals(self) -> list:
        out = []
        for i, t in enumerate(self.fractions):
            if t > 0:
                lo = self.breaks[i]
                out.append((float(lo), float(lo + t * (self.breaks[i + 1] - lo))))
        return out

    def measure(self) -> float:
        return float(self.fractions @ np.diff(self.breaks))


def cutnorm_witness_set(Gamma, W, eps: float, **kw) -> WitnessSet | None:
    """A witness set for ``cutnorm(Gamma - W) >= eps``, or None if none is found."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    D = Gamma - W
    r = cutnorm_symmetric(D, **kw)
    if r.value < eps:
        return None
    return WitnessSet(r.witness_a, D.breaks, r.sign * r.value, r.sign)


# ---------------------------------------------------------------------------
# cut distance


@dataclass(frozen=True)
class CutDistanceResult:
    value: float
    permutation: tuple
    mode: str
    n_cells: int
    evaluated: int
    # only grid-cell permutations are searched, so this bounds delta from above
    upper_bound: bool = True


def _uniform_cells(breaks, max_cells: int, tol: float = 1e-9) -> int:
    for n in range(1, max_cells + 1):
        x = breaks * n
        if np.all(np.abs(x - np.round(x)) <= tol * n):
            return n
    raise GraphonError(f"no common equal-measure grid with at most {max_cells} cells")


def _on_uniform(W1, W2, max_cells):
    grid = merge_breaks(W1.breaks, W2.breaks)
    n = _uniform_cells(grid, max_cells)
    ub = np.arange(n + 1) / n
    return n, W1.refine(ub).values, W2.refine(ub).values


def _bilinear_values_batch(Ds: np.ndarray) -> np.ndarray:
    """Exact bilinear cut-norm of many equal-measure kernels at once."""
    n = Ds.shape[-1]
    T = _bits(np.arange(1 << n), n)
    C = np.einsum("tn,pnm->ptm", T, Ds) / (n * n)
    pos = np.where(C > 0, C, 0.0).sum(axis=2)
    neg = -np.where(C < 0, C, 0.0).sum(axis=2)
    return np.maximum(pos, neg).max(axis=1)


def cut_distance(
    W1,
    W2,
    mode: str = "exact_small",
    budget: int = 20000,
    seed: int = 0,
    max_cells: int | None = None,
) -> CutDistanceResult:
    """Cut distance restricted to grid-cell permutations of W1.

    ``exact_small`` enumerates all n! permutations of a common equal-measure
    grid with n <= 8 cells.  ``heuristic`` runs simulated annealing over
    permutations (swap moves, geometric cooling) for ``budget`` steps on a
    common equal-measure grid of up to 64 cells.
    """
    if mode == "exact_small":
        n, V1, V2 = _on_uniform(W1, W2, max_cells or 8)
        perms = np.array(list(itertools.permutations(range(n))), dtype=int)
        best, best_perm = np.inf, None
        for start in range(0, len(perms), 2048):
            P = perms[start:start + 2048]
            Ds = V1[P[:, :, None], P[:, None, :]] - V2[None]
            vals = _bilinear_values_batch(Ds)
            i = int(np.argmin(vals))
            if vals[i] < best - 1e-15:
                best, best_perm = float(vals[i]), tuple(int(x) for x in P[i])
        return CutDistanceResult(best, best_perm, mode, n, len(perms))
    if mode == "heuristic":
        return _anneal(W1, W2, budget, seed, max_cells or 64)
    raise ValueError(f"unknown cut-distance mode {mode!r}")


def _anneal(W1, W2, budget, seed, max_cells) -> CutDistanceResult:
    n, V1, V2 = _on_uniform(W1, W2, max_cells)
    w = 1.0 / n

    def cost(perm):
        D = Kernel(np.full(n, w), V1[np.ix_(perm, perm)] - V2)
        if n <= 16:
            return cutnorm_bilinear_exact(D).value
        return cutnorm_bilinear_heuristic(D, restarts=4, rng_seed=seed).value

    rng = np.random.default_rng(seed)
    perm = np.arange(n)
    cur = cost(perm)
    best, best_perm = cur, perm.copy()
    temp0 = max(cur, 1e-6) * 0.1
    evaluated = 1
    if n > 1:
        for step in range(budget):
            temp = temp0 * (1e-3 ** (step / max(budget - 1, 1)))
            i, j = rng.choice(n, size=2, replace=False)
            cand = perm.copy()
            cand[i], cand[j] = cand[j], cand[i]
            c = cost(cand)
            evaluated += 1
            if c <= cur or rng.random() < math.exp(-(c - cur) / temp):
                perm, cur = cand, c
                if c < best - 1e-15:
                    best, best_perm = c, cand.copy()
    return CutDistanceResult(best, tuple(int(x) for x in best_perm), "heuristic", n, evaluated)


def permuted_version(W, perm, n: int | None = None):
    """W refined to ``n`` equal cells and listed in the order ``perm``."""
    n = n or len(perm)
    return permute_cells(W.refine(np.arange(n + 1) / n), perm)
