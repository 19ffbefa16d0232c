"""Dyadic rectangle diagnostics, the stripe-permutation sampler, and the
shift-left experiments built on top of them.

Limits of graphon sequences are replaced by finite surrogates: a sequence
is summarised by the mean of its depth-D dyadic steppings, and closeness of
two graphons is measured on the rectangles of the 2^D x 2^D dyadic grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BREAK_TOL,
    GraphonError,
    Partition,
    _locate,
    StepGraphon,
    apply_ordered_partition,
    breaks_from_measures,
    int_f,
    merge_breaks,
    rearrange,
    stepping,
)
from .functionals import ENTROPY, get_functional

MAX_DEPTH = 12


# ---------------------------------------------------------------------------
# rectangle profiles


def _overlap(breaks: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """O[a, i] = length of (grid interval a) cap (step i)."""
    lo = np.maximum(grid[:-1, None], breaks[None, :-1])
    hi = np.minimum(grid[1:, None], breaks[None, 1:])
    return np.clip(hi - lo, 0.0, None)


@dataclass(frozen=True, eq=False)
class RectProfile:
    """Integrals of a graphon over the cells of the 2^D x 2^D dyadic grid."""

    depth: int
    cells: np.ndarray
    _prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=float)
        c.flags.writeable = False
        object.__setattr__(self, "cells", c)
        p = np.zeros((c.shape[0] + 1, c.shape[1] + 1))
        p[1:, 1:] = c.cumsum(0).cumsum(1)
        object.__setattr__(self, "_prefix", p)

    @property
    def size(self) -> int:
        return 1 << self.depth

    def rect(self, x0: int, x1: int, y0: int, y1: int, depth: int | None = None) -> float:
        """Integral over [x0, x1) x [y0, y1) in units of 2^-depth (default: own depth)."""
        depth = self.depth if depth is None else depth
        if depth > self.depth:
            raise ValueError(f"depth {depth} is finer than the profile depth {self.depth}")
        s = 1 << (self.depth - depth)
        p = self._prefix
        x0, x1, y0, y1 = x0 * s, x1 * s, y0 * s, y1 * s
        return float(p[x1, y1] - p[x0, y1] - p[x1, y0] + p[x0, y0])

    def coarsen(self, depth: int) -> "RectProfile":
        s = 1 << (self.depth - depth)
        n = 1 << depth
        return RectProfile(depth, self.cells.reshape(n, s, n, s).sum(axis=(1, 3)))

    def averages(self) -> np.ndarray:
        return self.cells * float(self.size**2)

    def as_graphon(self) -> StepGraphon:
        """The depth-D dyadic stepping."""
        return StepGraphon.from_matrix(np.clip(self.averages(), 0.0, 1.0))

    def items(self):
        """(x0, x1, y0, y1, integral) for every dyadic rectangle of depth <= D."""
        for d in range(self.depth + 1):
            n = 1 << d
            for a in range(n):
                for b in range(n):
                    yield (a / n, (a + 1) / n, b / n, (b + 1) / n, self.rect(a, a + 1, b, b + 1, d))


def rect_profile(W, depth: int) -> RectProfile:
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")
    O = _overlap(W.breaks, np.arange((1 << depth) + 1) / (1 << depth))
    return RectProfile(depth, O @ W.values @ O.T)


def _max_abs_subrect(M: np.ndarray) -> float:
    """max |sum| over contiguous sub-rectangles of M (Kadane over row pairs)."""
    n = M.shape[0]
    R = np.vstack([np.zeros(M.shape[1]), M.cumsum(0)])
    a, b = np.triu_indices(n + 1, 1)
    rows = R[b] - R[a]
    C = np.hstack([np.zeros((rows.shape[0], 1)), rows.cumsum(1)])
    lo = np.minimum.accumulate(C, axis=1)
    hi = np.maximum.accumulate(C, axis=1)
    return float(max((C - lo).max(), (hi - C).max()))


def weakstar_pseudometric(W1, W2, depth: int) -> float:
    """max |int_R (W1 - W2)| over rectangles R with endpoints in 2^-D Z."""
    diff = rect_profile(W1, depth).cells - rect_profile(W2, depth).cells
    return _max_abs_subrect(diff)


def aggregate(graphons, depth: int) -> StepGraphon:
    """Mean of the depth-D dyadic steppings of a sequence."""
    graphons = list(graphons)
    if not graphons:
        raise ValueError("empty sequence")
    cells = sum(rect_profile(W, depth).cells for W in graphons) / len(graphons)
    return RectProfile(depth, cells).as_graphon()


# ---------------------------------------------------------------------------
# stripe sampler


@dataclass(frozen=True)
class StripeSampleConfig:
    base_partition: Partition
    stripes_per_part: int
    seed: int | None = 0

    def __post_init__(self):
        if self.stripes_per_part < 1:
            raise ValueError("stripes_per_part must be >= 1")
        if np.any(self.base_partition.part_measures() <= 0):
            raise ValueError("every part needs positive measure")


def _permute_pieces(W, P: Partition, perms) -> StepGraphon:
    """Lay out each part's stripes in the order given by ``perms``.

    A part is viewed in local coordinates by concatenating its cells
    left to right and rescaling to [0, 1]; output stripe q is a translated copy of input stripe
    perms[p][q], and the result is mapped back onto the part's cells.
    """
    grid = merge_breaks(W.breaks, P.breaks)
    Wr = W.refine(grid)
    labels = P.refine(grid).labels
    cell_len = np.diff(grid)
    pieces = []
    for p, perm in enumerate(perms):
        cells = np.flatnonzero(labels == p)
        m = cell_len[cells].sum()
        # local coordinate of the part, rescaled to [0, 1]
        L = breaks_from_measures(cell_len[cells] / m)
        s = len(perm)
        h = 1.0 / s
        stripes = np.arange(s + 1) * h
        # input-cell boundaries as seen inside the output stripes
        q = np.minimum((L[1:-1] / h).astype(int), s - 1)
        inv = np.empty(s, dtype=int)
        inv[perm] = np.arange(s)
        moved = inv[q] * h + (L[1:-1] - q * h)
        out = merge_breaks(stripes, L, moved)
        mids = 0.5 * (out[:-1] + out[1:])
        oq = np.minimum((mids / h).astype(int), s - 1)
        src_local = np.asarray(perm)[oq] * h + (mids - oq * h)
        src_cell = cells[np.clip(np.searchsorted(L, src_local, side="right") - 1, 0, cells.size - 1)]
        dst = np.clip(np.searchsorted(L, mids, side="right") - 1, 0, cells.size - 1)
        glob = grid[cells[dst]] + (out[:-1] - L[dst]) * m
        for g, ln, c in zip(glob, np.diff(out) * m, src_cell):
            pieces.append((float(g), float(ln), int(c)))
    return rearrange(Wr, pieces)


def stripe_permutations(P: Partition, s: int, rng) -> list:
    return [rng.permutation(s) for _ in range(P.n_parts)]


def sample_stripe_version(Gamma, cfg: StripeSampleConfig, rng=None) -> StepGraphon:
    """Draw from the stripe distribution: each part of the base partition is
    cut into s equal stripes, which are permuted uniformly and independently
    per part (order-preserving inside each stripe)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    s = cfg.stripes_per_part
    if s == 1:
        return Gamma
    perms = stripe_permutations(cfg.base_partition, s, rng)
    return _permute_pieces(Gamma, cfg.base_partition, perms)


def block_integrals(W, P: Partition) -> np.ndarray:
    """int over K x L of W for all parts K, L of P."""
    grid = merge_breaks(W.breaks, P.breaks)
    Wr = W.refine(grid)
    S = P.refine(grid).indicator()
    return S.T @ (Wr.weights() * Wr.values) @ S


def en_threshold(n: int) -> float:
    return n ** -0.25 + 4.0 / n


def en_tail(n: int) -> float:
    return 2.0 * math.exp(-math.sqrt(n) / 4.0)


@dataclass(frozen=True)
class TrialRow:
    n: int
    stripes: int
    pseudometric: float
    int_f: float
    event: bool
    blocks_preserved: bool


def stepping_attainment_trial(
    gammas,
    P: Partition,
    s_schedule,
    seed: int,
    depth: int = 3,
    f=ENTROPY,
    ns=None,
) -> list:
    """One sample U_n per Gamma_n; distance to the stepping of Gamma_n on P.

    ``ns`` gives the index n used in the deviation threshold (default
    1, 2, ...).  Sample n is drawn with ``default_rng([seed, n])``.
    """
    f = get_functional(f)
    gammas = list(gammas)
    if not gammas:
        raise ValueError("empty sequence")
    ns = list(ns) if ns is not None else list(range(1, len(gammas) + 1))
    rows = []
    for n, G, s in zip(ns, gammas, s_schedule):
        U = sample_stripe_version(G, StripeSampleConfig(P, int(s)), rng=np.random.default_rng([seed, n]))
        target = stepping(G, P)
        d = weakstar_pseudometric(U, target, depth)
        same = np.allclose(block_integrals(U, P), block_integrals(G, P), atol=1e-12, rtol=0)
        rows.append(TrialRow(n, int(s), d, int_f(U, f), d > en_threshold(n), bool(same)))
    return rows


@dataclass(frozen=True)
class ConcentrationReport:
    n: int
    trials: int
    frequency: float
    tail: float
    bound: float
    blocks_preserved: bool
    max_pseudometric: float


def event_frequency(Gamma, P: Partition, n: int, trials: int, seed: int, depth: int = 3) -> ConcentrationReport:
    """Frequency of the deviation event over ``trials`` samples with s = n."""
    target = stepping(Gamma, P)
    base = block_integrals(Gamma, P)
    hits, same, worst = 0, True, 0.0
    for t in range(trials):
        U = sample_stripe_version(Gamma, StripeSampleConfig(P, n), rng=np.random.default_rng([seed, n, t]))
        d = weakstar_pseudometric(U, target, depth)
        worst = max(worst, d)
        hits += d > en_threshold(n)
        same &= bool(np.allclose(block_integrals(U, P), base, atol=1e-12, rtol=0))
    tail = en_tail(n)
    return ConcentrationReport(n, trials, hits / trials, tail, max(0.05, 3 * tail), same, worst)


# ---------------------------------------------------------------------------
# shift-left versions and improvement experiments


def _complement(intervals) -> list:
    out, x = [], 0.0
    for lo, hi in sorted(intervals):
        if lo > x + BREAK_TOL:
            out.append((x, lo))
        x = max(x, hi)
    if x < 1.0 - BREAK_TOL:
        out.append((x, 1.0))
    return out


def set_partition(Gamma, B) -> Partition:
    """Ordered pair (B, I minus B) on Gamma's grid.

    ``B`` is a boolean mask over Gamma's cells or a list of intervals.
    """
    if isinstance(B, np.ndarray) and B.dtype == bool:
        if B.size != Gamma.k:
            raise GraphonError(f"mask has {B.size} entries, graphon has {Gamma.k} cells")
        return Partition.from_mask(Gamma.breaks, B)
    B = [tuple(map(float, iv)) for iv in B]
    if not B:
        return Partition.trivial()
    rest = _complement(B)
    if not rest:
        return Partition.trivial()
    return Partition.from_sets([B, rest])


def set_mask(Gamma, B) -> tuple:
    """(breaks, cell mask) of B on the refinement of Gamma's grid by B."""
    P = set_partition(Gamma, B)
    grid = merge_breaks(Gamma.breaks, P.breaks)
    lab = P.refine(grid).labels
    if P.n_parts == 2:
        return grid, lab == 0
    if isinstance(B, np.ndarray):
        full = bool(B.all())
    else:
        full = sum(hi - lo for lo, hi in B) >= 1.0 - BREAK_TOL
    return grid, np.full(lab.size, full)


def _mask_on(grid, mask, other):
    """Re-express a cell mask on the common refinement with ``other``'s grid."""
    fine = merge_breaks(grid, other)
    return fine, mask[_locate(grid, fine)]


def shift_left_version(Gamma, B) -> StepGraphon:
    """The version of Gamma in which B is moved to [0, |B|] and its
    complement to the rest, both keeping their internal order."""
    return apply_ordered_partition(Gamma, set_partition(Gamma, B))


@dataclass(frozen=True, eq=False)
class ShiftData:
    """Empirical density psi of the shifted sets on the dyadic grid, its
    cumulative integral theta and the complementary map xi, at grid points."""

    psi: np.ndarray
    theta: np.ndarray
    xi: np.ndarray

    @classmethod
    def from_masks(cls, masks, depth: int) -> "ShiftData":
        n = 1 << depth
        dy = np.arange(n + 1) / n
        psi = np.zeros(n)
        for grid, mask in masks:
            psi += _overlap(grid, dy) @ mask.astype(float) * n
        psi /= max(len(masks), 1)
        psi = np.clip(psi, 0.0, 1.0)
        theta = np.concatenate([[0.0], np.cumsum(psi) / n])
        xi = theta[-1] + np.concatenate([[0.0], np.cumsum(1.0 - psi) / n])
        return cls(psi, theta, xi)


@dataclass(frozen=True, eq=False)
class ImprovementReport:
    W_hat: StepGraphon
    W_tilde_hat: StepGraphon
    int_f_hat: float
    int_f_tilde: float
    int_f_gap: float
    shift: ShiftData
    epsilon: float
    sign: int
    shifted_block: float
    baseline: float
    claim_gap: float

    @property
    def claim_holds(self) -> bool:
        return self.claim_gap >= 0.5 * self.epsilon - 1e-12


def improvement_experiment(gammas, sets, f=ENTROPY, depth: int = 4) -> ImprovementReport:
    """Shift each B_n to the left of Gamma_n and compare aggregates.

    ``epsilon`` and ``sign`` describe the smallest deviation
    |int_{B_n x B_n} (Gamma_n - W_hat)|; the claim gap compares the mean
    integral of the shifted graphons over [0, |B_n|]^2 with the psi-weighted
    integral of W_hat.
    """
    f = get_functional(f)
    gammas, sets = list(gammas), list(sets)
    if len(gammas) != len(sets) or not gammas:
        raise ValueError("need equally long, non-empty sequences")
    shifted = [shift_left_version(G, B) for G, B in zip(gammas, sets)]
    W_hat = aggregate(gammas, depth)
    W_tilde = aggregate(shifted, depth)
    masks = [set_mask(G, B) for G, B in zip(gammas, sets)]
    shift = ShiftData.from_masks(masks, depth)
    devs, blocks = [], []
    for G, (grid, mask) in zip(gammas, masks):
        fine, m = _mask_on(grid, mask, W_hat.breaks)
        t = m.astype(float)
        blocks.append(G.refine(fine).set_integral(t))
        devs.append(blocks[-1] - W_hat.refine(fine).set_integral(t))
    devs = np.asarray(devs)
    i = int(np.argmin(np.abs(devs)))
    eps = float(abs(devs[i]))
    sign = 1 if devs.sum() >= 0 else -1
    n = 1 << depth
    baseline = float(shift.psi @ W_hat.values @ shift.psi) / n**2
    shifted_block = float(np.mean(blocks))
    a, b = int_f(W_hat, f), int_f(W_tilde, f)
    return ImprovementReport(
        W_hat, W_tilde, a, b, b - a, shift, eps, sign, shifted_block, baseline, sign * (shifted_block - baseline)
    )


def staged_partition(J: Partition, stage: int) -> Partition:
    """Stage i of an l-part ordered partition: its last i parts, in order,
    followed by everything else kept in place."""
    l = J.n_parts
    if not 0 <= stage <= l:
        raise ValueError(f"stage must lie in [0, {l}]")
    cut = l - stage
    labels = np.where(J.labels >= cut, J.labels - cut, stage)
    _, labels = np.unique(labels, return_inverse=True)
    return Partition(J.breaks, labels)


@dataclass(frozen=True)
class StagedReport:
    ell: int
    int_f_chain: tuple
    gaps: tuple


def ell_part_shift_experiment(gammas, partitions, f=ENTROPY, depth: int = 4) -> StagedReport:
    """int_f of the aggregates of the staged versions, stages 0..l."""
    f = get_functional(f)
    gammas, partitions = list(gammas), list(partitions)
    if len(gammas) != len(partitions) or not gammas:
        raise ValueError("need equally long, non-empty sequences")
    ells = {J.n_parts for J in partitions}
    if len(ells) != 1:
        raise ValueError(f"partitions have varying part counts {sorted(ells)}")
    ell = ells.pop()
    chain = []
    for stage in range(ell + 1):
        versions = [apply_ordered_partition(G, staged_partition(J, stage)) for G, J in zip(gammas, partitions)]
        chain.append(int_f(aggregate(versions, depth), f))
    gaps = tuple(b - a for a, b in zip(chain, chain[1:]))
    return StagedReport(ell, tuple(chain), gaps)


# ---------------------------------------------------------------------------
# scripted families


def chessboard_family(k: int) -> StepGraphon:
    """2(k+2) equal cells: a 0/1 chessboard on the first 2(k+1), value 1/2
    wherever one of the last two cells is involved."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = 2 * k + 4
    i = np.arange(n)
    V = ((i[:, None] + i[None, :]) % 2).astype(float)
    tail = i >= 2 * k + 2
    V[tail, :] = 0.5
    V[:, tail] = 0.5
    return StepGraphon.from_matrix(V)


def chessboard_int_h(k: int) -> float:
    return 1.0 - ((2 * k + 2) / (2 * k + 4)) ** 2


def bipartite_chessboard() -> StepGraphon:
    return StepGraphon.from_matrix([[0.0, 1.0], [1.0, 0.0]])


def permuted_bipartite(n: int, rng):
    """Random ordering of the n-vertex complete balanced bipartite graph,
    returned with the mask of the side that contains no edges inside."""
    side = np.zeros(n, dtype=bool)
    side[rng.permutation(n)[: n // 2]] = True
    V = (side[:, None] != side[None, :]).astype(float)
    return StepGraphon.from_matrix(V), side


NOEL_VALUE = 0.7


def noel_family(ell: int, n: int, seed) -> StepGraphon:
    """n-cell {0,1} quasirandom graphon with its top-left (n/l)^2 block set to 0.7."""
    if ell < 1 or n % ell:
        raise ValueError(f"n = {n} is not divisible by l = {ell}")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < 0.5, 1)
    V = (upper | upper.T).astype(float)
    m = n // ell
    V[:m, :m] = NOEL_VALUE
    return StepGraphon.from_matrix(V)


def region_average(W, x1: float) -> float:
    """Average of W over [0, x1]^2."""
    return W.rect_integral(0.0, x1, 0.0, x1) / x1**2


def noel_region_average(ell: int, n: int, seed: int, samples: int = 16, depth: int = 4) -> float:
    """Average over [0, 1/l]^2 of the aggregate of stripe-shuffled copies.

    Shuffles act inside [0, 1/l] and inside its complement separately, with
    one stripe per vertex.
    """
    W = noel_family(ell, n, seed)
    P = Partition([0.0, 1.0 / ell, 1.0], [0, 1])
    rng = np.random.default_rng([seed, ell])
    m = n // ell
    copies = []
    for _ in range(samples):
        perms = [rng.permutation(m), rng.permutation(n - m)]
        copies.append(_permute_pieces(W, P, perms) if ell > 1 else W)
    return region_average(aggregate(copies, depth), 1.0 / ell)


def mixing_entropy(ell: int, n: int, seed: int, samples: int = 64, depth: int = 1) -> float:
    """int_H of the coarse aggregate of fully shuffled copies of noel_family."""
    W = noel_family(ell, n, seed)
    rng = np.random.default_rng([seed, ell, 1])
    cfg = StripeSampleConfig(Partition.trivial(), n)
    copies = [sample_stripe_version(W, cfg, rng=rng) for _ in range(samples)]
    return int_f(aggregate(copies, depth), ENTROPY)
