"""Step graphons on the unit interval.

Every object here lives on an explicit *grid*: breakpoints
``0 = b_0 < b_1 < ... < b_k = 1`` cutting I into cells laid out left to
right.  Measurable sets are finite unions of grid cells, so stepping,
rearrangement and distances are exact finite sums.  Objects on different
grids are compared by refining both to the union of their breakpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .functionals import ConcaveFunctional, get_functional

MEASURE_TOL = 1e-12
BREAK_TOL = 1e-12


class GraphonError(ValueError):
    """An invariant of a step function or partition is violated."""


# ---------------------------------------------------------------------------
# grids


def merge_breaks(*grids, tol: float = BREAK_TOL) -> np.ndarray:
    """Union of breakpoint arrays; points closer than ``tol`` are identified."""
    pts = np.sort(np.concatenate([np.asarray(g, dtype=float).ravel() for g in grids] + [[0.0, 1.0]]))
    pts = pts[(pts >= -tol) & (pts <= 1.0 + tol)]
    keep = [0.0]
    for p in pts:
        if p - keep[-1] > tol:
            keep.append(float(p))
    if 1.0 - keep[-1] <= tol:
        keep[-1] = 1.0
    else:
        keep.append(1.0)
    return np.asarray(keep)


def breaks_from_measures(measures) -> np.ndarray:
    b = np.concatenate([[0.0], np.cumsum(measures)])
    b[-1] = 1.0
    return b


def _locate(breaks: np.ndarray, fine: np.ndarray) -> np.ndarray:
    """Index of the coarse cell containing each fine cell."""
    mids = 0.5 * (fine[:-1] + fine[1:])
    idx = np.searchsorted(breaks, mids, side="right") - 1
    return np.clip(idx, 0, len(breaks) - 2)


def uniform_breaks(n: int) -> np.ndarray:
    return np.arange(n + 1) / n


# ---------------------------------------------------------------------------
# step functions


@dataclass(frozen=True, eq=False)
class _StepFunction:
    measures: np.ndarray
    values: np.ndarray

    lower = 0.0
    upper = 1.0

    def __post_init__(self):
        m = np.array(self.measures, dtype=float).ravel()
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape != (m.size, m.size):
            raise GraphonError(f"values must be a {m.size}x{m.size} matrix, got shape {v.shape}")
        m.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "measures", m)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_matrix(cls, values):
        """Equal-measure step function with the given cell values."""
        values = np.asarray(values, dtype=float)
        k = values.shape[0]
        return cls(np.full(k, 1.0 / k), values)

    @classmethod
    def constant(cls, c: float, k: int = 1):
        return cls(np.full(k, 1.0 / k), np.full((k, k), float(c)))

    @property
    def k(self) -> int:
        return self.measures.size

    @property
    def breaks(self) -> np.ndarray:
        return breaks_from_measures(self.measures)

    def weights(self) -> np.ndarray:
        """Cell areas mu_i * mu_j."""
        return np.outer(self.measures, self.measures)

    def refine(self, breaks) -> "_StepFunction":
        """The same function on a finer grid; ``breaks`` must contain ours."""
        fine = merge_breaks(breaks, self.breaks)
        src = _locate(self.breaks, fine)
        return self._relabel(np.diff(fine), src)

    def _relabel(self, measures, src):
        return type(self)(measures, self.values[np.ix_(src, src)])

    def __call__(self, x, y):
        b = self.breaks
        i = np.clip(np.searchsorted(b, np.asarray(x), side="right") - 1, 0, self.k - 1)
        j = np.clip(np.searchsorted(b, np.asarray(y), side="right") - 1, 0, self.k - 1)
        return self.values[i, j]

    def integral(self) -> float:
        return float(self.measures @ self.values @ self.measures)

    def set_integral(self, a, b=None) -> float:
        """Integral over A x B given per-cell inclusion fractions."""
        a = np.asarray(a, dtype=float)
        b = a if b is None else np.asarray(b, dtype=float)
        return float((a * self.measures) @ self.values @ (b * self.measures))

    def rect_integral(self, x0, x1, y0, y1) -> float:
        """Integral over the rectangle [x0, x1] x [y0, y1]."""
        b = self.breaks
        fx = np.clip(np.minimum(b[1:], x1) - np.maximum(b[:-1], x0), 0.0, None)
        fy = np.clip(np.minimum(b[1:], y1) - np.maximum(b[:-1], y0), 0.0, None)
        return float(fx @ self.values @ fy)

    def simplify(self):
        """Merge neighbouring cells whose rows coincide."""
        keep = [0]
        for i in range(1, self.k):
            if not np.array_equal(self.values[i], self.values[keep[-1]]):
                keep.append(i)
        starts = np.asarray(keep)
        measures = np.add.reduceat(self.measures, starts)
        return type(self)(measures, self.values[np.ix_(starts, starts)])

    def equals_ae(self, other, tol: float = 1e-12) -> bool:
        """Equality almost everywhere, checked cellwise on the common refinement."""
        grid = merge_breaks(self.breaks, other.breaks)
        a, b = self.refine(grid), other.refine(grid)
        return bool(np.all(np.abs(a.values - b.values) <= tol))

    def weighted_histogram(self, decimals: int = 12) -> dict:
        """Map value -> total area carrying that value."""
        w = self.weights().ravel()
        v = np.round(self.values.ravel(), decimals)
        out: dict = {}
        for val, wt in zip(v, w):
            out[float(val)] = out.get(float(val), 0.0) + float(wt)
        return out

    def to_dict(self) -> dict:
        return {"measures": self.measures.tolist(), "values": self.values.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict):
        try:
            obj = cls(data["measures"], data["values"])
        except KeyError as exc:
            raise GraphonError(f"missing field {exc.args[0]!r}") from None
        return validate(obj)

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k})"


class StepGraphon(_StepFunction):
    """Symmetric step function I^2 -> [0, 1]."""

    def __sub__(self, other) -> "Kernel":
        grid = merge_breaks(self.breaks, other.breaks)
        a, b = self.refine(grid), other.refine(grid)
        return Kernel(a.measures, a.values - b.values)


class Kernel(_StepFunction):
    """Signed symmetric step function with values in [-1, 1]."""

    lower = -1.0

    def __mul__(self, c: float) -> "Kernel":
        return Kernel(self.measures, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other) -> "Kernel":
        grid = merge_breaks(self.breaks, other.breaks)
        a, b = self.refine(grid), other.refine(grid)
        return Kernel(a.measures, a.values + b.values)


def validate(W):
    """Return ``W`` if it satisfies its invariants, else raise GraphonError."""
    m, v = W.measures, W.values
    bad = np.flatnonzero(~(m > 0))
    if bad.size:
        raise GraphonError(f"non-positive measure at step {bad[0] + 1}: {m[bad[0]]!r}")
    total = float(m.sum())
    if abs(total - 1.0) > MEASURE_TOL:
        raise GraphonError(f"measures sum to {total!r}, not 1")
    if not np.all(np.isfinite(v)):
        i, j = np.argwhere(~np.isfinite(v))[0]
        raise GraphonError(f"non-finite value at ({i + 1},{j + 1})")
    asym = np.argwhere(v != v.T)
    if asym.size:
        i, j = asym[0]
        raise GraphonError(f"asymmetric values at ({i + 1},{j + 1}): {v[i, j]!r} != {v[j, i]!r}")
    out = np.argwhere((v < W.lower) | (v > W.upper))
    if out.size:
        i, j = out[0]
        raise GraphonError(
            f"value {v[i, j]!r} at ({i + 1},{j + 1}) outside [{W.lower:g}, {W.upper:g}]"
        )
    return W


def int_f(W, f) -> float:
    """Integral of f(W(x, y)) over I^2; exact for step functions."""
    f = get_functional(f)
    return float(W.measures @ f(W.values) @ W.measures)


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True, eq=False)
class Partition:
    """Ordered partition of I into finite unions of grid cells.

    ``labels[c]`` is the part containing grid cell ``c``; parts are ordered
    by label, so part 0 is the one sent to the left by the rearrangement map.
    """

    breaks: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        b = np.array(self.breaks, dtype=float).ravel()
        lab = np.array(self.labels, dtype=int).ravel()
        if b.size < 2 or abs(b[0]) > BREAK_TOL or abs(b[-1] - 1.0) > BREAK_TOL:
            raise GraphonError("partition grid must run from 0 to 1")
        if np.any(np.diff(b) <= 0):
            raise GraphonError("partition grid must be strictly increasing")
        if lab.size != b.size - 1:
            raise GraphonError(f"{b.size - 1} cells but {lab.size} labels")
        present = np.unique(lab)
        if lab.size and (present[0] != 0 or present[-1] != present.size - 1):
            missing = sorted(set(range(int(lab.max()) + 1)) - set(present.tolist()))
            raise GraphonError(f"empty part(s) {missing}")
        b.flags.writeable = False
        lab.flags.writeable = False
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def trivial(cls) -> "Partition":
        return cls([0.0, 1.0], [0])

    @classmethod
    def intervals(cls, breaks) -> "Partition":
        """Each grid interval is its own part, in left-to-right order."""
        b = np.asarray(breaks, dtype=float)
        return cls(b, np.arange(b.size - 1))

    @classmethod
    def uniform(cls, n: int) -> "Partition":
        return cls.intervals(uniform_breaks(n))

    @classmethod
    def from_parts(cls, breaks, parts) -> "Partition":
        """Build from index sets into the cells of ``breaks``."""
        b = np.asarray(breaks, dtype=float)
        labels = np.full(b.size - 1, -1)
        for p, cells in enumerate(parts):
            cells = np.asarray(list(cells), dtype=int)
            if np.any(labels[cells] >= 0):
                raise GraphonError(f"part {p} overlaps an earlier part")
            labels[cells] = p
        if np.any(labels < 0):
            raise GraphonError(f"cells {np.flatnonzero(labels < 0).tolist()} not covered")
        return cls(b, labels)

    @classmethod
    def from_sets(cls, sets) -> "Partition":
        """Build from parts given as lists of (a, b) intervals."""
        pts = [x for s in sets for iv in s for x in iv]
        b = merge_breaks(pts)
        mids = 0.5 * (b[:-1] + b[1:])
        labels = np.full(b.size - 1, -1)
        for p, s in enumerate(sets):
            for lo, hi in s:
                inside = (mids > lo) & (mids < hi)
                if np.any(labels[inside] >= 0):
                    raise GraphonError(f"part {p} overlaps an earlier part")
                labels[inside] = p
        if np.any(labels < 0):
            raise GraphonError("parts do not cover I")
        return cls(b, labels)

    @classmethod
    def from_mask(cls, breaks, mask) -> "Partition":
        """Ordered pair (B, I minus B) for a boolean cell mask; empty pieces dropped."""
        mask = np.asarray(mask, dtype=bool)
        if mask.all() or not mask.any():
            return cls(breaks, np.zeros(mask.size, dtype=int))
        return cls(breaks, np.where(mask, 0, 1))

    @property
    def n_parts(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def cell_measures(self) -> np.ndarray:
        return np.diff(self.breaks)

    @property
    def parts(self) -> tuple:
        return tuple(np.flatnonzero(self.labels == p) for p in range(self.n_parts))

    def part_measures(self) -> np.ndarray:
        return np.bincount(self.labels, weights=self.cell_measures, minlength=self.n_parts)

    def indicator(self) -> np.ndarray:
        """Cell-by-part 0/1 matrix."""
        S = np.zeros((self.labels.size, self.n_parts))
        S[np.arange(self.labels.size), self.labels] = 1.0
        return S

    def refine(self, breaks) -> "Partition":
        fine = merge_breaks(breaks, self.breaks)
        return Partition(fine, self.labels[_locate(self.breaks, fine)])

    def refines(self, other: "Partition") -> bool:
        """True if every part of ``self`` lies inside one part of ``other``."""
        grid = merge_breaks(self.breaks, other.breaks)
        a, b = self.refine(grid).labels, other.refine(grid).labels
        for p in range(self.n_parts):
            if np.unique(b[a == p]).size != 1:
                return False
        return True

    def sets(self) -> list:
        """Each part as a list of maximal intervals."""
        out = []
        for cells in self.parts:
            ivs = []
            for c in cells:
                lo, hi = self.breaks[c], self.breaks[c + 1]
                if ivs and abs(ivs[-1][1] - lo) <= BREAK_TOL:
                    ivs[-1] = (ivs[-1][0], hi)
                else:
                    ivs.append((lo, hi))
            out.append(ivs)
        return out

    def __repr__(self):
        return f"Partition(cells={self.labels.size}, parts={self.n_parts})"


OrderedPartition = Partition


def common_refinement(P: Partition, Q: Partition) -> Partition:
    """Coarsest partition refining both; parts ordered by (P-part, Q-part)."""
    grid = merge_breaks(P.breaks, Q.breaks)
    a, b = P.refine(grid).labels, Q.refine(grid).labels
    pairs = a * Q.n_parts + b
    _, labels = np.unique(pairs, return_inverse=True)
    return Partition(grid, labels)


def _aligned(W, P: Partition):
    grid = merge_breaks(W.breaks, P.breaks)
    return W.refine(grid), P.refine(grid)


def quotient(W, P: Partition):
    """Block-average matrix over the parts of P, as a step function on the parts.

    The result has one step per part (in label order), with measure equal to
    the part's measure.
    """
    Wr, Pr = _aligned(W, P)
    S = Pr.indicator()
    mass = Wr.measures @ S
    if np.any(mass <= 0):
        raise GraphonError("partition has a part of zero measure")
    block = S.T @ (Wr.weights() * Wr.values) @ S / np.outer(mass, mass)
    block = 0.5 * (block + block.T)
    return type(W)(mass, block)


def stepping(W, P: Partition):
    """Average W over every block P_i x P_j; returned on the refined grid of W."""
    Wr, Pr = _aligned(W, P)
    if Pr.n_parts == Pr.labels.size:
        return Wr
    q = quotient(Wr, Pr)
    return type(W)(Wr.measures, q.values[np.ix_(Pr.labels, Pr.labels)])


# ---------------------------------------------------------------------------
# rearrangements


@dataclass(frozen=True, eq=False)
class RearrangementMap:
    """Piecewise translation sending part 0 of an ordered partition to the left.

    Within each part the order of the cells is kept; part ``i`` lands in
    ``[offsets[i], offsets[i] + measure(part i)]``.
    """

    source: Partition
    order: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_partition(cls, J: Partition) -> "RearrangementMap":
        order = np.concatenate(J.parts)
        offsets = np.concatenate([[0.0], np.cumsum(J.part_measures())])
        return cls(J, order, offsets)

    @property
    def image_breaks(self) -> np.ndarray:
        return breaks_from_measures(self.source.cell_measures[self.order])

    def __call__(self, x):
        """Evaluate the map at points of I."""
        x = np.asarray(x, dtype=float)
        b = self.source.breaks
        cell = np.clip(np.searchsorted(b, x, side="right") - 1, 0, b.size - 2)
        pos = np.empty(self.order.size, dtype=int)
        pos[self.order] = np.arange(self.order.size)
        return self.image_breaks[pos[cell]] + (x - b[cell])

    def apply(self, W):
        """The version of W obtained by composing with the inverse map."""
        grid = merge_breaks(W.breaks, self.source.breaks)
        if grid.size != self.source.breaks.size:
            return RearrangementMap.from_partition(self.source.refine(grid)).apply(W)
        Wr = W.refine(grid)
        return Wr._relabel(Wr.measures[self.order], self.order)

    def inverse(self) -> "RearrangementMap":
        """Map undoing this one, as an ordered partition of the image grid."""
        return RearrangementMap.from_partition(Partition(self.image_breaks, self.order))

    def check(self, tol: float = MEASURE_TOL) -> bool:
        """Images are consecutive blocks whose lengths match the part measures."""
        cum = breaks_from_measures(self.source.cell_measures[self.order])
        ends = np.cumsum([0] + [p.size for p in self.source.parts])
        return bool(np.allclose(cum[ends], self.offsets, atol=tol, rtol=0))


def apply_ordered_partition(W, J: Partition):
    """The version of W in which the parts of J are laid out left to right."""
    return RearrangementMap.from_partition(J).apply(W)


def permute_cells(W, perm):
    """Version of W listing its cells in the order ``perm``."""
    perm = np.asarray(perm, dtype=int)
    return W._relabel(W.measures[perm], perm)


def rearrange(W, pieces):
    """Assemble a version of W from ``(start, length, source_cell)`` pieces tiling I."""
    pieces = sorted(p for p in pieces if p[1] > BREAK_TOL)
    lengths = np.array([p[1] for p in pieces])
    src = np.array([p[2] for p in pieces], dtype=int)
    starts = np.array([p[0] for p in pieces])
    if abs(lengths.sum() - 1.0) > 1e-9 or np.any(np.abs(starts - breaks_from_measures(lengths)[:-1]) > 1e-9):
        raise GraphonError("pieces do not tile I")
    return W._relabel(lengths, src)


# ---------------------------------------------------------------------------
# distances and approximation


def l1_distance(W1, W2) -> float:
    grid = merge_breaks(W1.breaks, W2.breaks)
    a, b = W1.refine(grid), W2.refine(grid)
    return float(a.measures @ np.abs(a.values - b.values) @ a.measures)


def adaptive_stepping(W, J: Partition, f, eps: float, max_halvings: int = 30):
    """Interval refinement I of J with |INT_f(W) - INT_f(W stepped on I)| < eps.

    Each interval of J is cut into 2**m equal pieces for m = 0, 1, ...; as
    soon as that mesh would have at least as many cells as the common
    refinement of J with W's own grid, the latter is returned instead, where
    the stepping reproduces W exactly.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = get_functional(f)
    target = int_f(W, f)
    native = Partition.intervals(merge_breaks(J.breaks, W.breaks))
    jb = J.breaks
    # intervals of J are its maximal runs of equal label
    cuts = [jb[0]] + [jb[c] for c in range(1, J.labels.size) if J.labels[c] != J.labels[c - 1]] + [1.0]
    cuts = np.asarray(cuts)
    for m in range(max_halvings + 1):
        pieces = 2**m
        mesh = np.concatenate(
            [np.linspace(cuts[i], cuts[i + 1], pieces + 1)[:-1] for i in range(cuts.size - 1)] + [[1.0]]
        )
        if mesh.size >= native.breaks.size:
            break
        P = Partition.intervals(mesh)
        Ws = stepping(W, P)
        if abs(int_f(Ws, f) - target) < eps:
            return P, Ws
    Ws = stepping(W, native)
    return native, Ws
