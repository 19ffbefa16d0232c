"""Concave functions on [0, 1] used as integrands of INT_f."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

# log base for the binary entropy; H(1/2) == 1 in bits
ENTROPY_BASE = 2.0


@dataclass(frozen=True)
class ConcaveFunctional:
    """A named real function on [0, 1].

    ``strictly_concave`` is declared by the constructor, never checked.
    Strict-inequality assertions are skipped for functionals that are not
    flagged as strictly concave.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    strictly_concave: bool = True

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.func(x)
        return float(out) if out.ndim == 0 else out


def _binary_entropy(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return -(xlogy(x, x) + xlogy(1.0 - x, 1.0 - x)) / np.log(ENTROPY_BASE)


def _neg_square(x: np.ndarray) -> np.ndarray:
    return -np.square(x)


ENTROPY = ConcaveFunctional("H", _binary_entropy, strictly_concave=True)
NEG_SQUARE = ConcaveFunctional("neg_square", _neg_square, strictly_concave=True)

_BUILTINS = {
    "H": ENTROPY,
    "entropy": ENTROPY,
    "neg_square": NEG_SQUARE,
    "-x^2": NEG_SQUARE,
}


def binary_entropy(x):
    return ENTROPY(x)


def from_table(xs, ys, name: str = "table") -> ConcaveFunctional:
    """Piecewise-linear functional through the points ``(xs[i], ys[i])``.

    The result is never strictly concave, whatever the data.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("table needs two equal-length 1-d arrays with at least 2 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    if xs[0] > 0.0 or xs[-1] < 1.0:
        raise ValueError("table must cover [0, 1]")
    if not np.all(np.isfinite(ys)):
        raise ValueError("table values must be finite")
    return ConcaveFunctional(name, lambda x: np.interp(x, xs, ys), strictly_concave=False)


def constant(c: float) -> ConcaveFunctional:
    return from_table([0.0, 1.0], [c, c], name=f"const({c:g})")


def get_functional(spec) -> ConcaveFunctional:
    """Resolve a functional from a name or pass one through."""
    if isinstance(spec, ConcaveFunctional):
        return spec
    try:
        return _BUILTINS[spec]
    except KeyError:
        raise ValueError(f"unknown functional {spec!r}; known: {sorted(_BUILTINS)}") from None


def jensen_gap(f: ConcaveFunctional, values, weights) -> float:
    """f(weighted mean) minus weighted mean of f; non-negative for concave f."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    mean = float(weights @ values) / total
    return f(mean) - float(weights @ f(values)) / total
