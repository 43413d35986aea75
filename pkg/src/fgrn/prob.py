"""Numeric primitives for discrete belief propagation.

A *message* is a 1-D float64 array of nonnegative beliefs over a variable's
alphabet (length >= 2). Messages are treated as immutable: no function in
this package mutates a message in place, so returning an input unchanged is
always safe.

``normalize`` is a projection: any vector whose entries already sum to 1
within ``SUM_SLACK`` is returned unchanged (same object), and a single
division always lands inside that slack. Two consequences the rest of the
package relies on:

- normalize(normalize(m)) is bitwise equal to normalize(m);
- multiplying a row-stochastic matrix by a delta message returns the
  selected row bitwise, because the row already passes the slack test.

The slack (1e-13) is far above the worst-case error of one divide-and-sum
pass (~1e-15 for alphabets up to a million states, measured) and far below
every tolerance asserted elsewhere (1e-10 .. 1e-12).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counters import OpCounters
from .errors import AllZeroMessage, EmptyDims, InvalidSpec, LengthMismatch, ShapeMismatch

SUM_SLACK = 1e-13


def as_message(values, name: str = "message") -> np.ndarray:
    """Validate and convert to a float64 belief vector (copies the input)."""
    m = np.array(values, dtype=np.float64)
    if m.ndim != 1 or m.shape[0] < 2:
        raise LengthMismatch(f"{name} must be a 1-D vector of length >= 2, got shape {m.shape}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise InvalidSpec(f"{name} must contain finite nonnegative entries")
    return m


def uniform_message(size: int) -> np.ndarray:
    return np.full(size, 1.0 / size)


def delta_message(size: int, index: int) -> np.ndarray:
    m = np.zeros(size)
    m[index] = 1.0
    return m


def normalize(m: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
    """Scale a nonnegative vector to unit mass.

    Returns the input object untouched when it already sums to 1 within
    ``SUM_SLACK``; otherwise performs one division (counted as ``len(m)``
    normalization divisions). Raises ``AllZeroMessage`` when no mass is left.
    """
    s = float(m.sum())
    if abs(s - 1.0) <= SUM_SLACK:
        return m
    if not s > 0.0:
        raise AllZeroMessage("message has no probability mass")
    if counters is not None:
        counters.add_normalization(m.shape[0])
    return m / s


def hadamard(a: np.ndarray, b: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
    """Elementwise product of two messages, unnormalized."""
    if a.shape != b.shape:
        raise LengthMismatch(f"hadamard of lengths {a.shape[0]} and {b.shape[0]}")
    if counters is not None:
        counters.add_vector_product(a.shape[0])
    return a * b


def matvec_backward(matrix: np.ndarray, b: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
    """Propagate a backward message against a row-stochastic matrix.

    out_i = sum_j theta_ij * b_j, normalized. Counts rows*cols scalar
    multiplications.
    """
    if matrix.shape[1] != b.shape[0]:
        raise LengthMismatch(f"matrix has {matrix.shape[1]} columns, backward message has length {b.shape[0]}")
    if counters is not None:
        counters.add_scalar_products(matrix.shape[0] * matrix.shape[1])
    return normalize(matrix @ b, counters)


def matvec_forward(matrix: np.ndarray, f: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
    """Propagate a forward message through a row-stochastic matrix.

    out_j = sum_i theta_ij * f_i, normalized. Counts rows*cols scalar
    multiplications.
    """
    if matrix.shape[0] != f.shape[0]:
        raise LengthMismatch(f"matrix has {matrix.shape[0]} rows, forward message has length {f.shape[0]}")
    if counters is not None:
        counters.add_scalar_products(matrix.shape[0] * matrix.shape[1])
    return normalize(matrix.T @ f, counters)


def random_row_stochastic(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Rows drawn independently from a flat Dirichlet (uniform on the simplex)."""
    return rng.dirichlet(np.ones(cols), size=rows)


def validate_row_stochastic(matrix: np.ndarray, tol: float = 1e-10) -> None:
    if matrix.ndim != 2:
        raise ShapeMismatch("expected a 2-D conditional probability matrix")
    if np.any(matrix < -tol) or np.any(matrix > 1 + tol):
        raise InvalidSpec("matrix entries must lie in [0, 1]")
    if np.max(np.abs(matrix.sum(axis=1) - 1.0)) > tol:
        raise InvalidSpec("matrix rows must each sum to 1")


@dataclass(frozen=True)
class SelectorMap:
    """Sparse encoding of one fixed product-space mapping matrix.

    The dense matrix has one row per value of hidden component ``i`` and one
    column per product-space cell; it is uniform over the cells whose i-th
    mixed-radix digit equals the row index. Stored compactly as, for every
    product cell ``p``, the index of that digit: ``entries[p] = digit_i(p)``.
    Component 0 is the most significant digit.
    """

    component_index: int
    in_size: int
    entries: np.ndarray  # shape (|P|,), values in [0, in_size)

    @property
    def product_size(self) -> int:
        return self.entries.shape[0]


def build_selector_maps(dims: list[int]) -> list[SelectorMap]:
    """One map per hidden component for the given component cardinalities."""
    if len(dims) == 0:
        raise EmptyDims("at least one hidden component is required")
    if any(d < 2 for d in dims):
        raise InvalidSpec(f"every component cardinality must be >= 2, got {dims}")
    digits = np.indices(dims).reshape(len(dims), -1)
    return [
        SelectorMap(component_index=i, in_size=dims[i], entries=digits[i].copy())
        for i in range(len(dims))
    ]


def selector_forward(smap: SelectorMap, f_s: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
    """Expand a hidden-component forward message onto the product space.

    A pure gather followed by normalization: zero multiplications, which is
    what makes the selector encoding worthwhile over the dense matrix.
    """
    if f_s.shape[0] != smap.in_size:
        raise LengthMismatch(f"selector expects length {smap.in_size}, got {f_s.shape[0]}")
    return normalize(f_s[smap.entries], counters)


def selector_backward(smap: SelectorMap, b_p: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
    """Reduce a product-space backward message onto one hidden component.

    Groups cells by their digit and sums; zero multiplications.
    """
    if b_p.shape[0] != smap.entries.shape[0]:
        raise LengthMismatch(
            f"selector expects product-space length {smap.entries.shape[0]}, got {b_p.shape[0]}"
        )
    summed = np.bincount(smap.entries, weights=b_p, minlength=smap.in_size)
    return normalize(summed, counters)
