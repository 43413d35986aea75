"""The four graph building blocks: links, sources, diverters, conditional blocks.

Two operations here come in a direct and an optimized flavour, with identical
outputs and very different multiplication counts:

- the diverter's product-of-all-but-self, done naively in M(M-2) vector
  multiplications or by a prefix/suffix double cascade in 3(M-2), using
  M-1 reusable buffers (the suffix chain overwrites prefix slots as they
  are released);

- the multiplicative likelihood update for conditional matrices, done
  literally in N(3|Y|+1)|V| scalar multiplications or, by fusing the
  per-sample outer product with the matrix and reading the denominator off
  the same array, in 2N|V||Y|.

Rows of a conditional matrix whose update accumulator is all zero (a hidden
state no sample used) keep their previous values; samples whose likelihood
under the current matrix is exactly zero are skipped. Both rules keep the
matrices row-stochastic without inventing mass.
"""

from __future__ import annotations

import numpy as np

from .counters import OpCounters
from .errors import (
    InvalidSpec,
    LengthMismatch,
    NotInBatchMode,
    NoValidSamples,
    Paused,
)
from .prob import (
    hadamard,
    matvec_backward,
    matvec_forward,
    normalize,
    uniform_message,
    validate_row_stochastic,
)


class Link:
    """A single discrete variable: one forward and one backward message.

    Exactly one vector per direction at any time; both start uniform.
    """

    __slots__ = ("name", "size", "forward", "backward")

    def __init__(self, name: str, size: int,
                 forward: np.ndarray | None = None,
                 backward: np.ndarray | None = None):
        if size < 2:
            raise InvalidSpec(f"link {name!r} needs an alphabet of size >= 2, got {size}")
        self.name = name
        self.size = size
        self.forward = uniform_message(size) if forward is None else forward
        self.backward = uniform_message(size) if backward is None else backward

    def marginal(self, counters: OpCounters | None = None) -> np.ndarray:
        """Posterior belief on the variable: normalized product of both messages."""
        return normalize(hadamard(self.forward, self.backward, counters), counters)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Link({self.name!r}, size={self.size})"


class Source:
    """A root variable with a prior; its outgoing forward message is the prior.

    During learning the source sums the normalized backward messages it
    receives (one per sample) into an accumulator, and at the end of each
    epoch folds the accumulated evidence into the prior. A frozen source
    never changes its prior.
    """

    __slots__ = ("name", "prior", "accumulator", "frozen", "learning")

    def __init__(self, name: str, prior: np.ndarray, frozen: bool = False):
        prior = np.asarray(prior, dtype=np.float64)
        self.name = name
        self.prior = normalize(prior)
        self.accumulator = np.zeros(prior.shape[0])
        self.frozen = frozen
        self.learning = False

    @property
    def size(self) -> int:
        return self.prior.shape[0]

    def start_learning(self) -> None:
        self.learning = True
        self.accumulator = np.zeros(self.size)

    def stop_learning(self) -> None:
        self.learning = False
        self.accumulator = np.zeros(self.size)

    def accumulate(self, backward: np.ndarray) -> None:
        if not self.learning:
            raise NotInBatchMode(f"source {self.name!r} is not accumulating")
        self.accumulator = self.accumulator + backward

    def update_prior(self, counters: OpCounters | None = None,
                     force_frozen: bool = False) -> np.ndarray:
        """Fold the accumulated backward mass into the prior and clear it."""
        if self.frozen or force_frozen:
            self.accumulator = np.zeros(self.size)
            return self.prior
        self.prior = normalize(hadamard(self.prior, self.accumulator, counters), counters)
        self.accumulator = np.zeros(self.size)
        return self.prior


def diverter_propagate_naive(incoming: list[np.ndarray],
                             counters: OpCounters | None = None) -> list[np.ndarray]:
    """Product-of-all-but-self by direct evaluation: M(M-2) vector products."""
    m = len(incoming)
    _check_diverter_inputs(incoming)
    outgoing = []
    for i in range(m):
        others = [incoming[j] for j in range(m) if j != i]
        acc = others[0]
        for vec in others[1:]:
            acc = hadamard(acc, vec, counters)
        outgoing.append(normalize(acc, counters))
    return outgoing


def diverter_propagate_chain(incoming: list[np.ndarray],
                             counters: OpCounters | None = None,
                             buffers: list[np.ndarray] | None = None) -> list[np.ndarray]:
    """Product-of-all-but-self by a prefix/suffix double cascade.

    3(M-2) vector products and M-1 buffers: prefix products fill the buffer
    slots on the way up; the suffix chain reuses each slot as soon as the
    prefix it held has been consumed on the way down.
    """
    m = len(incoming)
    _check_diverter_inputs(incoming)
    d = incoming[0].shape[0]
    if buffers is None or len(buffers) != m - 1 or buffers[0].shape[0] != d:
        buffers = [np.empty(d) for _ in range(m - 1)]

    np.copyto(buffers[0], incoming[0])
    for i in range(1, m - 1):
        if counters is not None:
            counters.add_vector_product(d)
        np.multiply(buffers[i - 1], incoming[i], out=buffers[i])

    outgoing: list[np.ndarray | None] = [None] * m
    outgoing[m - 1] = _normalize_unaliased(buffers[m - 2], counters)

    suffix = incoming[m - 1]
    for i in range(m - 2, 0, -1):
        outgoing[i] = normalize(hadamard(buffers[i - 1], suffix, counters), counters)
        if counters is not None:
            counters.add_vector_product(d)
        np.multiply(suffix, incoming[i], out=buffers[i])  # slot i is free now
        suffix = buffers[i]
    outgoing[0] = _normalize_unaliased(suffix, counters)
    return outgoing  # type: ignore[return-value]


def _check_diverter_inputs(incoming: list[np.ndarray]) -> None:
    if len(incoming) < 2:
        raise InvalidSpec("a diverter connects at least 2 variables")
    d = incoming[0].shape[0]
    for vec in incoming[1:]:
        if vec.shape[0] != d:
            raise LengthMismatch("all variables on a diverter share one alphabet size")


def _normalize_unaliased(vec: np.ndarray, counters: OpCounters | None) -> np.ndarray:
    """Normalize a buffer-backed vector; copy if normalize returned the buffer."""
    out = normalize(vec, counters)
    return out.copy() if out is vec else out


class Diverter:
    """Equality constraint over M replicas of one variable.

    Acts as a barrier: `propagate` must only be called once every attached
    variable has refreshed its inbound message for the current step. Keeps
    M-1 reusable buffers for the cascade implementation.
    """

    def __init__(self, arity: int, size: int):
        if arity < 2:
            raise InvalidSpec(f"diverter arity must be >= 2, got {arity}")
        self.arity = arity
        self.size = size
        self.buffers = [np.empty(size) for _ in range(arity - 1)]

    def propagate(self, incoming: list[np.ndarray],
                  counters: OpCounters | None = None,
                  impl: str = "chain") -> list[np.ndarray]:
        if len(incoming) != self.arity:
            raise LengthMismatch(f"diverter has arity {self.arity}, got {len(incoming)} messages")
        if impl == "chain":
            return diverter_propagate_chain(incoming, counters, self.buffers)
        if impl == "naive":
            return diverter_propagate_naive(incoming, counters)
        raise InvalidSpec(f"unknown diverter implementation {impl!r}")


class SisoBlock:
    """A conditional probability matrix between an input and an output variable.

    theta is |V| x |Y| row-stochastic. In batch mode the block stores every
    (incoming forward, incoming backward) pair it sees, so the learning step
    can replay them; a frozen block (e.g. the diagonal class block of a
    naive Bayes model) never changes. Pause mode refuses downward emission,
    which is the hook multi-layer schedules need.
    """

    def __init__(self, name: str, theta: np.ndarray, frozen: bool = False):
        theta = np.asarray(theta, dtype=np.float64)
        validate_row_stochastic(theta)
        self.name = name
        self.theta = theta
        self.frozen = frozen
        self.pause = False
        self.batch_mode = False
        self.stored_pairs: list[tuple[np.ndarray, np.ndarray]] = []

    @property
    def rows(self) -> int:
        return self.theta.shape[0]

    @property
    def cols(self) -> int:
        return self.theta.shape[1]

    def forward(self, f_v: np.ndarray, counters: OpCounters | None = None) -> np.ndarray:
        """Emit downward: theta^T applied to the incoming forward message."""
        if self.pause:
            raise Paused(f"block {self.name!r} is paused; hold the forward message")
        return matvec_forward(self.theta, f_v, counters)

    def backward(self, b_y: np.ndarray, known: bool = True,
                 counters: OpCounters | None = None) -> np.ndarray:
        """Emit upward: theta applied to the incoming backward message.

        For an unknown variable (uniform backward by construction) the
        product is uniform regardless of theta, so it is emitted directly
        with zero multiplications.
        """
        if not known:
            return uniform_message(self.rows)
        return matvec_backward(self.theta, b_y, counters)

    def store(self, f_v: np.ndarray, b_y: np.ndarray,
              counters: OpCounters | None = None) -> None:
        if not self.batch_mode:
            raise NotInBatchMode(f"block {self.name!r} is not in batch mode")
        self.stored_pairs.append((f_v, b_y))
        if counters is not None:
            counters.observe_stored_pairs(len(self.stored_pairs))

    def clear_store(self) -> None:
        self.stored_pairs = []

    def set_batch_mode(self, on: bool) -> None:
        self.batch_mode = on
        if not on:
            self.stored_pairs = []


def _ml_accumulate_fast(theta0: np.ndarray,
                        pairs: list[tuple[np.ndarray, np.ndarray]],
                        counters: OpCounters | None):
    """Shared core of the fast update: accumulator, log-likelihood, valid count.

    Per sample builds G = theta0 (.) f b^T (2|V||Y| multiplications); the
    sample's likelihood is the plain sum of G's entries, read off during
    generation instead of through a separate bilinear form.
    """
    n = len(pairs)
    rows, cols = theta0.shape
    f_all = np.stack([p[0] for p in pairs])
    b_all = np.stack([p[1] for p in pairs])
    if f_all.shape[1] != rows or b_all.shape[1] != cols:
        raise LengthMismatch("stored pair lengths do not match the matrix")
    if counters is not None:
        counters.add_scalar_products(2 * n * rows * cols)
    g = theta0[None, :, :] * (f_all[:, :, None] * b_all[:, None, :])
    denoms = g.sum(axis=(1, 2))
    valid = denoms > 0.0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NoValidSamples("every sample had zero likelihood under the current matrix")
    acc = (g[valid] / denoms[valid, None, None]).sum(axis=0)
    log_likelihood = float(np.log(denoms[valid]).sum())
    return acc, log_likelihood, n_valid


def _finish_update(theta0: np.ndarray, acc: np.ndarray,
                   counters: OpCounters | None) -> np.ndarray:
    """Renormalize accumulator rows; rows with no mass keep their old values."""
    theta1 = np.empty_like(theta0)
    for l in range(theta0.shape[0]):
        row_mass = acc[l].sum()
        if row_mass > 0.0:
            theta1[l] = normalize(acc[l], counters)
        else:
            theta1[l] = theta0[l]
    return theta1


def ml_update_fast_stats(theta0: np.ndarray,
                         pairs: list[tuple[np.ndarray, np.ndarray]],
                         counters: OpCounters | None = None
                         ) -> tuple[np.ndarray, float, int]:
    """Fast update returning (new theta, log-likelihood of theta0, valid pairs)."""
    if len(pairs) == 0:
        raise NoValidSamples("no stored pairs to learn from")
    acc, log_likelihood, n_valid = _ml_accumulate_fast(theta0, pairs, counters)
    return _finish_update(theta0, acc, counters), log_likelihood, n_valid


def ml_update_fast(theta0: np.ndarray,
                   pairs: list[tuple[np.ndarray, np.ndarray]],
                   counters: OpCounters | None = None) -> np.ndarray:
    """One multiplicative likelihood update, optimized form.

    Numerically identical to ``ml_update_direct`` (the per-row divisor of the
    literal recursion cancels in the row renormalization) at 2N|V||Y| scalar
    multiplications per call.
    """
    theta1, _, _ = ml_update_fast_stats(theta0, pairs, counters)
    return theta1


def ml_update_direct(theta0: np.ndarray,
                     pairs: list[tuple[np.ndarray, np.ndarray]],
                     counters: OpCounters | None = None) -> np.ndarray:
    """One multiplicative likelihood update, literal form.

    Per sample: matrix-backward product, bilinear denominator, outer product,
    elementwise product with theta - N(3|Y|+1)|V| scalar multiplications -
    then the per-row division by the summed forward mass and a row
    renormalization. Rows never visited keep their old values.
    """
    if len(pairs) == 0:
        raise NoValidSamples("no stored pairs to learn from")
    rows, cols = theta0.shape
    weight = np.zeros((rows, cols))
    f_mass = np.zeros(rows)
    n_valid = 0
    for f_v, b_y in pairs:
        if f_v.shape[0] != rows or b_y.shape[0] != cols:
            raise LengthMismatch("stored pair lengths do not match the matrix")
        if counters is not None:
            counters.add_scalar_products(rows * cols)  # theta @ b
        tb = theta0 @ b_y
        if counters is not None:
            counters.add_scalar_products(rows)  # f . (theta b)
        denom = float(f_v @ tb)
        if counters is not None:
            counters.add_scalar_products(2 * rows * cols)  # outer product, then (.) theta
        contrib = theta0 * np.outer(f_v, b_y)
        if denom <= 0.0:
            continue
        weight += contrib / denom
        f_mass += f_v
        n_valid += 1
    if n_valid == 0:
        raise NoValidSamples("every sample had zero likelihood under the current matrix")
    acc = np.zeros_like(theta0)
    used = f_mass > 0.0
    acc[used] = weight[used] / f_mass[used, None]
    return _finish_update(theta0, acc, counters)


def pairs_log_likelihood(theta: np.ndarray,
                         pairs: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Sum of log(f^T theta b) over pairs with positive likelihood."""
    if len(pairs) == 0:
        return 0.0
    f_all = np.stack([p[0] for p in pairs])
    b_all = np.stack([p[1] for p in pairs])
    denoms = np.einsum("nl,lm,nm->n", f_all, theta, b_all)
    positive = denoms > 0.0
    return float(np.log(denoms[positive]).sum())
