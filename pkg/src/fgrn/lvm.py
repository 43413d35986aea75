"""Latent variable model builders and the four query tasks.

The family covered:

- one-to-many (H = 1): one hidden source wired straight onto the diverter;
- many-to-many (H > 1): each source reaches the diverter through its fixed
  selector map, and every conditional block has |P| rows, the product of the
  hidden cardinalities;
- supervised variants add a class variable as one more bottom branch;
- naive Bayes pins the class block to a frozen identity matrix, which makes
  the class variable coincide with the hidden one.

Tasks are read-only on a trained model: classification reads the class
forward message, completion reads the forwards of the unknown variables,
prototype and centroid inspection clamp a delta on the class backward or on
a source forward and read the induced bottom forwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .counters import OpCounters
from .elements import Diverter, SisoBlock, Source
from .errors import IndexOutOfRange, InvalidSpec
from .model import Model
from .prob import (
    build_selector_maps,
    delta_message,
    hadamard,
    normalize,
    random_row_stochastic,
    uniform_message,
)
from .scheduler import Propagation, infer_pass


@dataclass
class LvmSpec:
    hidden_dims: list[int]
    observed_dims: list[int]
    class_dim: int | None = None
    naive_bayes: bool = False
    seed: int = 0
    hidden_names: list[str] = field(default_factory=list)
    observed_names: list[str] = field(default_factory=list)
    class_name: str = "L"
    alphabets: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.hidden_dims) < 1:
            raise InvalidSpec("at least one hidden variable is required")
        if len(self.observed_dims) < 1:
            raise InvalidSpec("at least one observed variable is required")
        if any(d < 2 for d in self.hidden_dims) or any(d < 2 for d in self.observed_dims):
            raise InvalidSpec("every alphabet must have at least 2 symbols")
        if self.class_dim is not None and self.class_dim < 2:
            raise InvalidSpec("the class alphabet must have at least 2 symbols")
        product = int(np.prod(self.hidden_dims))
        if self.naive_bayes:
            if self.class_dim is None:
                raise InvalidSpec("naive Bayes requires a class variable")
            if self.class_dim != product:
                raise InvalidSpec(
                    f"naive Bayes forces |L| = |P|: class has {self.class_dim}, product space {product}"
                )
        if not self.hidden_names:
            self.hidden_names = [f"S{i + 1}" for i in range(len(self.hidden_dims))]
        if not self.observed_names:
            self.observed_names = [f"Y{j + 1}" for j in range(len(self.observed_dims))]
        if len(self.hidden_names) != len(self.hidden_dims):
            raise InvalidSpec("hidden_names must match hidden_dims")
        if len(self.observed_names) != len(self.observed_dims):
            raise InvalidSpec("observed_names must match observed_dims")
        taken = self.hidden_names + self.observed_names
        if self.class_dim is not None:
            taken.append(self.class_name)
        if len(set(taken)) != len(taken):
            raise InvalidSpec("variable names must be unique")


def build(spec: LvmSpec) -> Model:
    """Wire the graph: sources, selector maps when H > 1, one block per bottom variable."""
    rng = np.random.default_rng(spec.seed)
    h = len(spec.hidden_dims)
    product = int(np.prod(spec.hidden_dims))

    sources = [
        Source(name, uniform_message(dim))
        for name, dim in zip(spec.hidden_names, spec.hidden_dims)
    ]
    selector_maps = build_selector_maps(spec.hidden_dims) if h > 1 else []

    blocks = [
        SisoBlock(name, random_row_stochastic(product, dim, rng))
        for name, dim in zip(spec.observed_names, spec.observed_dims)
    ]
    if spec.class_dim is not None:
        if spec.naive_bayes:
            blocks.append(SisoBlock(spec.class_name, np.eye(product), frozen=True))
        else:
            blocks.append(SisoBlock(
                spec.class_name, random_row_stochastic(product, spec.class_dim, rng)))

    alphabets = dict(spec.alphabets)
    for name, dim in zip(spec.hidden_names, spec.hidden_dims):
        alphabets.setdefault(name, [str(v) for v in range(dim)])
    for name, dim in zip(spec.observed_names, spec.observed_dims):
        alphabets.setdefault(name, [str(v) for v in range(dim)])
    if spec.class_dim is not None:
        alphabets.setdefault(spec.class_name, [str(v) for v in range(spec.class_dim)])
    for name in list(alphabets):
        expected = dict(zip(spec.hidden_names + spec.observed_names, spec.hidden_dims + spec.observed_dims))
        if spec.class_dim is not None:
            expected[spec.class_name] = spec.class_dim
        if name not in expected:
            raise InvalidSpec(f"alphabet given for unknown variable {name!r}")
        if len(alphabets[name]) != expected[name]:
            raise InvalidSpec(f"alphabet for {name!r} has the wrong size")

    model = Model(
        hidden_dims=list(spec.hidden_dims),
        sources=sources,
        selector_maps=selector_maps,
        diverter=Diverter(arity=h + len(blocks), size=product),
        blocks=blocks,
        class_name=spec.class_name if spec.class_dim is not None else None,
        naive_bayes=spec.naive_bayes,
        seed=spec.seed,
        hidden_names=list(spec.hidden_names),
        observed_names=list(spec.observed_names),
        alphabets=alphabets,
    )
    model.validate()
    return model


@dataclass
class Classification:
    distribution: np.ndarray
    index: int
    label: str


def classify(model: Model, evidence, *, counters: OpCounters | None = None,
             workers: int = 1) -> Classification:
    """Return the class forward message and its argmax (ties: lowest index)."""
    _require_class(model)
    evidence = dict(evidence or {})
    if model.class_name in evidence:
        raise InvalidSpec("classification evidence must not include the class variable")
    snap = infer_pass(model, evidence, counters=counters, workers=workers)
    dist = snap.forward(model.class_name)
    index = int(np.argmax(dist))
    return Classification(distribution=dist, index=index,
                          label=model.alphabets[model.class_name][index])


@dataclass
class Completion:
    forwards: dict[str, np.ndarray]  # one entry per unknown variable
    class_posterior: np.ndarray | None
    snapshot: Propagation


def complete(model: Model, evidence, class_backward=None, *,
             counters: OpCounters | None = None, workers: int = 1) -> Completion:
    """Fill in unknown variables; optionally condition on a soft class belief.

    The class posterior is the product of the two class messages; when no
    class belief was injected the backward is uniform and the forward alone
    already is the posterior, so the product is skipped.
    """
    evidence = dict(evidence or {})
    if class_backward is not None:
        _require_class(model)
        if model.class_name in evidence:
            raise InvalidSpec("pass the class belief via class_backward, not as evidence")
        evidence[model.class_name] = class_backward
    unknown = [n for n in model.bottom_names if n not in evidence or evidence[n] is None]
    if not unknown:
        raise InvalidSpec("pattern completion needs at least one unknown variable")
    snap = infer_pass(model, evidence, counters=counters, workers=workers)
    forwards = {name: snap.forward(name) for name in unknown}
    posterior = None
    if model.class_name is not None:
        f_l = snap.forward(model.class_name)
        if class_backward is None:
            posterior = f_l
        else:
            posterior = normalize(hadamard(f_l, snap.backward(model.class_name), counters), counters)
    return Completion(forwards=forwards, class_posterior=posterior, snapshot=snap)


def prototype(model: Model, class_index: int, *,
              counters: OpCounters | None = None, workers: int = 1) -> dict[str, np.ndarray]:
    """Bottom forwards induced by clamping a delta on the class backward."""
    _require_class(model)
    size = model.variable_size(model.class_name)
    if not 0 <= class_index < size:
        raise IndexOutOfRange(f"class index {class_index} not in [0, {size})")
    evidence = {model.class_name: delta_message(size, class_index)}
    snap = infer_pass(model, evidence, counters=counters, workers=workers)
    return {name: snap.forward(name) for name in model.observed_names}


def centroid(model: Model, cluster_index: int, *,
             counters: OpCounters | None = None, workers: int = 1) -> dict[str, np.ndarray]:
    """Bottom forwards induced by clamping a delta on the hidden source forward."""
    if len(model.sources) != 1:
        raise InvalidSpec("cluster centroids are defined for a single hidden variable")
    size = model.hidden_dims[0]
    if not 0 <= cluster_index < size:
        raise IndexOutOfRange(f"cluster index {cluster_index} not in [0, {size})")
    overrides = {model.hidden_names[0]: delta_message(size, cluster_index)}
    snap = infer_pass(model, {}, counters=counters, workers=workers,
                      forward_overrides=overrides)
    return {name: snap.forward(name) for name in model.observed_names}


def _require_class(model: Model) -> None:
    if model.class_name is None:
        raise InvalidSpec("this model has no class variable")
