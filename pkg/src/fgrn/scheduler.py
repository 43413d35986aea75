"""The supervisor: propagation scheduling and the two learning regimes.

A one-layer model has graph diameter 3, so one inference needs exactly three
steps: (1) load the evidence into the bottom backward messages, (2) push
every branch up to the diverter in parallel, (3) fire the diverter barrier
and push every branch down. The diverter may only fire once every branch has
delivered its inbound message for the current step; with worker threads the
join before step 3 enforces that, and because branches touch disjoint state
the results are bitwise identical for any worker count.

Batch learning replays the same upward schedule, but the downward products
coming out of the diverter are stored in the conditional blocks together
with the evidence backwards instead of being multiplied through; after each
epoch the stored pairs drive up to K multiplicative likelihood updates per
block and the sources fold in their accumulated backward mass. Incremental
learning consumes each sample's pair immediately (K = 1) and stores nothing.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .counters import OpCounters
from .elements import Link, ml_update_fast_stats, pairs_log_likelihood
from .errors import EmptyDataset, InvalidSpec, NoValidSamples, ShapeMismatch
from .model import Model, port_name
from .prob import normalize, selector_backward, selector_forward, uniform_message


@dataclass
class TrainConfig:
    epochs: int = 20
    max_ml_iters: int = 10
    ml_tolerance: float = 1e-6
    mode: str = "batch"  # "batch" | "incremental"
    seed: int = 0
    freeze_sources: bool = False
    shuffle: bool = False  # seeded reshuffle per epoch (incremental only)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("batch", "incremental"):
            raise InvalidSpec(f"unknown training mode {self.mode!r}")
        if self.epochs < 1 or self.max_ml_iters < 1:
            raise InvalidSpec("epochs and max_ml_iters must be >= 1")

    @property
    def effective_ml_iters(self) -> int:
        # incremental learning is defined by a single update cycle per sample
        return 1 if self.mode == "incremental" else self.max_ml_iters


@dataclass
class EpochRecord:
    epoch: int
    log_likelihood: float
    ml_log_likelihoods: list[float]
    max_theta_delta: float
    wall_time: float
    scalar_multiplications: int
    skipped_pairs: int


@dataclass
class TrainReport:
    mode: str
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    counters: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {
                "epoch": r.epoch,
                "log_likelihood": r.log_likelihood,
                "max_theta_delta": r.max_theta_delta,
                "wall_time": r.wall_time,
                "scalar_multiplications": r.scalar_multiplications,
                "skipped_pairs": r.skipped_pairs,
            }
            for r in self.epochs
        ]

    def render(self) -> str:
        header = f"{'epoch':>5}  {'log-likelihood':>16}  {'max |d theta|':>13}  {'scalar mults':>12}  {'skipped':>7}  {'seconds':>8}"
        lines = [header, "-" * len(header)]
        for r in self.epochs:
            lines.append(
                f"{r.epoch:>5}  {r.log_likelihood:>16.6f}  {r.max_theta_delta:>13.3e}  "
                f"{r.scalar_multiplications:>12}  {r.skipped_pairs:>7}  {r.wall_time:>8.3f}"
            )
        return "\n".join(lines)


@dataclass
class Propagation:
    """Per-variable message snapshot produced by one inference pass."""

    links: dict[str, Link]
    known: dict[str, bool]

    def forward(self, name: str) -> np.ndarray:
        return self.links[name].forward

    def backward(self, name: str) -> np.ndarray:
        return self.links[name].backward

    def marginal(self, name: str) -> np.ndarray:
        return self.links[name].marginal()


def _prepare_evidence(model: Model, evidence: Mapping[str, object] | None):
    """Normalize evidence onto the bottom variables; absent or None is unknown."""
    evidence = dict(evidence or {})
    bottom = model.bottom_names
    unknown_keys = set(evidence) - set(bottom)
    if unknown_keys:
        raise InvalidSpec(f"evidence names not in the model: {sorted(unknown_keys)}")
    backwards: list[np.ndarray] = []
    knowns: list[bool] = []
    for name in bottom:
        size = model.variable_size(name)
        vec = evidence.get(name)
        if vec is None:
            backwards.append(uniform_message(size))
            knowns.append(False)
        else:
            arr = np.array(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != size:
                raise ShapeMismatch(
                    f"evidence for {name!r} must have length {size}, got shape {arr.shape}"
                )
            backwards.append(normalize(arr))
            knowns.append(True)
    return backwards, knowns


def _source_forwards(model: Model, overrides: Mapping[str, object] | None):
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(model.hidden_names)
    if unknown:
        raise InvalidSpec(f"forward overrides name unknown sources: {sorted(unknown)}")
    forwards = []
    for i, name in enumerate(model.hidden_names):
        if name in overrides:
            arr = np.array(overrides[name], dtype=np.float64)
            if arr.shape[0] != model.hidden_dims[i]:
                raise ShapeMismatch(f"override for {name!r} has the wrong length")
            forwards.append(normalize(arr))
        else:
            forwards.append(model.sources[i].prior)
    return forwards


def _run_tasks(tasks, workers: int, executor: ThreadPoolExecutor | None):
    if workers <= 1 or len(tasks) <= 1 or executor is None:
        return [task() for task in tasks]
    return list(executor.map(lambda task: task(), tasks))


def _scratch_counters(counters: OpCounters | None, n: int, parallel: bool):
    if counters is None:
        return [None] * n
    if not parallel:
        return [counters] * n
    return [OpCounters() for _ in range(n)]


def _merge_scratch(counters: OpCounters | None, scratch, parallel: bool) -> None:
    if counters is None or not parallel:
        return
    for s in scratch:
        counters.merge_from(s)


def _pass_up(model: Model, backwards, knowns, src_forwards,
             counters: OpCounters | None, workers: int,
             unknown_shortcut: bool, executor=None):
    """Steps 1-2: every branch propagates to the diverter. Returns port messages."""
    h = len(model.sources)
    parallel = workers > 1 and executor is not None
    scratch = _scratch_counters(counters, h + len(model.blocks), parallel)

    def source_task(i):
        def run():
            if model.selector_maps:
                return selector_forward(model.selector_maps[i], src_forwards[i], scratch[i])
            return src_forwards[i]
        return run

    def block_task(j):
        def run():
            known = knowns[j] or not unknown_shortcut
            return model.blocks[j].backward(backwards[j], known, scratch[h + j])
        return run

    tasks = [source_task(i) for i in range(h)] + [block_task(j) for j in range(len(model.blocks))]
    results = _run_tasks(tasks, workers, executor)
    _merge_scratch(counters, scratch, parallel)
    return results[:h], results[h:]


def _pass_down(model: Model, outgoing, counters: OpCounters | None,
               workers: int, executor=None):
    """Step 3 tail: diverter outputs propagate away from the barrier."""
    h = len(model.sources)
    parallel = workers > 1 and executor is not None
    scratch = _scratch_counters(counters, h + len(model.blocks), parallel)

    def source_task(i):
        def run():
            if model.selector_maps:
                return selector_backward(model.selector_maps[i], outgoing[i], scratch[i])
            return outgoing[i]
        return run

    def block_task(j):
        def run():
            block = model.blocks[j]
            if block.pause:
                return None  # held: the block refuses downward emission
            return block.forward(outgoing[h + j], scratch[h + j])
        return run

    tasks = [source_task(i) for i in range(h)] + [block_task(j) for j in range(len(model.blocks))]
    results = _run_tasks(tasks, workers, executor)
    _merge_scratch(counters, scratch, parallel)
    return results[:h], results[h:]


def infer_pass(model: Model,
               evidence: Mapping[str, object] | None = None,
               *,
               counters: OpCounters | None = None,
               workers: int = 1,
               diverter_impl: str = "chain",
               unknown_shortcut: bool = True,
               forward_overrides: Mapping[str, object] | None = None) -> Propagation:
    """One full three-step inference pass; returns a private message snapshot.

    The model itself is only read, so concurrent callers are safe as long as
    they use worker count 1 each (the diverter cascade buffers are shared;
    `Propagation` state is per-call).
    """
    backwards, knowns = _prepare_evidence(model, evidence)
    src_forwards = _source_forwards(model, forward_overrides)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        f_up, b_up = _pass_up(model, backwards, knowns, src_forwards,
                              counters, workers, unknown_shortcut, executor)
        outgoing = model.diverter.propagate(f_up + b_up, counters, diverter_impl)
        b_down, f_down = _pass_down(model, outgoing, counters, workers, executor)
    finally:
        if executor is not None:
            executor.shutdown()

    h = len(model.sources)
    links: dict[str, Link] = {}
    known_map: dict[str, bool] = {}
    for i, name in enumerate(model.hidden_names):
        links[name] = Link(name, model.hidden_dims[i],
                           forward=src_forwards[i], backward=b_down[i])
        links[port_name(name)] = Link(port_name(name), model.product_size,
                                      forward=f_up[i], backward=outgoing[i])
    for j, name in enumerate(model.bottom_names):
        size = model.variable_size(name)
        down = f_down[j] if f_down[j] is not None else uniform_message(size)
        links[name] = Link(name, size, forward=down, backward=backwards[j])
        links[port_name(name)] = Link(port_name(name), model.product_size,
                                      forward=outgoing[h + j], backward=b_up[j])
        known_map[name] = knowns[j]
    return Propagation(links=links, known=known_map)


def _prepare_samples(model: Model, dataset) -> list[tuple[list[np.ndarray], list[bool]]]:
    """Encode a dataset (or accept pre-encoded evidence dicts) once, up front."""
    if hasattr(dataset, "records") and hasattr(dataset, "schema"):
        from . import dataio

        encoded = [dataio.encode_sample(rec, dataset.schema) for rec in dataset.records]
    else:
        encoded = list(dataset)
    samples = []
    for sample in encoded:
        extra = set(sample) - set(model.bottom_names)
        if extra:
            raise InvalidSpec(f"sample variables not in the model: {sorted(extra)}")
        backwards, knowns = [], []
        for name in model.bottom_names:
            if name in sample:
                vec, known = sample[name]
                if vec.shape[0] != model.variable_size(name):
                    raise ShapeMismatch(f"sample message for {name!r} has the wrong length")
                backwards.append(vec if known else uniform_message(vec.shape[0]))
                knowns.append(bool(known))
            else:
                backwards.append(uniform_message(model.variable_size(name)))
                knowns.append(False)
        samples.append((backwards, knowns))
    return samples


def _learning_pass(model: Model, backwards, knowns, counters, workers, executor):
    """Upward schedule plus diverter; returns (port products, source backwards)."""
    src_forwards = [src.prior for src in model.sources]
    f_up, b_up = _pass_up(model, backwards, knowns, src_forwards,
                          counters, workers, unknown_shortcut=True, executor=executor)
    outgoing = model.diverter.propagate(f_up + b_up, counters, "chain")
    h = len(model.sources)
    if model.selector_maps:
        b_sources = [selector_backward(model.selector_maps[i], outgoing[i], counters)
                     for i in range(h)]
    else:
        b_sources = outgoing[:h]
    return outgoing[h:], b_sources


def train(model: Model, dataset, cfg: TrainConfig,
          counters: OpCounters | None = None) -> TrainReport:
    if cfg.mode == "batch":
        return train_batch(model, dataset, cfg, counters)
    return train_incremental(model, dataset, cfg, counters)


def train_batch(model: Model, dataset, cfg: TrainConfig,
                counters: OpCounters | None = None) -> TrainReport:
    """T epochs of store-everything learning with up to K update cycles each."""
    if cfg.mode != "batch":
        raise InvalidSpec("train_batch requires mode='batch'")
    samples = _prepare_samples(model, dataset)
    if not samples:
        raise EmptyDataset("no training records")
    counters = counters if counters is not None else OpCounters()
    report = TrainReport(mode=cfg.mode, seed=cfg.seed)
    learnable = [b for b in model.blocks if not b.frozen]

    for block in learnable:
        block.set_batch_mode(True)
    for source in model.sources:
        source.start_learning()
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        h = len(model.sources)
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            scalars0 = counters.scalar_multiplications
            for backwards, knowns in samples:
                port_products, b_sources = _learning_pass(
                    model, backwards, knowns, counters, cfg.workers, executor)
                for j, block in enumerate(model.blocks):
                    if not block.frozen:
                        block.store(port_products[j], backwards[j], counters)
                for i, source in enumerate(model.sources):
                    source.accumulate(b_sources[i])

            series_by_block: list[list[float]] = []
            max_delta = 0.0
            skipped = 0
            for block in learnable:
                pairs = block.stored_pairs
                series: list[float] = []
                theta = block.theta
                for _ in range(cfg.effective_ml_iters):
                    theta_new, llh, n_valid = ml_update_fast_stats(theta, pairs, counters)
                    series.append(llh)
                    skipped += len(pairs) - n_valid
                    delta = float(np.max(np.abs(theta_new - theta)))
                    max_delta = max(max_delta, delta)
                    theta = theta_new
                    if delta < cfg.ml_tolerance:
                        break
                series.append(pairs_log_likelihood(theta, pairs))
                block.theta = theta
                block.clear_store()
                series_by_block.append(series)
            for source in model.sources:
                source.update_prior(counters, force_frozen=cfg.freeze_sources)

            summed = _sum_padded(series_by_block)
            dt = time.perf_counter() - t0
            counters.add_wall_time(dt)
            report.epochs.append(EpochRecord(
                epoch=epoch,
                log_likelihood=summed[0] if summed else 0.0,
                ml_log_likelihoods=summed,
                max_theta_delta=max_delta,
                wall_time=dt,
                scalar_multiplications=counters.scalar_multiplications - scalars0,
                skipped_pairs=skipped,
            ))
    finally:
        if executor is not None:
            executor.shutdown()
        for block in learnable:
            block.set_batch_mode(False)
        for source in model.sources:
            source.stop_learning()
    report.counters = counters.snapshot()
    return report


def train_incremental(model: Model, dataset, cfg: TrainConfig,
                      counters: OpCounters | None = None) -> TrainReport:
    """Storage-free learning: each sample's pair updates its block immediately."""
    if cfg.mode != "incremental":
        raise InvalidSpec("train_incremental requires mode='incremental'")
    samples = _prepare_samples(model, dataset)
    if not samples:
        raise EmptyDataset("no training records")
    counters = counters if counters is not None else OpCounters()
    report = TrainReport(mode=cfg.mode, seed=cfg.seed)
    learnable = [(j, b) for j, b in enumerate(model.blocks) if not b.frozen]

    order_rng = random.Random(cfg.seed) if cfg.shuffle else None
    order = list(range(len(samples)))
    for source in model.sources:
        source.start_learning()
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            scalars0 = counters.scalar_multiplications
            if order_rng is not None:
                order_rng.shuffle(order)
            llh_sum = 0.0
            max_delta = 0.0
            skipped = 0
            valid_updates = 0
            for idx in order:
                backwards, knowns = samples[idx]
                port_products, b_sources = _learning_pass(
                    model, backwards, knowns, counters, cfg.workers, executor)
                for j, block in learnable:
                    pair = [(port_products[j], backwards[j])]
                    try:
                        theta_new, llh, _ = ml_update_fast_stats(block.theta, pair, counters)
                    except NoValidSamples:
                        skipped += 1
                        continue
                    llh_sum += llh
                    valid_updates += 1
                    delta = float(np.max(np.abs(theta_new - block.theta)))
                    max_delta = max(max_delta, delta)
                    block.theta = theta_new
                for i, source in enumerate(model.sources):
                    source.accumulate(b_sources[i])
            for source in model.sources:
                source.update_prior(counters, force_frozen=cfg.freeze_sources)
            if valid_updates == 0:
                raise NoValidSamples("no sample produced a usable update this epoch")
            dt = time.perf_counter() - t0
            counters.add_wall_time(dt)
            report.epochs.append(EpochRecord(
                epoch=epoch,
                log_likelihood=llh_sum,
                ml_log_likelihoods=[llh_sum],
                max_theta_delta=max_delta,
                wall_time=dt,
                scalar_multiplications=counters.scalar_multiplications - scalars0,
                skipped_pairs=skipped,
            ))
    finally:
        if executor is not None:
            executor.shutdown()
        for source in model.sources:
            source.stop_learning()
    report.counters = counters.snapshot()
    return report


def _sum_padded(series_by_block: list[list[float]]) -> list[float]:
    """Sum per-iteration series across blocks, padding each with its final value."""
    if not series_by_block:
        return []
    length = max(len(s) for s in series_by_block)
    total = [0.0] * length
    for series in series_by_block:
        for k in range(length):
            total[k] += series[k] if k < len(series) else series[-1]
    return total
