"""Operation counters used by the instrumented benchmarks.

Conventions:

- one elementwise product of two length-d vectors counts as 1 vector
  multiplication and d scalar multiplications;
- a matrix-vector product with an l x d matrix counts as l*d scalar
  multiplications (no vector multiplication);
- normalization divisions are tracked in their own field and are never
  folded into the multiplication counts.

Counters are plain integers; when a propagation step fans out over worker
threads each branch gets a scratch instance that is merged back in branch
order, so totals are exact for any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class OpCounters:
    vector_multiplications: int = 0
    scalar_multiplications: int = 0
    normalization_divisions: int = 0
    peak_stored_pairs: int = 0
    wall_time: float = 0.0

    def add_vector_product(self, length: int) -> None:
        self.vector_multiplications += 1
        self.scalar_multiplications += length

    def add_scalar_products(self, count: int) -> None:
        self.scalar_multiplications += count

    def add_normalization(self, length: int) -> None:
        self.normalization_divisions += length

    def observe_stored_pairs(self, count: int) -> None:
        if count > self.peak_stored_pairs:
            self.peak_stored_pairs = count

    def add_wall_time(self, seconds: float) -> None:
        self.wall_time += seconds

    def merge_from(self, other: "OpCounters") -> None:
        self.vector_multiplications += other.vector_multiplications
        self.scalar_multiplications += other.scalar_multiplications
        self.normalization_divisions += other.normalization_divisions
        self.wall_time += other.wall_time
        if other.peak_stored_pairs > self.peak_stored_pairs:
            self.peak_stored_pairs = other.peak_stored_pairs

    def reset(self) -> None:
        self.vector_multiplications = 0
        self.scalar_multiplications = 0
        self.normalization_divisions = 0
        self.peak_stored_pairs = 0
        self.wall_time = 0.0

    def snapshot(self) -> dict:
        return {
            "vector_multiplications": self.vector_multiplications,
            "scalar_multiplications": self.scalar_multiplications,
            "normalization_divisions": self.normalization_divisions,
            "peak_stored_pairs": self.peak_stored_pairs,
            "wall_time": self.wall_time,
        }
