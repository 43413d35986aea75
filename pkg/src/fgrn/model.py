"""The wired one-layer latent variable graph.

Structure: H sources at the top, each feeding the central diverter either
directly (H == 1) or through its fixed selector map (H > 1); below the
diverter one conditional block per observed variable, plus an optional class
block. The diverter therefore has arity M = H + N (+1 with a class variable)
and every port carries messages over the product space of the hidden
alphabets.

Branch order around the diverter is the declaration order (sources first,
then observed blocks, then the class block) and is part of the model: the
cascade buffers and float reassociation depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elements import Diverter, Link, SisoBlock, Source
from .errors import InvalidSpec
from .prob import SelectorMap


@dataclass
class Model:
    hidden_dims: list[int]
    sources: list[Source]
    selector_maps: list[SelectorMap]  # empty when H == 1
    diverter: Diverter
    blocks: list[SisoBlock]  # observed blocks in order; class block last if any
    class_name: str | None
    naive_bayes: bool
    seed: int
    hidden_names: list[str]
    observed_names: list[str]
    alphabets: dict[str, list[str]]
    links: dict[str, Link] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.links:
            self.links = self._build_links()

    @property
    def product_size(self) -> int:
        p = 1
        for d in self.hidden_dims:
            p *= d
        return p

    @property
    def bottom_names(self) -> list[str]:
        names = list(self.observed_names)
        if self.class_name is not None:
            names.append(self.class_name)
        return names

    @property
    def observed_blocks(self) -> list[SisoBlock]:
        return self.blocks[: len(self.observed_names)]

    @property
    def class_block(self) -> SisoBlock | None:
        return self.blocks[-1] if self.class_name is not None else None

    @property
    def arity(self) -> int:
        return len(self.sources) + len(self.blocks)

    def variable_size(self, name: str) -> int:
        return len(self.alphabets[name])

    def label_index(self, name: str, label: str) -> int:
        try:
            return self.alphabets[name].index(label)
        except ValueError:
            raise InvalidSpec(f"{label!r} is not in the alphabet of {name!r}") from None

    def _build_links(self) -> dict[str, Link]:
        links: dict[str, Link] = {}
        p = self.product_size
        for i, name in enumerate(self.hidden_names):
            links[name] = Link(name, self.hidden_dims[i])
            links[port_name(name)] = Link(port_name(name), p)
        for j, name in enumerate(self.bottom_names):
            links[name] = Link(name, len(self.alphabets[name]))
            links[port_name(name)] = Link(port_name(name), p)
        return links

    def validate(self) -> None:
        p = self.product_size
        if self.diverter.arity != self.arity:
            raise InvalidSpec("diverter arity does not match the number of branches")
        for block in self.blocks:
            if block.rows != p:
                raise InvalidSpec(
                    f"block {block.name!r} has {block.rows} rows, product space has {p} cells"
                )


def port_name(branch: str) -> str:
    """Name of the diverter-side replica link of a branch variable."""
    return branch + "@P"
