"""Versioned text serialization of trained models.

Line-oriented, tab-separated. Every float is written with 17 significant
digits, which round-trips IEEE doubles exactly, so load(save(m)) reproduces
all parameters bitwise and save(load(f)) reproduces the file byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidSpec, ParseError
from .lvm import LvmSpec, build
from .model import Model

MAGIC = "fgrn-model"
VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_vector(vec: np.ndarray) -> str:
    return "\t".join(_fmt(x) for x in vec)


def format_model(model: Model) -> str:
    for name, labels in model.alphabets.items():
        for label in labels:
            if "\t" in label or "\n" in label:
                raise InvalidSpec(f"label {label!r} of {name!r} cannot be serialized")
    lines = [f"{MAGIC} {VERSION}"]
    lines.append(f"seed\t{model.seed}")
    lines.append("hidden_dims\t" + "\t".join(str(d) for d in model.hidden_dims))
    lines.append("hidden_names\t" + "\t".join(model.hidden_names))
    lines.append("observed_names\t" + "\t".join(model.observed_names))
    lines.append(f"class_name\t{model.class_name if model.class_name is not None else '-'}")
    lines.append(f"naive_bayes\t{int(model.naive_bayes)}")
    for name in model.hidden_names + model.bottom_names:
        lines.append(f"alphabet\t{name}\t" + "\t".join(model.alphabets[name]))
    for source in model.sources:
        lines.append(f"source\t{source.name}\tfrozen\t{int(source.frozen)}")
        lines.append("prior\t" + _fmt_vector(source.prior))
    for block in model.blocks:
        lines.append(
            f"block\t{block.name}\trows\t{block.rows}\tcols\t{block.cols}\tfrozen\t{int(block.frozen)}"
        )
        for row in block.theta:
            lines.append("row\t" + _fmt_vector(row))
    return "\n".join(lines) + "\n"


def save_model(model: Model, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def load_model(path) -> Model:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != f"{MAGIC} {VERSION}":
        raise ParseError(f"not a {MAGIC} version {VERSION} file")

    fields: dict[str, list[str]] = {}
    alphabets: dict[str, list[str]] = {}
    sources: list[dict] = []
    blocks: list[dict] = []
    i = 1
    while i < len(lines):
        parts = lines[i].split("\t")
        key = parts[0]
        if key == "alphabet":
            if len(parts) < 4:
                raise ParseError(f"line {i + 1}: alphabet needs a name and >= 2 labels", row=i + 1)
            alphabets[parts[1]] = parts[2:]
        elif key == "source":
            if i + 1 >= len(lines) or not lines[i + 1].startswith("prior\t"):
                raise ParseError(f"line {i + 1}: source without a prior line", row=i + 1)
            prior = _parse_floats(lines[i + 1].split("\t")[1:], i + 2)
            sources.append({"name": parts[1], "frozen": parts[3] == "1", "prior": prior})
            i += 1
        elif key == "block":
            rows, cols = int(parts[3]), int(parts[5])
            theta = []
            for r in range(rows):
                i += 1
                row_parts = lines[i].split("\t")
                if row_parts[0] != "row" or len(row_parts) != cols + 1:
                    raise ParseError(f"line {i + 1}: malformed matrix row", row=i + 1)
                theta.append(_parse_floats(row_parts[1:], i + 1))
            blocks.append({"name": parts[1], "frozen": parts[7] == "1",
                           "theta": np.array(theta)})
        elif key in ("seed", "hidden_dims", "hidden_names", "observed_names",
                     "class_name", "naive_bayes"):
            fields[key] = parts[1:]
        else:
            raise ParseError(f"line {i + 1}: unknown record {key!r}", row=i + 1)
        i += 1

    try:
        hidden_dims = [int(d) for d in fields["hidden_dims"]]
        class_name = fields["class_name"][0]
        has_class = class_name != "-"
        observed_names = fields["observed_names"]
        spec = LvmSpec(
            hidden_dims=hidden_dims,
            observed_dims=[len(alphabets[n]) for n in observed_names],
            class_dim=len(alphabets[class_name]) if has_class else None,
            naive_bayes=fields["naive_bayes"][0] == "1",
            seed=int(fields["seed"][0]),
            hidden_names=fields["hidden_names"],
            observed_names=observed_names,
            class_name=class_name if has_class else "L",
            alphabets=alphabets,
        )
    except KeyError as missing:
        raise ParseError(f"model file is missing the {missing} record") from None

    model = build(spec)
    if len(sources) != len(model.sources) or len(blocks) != len(model.blocks):
        raise ParseError("model file does not match its own declared structure")
    for source, loaded in zip(model.sources, sources):
        if source.name != loaded["name"] or loaded["prior"].shape[0] != source.size:
            raise ParseError(f"source {loaded['name']!r} does not match the declared structure")
        source.prior = loaded["prior"]
        source.frozen = loaded["frozen"]
    for block, loaded in zip(model.blocks, blocks):
        if block.name != loaded["name"] or loaded["theta"].shape != block.theta.shape:
            raise ParseError(f"block {loaded['name']!r} does not match the declared structure")
        block.theta = loaded["theta"]
        block.frozen = loaded["frozen"]
    return model


def _parse_floats(parts: list[str], line_no: int) -> np.ndarray:
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"line {line_no}: malformed float", row=line_no) from None
