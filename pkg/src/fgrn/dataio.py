"""Dataset ingestion: schema files, CSV parsing, encoding, splitting.

A schema is a small declarative text file (``schema_version: 1``) that fixes,
per CSV column, a name, a kind and an alphabet:

    schema_version: 1
    missing_token: ?
    class_column: class

    column: id
    kind: drop

    column: clump_thickness
    kind: categorical
    alphabet: 1, 2, 3, 4, 5, 6, 7, 8, 9, 10

    column: age
    kind: integer_binned
    bin_edges: 0, 30, 40, 50, 60, 200

``categorical`` columns map labels to alphabet indices; ``integer_binned``
columns map numbers onto half-open bins [e_i, e_{i+1}) declared by the user
(no automatic discretization, so the data path stays auditable); ``drop``
columns are ignored. Cells equal to the missing token become missing, which
downstream turns into uniform backward messages flagged unknown.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from random import Random

import numpy as np

from .errors import InvalidSpec, ParseError, TooFewRecords, UnknownLabel
from .prob import delta_message, uniform_message

SCHEMA_VERSION = 1
KINDS = ("categorical", "integer_binned", "drop")


@dataclass
class Column:
    name: str
    kind: str = "categorical"
    alphabet: list[str] = field(default_factory=list)
    bin_edges: list[float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "integer_binned":
            if not self.bin_edges or len(self.bin_edges) < 3:
                raise InvalidSpec(f"column {self.name!r}: integer_binned needs >= 3 bin edges")
            if sorted(self.bin_edges) != list(self.bin_edges):
                raise InvalidSpec(f"column {self.name!r}: bin edges must be increasing")
            if not self.alphabet:
                self.alphabet = [
                    f"[{_fmt_edge(lo)},{_fmt_edge(hi)})"
                    for lo, hi in zip(self.bin_edges, self.bin_edges[1:])
                ]
        if self.kind != "drop":
            if len(self.alphabet) < 2:
                raise InvalidSpec(f"column {self.name!r}: alphabet needs >= 2 labels")
            if len(set(self.alphabet)) != len(self.alphabet):
                raise InvalidSpec(f"column {self.name!r}: duplicate labels")

    @property
    def size(self) -> int:
        return len(self.alphabet)

    def cell_to_index(self, cell: str, row: int) -> int:
        if self.kind == "categorical":
            try:
                return self.alphabet.index(cell)
            except ValueError:
                raise UnknownLabel(
                    f"row {row}: {cell!r} not in the alphabet of column {self.name!r}",
                    row=row, col=self.name) from None
        try:
            value = float(cell)
        except ValueError:
            raise ParseError(f"row {row}: {cell!r} is not a number (column {self.name!r})",
                             row=row, col=self.name) from None
        edges = self.bin_edges
        if not edges[0] <= value < edges[-1]:
            raise UnknownLabel(
                f"row {row}: value {value} of column {self.name!r} outside the declared bins",
                row=row, col=self.name)
        return int(np.searchsorted(edges, value, side="right") - 1)


def _fmt_edge(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


@dataclass
class Schema:
    columns: list[Column]
    class_column: str | None = None
    missing_token: str = "?"
    version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InvalidSpec("duplicate column names in schema")
        if self.class_column is not None:
            kinds = {c.name: c.kind for c in self.columns}
            if self.class_column not in kinds:
                raise InvalidSpec(f"class column {self.class_column!r} not declared")
            if kinds[self.class_column] == "drop":
                raise InvalidSpec("the class column cannot be dropped")

    @property
    def active_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind != "drop"]

    @property
    def feature_columns(self) -> list[Column]:
        return [c for c in self.active_columns if c.name != self.class_column]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise InvalidSpec(f"no column named {name!r}")


@dataclass
class Dataset:
    records: list[tuple]  # per active column: alphabet index or None
    schema: Schema
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def missing_cells(self) -> int:
        return sum(rec.count(None) for rec in self.records)

    def class_indices(self) -> list[int | None]:
        if self.schema.class_column is None:
            raise InvalidSpec("dataset has no class column")
        pos = [c.name for c in self.schema.active_columns].index(self.schema.class_column)
        return [rec[pos] for rec in self.records]


def load_csv(path, schema: Schema) -> Dataset:
    """Parse a comma-separated file against a schema.

    A first line whose cells equal the declared column names is treated as a
    header and skipped. Malformed rows are rejected with their row number.
    """
    path = Path(path)
    records: list[tuple] = []
    expected = [c.name for c in schema.columns]
    with path.open(newline="", encoding="utf-8") as fh:
        for row_no, cells in enumerate(csv.reader(fh)):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            cells = [c.strip() for c in cells]
            if row_no == 0 and cells == expected:
                continue
            if len(cells) != len(schema.columns):
                raise ParseError(
                    f"row {row_no}: expected {len(schema.columns)} cells, got {len(cells)}",
                    row=row_no)
            rec = []
            for column, cell in zip(schema.columns, cells):
                if column.kind == "drop":
                    continue
                if cell == schema.missing_token:
                    rec.append(None)
                else:
                    rec.append(column.cell_to_index(cell, row_no))
            records.append(tuple(rec))
    return Dataset(records=records, schema=schema, provenance=str(path))


def encode_sample(record: tuple, schema: Schema) -> dict[str, tuple[np.ndarray, bool]]:
    """Turn one record into per-variable backward messages.

    Known cells become delta messages; missing cells become uniform messages
    flagged unknown, so propagation can skip their matrix products.
    """
    columns = schema.active_columns
    if len(record) != len(columns):
        raise InvalidSpec(f"record has {len(record)} cells, schema has {len(columns)} active columns")
    encoded: dict[str, tuple[np.ndarray, bool]] = {}
    for column, cell in zip(columns, record):
        if cell is None:
            encoded[column.name] = (uniform_message(column.size), False)
        else:
            encoded[column.name] = (delta_message(column.size, cell), True)
    return encoded


def decode_sample(encoded: dict[str, tuple[np.ndarray, bool]], schema: Schema) -> tuple:
    """Inverse of encode_sample for the known cells (argmax of each delta)."""
    rec = []
    for column in schema.active_columns:
        vec, known = encoded[column.name]
        rec.append(int(np.argmax(vec)) if known else None)
    return tuple(rec)


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split, stratified by the class column when present."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidSpec("test_fraction must be strictly between 0 and 1")
    n = len(dataset)
    n_test = int(round(test_fraction * n))
    if n < 2 or n_test == 0 or n_test == n:
        raise TooFewRecords(f"cannot split {n} records with test fraction {test_fraction}")

    rng = Random(seed)
    if dataset.schema.class_column is not None:
        strata: dict[object, list[int]] = {}
        for idx, cls in enumerate(dataset.class_indices()):
            strata.setdefault(cls, []).append(idx)
        quotas = _largest_remainder_quotas(strata, test_fraction, n_test)
        test_idx: list[int] = []
        for key in sorted(strata, key=lambda k: (k is None, k)):
            indices = strata[key][:]
            rng.shuffle(indices)
            test_idx.extend(indices[: quotas[key]])
    else:
        indices = list(range(n))
        rng.shuffle(indices)
        test_idx = indices[:n_test]

    in_test = set(test_idx)
    train_records = [dataset.records[i] for i in range(n) if i not in in_test]
    test_records = [dataset.records[i] for i in range(n) if i in in_test]
    note = f"{dataset.provenance} (split seed={seed}, test_fraction={test_fraction})"
    return (
        Dataset(train_records, dataset.schema, provenance=note + " train"),
        Dataset(test_records, dataset.schema, provenance=note + " test"),
    )


def _largest_remainder_quotas(strata: dict, fraction: float, total: int) -> dict:
    quotas = {}
    remainders = []
    assigned = 0
    for key, indices in strata.items():
        exact = fraction * len(indices)
        base = min(int(exact), len(indices))
        quotas[key] = base
        assigned += base
        remainders.append((-(exact - base), str(key), key))
    remainders.sort()
    i = 0
    while assigned < total and i < len(remainders):
        key = remainders[i][2]
        if quotas[key] < len(strata[key]):
            quotas[key] += 1
            assigned += 1
        i += 1
    return quotas


def parse_schema(path) -> Schema:
    """Read the declarative schema format described in the module docstring."""
    path = Path(path)
    version: int | None = None
    missing_token = "?"
    class_column: str | None = None
    columns: list[Column] = []
    current: dict | None = None

    def flush() -> None:
        nonlocal current
        if current is not None:
            columns.append(Column(**current))
            current = None

    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ParseError(f"line {line_no}: expected 'key: value'", row=line_no)
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key == "schema_version":
            version = _parse_int(value, line_no)
        elif key == "missing_token":
            missing_token = value
        elif key == "class_column":
            class_column = value
        elif key == "column":
            flush()
            current = {"name": value}
        elif key in ("kind", "alphabet", "bin_edges"):
            if current is None:
                raise ParseError(f"line {line_no}: {key!r} outside a column block", row=line_no)
            if key == "kind":
                current["kind"] = value
            elif key == "alphabet":
                current["alphabet"] = [v.strip() for v in value.split(",") if v.strip()]
            else:
                current["bin_edges"] = [_parse_float(v.strip(), line_no) for v in value.split(",")]
        else:
            raise ParseError(f"line {line_no}: unknown key {key!r}", row=line_no)
    flush()
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported or missing schema_version (expected {SCHEMA_VERSION})")
    if not columns:
        raise ParseError("schema declares no columns")
    return Schema(columns=columns, class_column=class_column, missing_token=missing_token)


def format_schema(schema: Schema) -> str:
    lines = [f"schema_version: {schema.version}", f"missing_token: {schema.missing_token}"]
    if schema.class_column is not None:
        lines.append(f"class_column: {schema.class_column}")
    for column in schema.columns:
        lines.append("")
        lines.append(f"column: {column.name}")
        lines.append(f"kind: {column.kind}")
        if column.kind == "drop":
            continue
        if column.kind == "integer_binned":
            lines.append("bin_edges: " + ", ".join(_fmt_edge(e) for e in column.bin_edges))
        else:
            lines.append("alphabet: " + ", ".join(column.alphabet))
    return "\n".join(lines) + "\n"


def write_schema(schema: Schema, path) -> None:
    Path(path).write_text(format_schema(schema), encoding="utf-8")


def infer_schema(path, *, class_column: str | None = None, missing_token: str = "?",
                 has_header: bool = False, column_names: list[str] | None = None) -> Schema:
    """Scan a CSV and build an all-categorical schema from the observed labels.

    Labels sort numerically when every observed label parses as a number,
    lexicographically otherwise.
    """
    path = Path(path)
    rows: list[list[str]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        for cells in csv.reader(fh):
            if cells and not (len(cells) == 1 and not cells[0].strip()):
                rows.append([c.strip() for c in cells])
    if not rows:
        raise ParseError("cannot infer a schema from an empty file")
    names = column_names
    if has_header:
        header, rows = rows[0], rows[1:]
        names = names or header
    width = len(rows[0]) if rows else len(names or [])
    names = names or [f"c{i + 1}" for i in range(width)]
    if len(names) != width:
        raise InvalidSpec("column_names length does not match the file")
    values: list[set[str]] = [set() for _ in range(width)]
    for row_no, cells in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"row {row_no}: ragged row", row=row_no)
        for i, cell in enumerate(cells):
            if cell != missing_token:
                values[i].add(cell)
    columns = [
        Column(name=name, kind="categorical", alphabet=_sorted_labels(vals))
        for name, vals in zip(names, values)
    ]
    return Schema(columns=columns, class_column=class_column, missing_token=missing_token)


def _sorted_labels(labels: set[str]) -> list[str]:
    try:
        return sorted(labels, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(labels)


def _parse_int(value: str, line_no: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"line {line_no}: expected an integer, got {value!r}", row=line_no) from None


def _parse_float(value: str, line_no: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"line {line_no}: expected a number, got {value!r}", row=line_no) from None
