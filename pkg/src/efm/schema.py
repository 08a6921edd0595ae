"""Attribute schema, encoded datasets, CSV ingestion and data partitioning.

Every observation activates exactly one level per attribute. Levels are
stored as integer indices into the attribute's ordered level list, so a
dataset is an ``(n_rows, n_attributes)`` integer array plus a vector of
positive responses.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateBinningError,
    PartitionError,
    RowError,
    SchemaError,
    SplitError,
    UnseenLevelError,
)

MISSING = "__missing__"

TRAINING = "training"
TEST = "test"


@dataclass(frozen=True)
class Attribute:
    """A categorical attribute and its ordered levels.

    ``boundaries`` is set for attributes produced by equal-frequency
    discretization of a numeric column: the inclusive upper edge of every
    bin except the last.
    """

    name: str
    levels: tuple[str, ...]
    boundaries: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"duplicate level names in attribute {self.name!r}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise UnseenLevelError(self.name, level) from None

    @property
    def missing_index(self) -> int | None:
        return self.levels.index(MISSING) if MISSING in self.levels else None


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")

    def __len__(self) -> int:
        return len(self.attributes)

    def __getitem__(self, i: int) -> Attribute:
        return self.attributes[i]

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([a.n_levels for a in self.attributes], dtype=int)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    @property
    def interaction_universe(self) -> list[tuple[int, int]]:
        """All unordered attribute pairs ``(c, c')`` with ``c < c'``."""
        a = len(self.attributes)
        return [(c, d) for c in range(a) for d in range(c + 1, a)]

    def to_dict(self) -> dict:
        out = []
        for a in self.attributes:
            entry = {"name": a.name, "levels": list(a.levels)}
            if a.boundaries is not None:
                entry["boundaries"] = list(a.boundaries)
            out.append(entry)
        return {"attributes": out}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSchema":
        attrs = []
        for e in d["attributes"]:
            b = e.get("boundaries")
            attrs.append(Attribute(e["name"], tuple(e["levels"]), None if b is None else tuple(b)))
        return cls(tuple(attrs))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Observation:
    key: tuple[str, str]
    levels: tuple[int, ...]
    response: float


class Dataset:
    """Immutable encoded observations sharing one schema.

    Parameters
    ----------
    schema : AttributeSchema
    levels : array of shape (n, a)
        Active level index of every attribute for every row.
    responses : array of shape (n,)
        Strictly positive responses.
    keys : sequence of (item, group) pairs
    role : {"training", "test"}
    extras : dict, optional
        Auxiliary raw columns kept for splitting (e.g. launch dates).
    """

    def __init__(self, schema, levels, responses, keys, role=TRAINING, extras=None):
        levels = np.asarray(levels, dtype=np.int64).reshape(-1, len(schema))
        responses = np.asarray(responses, dtype=float)
        if levels.shape[0] != responses.shape[0] or len(keys) != responses.shape[0]:
            raise SchemaError("levels, responses and keys must have the same length")
        if responses.size and not np.all(responses > 0):
            raise SchemaError("responses must be strictly positive")
        n_levels = schema.n_levels
        if levels.size and (np.any(levels < 0) or np.any(levels >= n_levels[None, :])):
            raise SchemaError("level index out of range for schema")
        if role not in (TRAINING, TEST):
            raise SchemaError(f"unknown dataset role {role!r}")
        levels.setflags(write=False)
        responses.setflags(write=False)
        self.schema = schema
        self.levels = levels
        self.responses = responses
        self.keys = [tuple(k) for k in keys]
        self.role = role
        self.extras = {k: tuple(v) for k, v in (extras or {}).items()}

    def __len__(self) -> int:
        return self.responses.shape[0]

    def __getitem__(self, i: int) -> Observation:
        return Observation(self.keys[i], tuple(int(v) for v in self.levels[i]), float(self.responses[i]))

    @property
    def rows(self) -> list[Observation]:
        return [self[i] for i in range(len(self))]

    def subset(self, index, role: str | None = None) -> "Dataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return Dataset(
            self.schema,
            self.levels[index],
            self.responses[index],
            [self.keys[i] for i in index],
            role or self.role,
            {k: [v[i] for i in index] for k, v in self.extras.items()},
        )

    def with_role(self, role: str) -> "Dataset":
        return Dataset(self.schema, self.levels, self.responses, self.keys, role, self.extras)

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "schema": self.schema.to_dict(),
            "keys": [list(k) for k in self.keys],
            "levels": self.levels.tolist(),
            "responses": [float(r) for r in self.responses],
            "extras": {k: list(v) for k, v in self.extras.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        schema = AttributeSchema.from_dict(d["schema"])
        levels = np.array(d["levels"], dtype=np.int64).reshape(-1, len(schema))
        return cls(schema, levels, d["responses"], d["keys"], d.get("role", TRAINING), d.get("extras"))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class KFoldPartition:
    """Fold index (0-based) for every row of a dataset, in row order."""

    folds: np.ndarray
    k: int
    seed: int

    def fold_rows(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.folds == i)

    def complement_rows(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.folds != i)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.folds, minlength=self.k)

    def assignment(self, data: Dataset) -> dict:
        return {tuple(key): int(f) + 1 for key, f in zip(data.keys, self.folds)}

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "folds": [int(f) + 1 for f in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "KFoldPartition":
        return cls(np.asarray(d["folds"], dtype=int) - 1, int(d["k"]), int(d["seed"]))


@dataclass
class SchemaSpec:
    """Column mapping for :func:`load_csv` (read from a JSON sidecar).

    ``numeric`` maps numeric column names to equal-frequency bin counts.
    ``zero_replacement`` substitutes a positive value for zero responses
    (e.g. 0.1 when percentage errors must be defined); negative responses
    are always rejected. ``delimiter`` is the CSV field separator.
    """

    response: str
    attributes: list[str] = field(default_factory=list)
    numeric: dict[str, int] = field(default_factory=dict)
    item: str | None = None
    group: str | None = None
    extra: list[str] = field(default_factory=list)
    zero_replacement: float | None = None
    delimiter: str = ","

    @property
    def attribute_columns(self) -> list[str]:
        # categorical first, then numeric, each in declaration order
        return list(self.attributes) + [c for c in self.numeric if c not in self.attributes]

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaSpec":
        known = {"response", "attributes", "numeric", "item", "group", "extra", "zero_replacement", "delimiter"}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown schema_spec keys: {sorted(unknown)}")
        if "response" not in d:
            raise SchemaError("schema_spec must name the response column")
        return cls(
            response=d["response"],
            attributes=list(d.get("attributes", [])),
            numeric={k: int(v) for k, v in d.get("numeric", {}).items()},
            item=d.get("item"),
            group=d.get("group"),
            extra=list(d.get("extra", [])),
            zero_replacement=d.get("zero_replacement"),
            delimiter=d.get("delimiter", ","),
        )

    @classmethod
    def load(cls, path) -> "SchemaSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "attributes": list(self.attributes),
            "numeric": dict(self.numeric),
            "item": self.item,
            "group": self.group,
            "extra": list(self.extra),
            "zero_replacement": self.zero_replacement,
            "delimiter": self.delimiter,
        }


@dataclass(frozen=True)
class Binning:
    boundaries: tuple[float, ...]
    assignment: np.ndarray  # 0-based bin per input value

    @property
    def n_bins(self) -> int:
        return len(self.boundaries) + 1

    def assign(self, values) -> np.ndarray:
        return assign_bins(values, self.boundaries)


def discretize_equal_frequency(values: Sequence[float], bins: int) -> Binning:
    """Equal-frequency binning that never splits tied values.

    Sorted distinct values are poured into bins in order; a bin is closed as
    soon as it holds at least its share of the remaining values. A run of
    ties always lands in one bin (the lower one when it straddles a cut).
    """
    values = np.asarray(values, dtype=float)
    if bins < 2:
        raise DegenerateBinningError("bins must be >= 2")
    if values.size == 0:
        raise DegenerateBinningError("cannot bin an empty sample")
    uniq, counts = np.unique(values, return_counts=True)
    if bins > uniq.size:
        raise DegenerateBinningError(f"{bins} bins requested but only {uniq.size} distinct values")

    uppers = []
    remaining_n, remaining_bins = values.size, bins
    in_bin = 0
    for i, (u, cnt) in enumerate(zip(uniq, counts)):
        in_bin += cnt
        distinct_left = uniq.size - i - 1
        if remaining_bins == 1:
            continue
        share = remaining_n / remaining_bins
        if in_bin >= share - 1e-9 or distinct_left == remaining_bins - 1:
            uppers.append(float(u))
            remaining_n -= in_bin
            remaining_bins -= 1
            in_bin = 0
    boundaries = tuple(uppers)
    return Binning(boundaries, assign_bins(values, boundaries))


def assign_bins(values, boundaries) -> np.ndarray:
    """Bin index for each value; out-of-range values clamp to the end bins."""
    return np.searchsorted(np.asarray(boundaries, dtype=float), np.asarray(values, dtype=float), side="left")


def _parse_response(raw: str, line: int, spec: SchemaSpec) -> float:
    try:
        d = float(raw)
    except (TypeError, ValueError):
        raise RowError(line, f"non-numeric response {raw!r}") from None
    if not math.isfinite(d):
        raise RowError(line, f"non-finite response {raw!r}")
    if d == 0 and spec.zero_replacement is not None:
        d = float(spec.zero_replacement)
    if d <= 0:
        raise RowError(line, f"response must be positive, got {raw!r}")
    return d


def load_csv(
    path,
    schema_spec: SchemaSpec,
    role: str = TRAINING,
    schema: AttributeSchema | None = None,
    remap_unseen: bool = False,
) -> Dataset:
    """Read a CSV file into an encoded :class:`Dataset`.

    In the training role new level strings are appended to the schema (which
    starts from ``schema`` when given). In the test role ``schema`` is
    required and a level it does not contain raises
    :class:`UnseenLevelError`, unless ``remap_unseen`` is set and the
    attribute has a synthetic missing level to map onto. Empty cells always
    map to the synthetic missing level. Line numbers in errors count the
    header as line 1.
    """
    if role == TEST and schema is None:
        raise SchemaError("test-role loading needs the training schema")
    columns = schema_spec.attribute_columns
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=schema_spec.delimiter)
        header = reader.fieldnames or []
        if schema_spec.response not in header:
            raise SchemaError(f"response column {schema_spec.response!r} missing from {path}")
        for col in columns + [c for c in (schema_spec.item, schema_spec.group) if c] + schema_spec.extra:
            if col not in header:
                raise SchemaError(f"column {col!r} missing from {path}")
        records = list(reader)

    if schema is not None:
        missing_cols = [c for c in columns if c not in schema.names]
        if missing_cols:
            raise SchemaError(f"columns {missing_cols} are not attributes of the given schema")
        if role == TEST and len(columns) != len(schema):
            raise SchemaError("test data must provide every schema attribute")

    responses = []
    keys = []
    seen_keys = set()
    raw = {c: [] for c in columns}
    for n, rec in enumerate(records):
        line = n + 2
        responses.append(_parse_response(rec[schema_spec.response], line, schema_spec))
        item = rec[schema_spec.item] if schema_spec.item else str(n + 1)
        group = rec[schema_spec.group] if schema_spec.group else ""
        key = (item, group)
        if key in seen_keys:
            raise RowError(line, f"duplicate row key {key}")
        seen_keys.add(key)
        keys.append(key)
        for c in columns:
            raw[c].append((rec[c] or "").strip())

    order = schema.names if schema is not None else columns
    attributes = []
    codes = []
    for name in order:
        base = schema[schema.index_of(name)] if schema is not None else None
        cells = raw[name]
        if name in schema_spec.numeric:
            attr, col = _encode_numeric(name, cells, schema_spec.numeric[name], base, role, remap_unseen)
        else:
            attr, col = _encode_categorical(name, cells, base, role, remap_unseen)
        attributes.append(attr)
        codes.append(col)

    new_schema = AttributeSchema(tuple(attributes))
    levels = np.column_stack(codes) if codes else np.zeros((len(records), 0), dtype=np.int64)
    extras = {c: [rec[c] for rec in records] for c in schema_spec.extra}
    return Dataset(new_schema, levels, responses, keys, role, extras)


def _encode_categorical(name, cells, base, role, remap_unseen):
    levels = list(base.levels) if base is not None else []
    lookup = {lv: i for i, lv in enumerate(levels)}
    out = np.empty(len(cells), dtype=np.int64)
    for r, cell in enumerate(cells):
        value = cell if cell != "" else MISSING
        idx = lookup.get(value)
        if idx is None:
            if role == TRAINING:
                idx = len(levels)
                levels.append(value)
                lookup[value] = idx
            elif remap_unseen and MISSING in lookup:
                idx = lookup[MISSING]
            else:
                raise UnseenLevelError(name, cell, row=r + 2)
        out[r] = idx
    boundaries = base.boundaries if base is not None else None
    return Attribute(name, tuple(levels), boundaries), out


def _bin_level(i: int) -> str:
    return f"bin{i + 1}"


def _encode_numeric(name, cells, bins, base, role, remap_unseen):
    present = np.array([c != "" for c in cells], dtype=bool)
    try:
        values = np.array([float(c) if c != "" else np.nan for c in cells], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"numeric column {name!r}: {exc}") from None

    if base is not None and base.boundaries is not None:
        boundaries = base.boundaries
        levels = list(base.levels)
    elif role == TRAINING:
        boundaries = discretize_equal_frequency(values[present], bins).boundaries
        levels = [_bin_level(i) for i in range(len(boundaries) + 1)]
    else:
        raise SchemaError(f"attribute {name!r} has no training bin boundaries")

    out = np.empty(len(cells), dtype=np.int64)
    bin_idx = assign_bins(np.where(present, values, 0.0), boundaries)
    for r in range(len(cells)):
        if present[r]:
            out[r] = levels.index(_bin_level(int(bin_idx[r])))
            continue
        if MISSING in levels:
            out[r] = levels.index(MISSING)
        elif role == TRAINING:
            levels.append(MISSING)
            out[r] = len(levels) - 1
        else:
            raise UnseenLevelError(name, "", row=r + 2)
    return Attribute(name, tuple(levels), tuple(boundaries)), out


def write_csv(data: Dataset, path) -> SchemaSpec:
    """Write ``data`` as CSV; returns the spec that reloads it.

    Reloading with the returned spec and ``schema=data.schema`` reproduces
    the level indices and bit-identical responses.
    """
    names = data.schema.names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item", "group", "response"] + names)
        for key, lv, d in zip(data.keys, data.levels, data.responses):
            cells = []
            for a, j in zip(data.schema.attributes, lv):
                level = a.levels[j]
                cells.append("" if level == MISSING else level)
            w.writerow([key[0], key[1], repr(float(d))] + cells)
    return SchemaSpec(response="response", attributes=names, item="item", group="group")


def split_by_key(data: Dataset, predicate: Callable[[tuple[str, str]], bool]):
    """Split rows into (train, test) by a predicate on the row key."""
    mask = np.array([bool(predicate(k)) for k in data.keys], dtype=bool)
    if not mask.any():
        raise SplitError("split produced an empty training set")
    if mask.all():
        raise SplitError("split produced an empty test set")
    return data.subset(mask, role=TRAINING), data.subset(~mask, role=TEST)


def cutoff_predicate(data: Dataset, column: str, cutoff: str) -> Callable[[tuple[str, str]], bool]:
    """Row-key predicate ``value(column) <= cutoff`` over a retained column.

    Values compare as strings, so ISO dates (``YYYY-MM-DD``) order correctly.
    """
    if column not in data.extras:
        raise SchemaError(f"column {column!r} was not retained at load time")
    by_key = dict(zip(data.keys, data.extras[column]))
    return lambda key: by_key[tuple(key)] <= cutoff


def partition_kfold(data: Dataset, k: int, seed: int) -> KFoldPartition:
    """Random partition into ``k`` folds whose sizes differ by at most one."""
    n = len(data)
    if k < 2:
        raise PartitionError("k must be >= 2")
    if k > n:
        raise PartitionError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return KFoldPartition(folds, k, seed)


def build_dataset(
    columns: dict[str, Iterable],
    responses: Iterable[float],
    keys: Sequence[tuple[str, str]] | None = None,
    role: str = TRAINING,
) -> Dataset:
    """Encode in-memory categorical columns (level order = first appearance)."""
    responses = np.asarray(list(responses), dtype=float)
    attributes, codes = [], []
    for name, cells in columns.items():
        attr, col = _encode_categorical(name, [str(c) for c in cells], None, TRAINING, False)
        attributes.append(attr)
        codes.append(col)
    if keys is None:
        keys = [(str(i + 1), "") for i in range(responses.size)]
    schema = AttributeSchema(tuple(attributes))
    levels = np.column_stack(codes) if codes else np.zeros((responses.size, 0), dtype=np.int64)
    return Dataset(schema, levels, responses, keys, role)
