"""NSL-KDD record parsing, labelling, sampling and feature preparation.

A dataset file is UTF-8, comma separated, no header. Each line holds the
41 connection attributes, the attack label and, for NSL-KDD releases, a
trailing difficulty score which is ignored.
"""

from __future__ import annotations

import bisect
import hashlib
import math
import os
import sys
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np


class DatasetError(ValueError):
    """Base class for problems with input records."""


class FieldCountError(DatasetError):
    def __init__(self, line_number: int, found: int, expected: Sequence[int]):
        self.line_number = line_number
        self.found = found
        self.expected = tuple(expected)
        allowed = " or ".join(str(e) for e in self.expected)
        super().__init__(f"line {line_number}: expected {allowed} fields, found {found}")


class NonFiniteValueError(DatasetError):
    def __init__(self, line_number: int, attribute: str, raw: str):
        self.line_number = line_number
        self.attribute = attribute
        super().__init__(
            f"line {line_number}: attribute {attribute!r} has non-numeric or non-finite value {raw!r}"
        )


class UnknownLabelError(DatasetError):
    def __init__(self, label: str, line_number: int | None = None):
        self.label = label
        self.line_number = line_number
        where = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{where}unknown attack label {label!r}")


class SchemaMismatchError(DatasetError):
    def __init__(self, attribute: str, detail: str):
        self.attribute = attribute
        super().__init__(f"schema mismatch on attribute {attribute!r}: {detail}")


class StratumTooSmallError(DatasetError):
    def __init__(self, stratum: str, available: int, requested: int):
        self.stratum = stratum
        self.available = available
        self.requested = requested
        super().__init__(
            f"stratum {stratum} has {available} records, {requested} requested"
        )


class Kind(Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


class BinaryClass(Enum):
    ATTACK = "attack"
    NORMAL = "normal"

    @property
    def sign(self) -> int:
        return 1 if self is BinaryClass.ATTACK else -1

    @classmethod
    def from_sign(cls, value: float) -> "BinaryClass":
        return cls.ATTACK if value >= 0 else cls.NORMAL


class Category(Enum):
    DOS = "DOS"
    R2L = "R2L"
    U2R = "U2R"
    PROBE = "PROBE"
    NORMAL = "NORMAL"


ATTACK_CATEGORIES = (Category.DOS, Category.R2L, Category.U2R, Category.PROBE)
NORMAL_TOKEN = "normal"


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: Kind


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]
    class_position: int = -1
    has_difficulty_column: bool = True

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        if self.class_position < 0:
            object.__setattr__(self, "class_position", len(self.attributes))
        if not 0 <= self.class_position <= len(self.attributes):
            raise ValueError("class_position out of range")

    def __len__(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def numeric_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.attributes) if a.kind is Kind.NUMERIC]

    @property
    def categorical_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.attributes) if a.kind is Kind.CATEGORICAL]

    @classmethod
    def build(cls, spec: Iterable[tuple[str, Kind | str]], **kwargs) -> "AttributeSchema":
        attrs = tuple(Attribute(name, Kind(kind) if isinstance(kind, str) else kind) for name, kind in spec)
        return cls(attrs, **kwargs)


def check_schema(expected: AttributeSchema, actual: AttributeSchema) -> None:
    """Raise SchemaMismatchError naming the first attribute that differs."""
    for i in range(max(len(expected), len(actual))):
        if i >= len(actual):
            raise SchemaMismatchError(expected.attributes[i].name, "missing from input")
        if i >= len(expected):
            raise SchemaMismatchError(actual.attributes[i].name, "not present in model")
        a, b = expected.attributes[i], actual.attributes[i]
        if a != b:
            raise SchemaMismatchError(
                a.name, f"expected {a.name}:{a.kind.value}, got {b.name}:{b.kind.value}"
            )


_C, _N = Kind.CATEGORICAL, Kind.NUMERIC

NSL_KDD_SCHEMA = AttributeSchema.build([
    ("duration", _N), ("protocol_type", _C), ("service", _C), ("flag", _C),
    ("src_bytes", _N), ("dst_bytes", _N), ("land", _C), ("wrong_fragment", _N),
    ("urgent", _N), ("hot", _N), ("num_failed_logins", _N), ("logged_in", _C),
    ("num_compromised", _N), ("root_shell", _N), ("su_attempted", _N),
    ("num_root", _N), ("num_file_creations", _N), ("num_shells", _N),
    ("num_access_files", _N), ("num_outbound_cmds", _N), ("is_host_login", _C),
    ("is_guest_login", _C), ("count", _N), ("srv_count", _N),
    ("serror_rate", _N), ("srv_serror_rate", _N), ("rerror_rate", _N),
    ("srv_rerror_rate", _N), ("same_srv_rate", _N), ("diff_srv_rate", _N),
    ("srv_diff_host_rate", _N), ("dst_host_count", _N), ("dst_host_srv_count", _N),
    ("dst_host_same_srv_rate", _N), ("dst_host_diff_srv_rate", _N),
    ("dst_host_same_src_port_rate", _N), ("dst_host_srv_diff_host_rate", _N),
    ("dst_host_serror_rate", _N), ("dst_host_srv_serror_rate", _N),
    ("dst_host_rerror_rate", _N), ("dst_host_srv_rerror_rate", _N),
])


def normalize_label(label: str) -> str:
    # KDD-99 files end labels with a dot ("smurf.")
    return label.strip().rstrip(".").lower()


@dataclass(frozen=True)
class CategoryMap:
    entries: Mapping[str, Category]

    def lookup(self, label: str) -> Category:
        key = normalize_label(label)
        if key == NORMAL_TOKEN:
            return Category.NORMAL
        try:
            return self.entries[key]
        except KeyError:
            raise UnknownLabelError(label) from None

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "CategoryMap":
        entries: dict[str, Category] = {}
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                label, cat = (part.strip() for part in line.split(","))
                entries[normalize_label(label)] = Category(cat.upper())
            except ValueError:
                raise DatasetError(f"category map line {n}: expected 'label,category', got {line!r}") from None
        return cls(entries)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CategoryMap":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh)

    @classmethod
    def default(cls) -> "CategoryMap":
        text = resources.files("idsbench").joinpath("data/category_map.txt").read_text("utf-8")
        return cls.parse(text.splitlines())


def map_attack_category(label: str, category_map: CategoryMap) -> Category:
    return category_map.lookup(label)


@dataclass(frozen=True, slots=True)
class ConnectionRecord:
    values: tuple
    raw_label: str
    binary_class: BinaryClass
    category: Category

    @property
    def is_attack(self) -> bool:
        return self.binary_class is BinaryClass.ATTACK


def make_record(values: Sequence, raw_label: str, category_map: CategoryMap) -> ConnectionRecord:
    category = category_map.lookup(raw_label)
    binary = BinaryClass.NORMAL if category is Category.NORMAL else BinaryClass.ATTACK
    return ConnectionRecord(tuple(values), raw_label, binary, category)


@dataclass(frozen=True)
class LabeledDataset:
    schema: AttributeSchema
    records: tuple[ConnectionRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ConnectionRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def subset(self, indices: Iterable[int]) -> "LabeledDataset":
        recs = self.records
        return LabeledDataset(self.schema, tuple(recs[i] for i in indices))

    @cached_property
    def attack_mask(self) -> np.ndarray:
        return np.fromiter((r.binary_class is BinaryClass.ATTACK for r in self.records),
                           dtype=bool, count=len(self.records))

    @property
    def targets(self) -> np.ndarray:
        """+1 for attack, -1 for normal."""
        return np.where(self.attack_mask, 1.0, -1.0)

    def column(self, j: int) -> list:
        return [r.values[j] for r in self.records]

    def class_counts(self) -> dict[BinaryClass, int]:
        n_attack = int(self.attack_mask.sum())
        return {BinaryClass.ATTACK: n_attack, BinaryClass.NORMAL: len(self) - n_attack}

    def category_counts(self) -> dict[Category, int]:
        counts = {c: 0 for c in Category}
        for r in self.records:
            counts[r.category] += 1
        return counts


def _parse_lines(lines: Iterable[str], schema: AttributeSchema, category_map: CategoryMap):
    n_attr = len(schema)
    allowed = (n_attr + 1, n_attr + 2)
    kinds = [a.kind for a in schema.attributes]
    names = schema.names
    pos = schema.class_position
    intern = sys.intern
    for line_number, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) not in allowed:
            raise FieldCountError(line_number, len(fields), allowed)
        label = fields[pos].strip()
        raw_values = fields[:pos] + fields[pos + 1:n_attr + 1]
        values = []
        for kind, name, raw in zip(kinds, names, raw_values):
            raw = raw.strip()
            if kind is Kind.NUMERIC:
                try:
                    v = float(raw)
                except ValueError:
                    raise NonFiniteValueError(line_number, name, raw) from None
                if not math.isfinite(v):
                    raise NonFiniteValueError(line_number, name, raw)
                values.append(v)
            else:
                values.append(intern(raw))
        try:
            yield make_record(values, label, category_map)
        except UnknownLabelError:
            raise UnknownLabelError(label, line_number) from None


def parse_dataset(source: Iterable[str], schema: AttributeSchema = NSL_KDD_SCHEMA,
                  category_map: CategoryMap | None = None) -> LabeledDataset:
    """Parse comma separated connection lines into a LabeledDataset.

    Blank lines are skipped. Raises FieldCountError, NonFiniteValueError or
    UnknownLabelError with the offending line number.
    """
    cmap = category_map if category_map is not None else CategoryMap.default()
    return LabeledDataset(schema, tuple(_parse_lines(source, schema, cmap)))


def load_dataset(path: str | os.PathLike, schema: AttributeSchema = NSL_KDD_SCHEMA,
                 category_map: CategoryMap | None = None) -> LabeledDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh, schema, category_map)


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def format_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_record(record: ConnectionRecord, schema: AttributeSchema) -> str:
    fields = [format_number(v) if a.kind is Kind.NUMERIC else v
              for a, v in zip(schema.attributes, record.values)]
    fields.insert(schema.class_position, record.raw_label)
    return ",".join(fields)


def write_dataset(d: LabeledDataset, stream: TextIO) -> None:
    for r in d.records:
        stream.write(format_record(r, d.schema))
        stream.write("\n")


# -- sampling ---------------------------------------------------------------

class Strata(Enum):
    BINARY_CLASS = "binary"
    CATEGORY = "category"


def _stratum_of(record: ConnectionRecord, strata: Strata):
    return record.binary_class if strata is Strata.BINARY_CLASS else record.category


def _group_indices(d: LabeledDataset, strata: Strata) -> dict:
    order = list(BinaryClass) if strata is Strata.BINARY_CLASS else list(Category)
    groups: dict = {k: [] for k in order}
    for i, r in enumerate(d.records):
        groups[_stratum_of(r, strata)].append(i)
    return {k: v for k, v in groups.items() if v}


def allocate_proportional(sizes: Sequence[int], total: int) -> list[int]:
    """Largest-remainder allocation of `total` across strata of `sizes`.

    Every share is within one of its exact proportional value.
    """
    population = sum(sizes)
    if population == 0:
        return [0] * len(sizes)
    exact = [total * s / population for s in sizes]
    shares = [min(int(math.floor(e)), s) for e, s in zip(exact, sizes)]
    short = total - sum(shares)
    ranked = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - shares[i]), i))
    for i in ranked:
        if short == 0:
            break
        if shares[i] < sizes[i]:
            shares[i] += 1
            short -= 1
    return shares


def stratified_sample(d: LabeledDataset, target_size: int | None = None,
                      strata: Strata = Strata.BINARY_CLASS, seed: int = 0,
                      quotas: Mapping | None = None) -> LabeledDataset:
    """Draw a seeded stratified sample.

    Proportional mode (``target_size``): each stratum keeps its population
    share to within one record. Quota mode (``quotas``): exactly
    ``quotas[stratum]`` records from each listed stratum; strata not listed
    are left out.
    """
    rng = np.random.default_rng(seed)
    groups = _group_indices(d, strata)
    if quotas is not None:
        wanted = {}
        for key, count in quotas.items():
            available = len(groups.get(key, ()))
            if count > available:
                raise StratumTooSmallError(getattr(key, "value", str(key)), available, count)
            wanted[key] = count
        keys = [k for k in groups if k in wanted] + [k for k in wanted if k not in groups]
        shares = [wanted[k] for k in keys]
    else:
        if target_size is None:
            raise ValueError("either target_size or quotas is required")
        if not 0 <= target_size <= len(d):
            raise ValueError(f"target_size {target_size} exceeds dataset size {len(d)}")
        keys = list(groups)
        shares = allocate_proportional([len(groups[k]) for k in keys], target_size)
    chosen: list[int] = []
    for key, share in zip(keys, shares):
        idx = np.asarray(groups.get(key, []), dtype=np.int64)
        chosen.extend(idx[rng.permutation(len(idx))[:share]].tolist())
    order = rng.permutation(len(chosen))
    return d.subset(chosen[i] for i in order)


def uniform_sample(d: LabeledDataset, target_size: int, seed: int = 0) -> LabeledDataset:
    if not 0 <= target_size <= len(d):
        raise ValueError(f"target_size {target_size} exceeds dataset size {len(d)}")
    rng = np.random.default_rng(seed)
    return d.subset(rng.choice(len(d), size=target_size, replace=False).tolist())


def train_test_split(d: LabeledDataset, train_fraction: float, seed: int = 0,
                     strata: Strata = Strata.BINARY_CLASS) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split; train receives round(fraction * |d|) records."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    groups = _group_indices(d, strata)
    keys = list(groups)
    shares = allocate_proportional([len(groups[k]) for k in keys], round(train_fraction * len(d)))
    train, test = [], []
    for key, share in zip(keys, shares):
        idx = np.asarray(groups[key], dtype=np.int64)
        perm = idx[rng.permutation(len(idx))].tolist()
        train.extend(perm[:share])
        test.extend(perm[share:])
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    return d.subset(train), d.subset(test)


# -- discretization -----------------------------------------------------------

@dataclass(frozen=True)
class DiscretizationModel:
    """Per numeric attribute, strictly increasing bin boundaries.

    A value v falls in bin ``bisect_left(boundaries, v)``; values beyond the
    training range land in the first or last bin.
    """
    boundaries: Mapping[int, tuple[float, ...]]

    def n_bins(self, attribute: int) -> int:
        return len(self.boundaries[attribute]) + 1

    def bin_index(self, attribute: int, value: float) -> int:
        return bisect.bisect_left(self.boundaries[attribute], value)


def equal_frequency_boundaries(values: Sequence[float], bins: int) -> tuple[float, ...]:
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n == 0:
        return ()
    top = v[-1]
    out: list[float] = []
    for q in range(1, bins):
        pos = (q * n) // bins
        if pos <= 0 or pos >= n:
            continue
        b = (v[pos - 1] + v[pos]) / 2.0
        if b < top and (not out or b > out[-1]):
            out.append(float(b))
    return tuple(out)


def fit_discretizer(train: LabeledDataset, bins: int = 10) -> DiscretizationModel:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if len(train) == 0:
        raise ValueError("cannot fit a discretizer on an empty dataset")
    return DiscretizationModel({
        j: equal_frequency_boundaries(train.column(j), bins) for j in train.schema.numeric_indices
    })


# -- real-valued encoding -------------------------------------------------------

@dataclass(frozen=True)
class FeatureEncoder:
    """One-hot for categoricals (plus a shared unseen column), min-max for numerics."""
    schema: AttributeSchema
    categories: Mapping[int, tuple[str, ...]]
    ranges: Mapping[int, tuple[float, float]]
    _slots: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        slots, offset = {}, 0
        for j, attr in enumerate(self.schema.attributes):
            if attr.kind is Kind.CATEGORICAL:
                vocab = self.categories[j]
                slots[j] = (offset, {v: k for k, v in enumerate(vocab)}, len(vocab))
                offset += len(vocab) + 1
            else:
                slots[j] = (offset, None, 1)
                offset += 1
        object.__setattr__(self, "_slots", slots)
        object.__setattr__(self, "dimension", offset)

    def column_names(self) -> list[str]:
        names = []
        for j, attr in enumerate(self.schema.attributes):
            if attr.kind is Kind.CATEGORICAL:
                names.extend(f"{attr.name}={v}" for v in self.categories[j])
                names.append(f"{attr.name}=<unseen>")
            else:
                names.append(attr.name)
        return names

    def transform_values(self, values: Sequence, out: np.ndarray | None = None) -> np.ndarray:
        row = np.zeros(self.dimension) if out is None else out
        for j, (offset, vocab, width) in self._slots.items():
            v = values[j]
            if vocab is not None:
                row[offset + vocab.get(v, width)] = 1.0
            else:
                lo, hi = self.ranges[j]
                if hi > lo:
                    row[offset] = min(1.0, max(0.0, (v - lo) / (hi - lo)))
        return row


@dataclass(frozen=True)
class EncodedDataset:
    matrix: np.ndarray
    target: np.ndarray
    encoder: FeatureEncoder


def fit_encoder(train: LabeledDataset) -> FeatureEncoder:
    categories, ranges = {}, {}
    for j, attr in enumerate(train.schema.attributes):
        col = train.column(j)
        if attr.kind is Kind.CATEGORICAL:
            categories[j] = tuple(sorted(set(col)))
        else:
            ranges[j] = (float(min(col)), float(max(col))) if col else (0.0, 0.0)
    return FeatureEncoder(train.schema, categories, ranges)


def encode(encoder: FeatureEncoder, d: LabeledDataset) -> EncodedDataset:
    check_schema(encoder.schema, d.schema)
    matrix = np.zeros((len(d), encoder.dimension))
    for i, r in enumerate(d.records):
        encoder.transform_values(r.values, matrix[i])
    return EncodedDataset(matrix, d.targets, encoder)
