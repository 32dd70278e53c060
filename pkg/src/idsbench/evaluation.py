"""Detection metrics, timing, and the two experiment protocols.

Attack is the positive class throughout. Rates are percentages; a rate
whose denominator is zero is reported as ``None`` rather than 0 or 100.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from .dataset import (
    ATTACK_CATEGORIES,
    BinaryClass,
    Category,
    LabeledDataset,
    Strata,
    StratumTooSmallError,
    stratified_sample,
    train_test_split,
)
from .models import ALGORITHMS, TrainParams, normalize_algorithm, train_model

CSV_HEADER = "algorithm,connections,tpr,fpr,fnr,accuracy,train_s,classify_s"
METRIC_FIELDS = ("tpr", "fpr", "fnr", "accuracy")
TIME_FIELDS = ("train_s", "classify_s")


class InfeasibleSweepError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions: Sequence[BinaryClass], truths: Sequence[BinaryClass]) -> ConfusionMatrix:
    if len(predictions) != len(truths):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, {len(truths)} truths")
    if len(truths) == 0:
        raise ValueError("need at least one prediction")
    p = np.fromiter((x is BinaryClass.ATTACK for x in predictions), dtype=bool, count=len(predictions))
    t = np.fromiter((x is BinaryClass.ATTACK for x in truths), dtype=bool, count=len(truths))
    return ConfusionMatrix(tp=int((p & t).sum()), fp=int((p & ~t).sum()),
                           tn=int((~p & ~t).sum()), fn=int((~p & t).sum()))


def _percent(num: int, den: int) -> float | None:
    return None if den == 0 else 100.0 * num / den


def tpr(cm: ConfusionMatrix) -> float | None:
    return _percent(cm.tp, cm.tp + cm.fn)


def fpr(cm: ConfusionMatrix) -> float | None:
    return _percent(cm.fp, cm.fp + cm.tn)


def fnr(cm: ConfusionMatrix) -> float | None:
    return _percent(cm.fn, cm.tp + cm.fn)


def accuracy(cm: ConfusionMatrix) -> float | None:
    return _percent(cm.tp + cm.tn, cm.total)


def measure_time(action: Callable[[], object]) -> float:
    """Wall-clock seconds spent in ``action()`` on the monotonic clock."""
    return timed(action)[1]


def timed(action: Callable[[], object]) -> tuple[object, float]:
    start = time.perf_counter()
    result = action()
    return result, max(0.0, time.perf_counter() - start)


# -- connection-count sweep -------------------------------------------------------

@dataclass(frozen=True)
class MetricsRow:
    algorithm: str
    connections: int
    tpr: float | None
    fpr: float | None
    fnr: float | None
    accuracy: float | None
    train_time: float
    classify_time: float

    @classmethod
    def from_confusion(cls, algorithm: str, connections: int, cm: ConfusionMatrix,
                       train_time: float, classify_time: float) -> "MetricsRow":
        return cls(algorithm, connections, tpr(cm), fpr(cm), fnr(cm), accuracy(cm),
                   train_time, classify_time)

    def metrics(self) -> tuple:
        return self.algorithm, self.connections, self.tpr, self.fpr, self.fnr, self.accuracy


@dataclass(frozen=True)
class SweepConfig:
    connection_counts: tuple[int, ...]
    algorithms: tuple[str, ...] = ALGORITHMS
    train_fraction: float = 0.66
    seed: int = 0
    params: TrainParams = field(default_factory=TrainParams)

    def __post_init__(self):
        object.__setattr__(self, "connection_counts", tuple(int(c) for c in self.connection_counts))
        object.__setattr__(self, "algorithms", tuple(normalize_algorithm(a) for a in self.algorithms))
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint32)[0])


def check_sweep(d: LabeledDataset, cfg: SweepConfig) -> None:
    counts = cfg.connection_counts
    if not counts:
        raise InfeasibleSweepError("no connection counts given")
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise InfeasibleSweepError(f"connection counts must be strictly increasing: {list(counts)}")
    if counts[0] < 2:
        raise InfeasibleSweepError("connection counts must be >= 2")
    if counts[-1] > len(d):
        raise InfeasibleSweepError(
            f"connection count {counts[-1]} exceeds the {len(d)} available records")
    if not cfg.algorithms:
        raise InfeasibleSweepError("no algorithms selected")


def sweep_split(d: LabeledDataset, n: int, cfg: SweepConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded stratified sample of n records, then a stratified train/test split.

    Every connection count draws independently of the others.
    """
    sample = stratified_sample(d, n, Strata.BINARY_CLASS, seed=derive_seed(cfg.seed, n, 0))
    return train_test_split(sample, cfg.train_fraction, seed=derive_seed(cfg.seed, n, 1))


def run_cell(d: LabeledDataset, cfg: SweepConfig, n: int, algorithm: str) -> MetricsRow:
    train, test = sweep_split(d, n, cfg)
    params = cfg.params.reseeded(derive_seed(cfg.seed, n, 2 + ALGORITHMS.index(algorithm)))
    model, train_time = timed(lambda: train_model(algorithm, train, params))
    predictions, classify_time = timed(lambda: model.predict_dataset(test))
    truths = [r.binary_class for r in test.records]
    return MetricsRow.from_confusion(algorithm, n, confusion(predictions, truths),
                                     train_time, classify_time)


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(d: LabeledDataset, cfg: SweepConfig, jobs: int = 1) -> list[MetricsRow]:
    """One MetricsRow per (connection count, algorithm), in that order."""
    check_sweep(d, cfg)
    cells = [(d, cfg, n, a) for n in cfg.connection_counts for a in cfg.algorithms]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_args, cells))
    return [run_cell(*cell) for cell in cells]


def _fmt_metric(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def format_row(row: MetricsRow) -> str:
    return ",".join([row.algorithm, str(row.connections), *(_fmt_metric(getattr(row, f)) for f in METRIC_FIELDS),
                     f"{row.train_time:.3f}", f"{row.classify_time:.3f}"])


def write_report_csv(rows: Sequence[MetricsRow], stream: TextIO) -> None:
    stream.write(CSV_HEADER + "\n")
    for row in rows:
        stream.write(format_row(row) + "\n")


def read_report_csv(stream: TextIO) -> list[MetricsRow]:
    lines = [ln.strip() for ln in stream if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a benchmark report: header mismatch")
    rows = []
    for ln in lines[1:]:
        f = ln.split(",")
        if len(f) != 8:
            raise ValueError(f"malformed report row: {ln!r}")

        def opt(s):
            return None if s == "" else float(s)
        rows.append(MetricsRow(f[0], int(f[1]), opt(f[2]), opt(f[3]), opt(f[4]), opt(f[5]),
                               float(f[6]), float(f[7])))
    return rows


PLOT_FIELDS = {"tpr": "tpr", "fpr": "fpr", "fnr": "fnr", "accuracy": "accuracy",
               "train_s": "train_time", "classify_s": "classify_time"}


def plot_tables(rows: Sequence[MetricsRow]) -> dict[str, str]:
    """One whitespace-separated table per metric: rows = counts, columns = algorithms."""
    algorithms = list(dict.fromkeys(r.algorithm for r in rows))
    counts = sorted({r.connections for r in rows})
    cell = {(r.connections, r.algorithm): r for r in rows}
    tables = {}
    for name, attr in PLOT_FIELDS.items():
        lines = ["# connections " + " ".join(algorithms)]
        for n in counts:
            vals = []
            for a in algorithms:
                r = cell.get((n, a))
                v = None if r is None else getattr(r, attr)
                vals.append("nan" if v is None else (f"{v:.3f}" if name.endswith("_s") else f"{v:.6f}"))
            lines.append(f"{n} " + " ".join(vals))
        tables[name] = "\n".join(lines) + "\n"
    return tables


# -- per-category experiment ----------------------------------------------------------

@dataclass(frozen=True)
class CategoryReport:
    accuracies: dict[Category, dict[str, float | None]]
    instance_counts: dict[Category, int]
    test_counts: dict[Category, int]
    train_size: int
    background_normals: int
    include_normal: bool
    algorithms: tuple[str, ...]

    @property
    def total_instances(self) -> int:
        return sum(self.instance_counts.values())

    def to_csv(self) -> str:
        lines = ["category,instances,test_instances," + ",".join(self.algorithms)]
        for cat, row in self.accuracies.items():
            cells = [_fmt_metric(row[a]) for a in self.algorithms]
            lines.append(f"{cat.value},{self.instance_counts[cat]},{self.test_counts[cat]}," + ",".join(cells))
        return "\n".join(lines) + "\n"


def _category_split(indices: list[int], fraction: float, rng: np.random.Generator
                    ) -> tuple[list[int], list[int]]:
    perm = [indices[i] for i in rng.permutation(len(indices))]
    q = len(perm)
    if q == 1:
        # a lone instance cannot be split: it serves as both train and test
        return perm, perm
    n_train = min(max(round(fraction * q), 1), q - 1)
    return perm[:n_train], perm[n_train:]


def run_category_experiment(d: LabeledDataset, per_category: int, include_normal: bool = False,
                            seed: int = 0, algorithms: Sequence[str] = ALGORITHMS,
                            train_fraction: float = 0.66,
                            params: TrainParams | None = None) -> CategoryReport:
    """Per-category detection accuracy on a quota sample.

    ``per_category`` instances are drawn from each attack category (and from
    Normal when ``include_normal``). Each category's instances are split
    into train and test parts. Without Normal instances the binary
    classifiers would see one class only, so training then adds Normal
    background records (drawn from outside the sample) equal in number to
    the attack training records. Accuracy per attack category is the share
    of its test instances classified Attack; for Normal, classified Normal.
    """
    if per_category < 1:
        raise ValueError("per_category must be >= 1")
    algorithms = tuple(normalize_algorithm(a) for a in algorithms)
    params = (params or TrainParams()).reseeded(derive_seed(seed, 2))
    categories = list(ATTACK_CATEGORIES) + ([Category.NORMAL] if include_normal else [])
    quotas = {c: per_category for c in categories}
    sample = stratified_sample(d, strata=Strata.CATEGORY, seed=derive_seed(seed, 0), quotas=quotas)

    rng = np.random.default_rng(derive_seed(seed, 1))
    by_cat: dict[Category, list[int]] = {c: [] for c in categories}
    for i, r in enumerate(sample.records):
        by_cat[r.category].append(i)
    train_idx, test_idx = [], {}
    for c in categories:
        tr, te = _category_split(by_cat[c], train_fraction, rng)
        train_idx.extend(tr)
        test_idx[c] = te
    train_records = [sample.records[i] for i in train_idx]

    background = 0
    if not include_normal:
        used = set(id(r) for r in sample.records)
        normals = [r for r in d.records if r.category is Category.NORMAL and id(r) not in used]
        background = len(train_records)
        if background > len(normals):
            raise StratumTooSmallError(Category.NORMAL.value, len(normals), background)
        pick = rng.permutation(len(normals))[:background]
        train_records.extend(normals[i] for i in sorted(pick.tolist()))
    order = rng.permutation(len(train_records))
    train = LabeledDataset(d.schema, tuple(train_records[i] for i in order))

    accuracies: dict[Category, dict[str, float | None]] = {c: {} for c in categories}
    for a in algorithms:
        model = train_model(a, train, params)
        for c in categories:
            test = sample.subset(test_idx[c])
            if len(test) == 0:
                accuracies[c][a] = None
                continue
            preds = model.predict_dataset(test)
            correct = sum(p is r.binary_class for p, r in zip(preds, test.records))
            accuracies[c][a] = 100.0 * correct / len(test)
    return CategoryReport(
        accuracies=accuracies,
        instance_counts={c: len(by_cat[c]) for c in categories},
        test_counts={c: len(test_idx[c]) for c in categories},
        train_size=len(train),
        background_normals=background,
        include_normal=include_normal,
        algorithms=algorithms,
    )
