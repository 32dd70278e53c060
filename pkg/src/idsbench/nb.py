"""Naive Bayes over categorical and discretized numeric attributes.

All probabilities are held as natural logs; prediction adds log terms and
never multiplies raw probabilities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import (
    AttributeSchema,
    BinaryClass,
    ConnectionRecord,
    DiscretizationModel,
    Kind,
    LabeledDataset,
    check_schema,
    fit_discretizer,
)
from .textformat import LineReader, ModelFormatError, fmt, read_header, read_schema, schema_lines

MAGIC = "idsbench-nb"
VERSION = 1

#: Class order used for every (class, value) table: row 0 attack, row 1 normal.
CLASSES = (BinaryClass.ATTACK, BinaryClass.NORMAL)

#: Log-score gap below which two classes count as tied.
TIE_TOLERANCE = 1e-9


class DegenerateModelWarning(UserWarning):
    """Training data held a single class; the model always predicts it."""


@dataclass(frozen=True)
class NBModel:
    schema: AttributeSchema
    class_log_priors: np.ndarray
    conditional: tuple[np.ndarray, ...]
    vocabularies: Mapping[int, Mapping[str, int]]
    discretizer: DiscretizationModel
    smoothing: float
    degenerate: BinaryClass | None = None

    def value_index(self, attribute: int, value) -> int | None:
        vocab = self.vocabularies.get(attribute)
        if vocab is not None:
            return vocab.get(value)
        return self.discretizer.bin_index(attribute, value)

    def log_scores(self, values: Sequence) -> np.ndarray:
        scores = self.class_log_priors.copy()
        for k, table in enumerate(self.conditional):
            idx = self.value_index(k, values[k])
            if idx is not None:
                scores += table[:, idx]
        return scores

    def predict(self, record: ConnectionRecord) -> BinaryClass:
        return predict_nb(self, record)[0]

    def predict_dataset(self, d: LabeledDataset) -> list[BinaryClass]:
        check_schema(self.schema, d.schema)
        scores = self._score_matrix(d)
        return [_decide(s) for s in scores]

    def decision_details(self, record: ConnectionRecord) -> dict[str, float]:
        s = self.log_scores(record.values)
        return {"log_attack": float(s[0]), "log_normal": float(s[1])}

    def _score_matrix(self, d: LabeledDataset) -> np.ndarray:
        n = len(d)
        scores = np.tile(self.class_log_priors, (n, 1))
        for k, table in enumerate(self.conditional):
            idx = np.fromiter(
                (-1 if (i := self.value_index(k, r.values[k])) is None else i for r in d.records),
                dtype=np.int64, count=n,
            )
            seen = idx >= 0
            scores[seen] += table[:, idx[seen]].T
        return scores

    def dumps(self) -> str:
        return dumps(self)


def _decide(scores: np.ndarray) -> BinaryClass:
    s_attack, s_normal = float(scores[0]), float(scores[1])
    if s_attack == s_normal:
        return BinaryClass.ATTACK
    if math.isfinite(s_attack) and math.isfinite(s_normal):
        if abs(s_attack - s_normal) <= TIE_TOLERANCE * max(1.0, abs(s_attack), abs(s_normal)):
            return BinaryClass.ATTACK
    return BinaryClass.ATTACK if s_attack > s_normal else BinaryClass.NORMAL


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def train_nb(train: LabeledDataset, smoothing: float = 1.0, bins: int = 10,
             discretizer: DiscretizationModel | None = None) -> NBModel:
    """Fit class priors and per-attribute conditional tables.

    Conditionals use add-``smoothing`` estimates
    ``(count + a) / (class_count + a * V)`` where V is the size of the
    attribute's value domain: observed values for categoricals, bin count
    for discretized numerics.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    if discretizer is None:
        discretizer = fit_discretizer(train, bins)

    is_attack = train.attack_mask
    class_counts = np.array([is_attack.sum(), (~is_attack).sum()], dtype=float)
    priors = _log(class_counts / class_counts.sum())

    degenerate = None
    if class_counts.min() == 0:
        degenerate = BinaryClass.ATTACK if class_counts[0] > 0 else BinaryClass.NORMAL
        warnings.warn(
            f"training set holds only {degenerate.value} records; model always predicts it",
            DegenerateModelWarning, stacklevel=2,
        )

    vocabularies: dict[int, dict[str, int]] = {}
    tables = []
    row_of = np.where(is_attack, 0, 1)
    for k, attr in enumerate(train.schema.attributes):
        column = train.column(k)
        if attr.kind is Kind.CATEGORICAL:
            vocab = {v: i for i, v in enumerate(sorted(set(column)))}
            vocabularies[k] = vocab
            codes = np.fromiter((vocab[v] for v in column), dtype=np.int64, count=len(column))
            domain = len(vocab)
        else:
            codes = np.fromiter((discretizer.bin_index(k, v) for v in column),
                                dtype=np.int64, count=len(column))
            domain = discretizer.n_bins(k)
        counts = np.zeros((2, domain))
        np.add.at(counts, (row_of, codes), 1.0)
        tables.append(_conditional_table(counts, class_counts, smoothing))

    return NBModel(train.schema, priors, tuple(tables), vocabularies, discretizer,
                   float(smoothing), degenerate)


def _conditional_table(counts: np.ndarray, class_counts: np.ndarray, alpha: float) -> np.ndarray:
    domain = counts.shape[1]
    table = np.empty_like(counts)
    for c in range(2):
        denom = class_counts[c] + alpha * domain
        if denom == 0:
            # class absent and unsmoothed: any distribution works, its prior is -inf
            table[c] = -math.log(domain)
        else:
            table[c] = _log(counts[c] + alpha) - math.log(denom)
    return table


def predict_nb(model: NBModel, record: ConnectionRecord) -> tuple[BinaryClass, dict[BinaryClass, float]]:
    """Return the MAP class and the per-class log scores.

    The evidence term P(X) is shared by both classes and left out. Values
    outside an attribute's training domain contribute nothing; exact ties
    go to attack.
    """
    scores = model.log_scores(record.values)
    return _decide(scores), {c: float(s) for c, s in zip(CLASSES, scores)}


# -- serialization --------------------------------------------------------------
#
# idsbench-nb <version>
# smoothing <a>
# schema/attr lines
# prior <log P(attack)> <log P(normal)>
# degenerate <attack|normal|none>
# table <k> categorical <V>  then V lines: value <token> <log attack> <log normal>
# table <k> numeric <V>      then: bounds <b1> ... ; V lines: bin <i> <log attack> <log normal>

def dumps(model: NBModel) -> str:
    out = [f"{MAGIC}\t{VERSION}", f"smoothing\t{fmt(model.smoothing)}"]
    out += schema_lines(model.schema)
    out.append(f"prior\t{fmt(model.class_log_priors[0])}\t{fmt(model.class_log_priors[1])}")
    out.append(f"degenerate\t{model.degenerate.value if model.degenerate else 'none'}")
    for k, table in enumerate(model.conditional):
        domain = table.shape[1]
        if k in model.vocabularies:
            out.append(f"table\t{k}\tcategorical\t{domain}")
            for value, i in sorted(model.vocabularies[k].items(), key=lambda kv: kv[1]):
                out.append(f"value\t{value}\t{fmt(table[0, i])}\t{fmt(table[1, i])}")
        else:
            out.append(f"table\t{k}\tnumeric\t{domain}")
            out.append("\t".join(["bounds"] + [fmt(b) for b in model.discretizer.boundaries[k]]))
            for i in range(domain):
                out.append(f"bin\t{i}\t{fmt(table[0, i])}\t{fmt(table[1, i])}")
    return "\n".join(out) + "\n"


def loads(text: str) -> NBModel:
    r = LineReader(text)
    version = read_header(r, MAGIC)
    if version != VERSION:
        raise ModelFormatError(f"unsupported NB model version {version}")
    smoothing = float(r.expect("smoothing")[1])
    schema = read_schema(r)
    _, pa, pn = r.expect("prior")
    degenerate_tag = r.expect("degenerate")[1]
    degenerate = None if degenerate_tag == "none" else BinaryClass(degenerate_tag)
    vocabularies, boundaries, tables = {}, {}, []
    for k in range(len(schema)):
        _, idx, kind, domain = r.expect("table")
        if int(idx) != k:
            raise ModelFormatError(f"table for attribute {idx} out of order")
        domain = int(domain)
        table = np.empty((2, domain))
        if kind == "categorical":
            vocab = {}
            for i in range(domain):
                _, value, la, ln = r.expect("value")
                vocab[value] = i
                table[:, i] = (float(la), float(ln))
            vocabularies[k] = vocab
        else:
            boundaries[k] = tuple(float(b) for b in r.expect("bounds")[1:])
            for i in range(domain):
                _, _, la, ln = r.expect("bin")
                table[:, i] = (float(la), float(ln))
        tables.append(table)
    return NBModel(schema, np.array([float(pa), float(pn)]), tuple(tables), vocabularies,
                   DiscretizationModel(boundaries), smoothing, degenerate)
