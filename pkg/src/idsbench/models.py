"""Uniform train / predict / save / load surface over the four classifiers."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Protocol

from . import dtree, nb, rforest, svm
from .dataset import BinaryClass, ConnectionRecord, LabeledDataset
from .textformat import ModelFormatError

ALGORITHMS = ("NB", "DT", "SVM", "RF")


class Classifier(Protocol):
    schema: object

    def predict(self, record: ConnectionRecord) -> BinaryClass: ...

    def predict_dataset(self, d: LabeledDataset) -> list[BinaryClass]: ...

    def decision_details(self, record: ConnectionRecord) -> dict[str, float]: ...

    def dumps(self) -> str: ...


@dataclass(frozen=True)
class TrainParams:
    nb_smoothing: float = 1.0
    nb_bins: int = 10
    svm: svm.SVMTrainConfig = field(default_factory=svm.SVMTrainConfig)
    forest: rforest.ForestConfig = field(default_factory=rforest.ForestConfig)

    def reseeded(self, seed: int) -> "TrainParams":
        return replace(self, svm=replace(self.svm, seed=seed), forest=replace(self.forest, seed=seed))


def normalize_algorithm(name: str) -> str:
    key = name.strip().upper()
    if key not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    return key


def train_model(algorithm: str, train: LabeledDataset, params: TrainParams | None = None,
                jobs: int = 1) -> Classifier:
    params = params or TrainParams()
    algorithm = normalize_algorithm(algorithm)
    if algorithm == "NB":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", nb.DegenerateModelWarning)
            return nb.train_nb(train, params.nb_smoothing, params.nb_bins)
    if algorithm == "DT":
        return dtree.train_tree(train)
    if algorithm == "SVM":
        return svm.train_svm_classifier(train, params.svm)
    return rforest.build_forest(train, params.forest, jobs=jobs)


def algorithm_of(model) -> str:
    if isinstance(model, nb.NBModel):
        return "NB"
    if isinstance(model, dtree.DecisionTree):
        return "DT"
    if isinstance(model, svm.SVMModel):
        return "SVM"
    if isinstance(model, rforest.ForestModel):
        return "RF"
    raise TypeError(f"not a classifier: {type(model).__name__}")


_LOADERS = {
    nb.MAGIC: nb.loads,
    dtree.MAGIC: dtree.loads,
    svm.MAGIC: svm.loads,
    rforest.MAGIC: rforest.loads,
}


def loads_model(text: str) -> Classifier:
    magic = text.split("\t", 1)[0].split("\n", 1)[0]
    try:
        loader = _LOADERS[magic]
    except KeyError:
        raise ModelFormatError(f"unrecognized model file header {magic!r}") from None
    return loader(text)


def load_model(path: str | os.PathLike) -> Classifier:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
