"""Random forest of bagged, unpruned gain-ratio trees with majority voting."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import AttributeSchema, BinaryClass, ConnectionRecord, LabeledDataset, check_schema
from .dtree import (
    EmptyDatasetError,
    TreeBuilder,
    TreeNode,
    _Table,
    classify_tree,
    parse_tree_lines,
    tree_lines,
)
from .textformat import LineReader, ModelFormatError, read_header, read_schema, schema_lines

MAGIC = "idsbench-forest"
VERSION = 1

AUTO = "auto"
ALL = "all"


@dataclass(frozen=True)
class ForestConfig:
    number_of_trees: int = 10
    #: an explicit count, "auto" for floor(log2 M) + 1, or "all" for M
    number_of_features: int | str = AUTO
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.number_of_trees < 1:
            raise ValueError("number_of_trees must be >= 1")
        if isinstance(self.number_of_features, str) and self.number_of_features not in (AUTO, ALL):
            raise ValueError(f"number_of_features must be a count, {AUTO!r} or {ALL!r}")


def resolve_feature_count(M: int, cfg: ForestConfig | int | str = AUTO) -> int:
    """floor(log2 M) + 1 for "auto"; explicit counts are clamped to [1, M]."""
    if M < 1:
        raise ValueError("M must be >= 1")
    k = cfg.number_of_features if isinstance(cfg, ForestConfig) else cfg
    if k == AUTO:
        # floor(log2 M) + 1 == bit length of M, exactly
        return int(M).bit_length()
    if k == ALL:
        return M
    return max(1, min(int(k), M))


def tree_seed(seed: int, index: int) -> int:
    """Per-tree seed: first 64-bit word of SeedSequence([seed, index])."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, n, size=n)


def bootstrap_sample(d: LabeledDataset, seed: int) -> LabeledDataset:
    if len(d) == 0:
        raise EmptyDatasetError("cannot bootstrap an empty dataset")
    return d.subset(bootstrap_indices(len(d), seed).tolist())


class RandomSubsetPicker:
    """Draws a fresh uniform subset of the candidate pool at every node."""

    def __init__(self, k: int, rng: np.random.Generator, record: bool = False):
        self.k = k
        self.rng = rng
        self.history: list[tuple[int, int]] | None = [] if record else None

    def __call__(self, pool: list[int]) -> list[int]:
        if self.k >= len(pool):
            chosen = list(pool)
        else:
            chosen = sorted(self.rng.choice(pool, size=self.k, replace=False).tolist())
        if self.history is not None:
            self.history.append((len(pool), len(chosen)))
        return chosen


def grow_tree(d: LabeledDataset, k: int, seed: int, bootstrap: bool = True,
              record: bool = False) -> tuple[TreeNode, RandomSubsetPicker]:
    sample = bootstrap_sample(d, seed) if bootstrap else d
    picker = RandomSubsetPicker(k, np.random.default_rng([seed, 1]), record)
    builder = TreeBuilder(_Table.from_dataset(sample), range(len(d.schema)), picker)
    return builder.build(), picker


def _grow_for_pool(args):
    d, k, seed, bootstrap = args
    return grow_tree(d, k, seed, bootstrap)[0]


@dataclass(frozen=True)
class ForestModel:
    schema: AttributeSchema
    trees: tuple[TreeNode, ...]
    seeds: tuple[int, ...]
    config: ForestConfig
    feature_count: int

    def predict(self, record: ConnectionRecord) -> BinaryClass:
        return predict_forest(self, record)[0]

    def predict_dataset(self, d: LabeledDataset) -> list[BinaryClass]:
        check_schema(self.schema, d.schema)
        return [predict_forest(self, r)[0] for r in d.records]

    def decision_details(self, record: ConnectionRecord) -> dict[str, float]:
        votes = predict_forest(self, record)[1]
        return {"votes_attack": votes[BinaryClass.ATTACK], "votes_normal": votes[BinaryClass.NORMAL]}

    def dumps(self) -> str:
        return dumps(self)


def build_forest(d: LabeledDataset, cfg: ForestConfig | None = None, jobs: int = 1) -> ForestModel:
    """Grow ``number_of_trees`` trees, each on its own bootstrap sample.

    Each tree i uses ``tree_seed(cfg.seed, i)`` for its bootstrap draw and
    a generator seeded with ``[tree_seed, 1]`` for the per-node attribute
    subsets, so the forest does not depend on ``jobs``.
    """
    cfg = cfg or ForestConfig()
    if len(d) == 0:
        raise EmptyDatasetError("cannot build a forest from an empty dataset")
    k = resolve_feature_count(len(d.schema), cfg)
    seeds = tuple(tree_seed(cfg.seed, i) for i in range(cfg.number_of_trees))
    tasks = [(d, k, s, cfg.bootstrap) for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trees = tuple(pool.map(_grow_for_pool, tasks))
    else:
        trees = tuple(_grow_for_pool(t) for t in tasks)
    return ForestModel(d.schema, trees, seeds, cfg, k)


def predict_forest(model: ForestModel, record: ConnectionRecord | Sequence
                   ) -> tuple[BinaryClass, dict[BinaryClass, int]]:
    """Majority vote over the trees; a tied vote goes to attack."""
    attack = sum(classify_tree(t, record) is BinaryClass.ATTACK for t in model.trees)
    votes = {BinaryClass.ATTACK: attack, BinaryClass.NORMAL: len(model.trees) - attack}
    label = BinaryClass.ATTACK if attack * 2 >= len(model.trees) else BinaryClass.NORMAL
    return label, votes


# -- serialization ----------------------------------------------------------------
#
# idsbench-forest <version>
# config <trees> <features setting> <bootstrap 0|1> <seed> <resolved features>
# schema/attr lines
# tree <index> <seed>   followed by the tree's node lines (see dtree)

def dumps(model: ForestModel) -> str:
    c = model.config
    out = [f"{MAGIC}\t{VERSION}",
           f"config\t{c.number_of_trees}\t{c.number_of_features}\t{int(c.bootstrap)}\t{c.seed}\t{model.feature_count}"]
    out += schema_lines(model.schema)
    for i, (seed, tree) in enumerate(zip(model.seeds, model.trees)):
        out.append(f"tree\t{i}\t{seed}")
        out += tree_lines(tree, model.schema.names)
    return "\n".join(out) + "\n"


def loads(text: str) -> ForestModel:
    r = LineReader(text)
    version = read_header(r, MAGIC)
    if version != VERSION:
        raise ModelFormatError(f"unsupported forest model version {version}")
    _, n_trees, features, bootstrap, seed, resolved = r.expect("config")
    features = features if features in (AUTO, ALL) else int(features)
    cfg = ForestConfig(int(n_trees), features, bool(int(bootstrap)), int(seed))
    schema = read_schema(r)
    trees, seeds = [], []
    for i in range(cfg.number_of_trees):
        _, idx, tseed = r.expect("tree")
        if int(idx) != i:
            raise ModelFormatError(f"tree {idx} out of order")
        seeds.append(int(tseed))
        trees.append(parse_tree_lines(r))
    return ForestModel(schema, tuple(trees), tuple(seeds), cfg, int(resolved))
