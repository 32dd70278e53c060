"""C4.5-style decision tree induction with gain-ratio splits.

Categorical attributes split multiway over the values seen when the tree
was grown and are consumed along a path; numeric attributes split on a
binary ``<= threshold`` test and may be reused deeper down. Trees are not
pruned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .dataset import (
    AttributeSchema,
    BinaryClass,
    ConnectionRecord,
    Kind,
    LabeledDataset,
    check_schema,
)
from .textformat import LineReader, ModelFormatError, fmt, read_header, read_schema, schema_lines

MAGIC = "idsbench-tree"
VERSION = 1

#: Gains at or below this are treated as zero.
GAIN_EPSILON = 1e-12

#: Gain ratios closer than this count as tied (rounding can split exact ties).
TIE_EPSILON = 1e-12


class EmptyDatasetError(ValueError):
    pass


class EmptyCountsError(ValueError):
    pass


# -- information measures ---------------------------------------------------------

def info(counts: Sequence[float]) -> float:
    """Class entropy in bits, with 0 * log2(0) taken as 0."""
    c = np.asarray(counts, dtype=float)
    if (c < 0).any():
        raise ValueError("class counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise EmptyCountsError("info() needs at least one non-zero count")
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0


def _xlog2x(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p, dtype=float)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def _binary_entropy(attack: np.ndarray, total: np.ndarray) -> np.ndarray:
    p = attack / total
    return -(_xlog2x(p) + _xlog2x(1.0 - p))


@dataclass(frozen=True)
class SplitScore:
    gain: float
    split_info: float
    gain_ratio: float
    threshold: float | None = None
    degenerate: bool = False


DEGENERATE = SplitScore(0.0, 0.0, 0.0, None, True)


def score_partition(partition_counts: np.ndarray, threshold: float | None = None) -> SplitScore:
    """Score a split given a (partitions x classes) count matrix."""
    counts = np.asarray(partition_counts, dtype=float)
    sizes = counts.sum(axis=1)
    total = sizes.sum()
    if total <= 0:
        raise EmptyDatasetError("cannot score a split of an empty dataset")
    sizes = sizes[sizes > 0]
    counts = counts[counts.sum(axis=1) > 0]
    info_d = info(counts.sum(axis=0))
    weights = sizes / total
    info_a = float(sum(w * info(row) for w, row in zip(weights, counts)))
    gain = info_d - info_a
    split_info = float(-(_xlog2x(weights)).sum()) + 0.0
    if split_info <= 0:
        return SplitScore(gain, 0.0, 0.0, threshold, True)
    return SplitScore(gain, split_info, gain / split_info, threshold, False)


def _class_counts(is_attack: np.ndarray) -> tuple[int, int]:
    a = int(is_attack.sum())
    return a, len(is_attack) - a


def _numeric_scan(values: np.ndarray, is_attack: np.ndarray) -> tuple[float | None, SplitScore]:
    """Best midpoint threshold by gain ratio; ties keep the smallest threshold."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    a = is_attack[order].astype(float)
    n = len(v)
    cut = np.nonzero(v[1:] > v[:-1])[0]
    if len(cut) == 0:
        return None, DEGENERATE
    total_attack = a.sum()
    left_n = (cut + 1).astype(float)
    left_a = np.cumsum(a)[cut]
    right_n = n - left_n
    right_a = total_attack - left_a
    info_d = float(_binary_entropy(np.array([total_attack]), np.array([float(n)]))[0])
    info_a = (left_n * _binary_entropy(left_a, left_n) + right_n * _binary_entropy(right_a, right_n)) / n
    gain = info_d - info_a
    w = left_n / n
    split_info = -(_xlog2x(w) + _xlog2x(1.0 - w))
    ratio = gain / split_info
    best = int(np.nonzero(ratio >= ratio.max() - TIE_EPSILON)[0][0])
    lo, hi = v[cut[best]], v[cut[best] + 1]
    threshold = (lo + hi) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return float(threshold), SplitScore(float(gain[best]), float(split_info[best]),
                                        float(ratio[best]), float(threshold), False)


def best_numeric_threshold(d: LabeledDataset, attribute: int) -> tuple[float | None, SplitScore]:
    """Scan midpoints between consecutive distinct values of a numeric attribute."""
    if len(d) == 0:
        raise EmptyDatasetError("empty dataset")
    if d.schema.attributes[attribute].kind is not Kind.NUMERIC:
        raise ValueError(f"attribute {d.schema.attributes[attribute].name!r} is not numeric")
    values = np.asarray(d.column(attribute), dtype=float)
    return _numeric_scan(values, d.attack_mask)


def gain_ratio(d: LabeledDataset, attribute: int, threshold: float | None = None) -> SplitScore:
    if len(d) == 0:
        raise EmptyDatasetError("empty dataset")
    is_attack = d.attack_mask
    column = d.column(attribute)
    if d.schema.attributes[attribute].kind is Kind.NUMERIC:
        if threshold is None:
            return best_numeric_threshold(d, attribute)[1]
        left = np.asarray(column, dtype=float) <= threshold
        parts = np.array([[(is_attack & left).sum(), (~is_attack & left).sum()],
                          [(is_attack & ~left).sum(), (~is_attack & ~left).sum()]])
        return score_partition(parts, threshold)
    table: dict = {}
    for v, att in zip(column, is_attack):
        row = table.setdefault(v, [0, 0])
        row[0 if att else 1] += 1
    return score_partition(np.array(list(table.values())))


# -- tree structure ---------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    label: BinaryClass
    counts: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class CategoricalSplit:
    attribute: int
    branches: Mapping[str, "TreeNode"]
    majority: BinaryClass
    counts: tuple[int, int]


@dataclass(frozen=True)
class NumericSplit:
    attribute: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    majority: BinaryClass
    counts: tuple[int, int]


TreeNode = Union[Leaf, CategoricalSplit, NumericSplit]


def majority_class(counts: tuple[int, int]) -> BinaryClass:
    # equal counts go to attack
    return BinaryClass.ATTACK if counts[0] >= counts[1] else BinaryClass.NORMAL


def classify_tree(root: TreeNode, record: ConnectionRecord | Sequence) -> BinaryClass:
    values = record.values if isinstance(record, ConnectionRecord) else record
    node = root
    while True:
        if isinstance(node, Leaf):
            return node.label
        if isinstance(node, NumericSplit):
            node = node.left if values[node.attribute] <= node.threshold else node.right
        else:
            child = node.branches.get(values[node.attribute])
            if child is None:
                return node.majority
            node = child


def iter_nodes(root: TreeNode) -> Iterable[tuple[int, TreeNode]]:
    """Pre-order (depth, node) pairs without recursion."""
    stack = [(0, root)]
    while stack:
        depth, node = stack.pop()
        yield depth, node
        if isinstance(node, NumericSplit):
            stack.append((depth + 1, node.right))
            stack.append((depth + 1, node.left))
        elif isinstance(node, CategoricalSplit):
            for child in reversed(list(node.branches.values())):
                stack.append((depth + 1, child))


def tree_depth(root: TreeNode) -> int:
    return max(depth for depth, _ in iter_nodes(root))


def tree_size(root: TreeNode) -> int:
    return sum(1 for _ in iter_nodes(root))


# -- induction ----------------------------------------------------------------------

@dataclass
class _Table:
    """Column-major view of a dataset; categoricals become vocabulary codes."""
    X: np.ndarray
    is_attack: np.ndarray
    kinds: list[Kind]
    vocab: dict[int, tuple[str, ...]]

    @classmethod
    def from_dataset(cls, d: LabeledDataset) -> "_Table":
        kinds = [a.kind for a in d.schema.attributes]
        X = np.empty((len(d), len(kinds)))
        vocab = {}
        for j, kind in enumerate(kinds):
            column = d.column(j)
            if kind is Kind.CATEGORICAL:
                values = tuple(sorted(set(column)))
                code = {v: i for i, v in enumerate(values)}
                X[:, j] = [code[v] for v in column]
                vocab[j] = values
            else:
                X[:, j] = column
        return cls(X, d.attack_mask, kinds, vocab)


CandidatePicker = Callable[[list[int]], list[int]]


@dataclass
class _Frame:
    idx: np.ndarray
    categoricals: frozenset
    split: tuple | None = None
    tasks: list = field(default_factory=list)
    children: list = field(default_factory=list)


class TreeBuilder:
    """Grows one tree. ``picker`` narrows each node's candidate attributes."""

    def __init__(self, table: _Table, attribute_list: Sequence[int],
                 picker: CandidatePicker | None = None):
        self.table = table
        self.attribute_list = sorted(attribute_list)
        self.picker = picker

    def score(self, idx: np.ndarray, attribute: int) -> SplitScore:
        t = self.table
        col = t.X[idx, attribute]
        y = t.is_attack[idx]
        if t.kinds[attribute] is Kind.NUMERIC:
            return _numeric_scan(col, y)[1]
        codes = col.astype(np.int64)
        width = len(t.vocab[attribute])
        attack = np.bincount(codes[y], minlength=width)
        total = np.bincount(codes, minlength=width)
        return score_partition(np.column_stack([attack, total - attack]))

    def choose(self, idx: np.ndarray, candidates: list[int]) -> tuple[int, SplitScore] | None:
        best = None
        for a in candidates:
            s = self.score(idx, a)
            if best is None or s.gain_ratio > best[1].gain_ratio + TIE_EPSILON:
                best = (a, s)
        if best is None or best[1].gain <= GAIN_EPSILON:
            return None
        return best

    def _expand(self, frame: _Frame) -> Leaf | None:
        t = self.table
        idx = frame.idx
        counts = _class_counts(t.is_attack[idx])
        if counts[0] == 0 or counts[1] == 0:
            return Leaf(majority_class(counts), counts)
        majority = majority_class(counts)
        pool = [a for a in self.attribute_list
                if t.kinds[a] is Kind.NUMERIC or a in frame.categoricals]
        if not pool:
            return Leaf(majority, counts)
        candidates = self.picker(pool) if self.picker is not None else pool
        choice = self.choose(idx, sorted(candidates))
        if choice is None:
            return Leaf(majority, counts)
        a, score = choice
        col = t.X[idx, a]
        empty = Leaf(majority, (0, 0))
        if t.kinds[a] is Kind.NUMERIC:
            left = col <= score.threshold
            frame.split = ("numeric", a, score.threshold, majority, counts)
            frame.tasks = [(idx[left], frame.categoricals), (idx[~left], frame.categoricals)]
        else:
            remaining = frame.categoricals - {a}
            codes = col.astype(np.int64)
            frame.split = ("categorical", a, None, majority, counts)
            frame.tasks = []
            for k in range(len(t.vocab[a])):
                sub = idx[codes == k]
                frame.tasks.append((sub, remaining) if len(sub) else empty)
        return None

    def _assemble(self, frame: _Frame) -> TreeNode:
        kind, a, threshold, majority, counts = frame.split
        if kind == "numeric":
            left, right = frame.children
            return NumericSplit(a, threshold, left, right, majority, counts)
        branches = dict(zip(self.table.vocab[a], frame.children))
        return CategoricalSplit(a, branches, majority, counts)

    def build(self, idx: np.ndarray | None = None) -> TreeNode:
        if idx is None:
            idx = np.arange(len(self.table.is_attack))
        if len(idx) == 0:
            raise EmptyDatasetError("cannot build a tree from an empty dataset")
        cats = frozenset(a for a in self.attribute_list if self.table.kinds[a] is Kind.CATEGORICAL)
        stack = [_Frame(idx, cats)]
        result = None

        def deliver(node):
            nonlocal result
            if stack:
                stack[-1].children.append(node)
            else:
                result = node

        while stack:
            frame = stack[-1]
            if frame.split is None:
                leaf = self._expand(frame)
                if leaf is not None:
                    stack.pop()
                    deliver(leaf)
                    continue
            if len(frame.children) < len(frame.tasks):
                task = frame.tasks[len(frame.children)]
                if isinstance(task, Leaf):
                    frame.children.append(task)
                else:
                    stack.append(_Frame(*task))
                continue
            stack.pop()
            deliver(self._assemble(frame))
        return result


def build_tree(d: LabeledDataset, attribute_list: Sequence[int] | None = None) -> TreeNode:
    """Grow an unpruned tree choosing, at each node, the highest gain ratio.

    Stops at pure nodes, when no attributes remain, or when no candidate
    has positive gain. Equal gain ratios go to the lowest attribute index.
    """
    if len(d) == 0:
        raise EmptyDatasetError("cannot build a tree from an empty dataset")
    attrs = range(len(d.schema)) if attribute_list is None else attribute_list
    return TreeBuilder(_Table.from_dataset(d), attrs).build()


@dataclass(frozen=True)
class DecisionTree:
    schema: AttributeSchema
    root: TreeNode

    def predict(self, record: ConnectionRecord) -> BinaryClass:
        return classify_tree(self.root, record)

    def predict_dataset(self, d: LabeledDataset) -> list[BinaryClass]:
        check_schema(self.schema, d.schema)
        return [classify_tree(self.root, r) for r in d.records]

    def decision_details(self, record: ConnectionRecord) -> dict[str, float]:
        return {}

    def dumps(self) -> str:
        return dumps(self)


def train_tree(d: LabeledDataset) -> DecisionTree:
    return DecisionTree(d.schema, build_tree(d))


# -- text format ------------------------------------------------------------------
#
# One node per line, indented two spaces per depth:
#   <indent><edge>\tleaf\t<class>\t<attack count>\t<normal count>
#   <indent><edge>\tnumeric\t<attr>\t<threshold>\t<majority>\t<attack>\t<normal>
#   <indent><edge>\tcategorical\t<attr>\t<branches>\t<majority>\t<attack>\t<normal>
# where <edge> is "root", "<=", ">" or "=<value>". Children follow their parent.

def tree_lines(root: TreeNode, names: Sequence[str] | None = None) -> list[str]:
    lines = []
    stack = [(0, "root", root)]
    while stack:
        depth, edge, node = stack.pop()
        pad = "  " * depth
        if isinstance(node, Leaf):
            lines.append(f"{pad}{edge}\tleaf\t{node.label.value}\t{node.counts[0]}\t{node.counts[1]}")
            continue
        tail = f"{node.majority.value}\t{node.counts[0]}\t{node.counts[1]}"
        label = f"\t{names[node.attribute]}" if names else ""
        if isinstance(node, NumericSplit):
            lines.append(f"{pad}{edge}\tnumeric\t{node.attribute}\t{fmt(node.threshold)}\t{tail}{label}")
            stack.append((depth + 1, ">", node.right))
            stack.append((depth + 1, "<=", node.left))
        else:
            lines.append(f"{pad}{edge}\tcategorical\t{node.attribute}\t{len(node.branches)}\t{tail}{label}")
            for value, child in reversed(list(node.branches.items())):
                stack.append((depth + 1, f"={value}", child))
    return lines


def parse_tree_lines(reader: LineReader) -> TreeNode:
    """Read one serialized tree from the reader's current position."""

    def read_node():
        try:
            parts = next(reader)
        except StopIteration:
            raise ModelFormatError("truncated tree") from None
        edge = parts[0].lstrip(" ")
        return edge, parts[1:]

    edge, parts = read_node()
    if edge != "root":
        raise ModelFormatError(f"line {reader.pos}: expected tree root, found {edge!r}")
    # stack entries: [kind, attr, param, majority, counts, expected, edges, children]
    stack: list = []
    result = None

    def open_or_leaf(parts):
        kind = parts[0]
        if kind == "leaf":
            return Leaf(BinaryClass(parts[1]), (int(parts[2]), int(parts[3])))
        majority = BinaryClass(parts[3])
        counts = (int(parts[4]), int(parts[5]))
        if kind == "numeric":
            return ["numeric", int(parts[1]), float(parts[2]), majority, counts, 2, [], []]
        if kind == "categorical":
            return ["categorical", int(parts[1]), None, majority, counts, int(parts[2]), [], []]
        raise ModelFormatError(f"line {reader.pos}: unknown node kind {kind!r}")

    def close(entry):
        kind, a, threshold, majority, counts, _, edges, children = entry
        if kind == "numeric":
            return NumericSplit(a, threshold, children[0], children[1], majority, counts)
        return CategoricalSplit(a, {e[1:]: c for e, c in zip(edges, children)}, majority, counts)

    item = open_or_leaf(parts)
    while True:
        if isinstance(item, list):
            stack.append(item)
        else:
            node = item
            while True:
                if not stack:
                    result = node
                    break
                stack[-1][7].append(node)
                if len(stack[-1][7]) < stack[-1][5]:
                    break
                node = close(stack.pop())
            if result is not None:
                return result
        top = stack[-1]
        if top[5] == 0:
            raise ModelFormatError(f"categorical node with no branches near line {reader.pos}")
        edge, parts = read_node()
        top[6].append(edge)
        item = open_or_leaf(parts)


def dumps(model: DecisionTree) -> str:
    out = [f"{MAGIC}\t{VERSION}"] + schema_lines(model.schema)
    out += tree_lines(model.root, model.schema.names)
    return "\n".join(out) + "\n"


def loads(text: str) -> DecisionTree:
    r = LineReader(text)
    version = read_header(r, MAGIC)
    if version != VERSION:
        raise ModelFormatError(f"unsupported tree model version {version}")
    schema = read_schema(r)
    return DecisionTree(schema, parse_tree_lines(r))
