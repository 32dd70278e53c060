"""Soft-margin SVM trained by sequential minimal optimization.

The decision function is ``h(x) = sum_i alpha_i y_i K(x_i, x) + b`` over the
support vectors; ``h(x) >= 0`` is classified as attack. Training follows
Platt-style pairwise updates on the dual: every pass visits the points in
a seeded random order, and each KKT violator is paired first with the
point maximizing ``|E_i - E_j|`` and, failing that, with the remaining
points in seeded random order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataset import (
    BinaryClass,
    ConnectionRecord,
    EncodedDataset,
    FeatureEncoder,
    LabeledDataset,
    check_schema,
    encode,
    fit_encoder,
)
from .textformat import LineReader, ModelFormatError, fmt, read_header, read_schema, schema_lines

MAGIC = "idsbench-svm"
VERSION = 1

#: Relative step below which a pair update counts as no progress.
STEP_EPSILON = 1e-9


class DimensionMismatchError(ValueError):
    pass


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    name: str = "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.name not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.name!r}")

    @classmethod
    def linear(cls) -> "Kernel":
        return cls("linear")

    @classmethod
    def rbf(cls, gamma: float | None = None) -> "Kernel":
        return cls("rbf", gamma)

    def resolved(self, dimension: int) -> "Kernel":
        if self.name == "rbf" and self.gamma is None:
            return Kernel("rbf", 1.0 / max(dimension, 1))
        return self

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        if A.shape[1] != B.shape[1]:
            raise DimensionMismatchError(f"dimension {A.shape[1]} != {B.shape[1]}")
        dots = A @ B.T
        if self.name == "linear":
            return dots
        gamma = self.gamma if self.gamma is not None else 1.0 / A.shape[1]
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * dots
        return np.exp(-gamma * np.maximum(sq, 0.0))

    def spec(self) -> str:
        return "linear" if self.name == "linear" else f"rbf\t{fmt(self.gamma)}"


def kernel_eval(kernel: Kernel, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension {a.shape} != {b.shape}")
    if kernel.name == "linear":
        return float(a @ b)
    gamma = kernel.gamma if kernel.gamma is not None else 1.0 / max(a.size, 1)
    diff = a - b
    return float(math.exp(-gamma * float(diff @ diff)))


@dataclass(frozen=True)
class SVMTrainConfig:
    C: float = 1.0
    kernel: Kernel = field(default_factory=Kernel.linear)
    tolerance: float = 1e-3
    max_passes: int = 10
    seed: int = 0
    #: hard cap on full passes; hitting it leaves the model flagged unconverged
    max_iterations: int = 500

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.max_passes < 1 or self.max_iterations < 1:
            raise ValueError("max_passes and max_iterations must be >= 1")


@dataclass(frozen=True)
class SVMModel:
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    kernel: Kernel
    encoder: FeatureEncoder | None = None
    support_indices: np.ndarray | None = None
    C: float | None = None
    converged: bool = True
    kkt_residual: float = 0.0
    passes: int = 0

    @property
    def schema(self):
        return self.encoder.schema if self.encoder is not None else None

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.dual_coefficients) == 0:
            return np.full(len(X), self.bias)
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatchError(
                f"dimension {X.shape[1]} != {self.support_vectors.shape[1]}")
        return self.kernel.gram(X, self.support_vectors) @ self.dual_coefficients + self.bias

    def predict(self, record: ConnectionRecord) -> BinaryClass:
        return predict_svm(self, record)

    def predict_dataset(self, d: LabeledDataset) -> list[BinaryClass]:
        enc = encode(self._require_encoder(), d)
        return [BinaryClass.from_sign(h) for h in self.decision_values(enc.matrix)]

    def decision_details(self, record: ConnectionRecord) -> dict[str, float]:
        x = self._require_encoder().transform_values(record.values)
        return {"decision": decision_value(self, x)}

    def _require_encoder(self) -> FeatureEncoder:
        if self.encoder is None:
            raise ValueError("model has no encoder; use decision_value on encoded vectors")
        return self.encoder

    def dumps(self) -> str:
        return dumps(self)


def decision_value(model: SVMModel, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if len(model.dual_coefficients) == 0:
        return float(model.bias)
    if x.shape[0] != model.support_vectors.shape[1]:
        raise DimensionMismatchError(f"dimension {x.shape[0]} != {model.support_vectors.shape[1]}")
    return float(model.decision_values(x[None, :])[0])


def predict_svm(model: SVMModel, record: ConnectionRecord | np.ndarray) -> BinaryClass:
    """Attack when the decision value is >= 0, so points on the boundary are attacks."""
    if isinstance(record, ConnectionRecord):
        x = model._require_encoder().transform_values(record.values)
    else:
        x = record
    return BinaryClass.from_sign(decision_value(model, x))


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_violations(alpha: np.ndarray, y: np.ndarray, f: np.ndarray, C: float) -> np.ndarray:
    """Per-point KKT violation size given decision values f on the training set."""
    r = y * f - 1.0
    v = np.zeros_like(r)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~(at_zero | at_c)
    v[at_zero] = np.maximum(0.0, -r[at_zero])
    v[at_c] = np.maximum(0.0, r[at_c])
    v[free] = np.abs(r[free])
    return v


class _SMO:
    def __init__(self, K: np.ndarray, y: np.ndarray, cfg: SVMTrainConfig,
                 callback: Callable[[np.ndarray, float], None] | None):
        self.K = K
        self.y = y
        self.C = float(cfg.C)
        self.tol = cfg.tolerance
        self.cfg = cfg
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        self.E = -y.astype(float)
        self.rng = np.random.default_rng(cfg.seed)
        self.callback = callback

    def violates(self, i: int) -> bool:
        r = self.y[i] * self.E[i]
        a = self.alpha[i]
        return (r < -self.tol and a < self.C) or (r > self.tol and a > 0)

    def step(self, i: int, j: int) -> bool:
        if i == j:
            return False
        K, y, C = self.K, self.y, self.C
        ai, aj = self.alpha[i], self.alpha[j]
        yi, yj = y[i], y[j]
        Ei, Ej = self.E[i], self.E[j]
        s = yi * yj
        if yi != yj:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        if H - L <= 0:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        g = yj * (Ei - Ej)
        if eta > 1e-12:
            aj_new = min(H, max(L, aj + g / eta))
        else:
            # objective is linear (or concave-up) along the line: take the better end
            def gain(t):
                return g * (t - aj) - 0.5 * eta * (t - aj) ** 2
            gl, gh = gain(L), gain(H)
            if gl > gh + STEP_EPSILON:
                aj_new = L
            elif gh > gl + STEP_EPSILON:
                aj_new = H
            else:
                return False
        if abs(aj_new - aj) < STEP_EPSILON * (aj_new + aj + STEP_EPSILON):
            return False
        ai_new = ai + s * (aj - aj_new)
        # snap float drift onto the box edges
        ai_new = self._snap(ai_new)
        aj_new = self._snap(aj_new)
        dai, daj = ai_new - ai, aj_new - aj
        b1 = self.b - Ei - yi * dai * K[i, i] - yj * daj * K[i, j]
        b2 = self.b - Ej - yi * dai * K[i, j] - yj * daj * K[j, j]
        if 0 < ai_new < C:
            b_new = b1
        elif 0 < aj_new < C:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        self.E += yi * dai * K[i] + yj * daj * K[j] + (b_new - self.b)
        self.alpha[i], self.alpha[j] = ai_new, aj_new
        self.b = b_new
        if self.callback is not None:
            self.callback(self.alpha, self.b)
        return True

    def _snap(self, a: float) -> float:
        eps = 1e-12 * self.C
        if a < eps:
            return 0.0
        if a > self.C - eps:
            return self.C
        return a

    def examine(self, i: int) -> bool:
        gaps = np.abs(self.E[i] - self.E)
        gaps[i] = -1.0
        j = int(np.argmax(gaps))
        if self.step(i, j):
            return True
        for j in self.rng.permutation(self.n):
            if j != i and self.step(i, int(j)):
                return True
        return False

    def run(self) -> int:
        clean = 0
        passes = 0
        while clean < self.cfg.max_passes and passes < self.cfg.max_iterations:
            changed = 0
            for i in self.rng.permutation(self.n):
                i = int(i)
                if self.violates(i) and self.examine(i):
                    changed += 1
            passes += 1
            clean = clean + 1 if changed == 0 else 0
        return passes


def train_svm(train: EncodedDataset, cfg: SVMTrainConfig | None = None,
              callback: Callable[[np.ndarray, float], None] | None = None) -> SVMModel:
    """Solve the soft-margin dual and keep the points with alpha > 0.

    ``callback(alpha, b)`` is invoked after every accepted pair update.
    """
    cfg = cfg or SVMTrainConfig()
    X = np.asarray(train.matrix, dtype=float)
    y = np.asarray(train.target, dtype=float)
    if len(y) < 2:
        raise SingleClassError("SVM training needs at least two records")
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClassError("SVM training needs both attack and normal records")
    kernel = cfg.kernel.resolved(X.shape[1])
    K = kernel.gram(X, X)
    smo = _SMO(K, y, cfg, callback)
    passes = smo.run()

    f = K @ (smo.alpha * y) + smo.b
    residual = float(kkt_violations(smo.alpha, y, f, smo.C).max())
    sv = np.nonzero(smo.alpha > 0)[0]
    return SVMModel(
        support_vectors=X[sv].copy(),
        dual_coefficients=(smo.alpha[sv] * y[sv]),
        bias=float(smo.b),
        kernel=kernel,
        encoder=train.encoder,
        support_indices=sv,
        C=float(cfg.C),
        converged=residual <= cfg.tolerance,
        kkt_residual=residual,
        passes=passes,
    )


def train_svm_classifier(d: LabeledDataset, cfg: SVMTrainConfig | None = None) -> SVMModel:
    encoder = fit_encoder(d)
    return train_svm(encode(encoder, d), cfg)


def alphas_for_training_set(model: SVMModel, n: int, y: np.ndarray) -> np.ndarray:
    """Recover the full alpha vector (zeros for non-support points)."""
    alpha = np.zeros(n)
    if model.support_indices is not None:
        alpha[model.support_indices] = model.dual_coefficients * y[model.support_indices]
    return alpha


# -- serialization ----------------------------------------------------------------
#
# idsbench-svm <version>
# kernel linear | kernel rbf <gamma>
# bias <b>
# C <C>  converged <0|1>  residual <r>  passes <p>
# schema/attr lines, then encoder lines:
#   onehot <k> <value>...      (categorical vocabulary in column order)
#   range <k> <min> <max>      (numeric attribute)
# sv <count> <dimension>
# <training index> <alpha*y> <x_1> ... <x_d>     (one line per support vector)

def dumps(model: SVMModel) -> str:
    out = [f"{MAGIC}\t{VERSION}", f"kernel\t{model.kernel.spec()}", f"bias\t{fmt(model.bias)}"]
    out.append(f"fit\t{fmt(model.C if model.C is not None else float('nan'))}\t"
               f"{int(model.converged)}\t{fmt(model.kkt_residual)}\t{model.passes}")
    enc = model.encoder
    if enc is None:
        out.append("noencoder")
    else:
        out += schema_lines(enc.schema)
        for k in range(len(enc.schema)):
            if k in enc.categories:
                out.append("\t".join(["onehot", str(k), *enc.categories[k]]))
            else:
                lo, hi = enc.ranges[k]
                out.append(f"range\t{k}\t{fmt(lo)}\t{fmt(hi)}")
    dim = model.support_vectors.shape[1] if model.support_vectors.ndim == 2 else 0
    out.append(f"sv\t{len(model.dual_coefficients)}\t{dim}")
    indices = model.support_indices if model.support_indices is not None else [-1] * len(model.dual_coefficients)
    for idx, coef, vec in zip(indices, model.dual_coefficients, model.support_vectors):
        out.append("\t".join([str(int(idx)), fmt(coef), *(fmt(v) for v in vec)]))
    return "\n".join(out) + "\n"


def loads(text: str) -> SVMModel:
    r = LineReader(text)
    version = read_header(r, MAGIC)
    if version != VERSION:
        raise ModelFormatError(f"unsupported SVM model version {version}")
    kparts = r.expect("kernel")
    kernel = Kernel.linear() if kparts[1] == "linear" else Kernel.rbf(float(kparts[2]))
    bias = float(r.expect("bias")[1])
    _, C, converged, residual, passes = r.expect("fit")
    encoder = None
    if r.peek() and r.peek()[0] == "noencoder":
        next(r)
    else:
        schema = read_schema(r)
        categories, ranges = {}, {}
        for k in range(len(schema)):
            parts = next(r)
            if parts[0] == "onehot":
                categories[int(parts[1])] = tuple(parts[2:])
            elif parts[0] == "range":
                ranges[int(parts[1])] = (float(parts[2]), float(parts[3]))
            else:
                raise ModelFormatError(f"line {r.pos}: expected encoder entry")
        encoder = FeatureEncoder(schema, categories, ranges)
    _, count, dim = r.expect("sv")
    count, dim = int(count), int(dim)
    idx = np.empty(count, dtype=np.int64)
    coefs = np.empty(count)
    vectors = np.empty((count, dim))
    for i in range(count):
        parts = next(r)
        idx[i] = int(parts[0])
        coefs[i] = float(parts[1])
        vectors[i] = [float(v) for v in parts[2:]]
    return SVMModel(vectors, coefs, bias, kernel, encoder, idx, float(C), bool(int(converged)),
                    float(residual), int(passes))
