"""Gradient-boosted regression trees (Newton boosting, exact greedy splits).

Binary classification uses the logistic loss on the log-odds margin, regression
the squared loss. Leaf values are stored already multiplied by the learning rate.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateTargets, SpecMismatch, WidthMismatch
from .encoding import FeatureMatrix, FeatureSpec

FORMAT_VERSION = 1
CLASSIFY = "classify"
REGRESS = "regress"
# keeps sigmoid output strictly inside (0, 1) in double precision
MARGIN_CLIP = 35.0


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    subsample_ratio: float = 1.0
    seed: int = 0
    task: str = CLASSIFY

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample_ratio <= 1:
            raise ValueError("subsample_ratio must be in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.task not in (CLASSIFY, REGRESS):
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class Tree:
    """Flat array tree. Node 0 is the root; leaves have ``feature == -1``.

    A row goes left when ``x[feature] < threshold``.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)

    def _add(self, feature=-1, threshold=0.0, value=0.0, gain=0.0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(gain)
        return len(self.feature) - 1

    @property
    def n_nodes(self):
        return len(self.feature)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            f = feat[node]
            active = f >= 0
            if not active.any():
                break
            r = rows[active]
            n = node[active]
            go_left = X[r, f[active]] < thr[n]
            node[active] = np.where(go_left, left[n], right[n])
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(**{k: list(v) for k, v in d.items()})


def _split_threshold(a: float, b: float) -> float:
    t = (a + b) / 2.0
    return t if a < t <= b else b


def presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row indices sorted by each feature's value and the sorted values, both (d, n)."""
    X = np.asarray(X, dtype=float)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    return order, np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))


@njit(cache=True)
def _best_split(S, V, grad, hess, G, H, lam, mcw, min_gain):
    d, m = S.shape
    parent = G * G / (H + lam)
    best_f, best_i, best = -1, -1, min_gain
    for f in range(d):
        gl = 0.0
        hl = 0.0
        for i in range(m - 1):
            r = S[f, i]
            gl += grad[r]
            hl += hess[r]
            if not V[f, i] < V[f, i + 1]:
                continue
            hr = H - hl
            if hl < mcw or hr < mcw or hl + lam <= 0.0 or hr + lam <= 0.0:
                continue
            gr = G - gl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if gain > best:
                best_f, best_i, best = f, i, gain
    return best_f, best_i, best


@njit(cache=True)
def _partition(S, V, f, k, n):
    d, m = S.shape
    left = np.zeros(n, dtype=np.bool_)
    for i in range(k):
        left[S[f, i]] = True
    SL = np.empty((d, k), dtype=S.dtype)
    VL = np.empty((d, k), dtype=V.dtype)
    SR = np.empty((d, m - k), dtype=S.dtype)
    VR = np.empty((d, m - k), dtype=V.dtype)
    for j in range(d):
        a = 0
        b = 0
        for i in range(m):
            r = S[j, i]
            if left[r]:
                SL[j, a] = r
                VL[j, a] = V[j, i]
                a += 1
            else:
                SR[j, b] = r
                VR[j, b] = V[j, i]
                b += 1
    return SL, VL, SR, VR


def grow_tree(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    rows: np.ndarray,
    max_depth: int,
    l2_reg: float,
    min_child_weight: float,
    scale: float = 1.0,
    presorted: tuple[np.ndarray, np.ndarray] | None = None,
    min_gain: float = 0.0,
) -> Tree:
    """Grow one tree by exact greedy search over the given rows.

    Split gain is half the reduction of the regularized objective; among equal
    gains the lowest feature index, then the lowest threshold, wins.
    ``presorted`` is an optional :func:`presort` of the full ``X``; splits must
    gain strictly more than ``min_gain``.
    """
    n, d = X.shape
    tree = Tree()
    if d == 0:
        G, H = float(grad[rows].sum()), float(hess[rows].sum())
        tree._add(value=-G / (H + l2_reg) * scale if H + l2_reg > 0 else 0.0)
        return tree
    order, values = presorted if presorted is not None else presort(X)
    if len(rows) != n:
        member = np.zeros(n, dtype=bool)
        member[rows] = True
        keep = member[order]
        order = order[keep].reshape(d, -1)
        values = values[keep].reshape(d, -1)
    grad = np.ascontiguousarray(grad, dtype=float)
    hess = np.ascontiguousarray(hess, dtype=float)

    def build(S, V, depth):
        # S: (d, m) node rows, each line sorted by its feature; V: the matching values
        some = S[0]
        G = float(grad[some].sum())
        H = float(hess[some].sum())
        leaf_value = -G / (H + l2_reg) * scale if H + l2_reg > 0 else 0.0
        node = tree._add(value=leaf_value)
        m = S.shape[1]
        if depth >= max_depth or m < 2:
            return node
        f, i, best = _best_split(S, V, grad, hess, G, H, l2_reg, min_child_weight, min_gain)
        if f < 0:
            return node
        t = _split_threshold(V[f, i], V[f, i + 1])
        tree.feature[node] = int(f)
        tree.threshold[node] = float(t)
        tree.gain[node] = float(best)
        tree.value[node] = 0.0
        SL, VL, SR, VR = _partition(S, V, f, i + 1, n)
        tree.left[node] = build(SL, VL, depth + 1)
        tree.right[node] = build(SR, VR, depth + 1)
        return node

    build(order, values, 0)
    return tree


# --- losses -----------------------------------------------------------------


def sigmoid(margin):
    return 1.0 / (1.0 + np.exp(-np.clip(margin, -MARGIN_CLIP, MARGIN_CLIP)))


def logistic_loss(margin, y):
    """Mean negative log-likelihood of labels ``y`` under log-odds ``margin``."""
    margin = np.asarray(margin, dtype=float)
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def logistic_grad_hess(margin, y):
    p = sigmoid(margin)
    return p - y, p * (1.0 - p)


def squared_loss(pred, y):
    return float(np.mean(0.5 * (pred - y) ** 2))


def squared_grad_hess(pred, y):
    return pred - y, np.ones_like(pred)


# --- model ------------------------------------------------------------------


@dataclass
class GbtModel:
    trees: list[Tree]
    base_score: float
    task: str
    names: tuple[str, ...]
    config: TrainConfig
    spec: FeatureSpec | None = None
    degenerate: bool = False
    train_loss: list[float] = field(default_factory=list)
    eval_loss: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.names)

    def margin(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise WidthMismatch(X.shape[1], self.n_features)
        out = np.full(len(X), self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        """Probabilities (classify) or values (regress) for every row of ``X``."""
        m = self.margin(X)
        return sigmoid(m) if self.task == CLASSIFY else m

    def __call__(self, X):
        return self.predict(X)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "task": self.task,
            "base_score": self.base_score,
            "names": list(self.names),
            "config": asdict(self.config),
            "spec_hash": self.spec.content_hash() if self.spec else None,
            "degenerate": self.degenerate,
            "train_loss": self.train_loss,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, spec: FeatureSpec | None = None) -> "GbtModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        if spec is not None and d.get("spec_hash") not in (None, spec.content_hash()):
            raise SpecMismatch("model was trained against a different feature spec")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            base_score=d["base_score"],
            task=d["task"],
            names=tuple(d["names"]),
            config=TrainConfig(**d["config"]),
            spec=spec,
            degenerate=d["degenerate"],
            train_loss=list(d["train_loss"]),
        )

    @classmethod
    def from_json(cls, text: str, spec: FeatureSpec | None = None) -> "GbtModel":
        return cls.from_dict(json.loads(text), spec)


def _as_arrays(matrix):
    if isinstance(matrix, FeatureMatrix):
        return np.asarray(matrix.X, dtype=float), np.asarray(matrix.targets, dtype=float), matrix.names, matrix.spec
    X, y = matrix
    X = np.asarray(X, dtype=float)
    return X, np.asarray(y, dtype=float), tuple(f"x{j + 1}" for j in range(X.shape[1])), None


def train(matrix, config: TrainConfig = TrainConfig(), eval_set=None) -> GbtModel:
    """Fit a boosted ensemble on a :class:`FeatureMatrix` (or an ``(X, y)`` pair).

    ``eval_set`` is an optional ``(X, y)`` pair whose loss is recorded per round;
    it never stops training early.
    """
    X, y, names, spec = _as_arrays(matrix)
    n = len(X)
    if n < 2:
        raise ValueError("need at least two training rows")
    classify = config.task == CLASSIFY
    if classify:
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("classification targets must be 0/1")
        p = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        base = math.log(p / (1 - p))
        loss_fn, grad_fn = logistic_loss, logistic_grad_hess
    else:
        base = float(y.mean())
        loss_fn, grad_fn = squared_loss, squared_grad_hess

    model = GbtModel([], base, config.task, tuple(names), config, spec)
    if classify and len(np.unique(y)) < 2:
        warnings.warn("all classification labels are identical", DegenerateTargets, stacklevel=2)
        model.degenerate = True
        return model

    rng = np.random.default_rng(config.seed)
    margin = np.full(n, base)
    all_rows = np.arange(n)
    presorted = presort(X)
    if eval_set is not None:
        ex, ey = np.asarray(eval_set[0], dtype=float), np.asarray(eval_set[1], dtype=float)
        em = np.full(len(ex), base)
    for _ in range(config.n_trees):
        g, h = grad_fn(margin, y)
        rows = all_rows
        if config.subsample_ratio < 1.0:
            k = max(1, int(round(config.subsample_ratio * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        tree = grow_tree(
            X, g, h, rows, config.max_depth, config.l2_reg,
            config.min_child_weight, scale=config.learning_rate, presorted=presorted,
        )
        model.trees.append(tree)
        margin = margin + tree.predict(X)
        model.train_loss.append(loss_fn(margin, y))
        if eval_set is not None:
            em = em + tree.predict(ex)
            model.eval_loss.append(loss_fn(em, ey))
    return model


def predict(model: GbtModel, row) -> float:
    """Single-row prediction."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise ValueError("predict expects one row; use model.predict for matrices")
    return float(model.predict(row[None, :])[0])


@dataclass(frozen=True)
class GlobalImportance:
    names: tuple[str, ...]
    importance: tuple[float, ...]

    def as_dict(self, nonzero: bool = True) -> dict[str, float]:
        return {n: v for n, v in zip(self.names, self.importance) if v > 0 or not nonzero}

    def ranked(self) -> list[tuple[str, float]]:
        """Nonzero features, most important first (ties keep column order)."""
        items = [(n, v) for n, v in zip(self.names, self.importance) if v > 0]
        return sorted(items, key=lambda kv: -kv[1])

    def rank_of(self, name: str) -> int | None:
        for r, (n, _) in enumerate(self.ranked(), start=1):
            if n == name:
                return r
        return None

    def __getitem__(self, name: str) -> float:
        return self.importance[self.names.index(name)]


def feature_importance(model: GbtModel) -> GlobalImportance:
    """Total split gain per feature, normalized to sum to one."""
    gains = np.zeros(model.n_features)
    for t in model.trees:
        for f, g in zip(t.feature, t.gain):
            if f >= 0:
                gains[f] += g
    total = gains.sum()
    if total > 0:
        gains = gains / total
    return GlobalImportance(model.names, tuple(float(g) for g in gains))
