"""Model-agnostic explanations: global surrogates, local perturbation-based
surrogates and single-feature partial dependence.

A black box is anything with a ``predict(X)`` method (e.g. :class:`GbtModel`) or a
plain callable mapping an ``(n, d)`` array to ``n`` outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .encoding import FeatureMatrix, FeatureSpec
from .errors import NonFiniteKernel, UnknownFeature, WidthMismatch
from .learner import CLASSIFY, REGRESS, Tree, grow_tree

TREE = "tree"
LINEAR = "linear"


def _predictor(blackbox):
    fn = blackbox.predict if hasattr(blackbox, "predict") else blackbox
    if not callable(fn):
        raise TypeError("black box must be callable or expose predict()")
    return lambda X: np.asarray(fn(np.asarray(X, dtype=float)), dtype=float).reshape(-1)


def _task_of(blackbox, task):
    return task or getattr(blackbox, "task", None) or REGRESS


def _width_of(blackbox):
    return getattr(blackbox, "n_features", None)


def _matrix(X):
    if isinstance(X, FeatureMatrix):
        return np.asarray(X.X, dtype=float), X.names
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X, tuple(f"x{j + 1}" for j in range(X.shape[1]))


def r_squared(y, pred, weights=None) -> float:
    """(Weighted) coefficient of determination; 1.0 when ``y`` has no variance."""
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    mean = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - mean) ** 2))
    ss_res = float(np.sum(w * (y - pred) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(w * y * y))):
        return 1.0
    return 1.0 - ss_res / ss_tot


# --- global surrogate -------------------------------------------------------


@dataclass
class SurrogateModel:
    kind: str
    task: str
    names: tuple[str, ...]
    fidelity: float
    tree: Tree | None = None
    coef: np.ndarray | None = None
    intercept: float = 0.0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == TREE:
            return self.tree.predict(X)
        return X @ self.coef + self.intercept

    def render(self) -> str:
        if self.kind == LINEAR:
            lines = [f"intercept = {self.intercept:.6g}"]
            order = np.argsort(-np.abs(self.coef), kind="stable")
            lines += [f"{self.coef[j]:+.6g} * {self.names[j]}" for j in order if self.coef[j] != 0]
            return "\n".join(lines)
        t = self.tree
        lines = []

        def walk(i, indent):
            pad = "  " * indent
            if t.feature[i] < 0:
                lines.append(f"{pad}predict {t.value[i]:.6g}")
                return
            name = self.names[t.feature[i]]
            lines.append(f"{pad}if {name} < {t.threshold[i]:.6g}:")
            walk(t.left[i], indent + 1)
            lines.append(f"{pad}else:  # {name} >= {t.threshold[i]:.6g}")
            walk(t.right[i], indent + 1)

        walk(0, 0)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "task": self.task, "fidelity": self.fidelity, "names": list(self.names),
             "rendering": self.render()}
        if self.kind == TREE:
            d["tree"] = self.tree.to_dict()
        else:
            d["coef"] = [float(c) for c in self.coef]
            d["intercept"] = self.intercept
        return d


def fidelity(task: str, target, pred) -> float:
    """R² for regression, decision agreement at 0.5 for classification."""
    if task == CLASSIFY:
        return float(np.mean((np.asarray(target) >= 0.5) == (np.asarray(pred) >= 0.5)))
    return r_squared(target, pred)


def fit_global_surrogate(X, blackbox, kind: str = TREE, max_depth: int = 3, task: str | None = None):
    """Fit an interpretable model to the black box's own predictions on ``X``."""
    A, names = _matrix(X)
    width = _width_of(blackbox)
    if width is not None and width != A.shape[1]:
        raise WidthMismatch(A.shape[1], width)
    task = _task_of(blackbox, task)
    target = _predictor(blackbox)(A)

    if kind == TREE:
        # squared loss from a zero start: leaves are node means, gain is half the SSE drop
        sse = float(np.sum((target - target.mean()) ** 2))
        tree = grow_tree(
            A, -target, np.ones(len(A)), np.arange(len(A)),
            max_depth=max_depth, l2_reg=0.0, min_child_weight=1.0, min_gain=1e-12 * (sse + 1e-300),
        )
        model = SurrogateModel(TREE, task, tuple(names), 0.0, tree=tree)
    elif kind == LINEAR:
        design = np.column_stack([np.ones(len(A)), A])
        beta, *_ = np.linalg.lstsq(design, target, rcond=None)
        model = SurrogateModel(LINEAR, task, tuple(names), 0.0, coef=beta[1:], intercept=float(beta[0]))
    else:
        raise ValueError(f"unknown surrogate kind {kind!r}")
    model.fidelity = fidelity(task, target, model.predict(A))
    return model


# --- local explanations -----------------------------------------------------


@dataclass(frozen=True)
class LocalParams:
    n_samples: int = 5000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(d)
    k_features: int = 10
    seed: int = 0


@dataclass
class Effect:
    feature: str
    condition: str
    weight: float


@dataclass
class LocalExplanation:
    case_id: str | None
    prefix_length: int | None
    prediction: float
    effects: list[Effect]
    intercept: float
    local_fidelity: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "prefix_length": self.prefix_length,
            "prediction": self.prediction,
            "effects": [{"feature": e.feature, "condition": e.condition, "weight": e.weight} for e in self.effects],
            "intercept": self.intercept,
            "local_fidelity": self.local_fidelity,
            "n_samples": self.n_samples,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def render_bars(self, width: int = 30) -> str:
        head = f"case {self.case_id} @ prefix {self.prefix_length}: prediction {self.prediction:.4f}"
        if not self.effects:
            return head + "\n  (no effects: black box is locally constant)"
        scale = max(abs(e.weight) for e in self.effects) or 1.0
        label_w = max(len(e.condition) for e in self.effects)
        lines = [head]
        for e in self.effects:
            n = int(round(width * abs(e.weight) / scale))
            bar = ("+" if e.weight >= 0 else "-") * n
            lines.append(f"  {e.condition:<{label_w}}  {e.weight:+.4f} {bar}")
        lines.append(f"  local fidelity (weighted R²) {self.local_fidelity:.4f}")
        return "\n".join(lines)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class TabularExplainer:
    """Perturbation sampler and condition binarizer fitted on training rows.

    One-hot blocks are perturbed as a unit (at most one active column); single
    0/1 columns flip; other columns are redrawn from a normal fitted to the
    training column.
    """

    def __init__(self, training, names=None, spec: FeatureSpec | None = None):
        A, default_names = _matrix(training)
        self.training = A
        self.names = tuple(names) if names is not None else (
            spec.names if spec is not None else default_names)
        self.mean = A.mean(axis=0)
        self.std = A.std(axis=0)
        self.quartiles = np.quantile(A, [0.25, 0.5, 0.75], axis=0).T if len(A) else np.zeros((A.shape[1], 3))
        self.blocks = self._blocks(spec)

    @classmethod
    def from_matrix(cls, matrix: FeatureMatrix) -> "TabularExplainer":
        return cls(matrix.X, matrix.names, matrix.spec)

    def _blocks(self, spec):
        A = self.training
        binary = [bool(np.isin(A[:, j], (0.0, 1.0)).all()) for j in range(A.shape[1])]
        blocks = []
        groups = spec.blocks() if spec is not None else [(n, "numeric", [j]) for j, n in enumerate(self.names)]
        for _, kind, cols in groups:
            if kind == "onehot":
                blocks.append(("onehot", list(cols)))
                continue
            for j in cols:
                blocks.append(("onehot" if binary[j] else "numeric", [j]))
        return blocks

    def _bins(self, j):
        return np.unique(self.quartiles[j])

    def _condition(self, j, value):
        name = self.names[j]
        if any(j in cols and kind == "onehot" for kind, cols in self.blocks):
            return (f"{name} > 0", lambda col: col > 0) if value > 0 else (f"{name} <= 0", lambda col: col <= 0)
        b = self._bins(j)
        k = int(np.searchsorted(b, value, side="left"))  # value in (b[k-1], b[k]]
        if k == 0:
            return f"{name} <= {_fmt(b[0])}", lambda col: col <= b[0]
        if k == len(b):
            return f"{name} > {_fmt(b[-1])}", lambda col: col > b[-1]
        lo, hi = b[k - 1], b[k]
        return f"{_fmt(lo)} < {name} <= {_fmt(hi)}", lambda col: (col > lo) & (col <= hi)

    def sample(self, row: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        d = len(row)
        S = np.empty((n, d))
        for kind, cols in self.blocks:
            if kind == "numeric":
                j = cols[0]
                S[:, j] = rng.normal(self.mean[j], self.std[j], size=n)
                continue
            k = len(cols)
            active = np.flatnonzero(row[cols] > 0)
            state = int(active[0]) if len(active) else k  # k = none active
            keep = rng.random(n) < 0.5
            # any other state, uniformly: states are 0..k-1 (one column on) and k (none)
            other = rng.integers(0, k, size=n)
            other = np.where(other >= state, other + 1, other)
            states = np.where(keep, state, other)
            block = np.zeros((n, k))
            on = states < k
            block[np.flatnonzero(on), states[on]] = 1.0
            S[:, cols] = block
        S[0] = row
        return S

    def explain(self, blackbox, row, params: LocalParams = LocalParams(),
                case_id=None, prefix_length=None) -> LocalExplanation:
        row = np.asarray(row, dtype=float).reshape(-1)
        d = len(self.names)
        if len(row) != d:
            raise WidthMismatch(len(row), d)
        width = _width_of(blackbox)
        if width is not None and width != d:
            raise WidthMismatch(d, width)
        kw = params.kernel_width if params.kernel_width is not None else 0.75 * math.sqrt(d)
        if not (kw > 0 and math.isfinite(kw)):
            raise NonFiniteKernel(f"kernel width must be positive and finite, got {kw}")

        rng = np.random.default_rng(params.seed)
        S = self.sample(row, params.n_samples, rng)
        y = _predictor(blackbox)(S)
        prediction = float(y[0])

        scale = np.where(self.std > 0, self.std, 1.0)
        dist2 = np.sum(((S - row) / scale) ** 2, axis=1)
        w = np.exp(-dist2 / kw**2)

        wmean = np.sum(w * y) / np.sum(w)
        if np.sum(w * (y - wmean) ** 2) <= 1e-24 * max(1.0, np.sum(w * y * y)):
            return LocalExplanation(case_id, prefix_length, prediction, [], prediction, 1.0, params.n_samples)

        conds, Z = [], []
        for j in range(d):
            text, test = self._condition(j, row[j])
            conds.append((self.names[j], text))
            Z.append(test(S[:, j]).astype(float))
        Z = np.column_stack(Z)

        corr = _weighted_corr(Z, y, w)
        k = min(params.k_features, d)
        chosen = sorted(np.argsort(-np.abs(corr), kind="stable")[:k])
        chosen = [j for j in chosen if corr[j] != 0.0] or chosen[:1]

        design = np.column_stack([np.ones(len(S)), Z[:, chosen]])
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        fit = design @ beta
        effects = [Effect(conds[j][0], conds[j][1], float(b)) for j, b in zip(chosen, beta[1:])]
        effects.sort(key=lambda e: -abs(e.weight))
        return LocalExplanation(
            case_id, prefix_length, prediction, effects, float(beta[0]),
            r_squared(y, fit, w), params.n_samples,
        )


def _weighted_corr(Z, y, w):
    W = np.sum(w)
    zm = (w @ Z) / W
    ym = np.sum(w * y) / W
    zc = Z - zm
    yc = y - ym
    cov = (w * yc) @ zc / W
    zv = (w @ zc**2) / W
    yv = np.sum(w * yc**2) / W
    denom = np.sqrt(zv * yv)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(denom > 0, cov / denom, 0.0)
    return c


def explain_local(blackbox, row, training, params: LocalParams = LocalParams(),
                  spec: FeatureSpec | None = None, names=None, case_id=None, prefix_length=None):
    """Convenience wrapper around :class:`TabularExplainer`."""
    if isinstance(training, FeatureMatrix):
        explainer = TabularExplainer(training.X, names or training.names, spec or training.spec)
    else:
        explainer = TabularExplainer(training, names, spec)
    return explainer.explain(blackbox, row, params, case_id, prefix_length)


# --- partial dependence -----------------------------------------------------


@dataclass
class PdpCurve:
    feature: str
    grid: list[float]
    mean_prediction: list[float]

    def to_dict(self) -> dict:
        return {"feature": self.feature, "grid": self.grid, "mean_prediction": self.mean_prediction}


def partial_dependence(blackbox, X, feature, grid_size: int = 20) -> PdpCurve:
    """Average prediction with ``feature`` forced to each grid value.

    The grid is the distinct quantiles of the feature's observed values.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    A, names = _matrix(X)
    if isinstance(feature, (int, np.integer)):
        if not 0 <= feature < A.shape[1]:
            raise UnknownFeature(f"column {feature} out of range")
        j = int(feature)
    else:
        if feature not in names:
            raise UnknownFeature(f"unknown feature {feature!r}")
        j = names.index(feature)
    grid = np.unique(np.quantile(A[:, j], np.linspace(0.0, 1.0, grid_size)))
    predict = _predictor(blackbox)
    means = []
    work = A.copy()
    for v in grid:
        work[:, j] = v
        means.append(float(np.mean(predict(work))))
    return PdpCurve(names[j], [float(v) for v in grid], means)
