"""Metrics, temporal splitting, earliness and per-prefix-length evaluation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .encoding import LogContext, encode
from .errors import LengthMismatch, NoUsableBucket, SingleClass, TooFewCases
from .event_log import LabeledLog
from .prefixing import bucket_for, generate_prefixes

LOW_SUPPORT = 5
F1_THRESHOLD = 0.5


def temporal_split(log: LabeledLog, train_fraction: float = 0.8) -> tuple[LabeledLog, LabeledLog]:
    """Earliest-starting cases go to train; ties on start time break by case id."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(log)
    if n < 2:
        raise TooFewCases(f"need at least 2 cases, got {n}")
    order = sorted(log.traces, key=lambda t: (t.start, t.case_id))
    n_train = min(max(int(math.floor(round(n * train_fraction, 9))), 1), n - 1)
    train_ids = [t.case_id for t in order[:n_train]]
    test_ids = [t.case_id for t in order[n_train:]]
    return log.subset(train_ids), log.subset(test_ids)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if len(s) != len(y):
        raise LengthMismatch(f"{len(s)} scores vs {len(y)} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1(predictions, labels) -> float:
    p = np.asarray(predictions).astype(int)
    y = np.asarray(labels).astype(int)
    if len(p) != len(y):
        raise LengthMismatch(f"{len(p)} predictions vs {len(y)} labels")
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def mae(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise LengthMismatch(f"shapes {p.shape} and {t.shape}")
    return float(np.mean(np.abs(p - t)))


@dataclass(frozen=True)
class EarlinessResult:
    threshold: float
    earliness: int | None


def earliness(curve: dict, threshold: float, direction: str = ">=") -> EarlinessResult:
    """Smallest prefix length whose metric meets ``threshold`` (``>=`` for AUC,
    ``<=`` for MAE). ``None`` metrics never qualify."""
    if not curve:
        raise ValueError("empty curve")
    if direction not in (">=", "<="):
        raise ValueError("direction must be '>=' or '<='")
    for length in sorted(curve):
        v = curve[length]
        if v is None:
            continue
        if (v >= threshold) if direction == ">=" else (v <= threshold):
            return EarlinessResult(threshold, length)
    return EarlinessResult(threshold, None)


@dataclass
class Cell:
    metric: float | None
    n: int
    low_support: bool


@dataclass
class EvalResult:
    task: str
    metric_name: str
    overall: dict
    per_prefix_length: dict[int, Cell] = field(default_factory=dict)
    n_unroutable: int = 0
    earliness: EarlinessResult | None = None

    @property
    def direction(self) -> str:
        return ">=" if self.metric_name == "auc" else "<="

    def with_earliness(self, threshold: float) -> "EvalResult":
        self.earliness = earliness(self.curve(), threshold, self.direction)
        return self

    def curve(self) -> dict[int, float | None]:
        return {l: c.metric for l, c in self.per_prefix_length.items()}

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "metric": self.metric_name,
            "overall": self.overall,
            "per_prefix_length": {
                str(l): {"metric": c.metric, "n": c.n, "low_support": c.low_support}
                for l, c in sorted(self.per_prefix_length.items())
            },
            "n_unroutable": self.n_unroutable,
        }
        if self.earliness is not None:
            d["earliness"] = {
                "threshold": self.earliness.threshold,
                "direction": self.direction,
                "prefix_length": self.earliness.earliness,
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["prefix_length", self.metric_name, "n"])
        for l, c in sorted(self.per_prefix_length.items()):
            w.writerow([l, "" if c.metric is None else repr(c.metric), c.n])
        return out.getvalue()


def score_prefixes(bundle, test: LabeledLog, context: LogContext | None = None):
    """Route, encode and predict every test prefix.

    Returns (lengths, predictions, targets, n_unroutable).
    """
    if context is None and bundle.engineered:
        context = LogContext.from_traces(test.traces)
    lengths, preds, targets = [], [], []
    unroutable = 0
    pairs = generate_prefixes(test, bundle.strategy)
    rows: dict[str, list] = {}
    for p, y in pairs:
        try:
            b = bucket_for(p, bundle.strategy, bundle.models)
        except NoUsableBucket:
            unroutable += 1
            continue
        rows.setdefault(b, []).append((p, y))
    for b in sorted(rows):
        model = bundle.models[b]
        X = np.vstack([encode(p, model.spec, context) for p, _ in rows[b]])
        preds.extend(model.predict(X).tolist())
        lengths.extend(p.length for p, _ in rows[b])
        targets.extend(float(y) for _, y in rows[b])
    return np.array(lengths, dtype=int), np.array(preds), np.array(targets), unroutable


def evaluate_predictions(task: str, lengths, preds, targets, n_unroutable: int = 0) -> EvalResult:
    if task == "outcome":
        metric_name = "auc"
        overall = {
            "auc": auc(preds, targets) if len(np.unique(targets)) == 2 else None,
            "f1": f1((preds >= F1_THRESHOLD).astype(int), targets),
            "n": int(len(preds)),
        }
    else:
        metric_name = "mae"
        overall = {"mae": mae(preds, targets) if len(preds) else None, "n": int(len(preds))}
    cells = {}
    for l in sorted(set(lengths.tolist())):
        m = lengths == l
        n = int(m.sum())
        if task == "outcome":
            v = auc(preds[m], targets[m]) if len(np.unique(targets[m])) == 2 else None
        else:
            v = mae(preds[m], targets[m])
        cells[int(l)] = Cell(v, n, n < LOW_SUPPORT)
    return EvalResult(task, metric_name, overall, cells, n_unroutable)


def evaluate_pipeline(bundle, test: LabeledLog, context: LogContext | None = None) -> EvalResult:
    lengths, preds, targets, unroutable = score_prefixes(bundle, test, context)
    order = np.lexsort((np.arange(len(lengths)), lengths))
    return evaluate_predictions(test.task, lengths[order], preds[order], targets[order], unroutable)
