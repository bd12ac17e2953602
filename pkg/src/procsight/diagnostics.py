"""Audits: label leakage, future-feature availability and one-hot sparsity."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .encoding import FeatureMatrix, FeatureName
from .errors import ZeroVarianceLabel
from .learner import GbtModel, feature_importance

INFO, WARN, CRITICAL = "info", "warn", "critical"
TOP_K = 10


def pearson_columns(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pearson correlation of every column with ``y``; constant columns give 0."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    num = yc @ xc
    den = np.sqrt((xc**2).sum(axis=0) * (yc**2).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / den, 0.0)
    return np.clip(r, -1.0, 1.0)


@dataclass
class LeakFinding:
    feature: str
    correlation: float
    importance_rank: int | None
    flagged: bool
    severity: str


@dataclass
class LeakageReport:
    threshold: float
    findings: list[LeakFinding]

    @property
    def flagged(self) -> list[LeakFinding]:
        return [f for f in self.findings if f.flagged]

    @property
    def critical(self) -> list[LeakFinding]:
        return [f for f in self.findings if f.severity == CRITICAL]

    def __getitem__(self, name: str) -> LeakFinding:
        for f in self.findings:
            if f.feature == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "findings": [asdict(f) for f in self.findings]}


def leakage_scan(X: FeatureMatrix, labels=None, threshold: float = 0.7,
                 model: GbtModel | None = None, top_k: int = TOP_K) -> LeakageReport:
    """Flag encoded features whose correlation with the label reaches ``threshold``.

    A flagged feature that the model also ranks in its ``top_k`` is critical.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    y = np.asarray(X.targets if labels is None else labels, dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("leakage scan needs binary labels")
    if len(np.unique(y)) < 2:
        raise ZeroVarianceLabel("labels are constant; correlation undefined")
    r = pearson_columns(X.X, y)
    ranks = {}
    if model is not None:
        ranks = {n: i for i, (n, _) in enumerate(feature_importance(model).ranked(), start=1)}
    findings = []
    for name, c in zip(X.names, r):
        rank = ranks.get(name)
        flagged = bool(abs(c) >= threshold)
        if flagged and rank is not None and rank <= top_k:
            sev = CRITICAL
        elif flagged:
            sev = WARN
        else:
            sev = INFO
        findings.append(LeakFinding(name, float(c), rank, flagged, sev))
    return LeakageReport(threshold, findings)


# --- availability -------------------------------------------------------------


@dataclass
class ValueAvailability:
    attribute: str  # Activity | Resource
    value: str
    min_index: int
    support: int


@dataclass
class AvailabilityFlag:
    feature: str
    min_index: int
    query_prefix_len: int
    severity: str
    reason: str = "future event dependence"


@dataclass
class AvailabilityReport:
    query_prefix_len: int
    values: list[ValueAvailability]
    flags: list[AvailabilityFlag] = field(default_factory=list)

    def min_index(self, value: str, attribute: str = "Activity") -> int:
        for v in self.values:
            if v.value == value and v.attribute == attribute:
                return v.min_index
        raise KeyError(value)

    def to_dict(self) -> dict:
        return {
            "query_prefix_len": self.query_prefix_len,
            "values": [asdict(v) for v in self.values],
            "flags": [asdict(f) for f in self.flags],
        }


def first_occurrences(log) -> dict[tuple[str, str], tuple[int, int]]:
    """(attribute, value) -> (min 1-based first-occurrence position, support)."""
    traces = log.traces if hasattr(log, "traces") else log
    best: dict[tuple[str, str], list[int]] = {}
    for t in traces:
        seen = {}
        for i, e in enumerate(t.events, start=1):
            seen.setdefault(("Activity", e.activity), i)
            if e.resource is not None:
                seen.setdefault(("Resource", e.resource), i)
        for key, i in seen.items():
            cur = best.setdefault(key, [i, 0])
            cur[0] = min(cur[0], i)
            cur[1] += 1
    return {k: (v[0], v[1]) for k, v in best.items()}


def _feature_min_index(name: str, occ, grammar) -> int | None:
    try:
        f = FeatureName.parse(name, grammar)
    except ValueError:
        return None
    if f.kind == "agg_count":
        hit = occ.get((f.attr, f.value))
        if hit is None:
            other = "Resource" if f.attr == "Activity" else "Activity"
            hit = occ.get((other, f.value))
        return hit[0] if hit else None
    if f.kind == "index":
        hit = occ.get((f.attr, f.value))
        return max(f.idx, hit[0]) if hit else f.idx
    return None


def availability_scan(log, model: GbtModel | None = None, query_prefix_len: int = 1,
                      top_k: int = TOP_K) -> AvailabilityReport:
    """Earliest position of every activity/resource value, and the important
    features that cannot be non-zero yet at ``query_prefix_len``.

    Without a model every activity/resource value is checked (severity info);
    with a model its ``top_k`` features are (severity warn).
    """
    occ = first_occurrences(log)
    values = [ValueAvailability(a, v, i, s) for (a, v), (i, s) in sorted(occ.items())]
    report = AvailabilityReport(query_prefix_len, values)
    if model is None:
        for v in values:
            if v.min_index > query_prefix_len:
                report.flags.append(AvailabilityFlag(f"agg__{v.value}", v.min_index, query_prefix_len, INFO))
        return report
    grammar = model.spec.grammar if model.spec is not None else None
    for name, _ in feature_importance(model).ranked()[:top_k]:
        m = _feature_min_index(name, occ, grammar)
        if m is not None and m > query_prefix_len:
            report.flags.append(AvailabilityFlag(name, m, query_prefix_len, WARN))
    return report


# --- sparsity -----------------------------------------------------------------


@dataclass
class SparsityReport:
    n_raw_attributes: int
    n_encoded_features: int
    growth: float
    density: float
    block_density: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)


def density(X: np.ndarray) -> float:
    X = np.asarray(X)
    return float(np.count_nonzero(X) / X.size) if X.size else 0.0


def sparsity_report(X: FeatureMatrix, raw_attr_count: int) -> SparsityReport:
    if raw_attr_count < 1:
        raise ValueError("raw attribute count must be >= 1")
    n, d = X.X.shape
    blocks: dict[str, list[int]] = {}
    if X.spec is not None:
        for name, _, cols in X.spec.blocks():
            blocks.setdefault(_family(name), []).extend(cols)
    else:
        blocks["all"] = list(range(d))
    per_block = {k: density(X.X[:, cols]) for k, cols in sorted(blocks.items())}
    return SparsityReport(raw_attr_count, d, d / raw_attr_count, density(X.X), per_block)


def _family(block_name: str) -> str:
    if block_name.startswith("agg__"):
        return "agg_" + block_name[5:].lower()  # agg_activity / agg_resource
    if block_name.startswith("agg_"):
        return "agg_stats"
    if block_name.startswith("static__"):
        return "static"
    if block_name.startswith("index__"):
        return "index_" + block_name.split("_")[2].lower()
    return "engineered"
