"""Prefix encodings: static, aggregation and index features plus engineered
temporal features.

Feature names follow a fixed grammar::

    static__{attr}                       numeric case attribute
    static__{attr}_{value}               one-hot case attribute
    agg__{value}                         activity / resource frequency
    agg_{min|max|mean|std|sum}_{attr}    numeric event attribute summary
    index__{Activity|Resource}_{i}_{v}   one-hot of the value at position i (1-based)
    eng__{name}                          engineered feature
"""

from __future__ import annotations

import bisect
import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import SpecMismatch
from .event_log import Trace
from .prefixing import Bucket, Prefix

AGGREGATION = "aggregation"
INDEX = "index"
STATS = ("min", "max", "mean", "std", "sum")
ENGINEERED = (
    "time_since_last_event",
    "time_since_case_start",
    "time_since_midnight",
    "weekday",
    "month",
    "event_number",
    "open_cases",
)

_STAT_RE = re.compile(r"^agg_(min|max|mean|std|sum)_(.+)$")
_INDEX_RE = re.compile(r"^index__(Activity|Resource)_(\d+)_(.*)$")


@dataclass(frozen=True)
class FeatureName:
    kind: str  # static_num | static_cat | agg_count | agg_stat | index | eng
    attr: str
    value: str | None = None
    stat: str | None = None
    idx: int | None = None

    def render(self) -> str:
        k = self.kind
        if k == "static_num":
            return f"static__{self.attr}"
        if k == "static_cat":
            return f"static__{self.attr}_{self.value}"
        if k == "agg_count":
            return f"agg__{self.value}"
        if k == "agg_stat":
            return f"agg_{self.stat}_{self.attr}"
        if k == "index":
            return f"index__{self.attr}_{self.idx}_{self.value}"
        if k == "eng":
            return f"eng__{self.attr}"
        raise ValueError(f"unknown feature kind {k!r}")

    __str__ = render

    @classmethod
    def parse(cls, text: str, grammar: "NameGrammar | None" = None) -> "FeatureName":
        """Inverse of :meth:`render`.

        Static and frequency names are ambiguous on their own (attribute names and
        values may contain underscores); ``grammar`` supplies the vocabularies that
        disambiguate them.
        """
        g = grammar or NameGrammar()
        if text.startswith("eng__"):
            return cls("eng", text[5:])
        if text.startswith("static__"):
            rest = text[8:]
            if rest in g.static_numeric:
                return cls("static_num", rest)
            cands = [a for a in g.static_categorical if rest.startswith(a + "_")]
            if cands:
                a = max(cands, key=len)
                return cls("static_cat", a, rest[len(a) + 1:])
            if grammar is None and "_" in rest:
                a, v = rest.split("_", 1)
                return cls("static_cat", a, v)
            return cls("static_num", rest)
        if text.startswith("agg__"):
            v = text[5:]
            if v in g.resources and v not in g.activities:
                return cls("agg_count", "Resource", v)
            return cls("agg_count", "Activity", v)
        m = _STAT_RE.match(text)
        if m:
            return cls("agg_stat", m.group(2), stat=m.group(1))
        m = _INDEX_RE.match(text)
        if m:
            return cls("index", m.group(1), m.group(3), idx=int(m.group(2)))
        raise ValueError(f"not a feature name: {text!r}")


@dataclass(frozen=True)
class NameGrammar:
    static_numeric: frozenset = frozenset()
    static_categorical: frozenset = frozenset()
    activities: frozenset = frozenset()
    resources: frozenset = frozenset()


@dataclass(frozen=True)
class LogContext:
    """Case spans of a log, for the open-cases feature."""

    case_ids: tuple[str, ...]
    starts: tuple[float, ...]
    ends: tuple[float, ...]

    @classmethod
    def from_traces(cls, traces: Iterable[Trace]) -> "LogContext":
        traces = list(traces)
        return cls(
            tuple(t.case_id for t in traces),
            tuple(t.start.timestamp() for t in traces),
            tuple(t.end.timestamp() for t in traces),
        )

    @cached_property
    def _sorted(self):
        return sorted(self.starts), sorted(self.ends), dict(zip(self.case_ids, zip(self.starts, self.ends)))

    def open_cases(self, at: float, exclude: str | None = None) -> int:
        starts, ends, spans = self._sorted
        # intervals with start <= at minus those with end < at
        n = bisect.bisect_right(starts, at) - bisect.bisect_left(ends, at)
        if exclude in spans:
            s, e = spans[exclude]
            if s <= at <= e:
                n -= 1
        return n


def engineered_features(prefix: Prefix, context: LogContext | None) -> dict[str, float]:
    events = prefix.events
    last = events[-1].timestamp
    prev = events[-2].timestamp if len(events) > 1 else last
    midnight = last.replace(hour=0, minute=0, second=0, microsecond=0)
    at = last.timestamp()
    return {
        "eng__time_since_last_event": (last - prev).total_seconds(),
        "eng__time_since_case_start": (last - events[0].timestamp).total_seconds(),
        "eng__time_since_midnight": (last - midnight).total_seconds(),
        "eng__weekday": float(last.weekday()),
        "eng__month": float(last.month),
        "eng__event_number": float(len(events)),
        "eng__open_cases": float(context.open_cases(at, prefix.case_id)) if context else 0.0,
    }


@dataclass(frozen=True)
class FeatureSpec:
    kind: str
    engineered: bool
    static_numeric: tuple[str, ...]
    static_categorical: tuple[tuple[str, tuple[str, ...]], ...]
    activities: tuple[str, ...]
    resources: tuple[str, ...]
    event_numeric: tuple[str, ...]
    max_index: int = 0
    impute: tuple[float, ...] = ()

    @cached_property
    def features(self) -> tuple[FeatureName, ...]:
        out = [FeatureName("static_num", a) for a in self.static_numeric]
        for a, values in self.static_categorical:
            out += [FeatureName("static_cat", a, v) for v in values]
        if self.kind == AGGREGATION:
            out += [FeatureName("agg_count", "Activity", v) for v in self.activities]
            out += [FeatureName("agg_count", "Resource", v) for v in self.resources]
            for a in self.event_numeric:
                out += [FeatureName("agg_stat", a, stat=s) for s in STATS]
        elif self.kind == INDEX:
            for i in range(1, self.max_index + 1):
                out += [FeatureName("index", "Activity", v, idx=i) for v in self.activities]
                out += [FeatureName("index", "Resource", v, idx=i) for v in self.resources]
        else:
            raise ValueError(f"unknown encoding kind {self.kind!r}")
        if self.engineered:
            out += [FeatureName("eng", n) for n in ENGINEERED]
        return tuple(out)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(f.render() for f in self.features)

    @cached_property
    def column(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    @property
    def width(self) -> int:
        return len(self.names)

    @cached_property
    def grammar(self) -> NameGrammar:
        return NameGrammar(
            frozenset(self.static_numeric),
            frozenset(a for a, _ in self.static_categorical),
            frozenset(self.activities),
            frozenset(self.resources),
        )

    def parse_name(self, text: str) -> FeatureName:
        return FeatureName.parse(text, self.grammar)

    def blocks(self) -> list[tuple[str, str, list[int]]]:
        """(block name, block kind, column indices) covering every column once.

        Kinds: ``onehot`` (at most one active column), ``count`` and ``numeric``.
        """
        groups: dict[tuple[str, str], list[int]] = {}
        for i, f in enumerate(self.features):
            if f.kind == "static_cat":
                key = (f"static__{f.attr}", "onehot")
            elif f.kind == "index":
                key = (f"index__{f.attr}_{f.idx}", "onehot")
            elif f.kind == "agg_count":
                key = (f"agg__{f.attr}", "count")
            else:
                key = (f.render(), "numeric")
            groups.setdefault(key, []).append(i)
        return [(name, kind, cols) for (name, kind), cols in groups.items()]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "engineered": self.engineered,
            "static_numeric": list(self.static_numeric),
            "static_categorical": [[a, list(v)] for a, v in self.static_categorical],
            "activities": list(self.activities),
            "resources": list(self.resources),
            "event_numeric": list(self.event_numeric),
            "max_index": self.max_index,
            "impute": list(self.impute),
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        spec = cls(
            kind=d["kind"],
            engineered=d["engineered"],
            static_numeric=tuple(d["static_numeric"]),
            static_categorical=tuple((a, tuple(v)) for a, v in d["static_categorical"]),
            activities=tuple(d["activities"]),
            resources=tuple(d["resources"]),
            event_numeric=tuple(d["event_numeric"]),
            max_index=d["max_index"],
            impute=tuple(float(x) for x in d["impute"]),
        )
        if "names" in d and list(d["names"]) != list(spec.names):
            raise SpecMismatch("stored feature names disagree with the vocabularies")
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass
class FeatureMatrix:
    X: np.ndarray
    targets: np.ndarray
    names: tuple[str, ...]
    row_meta: list[tuple[str, int]] = field(default_factory=list)
    spec: FeatureSpec | None = None

    @property
    def shape(self):
        return self.X.shape

    @classmethod
    def from_arrays(cls, X, y, names: Sequence[str] | None = None) -> "FeatureMatrix":
        X = np.asarray(X, dtype=float)
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        return cls(X, np.asarray(y, dtype=float), tuple(names))

    def drop_columns(self, names: Iterable[str]) -> "FeatureMatrix":
        drop = set(names)
        keep = [j for j, n in enumerate(self.names) if n not in drop]
        return FeatureMatrix(
            self.X[:, keep], self.targets, tuple(self.names[j] for j in keep), list(self.row_meta)
        )


def _vocab(values: Iterable) -> tuple[str, ...]:
    return tuple(sorted({v for v in values if v is not None}))


def build_spec(
    bucket: Bucket,
    kind: str = AGGREGATION,
    engineered: bool = False,
    context: LogContext | None = None,
) -> FeatureSpec:
    """Freeze vocabularies (and numeric imputation means) from a training bucket."""
    if not bucket.prefixes:
        raise ValueError("cannot build a spec from an empty bucket")
    if kind not in (AGGREGATION, INDEX):
        raise ValueError(f"unknown encoding kind {kind!r}")
    static_num, static_cat = set(), {}
    for p in bucket.prefixes:
        for a, v in p.case_attrs.items():
            if isinstance(v, str):
                static_cat.setdefault(a, set()).add(v)
            else:
                static_num.add(a)
    events = [e for p in bucket.prefixes for e in p.events]
    spec = FeatureSpec(
        kind=kind,
        engineered=engineered,
        static_numeric=tuple(sorted(static_num - set(static_cat))),
        static_categorical=tuple((a, tuple(sorted(v))) for a, v in sorted(static_cat.items())),
        activities=_vocab(e.activity for e in events),
        resources=_vocab(e.resource for e in events),
        event_numeric=_vocab(k for e in events for k in e.numeric_attrs),
        max_index=max(p.length for p in bucket.prefixes) if kind == INDEX else 0,
    )
    if len(set(spec.names)) != len(spec.names):
        dup = sorted({n for n in spec.names if spec.names.count(n) > 1})
        raise ValueError(f"feature names collide: {dup}")
    raw = np.array([_encode_raw(p, spec, context) for p in bucket.prefixes])
    with np.errstate(invalid="ignore"):
        counts = np.sum(~np.isnan(raw), axis=0)
        sums = np.nansum(raw, axis=0)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return FeatureSpec(**{**_fields(spec), "impute": tuple(float(m) for m in means)})


def _fields(spec: FeatureSpec) -> dict:
    return {
        k: getattr(spec, k)
        for k in ("kind", "engineered", "static_numeric", "static_categorical",
                  "activities", "resources", "event_numeric", "max_index", "impute")
    }


def _encode_raw(prefix: Prefix, spec: FeatureSpec, context: LogContext | None) -> np.ndarray:
    col = spec.column
    row = np.zeros(spec.width)
    for a in spec.static_numeric:
        v = prefix.case_attrs.get(a)
        row[col[f"static__{a}"]] = v if isinstance(v, (int, float)) else np.nan
    for a, _ in spec.static_categorical:
        j = col.get(f"static__{a}_{prefix.case_attrs.get(a)}")
        if j is not None:
            row[j] = 1.0
    if spec.kind == AGGREGATION:
        for e in prefix.events:
            j = col.get(f"agg__{e.activity}")
            if j is not None and e.activity in spec.activities:
                row[j] += 1.0
            if e.resource is not None and e.resource in spec.resources:
                row[col[f"agg__{e.resource}"]] += 1.0
        for a in spec.event_numeric:
            vals = np.array([e.numeric_attrs[a] for e in prefix.events if a in e.numeric_attrs])
            if len(vals):
                stats = (vals.min(), vals.max(), vals.mean(), vals.std(), vals.sum())
            else:
                stats = (np.nan, np.nan, np.nan, np.nan, 0.0)
            for s, v in zip(STATS, stats):
                row[col[f"agg_{s}_{a}"]] = v
    else:
        for i, e in enumerate(prefix.events[: spec.max_index], start=1):
            j = col.get(f"index__Activity_{i}_{e.activity}")
            if j is not None:
                row[j] = 1.0
            if e.resource is not None:
                j = col.get(f"index__Resource_{i}_{e.resource}")
                if j is not None:
                    row[j] = 1.0
    if spec.engineered:
        if context is None:
            raise ValueError("engineered features need a LogContext")
        for name, v in engineered_features(prefix, context).items():
            row[col[name]] = v
    return row


def encode(prefix: Prefix, spec: FeatureSpec, context: LogContext | None = None) -> np.ndarray:
    if spec.kind not in (AGGREGATION, INDEX) or (spec.impute and len(spec.impute) != spec.width):
        raise SpecMismatch("feature spec is inconsistent with its encoding kind")
    row = _encode_raw(prefix, spec, context)
    nan = np.isnan(row)
    if nan.any():
        row[nan] = np.asarray(spec.impute)[nan] if spec.impute else 0.0
    return row


def encode_bucket(
    bucket: Bucket, spec: FeatureSpec, context: LogContext | None = None
) -> FeatureMatrix:
    if bucket.prefixes:
        X = np.vstack([encode(p, spec, context) for p in bucket.prefixes])
    else:
        X = np.zeros((0, spec.width))
    y = np.array([np.nan if t is None else float(t) for t in bucket.targets]) if bucket.targets else np.full(len(X), np.nan)
    meta = [(p.case_id, p.length) for p in bucket.prefixes]
    return FeatureMatrix(X, y, spec.names, meta, spec)
