"""CSV event logs, outcome labeling rules and remaining-time targets."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Union

from .errors import BadTimestamp, EmptyLog, MissingColumn, RuleActivityAbsentEverywhere

DEFAULT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
MISSING = "missing"

AttrValue = Union[float, str]


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: datetime
    resource: str | None = None
    numeric_attrs: dict[str, float] = field(default_factory=dict)
    categorical_attrs: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]
    case_attrs: dict[str, AttrValue] = field(default_factory=dict)

    def __len__(self):
        return len(self.events)

    @property
    def activities(self) -> list[str]:
        return [e.activity for e in self.events]

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp

    @property
    def end(self) -> datetime:
        return self.events[-1].timestamp


@dataclass(frozen=True)
class CsvSchema:
    """Maps column roles to header names.

    ``case_attributes`` lists the columns holding case-level (static) values;
    every other unmapped column becomes an event attribute.
    """

    case_id: str = "case_id"
    activity: str = "activity"
    timestamp: str = "timestamp"
    resource: str | None = None
    case_attributes: tuple[str, ...] = ()
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT
    delimiter: str = ","

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        d = dict(d)
        if "case_attributes" in d:
            d["case_attributes"] = tuple(d["case_attributes"])
        return cls(**d)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    schema: CsvSchema
    numeric_columns: tuple[str, ...] = ()
    categorical_columns: tuple[str, ...] = ()
    columns: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self):
        return len(self.traces)

    def by_case(self) -> dict[str, Trace]:
        return {t.case_id: t for t in self.traces}

    @property
    def raw_attribute_count(self) -> int:
        """Columns carrying information besides case id and timestamp."""
        n = 1 + (self.schema.resource is not None)
        return n + len(self.numeric_columns) + len(self.categorical_columns)


def _parse_timestamp(value: str, fmt: str, row: int) -> datetime:
    value = value.strip()
    for f in (fmt, fmt + ".%f"):
        try:
            ts = datetime.strptime(value, f)
            break
        except ValueError:
            continue
    else:
        raise BadTimestamp(row, value)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    # millisecond precision
    return ts.replace(microsecond=(ts.microsecond // 1000) * 1000)


def _is_number(value: str) -> bool:
    try:
        return math.isfinite(float(value))
    except ValueError:
        return False


def parse_csv(source, schema: CsvSchema) -> EventLog:
    """Parse a CSV byte/text stream (or string) into an :class:`EventLog`."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    text = text.lstrip("﻿")

    reader = csv.DictReader(io.StringIO(text), delimiter=schema.delimiter)
    header = reader.fieldnames or []
    required = [schema.case_id, schema.activity, schema.timestamp]
    if schema.resource is not None:
        required.append(schema.resource)
    for col in required + list(schema.case_attributes):
        if col not in header:
            raise MissingColumn(col)
    rows = list(reader)
    if not rows:
        raise EmptyLog("event log has no rows")

    reserved = set(required)
    attr_cols = [c for c in header if c not in reserved]
    numeric = {
        c for c in attr_cols
        if all(_is_number(r[c]) for r in rows if (r[c] or "").strip() != "")
    }
    case_cols = set(schema.case_attributes)

    grouped: dict[str, list[Event]] = {}
    case_attrs: dict[str, dict[str, AttrValue]] = {}
    for i, r in enumerate(rows, start=2):  # header is line 1
        cid = r[schema.case_id]
        activity = (r[schema.activity] or "").strip()
        if not activity:
            raise ValueError(f"row {i}: empty activity")
        ts = _parse_timestamp(r[schema.timestamp] or "", schema.timestamp_format, i)
        num: dict[str, float] = {}
        cat: dict[str, str] = {}
        for c in attr_cols:
            raw = (r[c] or "").strip()
            if c in numeric:
                if raw != "":
                    num[c] = float(raw)
            else:
                cat[c] = raw if raw != "" else MISSING
        resource = None
        if schema.resource is not None:
            resource = (r[schema.resource] or "").strip() or MISSING
        ev_num = {k: v for k, v in num.items() if k not in case_cols}
        ev_cat = {k: v for k, v in cat.items() if k not in case_cols}
        if cid not in grouped:
            grouped[cid] = []
            # first row of the case defines its static attributes
            static: dict[str, AttrValue] = {}
            for c in schema.case_attributes:
                if c in num:
                    static[c] = num[c]
                elif c in cat:
                    static[c] = cat[c]
            case_attrs[cid] = static
        grouped[cid].append(Event(cid, activity, ts, resource, ev_num, ev_cat))

    traces = tuple(
        Trace(cid, tuple(sorted(evs, key=lambda e: e.timestamp)), case_attrs[cid])
        for cid, evs in grouped.items()
    )
    return EventLog(
        traces,
        schema,
        numeric_columns=tuple(c for c in attr_cols if c in numeric),
        categorical_columns=tuple(c for c in attr_cols if c not in numeric),
        columns=tuple(header),
    )


def _format_timestamp(ts: datetime, fmt: str) -> str:
    text = ts.strftime(fmt)
    if fmt == DEFAULT_TIMESTAMP_FORMAT and ts.microsecond:
        text += f".{ts.microsecond // 1000:03d}"
    return text


def to_csv(log: EventLog) -> str:
    """Serialize back to CSV using the schema the log was parsed with."""
    s = log.schema
    attrs = set(log.numeric_columns) | set(log.categorical_columns)
    attr_cols = [c for c in log.columns if c in attrs]
    header = [s.case_id, s.activity, s.timestamp]
    if s.resource is not None:
        header.append(s.resource)
    header += attr_cols
    out = io.StringIO()
    w = csv.writer(out, delimiter=s.delimiter, lineterminator="\n")
    w.writerow(header)
    for t in log.traces:
        for e in t.events:
            row = [t.case_id, e.activity, _format_timestamp(e.timestamp, s.timestamp_format)]
            if s.resource is not None:
                row.append(e.resource)
            for c in attr_cols:
                if c in s.case_attributes:
                    v = t.case_attrs.get(c)
                elif c in log.numeric_columns:
                    v = e.numeric_attrs.get(c)
                else:
                    v = e.categorical_attrs.get(c)
                row.append("" if v is None else (repr(v) if isinstance(v, float) else v))
            w.writerow(row)
    return out.getvalue()


# --- labeling ---------------------------------------------------------------


@dataclass(frozen=True)
class ActivityOccurs:
    activity: str
    truncate: bool = False
    positive_class: str = "positive"

    def __post_init__(self):
        if not self.activity:
            raise ValueError("rule activity must be non-empty")


@dataclass(frozen=True)
class EventuallyFollowed:
    first: str
    second: str
    positive_class: str = "positive"

    def __post_init__(self):
        if not self.first or not self.second:
            raise ValueError("rule activities must be non-empty")


LabelingRule = Union[ActivityOccurs, EventuallyFollowed]


def rule_from_dict(d: dict) -> LabelingRule:
    d = dict(d)
    kind = d.pop("type")
    if kind == "activity_occurs":
        return ActivityOccurs(**d)
    if kind == "eventually_followed":
        return EventuallyFollowed(**d)
    raise ValueError(f"unknown rule type {kind!r}")


@dataclass(frozen=True)
class LabeledLog:
    """Traces paired with targets.

    ``task == "outcome"``: targets are 0/1 labels per trace.
    ``task == "remaining_time"``: targets are tuples of remaining seconds, one per
    prefix length 1..len(trace).
    """

    task: str
    traces: tuple[Trace, ...]
    targets: tuple
    dropped: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    def __len__(self):
        return len(self.traces)

    @property
    def entries(self):
        return list(zip(self.traces, self.targets))

    def subset(self, case_ids: Iterable[str]) -> "LabeledLog":
        keep = set(case_ids)
        pairs = [(t, y) for t, y in zip(self.traces, self.targets) if t.case_id in keep]
        return LabeledLog(
            self.task,
            tuple(t for t, _ in pairs),
            tuple(y for _, y in pairs),
            notes=self.notes,
        )

    def label_counts(self) -> dict[int, int]:
        if self.task != "outcome":
            raise ValueError("label counts only exist for outcome tasks")
        return {0: sum(1 for y in self.targets if y == 0), 1: sum(1 for y in self.targets if y == 1)}


def _follows(activities: list[str], first: str, second: str) -> bool:
    last_first = max((i for i, a in enumerate(activities) if a == first), default=None)
    if last_first is None:
        return True  # vacuous
    return any(a == second for a in activities[last_first + 1:])


def label_outcome(log: EventLog, rule: LabelingRule) -> LabeledLog:
    if not log.traces:
        raise EmptyLog("cannot label an empty log")
    traces, labels, dropped = [], [], []
    for t in log.traces:
        acts = t.activities
        if isinstance(rule, ActivityOccurs):
            positive = rule.activity in acts
            if positive and rule.truncate:
                cut = acts.index(rule.activity)
                if cut == 0:
                    # nothing observable before the outcome event
                    dropped.append(t.case_id)
                    continue
                t = Trace(t.case_id, t.events[:cut], t.case_attrs)
        else:
            positive = _follows(acts, rule.first, rule.second)
        traces.append(t)
        labels.append(int(positive))

    notes = []
    if isinstance(rule, ActivityOccurs) and rule.truncate:
        notes.append(
            "positive traces truncated before the outcome activity; negatives keep "
            "full length, so prefix length can carry label signal"
        )
    if len(set(labels)) < 2:
        msg = f"labeling rule {rule!r} yields a single class for every trace"
        warnings.warn(msg, RuleActivityAbsentEverywhere, stacklevel=2)
        notes.append(msg)
    return LabeledLog("outcome", tuple(traces), tuple(labels), tuple(dropped), tuple(notes))


def remaining_time_targets(log: EventLog) -> LabeledLog:
    targets = []
    for t in log.traces:
        end = t.end
        targets.append(tuple((end - e.timestamp).total_seconds() for e in t.events))
    return LabeledLog("remaining_time", tuple(log.traces), tuple(targets))
