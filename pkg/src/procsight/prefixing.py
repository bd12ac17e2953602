"""Prefix generation and bucketing (single bucket / one bucket per prefix length)."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import EmptyPrefixSet, LengthOutOfRange, NoUsableBucket
from .event_log import AttrValue, Event, LabeledLog, Trace

SINGLE = "single"
PREFIX_LENGTH = "prefix_length"


@dataclass(frozen=True)
class Prefix:
    case_id: str
    length: int
    events: tuple[Event, ...]
    case_attrs: dict[str, AttrValue] = field(default_factory=dict)


@dataclass(frozen=True)
class BucketingStrategy:
    kind: str = SINGLE
    min_len: int = 1
    max_len: int = 40
    gap: int = 1

    def __post_init__(self):
        if self.kind not in (SINGLE, PREFIX_LENGTH):
            raise ValueError(f"unknown bucketing strategy {self.kind!r}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.gap < 1:
            raise ValueError("gap must be >= 1")

    def lengths_for(self, trace_len: int) -> range:
        return range(self.min_len, min(self.max_len, trace_len) + 1, self.gap)


@dataclass
class Bucket:
    bucket_id: str
    prefixes: list[Prefix]
    targets: list[Any] = field(default_factory=list)

    def __len__(self):
        return len(self.prefixes)


def prefix(trace: Trace, length: int) -> Prefix:
    if not 1 <= length <= len(trace):
        raise LengthOutOfRange(length, len(trace))
    return Prefix(trace.case_id, length, trace.events[:length], trace.case_attrs)


def generate_prefixes(log: LabeledLog, strategy: BucketingStrategy) -> list[tuple[Prefix, Any]]:
    """All (prefix, target) pairs on the strategy's length grid.

    Outcome labels propagate to every prefix of the trace; remaining-time targets
    are prefix specific.
    """
    out = []
    for trace, target in zip(log.traces, log.targets):
        for length in strategy.lengths_for(len(trace)):
            y = target[length - 1] if log.task == "remaining_time" else target
            out.append((prefix(trace, length), y))
    if not out:
        raise EmptyPrefixSet("no trace reaches the minimum prefix length")
    return out


def bucket_id_for_length(length: int) -> str:
    return f"len_{length}"


def assign_buckets(pairs: Sequence, strategy: BucketingStrategy) -> list[Bucket]:
    """Group prefixes into buckets.

    ``pairs`` may hold bare prefixes or (prefix, target) tuples.
    """
    if not pairs:
        raise EmptyPrefixSet("cannot bucket an empty prefix set")
    if isinstance(pairs[0], Prefix):
        pairs = [(p, None) for p in pairs]
    if strategy.kind == SINGLE:
        return [Bucket(SINGLE, [p for p, _ in pairs], [y for _, y in pairs])]
    grouped: dict[int, Bucket] = defaultdict(lambda: Bucket("", [], []))
    for p, y in pairs:
        b = grouped[p.length]
        b.prefixes.append(p)
        b.targets.append(y)
    buckets = []
    for length in sorted(grouped):
        b = grouped[length]
        b.bucket_id = bucket_id_for_length(length)
        buckets.append(b)
    return buckets


def bucket_length(bucket_id: str) -> int:
    return int(bucket_id.split("_", 1)[1])


def bucket_for(running: Prefix, strategy: BucketingStrategy, known_buckets) -> str:
    """Route a running prefix to a trained bucket.

    Prefix-length buckets clamp down to the longest trained length not exceeding
    the running length.
    """
    known = set(known_buckets)
    if strategy.kind == SINGLE:
        if SINGLE not in known:
            raise NoUsableBucket("no single bucket trained")
        return SINGLE
    exact = bucket_id_for_length(running.length)
    if exact in known:
        return exact
    usable = [bucket_length(b) for b in known if b.startswith("len_") and bucket_length(b) <= running.length]
    if not usable:
        raise NoUsableBucket(f"prefix length {running.length} is below every trained bucket")
    return bucket_id_for_length(max(usable))
