"""Synthetic event-log generators used by the test suite and the demo scripts.

Every generator returns CSV text plus the matching :class:`CsvSchema`, so the
fixtures travel through the same parser as real logs.
"""

from __future__ import annotations

import csv
import io
from datetime import datetime, timedelta

import numpy as np

from .event_log import CsvSchema

EPOCH = datetime(2021, 3, 1, 8, 0, 0)


def make_csv(cases, case_columns=(), event_columns=(), resource=True) -> str:
    """``cases``: iterable of dicts with ``case_id``, ``events`` (list of dicts with
    ``activity``, ``timestamp`` and optional ``resource``/event attrs) and ``attrs``."""
    header = ["case_id", "activity", "timestamp"] + (["resource"] if resource else [])
    header += [*case_columns, *event_columns]
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for c in cases:
        for e in c["events"]:
            ts = e["timestamp"].strftime("%Y-%m-%d %H:%M:%S")
            row = [c["case_id"], e["activity"], ts] + ([e.get("resource", "")] if resource else [])
            row += [c.get("attrs", {}).get(k, "") for k in case_columns]
            row += [e.get(k, "") for k in event_columns]
            w.writerow(row)
    return out.getvalue()


def _schema(case_columns=()) -> CsvSchema:
    return CsvSchema(
        case_id="case_id", activity="activity", timestamp="timestamp",
        resource="resource", case_attributes=tuple(case_columns),
    )


def _events(activities, start, rng, resources=("r1", "r2"), step=None):
    t = start
    out = []
    for a in activities:
        out.append({"activity": a, "timestamp": t, "resource": resources[int(rng.integers(len(resources)))]})
        t = t + timedelta(seconds=int(step if step is not None else rng.integers(30, 600)))
    return out


def outcome_log(n_cases=500, seed=0, leak=False, p_pos=0.8, p_neg=0.2,
                vocab=("A", "B", "C", "D"), min_len=3, max_len=8):
    """Outcome fixture labeled by ``ActivityOccurs("Z", truncate=True)``.

    The chance that a case ends in Z depends on whether its first activity is A.
    Z is always appended last, so truncated positives and untouched negatives
    share one length distribution. With ``leak=True`` a case attribute ``leak``
    copies the label.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        length = int(rng.integers(min_len, max_len + 1))
        acts = [vocab[int(rng.integers(len(vocab)))] for _ in range(length)]
        positive = rng.random() < (p_pos if acts[0] == "A" else p_neg)
        if positive:
            acts.append("Z")
        start = EPOCH + timedelta(hours=3 * i)
        c = {"case_id": f"c{i:04d}", "events": _events(acts, start, rng)}
        if leak:
            c["attrs"] = {"leak": int(positive)}
        cases.append(c)
    cols = ("leak",) if leak else ()
    return make_csv(cases, cols), _schema(cols)


def availability_log(n_cases=200, seed=0, position=14, vocab=("A", "B", "C"), max_len=20):
    """Half the cases contain activity Z, always first at ``position``.

    Every case is at least ``position`` events long.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        length = int(rng.integers(position, max(position, max_len) + 1))
        acts = [vocab[int(rng.integers(len(vocab)))] for _ in range(length)]
        if i % 2 == 0:
            acts[position - 1] = "Z"
            # later repeats are allowed; first occurrence stays at `position`
            for j in range(position, length):
                if rng.random() < 0.2:
                    acts[j] = "Z"
        cases.append({"case_id": f"c{i:04d}", "events": _events(acts, EPOCH + timedelta(hours=i), rng)})
    return make_csv(cases), _schema()


def separable_log(n_cases=1000, seed=0, vocab=("A", "B", "C", "D"), min_len=4, max_len=10):
    """Label = presence of activity X, which (when present) sits in positions 1-3."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        length = int(rng.integers(min_len, max_len + 1))
        acts = [vocab[int(rng.integers(len(vocab)))] for _ in range(length)]
        if rng.random() < 0.5:
            acts[int(rng.integers(0, 3))] = "X"
        cases.append({"case_id": f"c{i:04d}", "events": _events(acts, EPOCH + timedelta(hours=i), rng)})
    return make_csv(cases), _schema()


def remaining_time_log(n_cases=400, seed=0, step=10, min_len=3, max_len=12):
    """Each event is ``step`` seconds after the previous one, so the remaining time
    at prefix length l is ``step * (len - l)``. The first activity ``S{len}`` announces
    the trace length."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        length = int(rng.integers(min_len, max_len + 1))
        acts = [f"S{length:02d}"] + [("A", "B", "C")[int(rng.integers(3))] for _ in range(length - 1)]
        start = EPOCH + timedelta(minutes=7 * i)
        cases.append({"case_id": f"c{i:04d}", "events": _events(acts, start, rng, step=step)})
    return make_csv(cases), _schema()


def sparsity_log(n_cases=120, activity_card=40, resource_card=30, case_cards=(41,) * 17 + (56,)):
    """20 raw attributes (activity, resource, 18 categorical case attributes) whose
    values are cycled so each one is observed. Total cardinality = 823 by default."""
    cols = tuple(f"attr{k:02d}" for k in range(len(case_cards)))
    cases = []
    k = 0
    for i in range(n_cases):
        events = []
        for j in range(3):
            events.append({
                "activity": f"act{k % activity_card:02d}",
                "resource": f"res{k % resource_card:02d}",
                "timestamp": EPOCH + timedelta(hours=i, minutes=j),
            })
            k += 1
        attrs = {c: f"v{i % card:02d}" for c, card in zip(cols, case_cards)}
        cases.append({"case_id": f"c{i:04d}", "events": events, "attrs": attrs})
    return make_csv(cases, cols), _schema(cols)
