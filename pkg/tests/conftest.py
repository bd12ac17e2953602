from datetime import datetime, timedelta

import numpy as np
import pytest

from procsight.event_log import CsvSchema, parse_csv
from procsight.synthetic import make_csv

T0 = datetime(2020, 1, 6, 9, 0, 0)  # a Monday


def log_from_activities(traces, step=60, resources=None, case_attrs=None, starts=None):
    """EventLog from {case_id: [activity, ...]} via the CSV parser."""
    cases = []
    for k, (cid, acts) in enumerate(traces.items()):
        start = starts[cid] if starts else T0 + timedelta(hours=k)
        events = []
        for i, a in enumerate(acts):
            e = {"activity": a, "timestamp": start + timedelta(seconds=step * i)}
            if resources:
                e["resource"] = resources[cid][i]
            events.append(e)
        cases.append({"case_id": cid, "events": events, "attrs": (case_attrs or {}).get(cid, {})})
    cols = sorted({k for a in (case_attrs or {}).values() for k in a})
    text = make_csv(cases, cols, resource=bool(resources))
    schema = CsvSchema(resource="resource" if resources else None, case_attributes=tuple(cols))
    return parse_csv(text, schema)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report -------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class criterion:
    """Context manager recording one acceptance criterion's pass/fail line."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.details: list[str] = []

    def note(self, text: str):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        detail = "; ".join(self.details)
        if exc_type is None:
            ACCEPTANCE[self.number] = (True, f"{self.title} ({detail})" if detail else self.title)
        else:
            ACCEPTANCE[self.number] = (False, f"{self.title}: {exc_type.__name__}: {exc} ({detail})")
        line = ACCEPTANCE[self.number]
        print(f"criterion {self.number:2d} {'PASS' if line[0] else 'FAIL'}: {line[1]}")
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {text}")
