import warnings
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procsight.errors import BadTimestamp, EmptyLog, MissingColumn, RuleActivityAbsentEverywhere
from procsight.event_log import (
    MISSING,
    ActivityOccurs,
    CsvSchema,
    EventuallyFollowed,
    label_outcome,
    parse_csv,
    remaining_time_targets,
    to_csv,
)
from procsight.synthetic import remaining_time_log

from conftest import T0, log_from_activities

SCHEMA = CsvSchema(case_id="case", activity="act", timestamp="ts")


def test_grouping_two_cases():
    text = "case,act,ts\n1,A,2020-01-01 10:00:00\n2,B,2020-01-01 10:05:00\n1,C,2020-01-01 10:10:00\n"
    log = parse_csv(text.encode(), SCHEMA)
    assert len(log.traces) == 2
    assert sorted(len(t) for t in log.traces) == [1, 2]


def test_events_sorted_and_ties_keep_file_order():
    text = (
        "case,act,ts\n"
        "1,C,2020-01-01 10:10:00\n"
        "1,A,2020-01-01 10:00:00\n"
        "1,X,2020-01-01 10:05:00\n"
        "1,Y,2020-01-01 10:05:00\n"
    )
    (trace,) = parse_csv(text, SCHEMA).traces
    assert trace.activities == ["A", "X", "Y", "C"]


def test_millisecond_timestamps():
    text = "case,act,ts\n1,A,2020-01-01 10:00:00.123\n1,B,2020-01-01 10:00:00.120\n"
    (trace,) = parse_csv(text, SCHEMA).traces
    assert trace.activities == ["B", "A"]
    assert trace.events[1].timestamp.microsecond == 123000


def test_mixed_column_is_categorical_and_round_trips():
    text = "case,act,ts,amount\n1,A,2020-01-01 10:00:00,10\n1,B,2020-01-01 10:01:00,x\n"
    log = parse_csv(text, SCHEMA)
    assert log.categorical_columns == ("amount",)
    assert log.traces[0].events[0].categorical_attrs == {"amount": "10"}
    again = parse_csv(to_csv(log), SCHEMA)
    assert again == log
    assert again.categorical_columns == ("amount",)


def test_numeric_inference_and_missing_values():
    text = (
        "case,act,ts,cost,kind\n"
        "1,A,2020-01-01 10:00:00,1.5,\n"
        "1,B,2020-01-01 10:01:00,,k1\n"
    )
    log = parse_csv(text, SCHEMA)
    assert log.numeric_columns == ("cost",)
    e1, e2 = log.traces[0].events
    assert e1.numeric_attrs == {"cost": 1.5} and e2.numeric_attrs == {}
    assert e1.categorical_attrs == {"kind": MISSING}


def test_case_attributes_taken_from_first_row():
    schema = CsvSchema(case_id="case", activity="act", timestamp="ts", case_attributes=("age",))
    text = "case,act,ts,age\n1,A,2020-01-01 10:00:00,40\n1,B,2020-01-01 10:01:00,40\n"
    (trace,) = parse_csv(text, schema).traces
    assert trace.case_attrs == {"age": 40.0}
    assert trace.events[0].numeric_attrs == {}


def test_missing_column():
    with pytest.raises(MissingColumn) as info:
        parse_csv("case,act\n1,A\n", SCHEMA)
    assert info.value.name == "ts"


def test_bad_timestamp_reports_row():
    with pytest.raises(BadTimestamp) as info:
        parse_csv("case,act,ts\n1,A,2020-01-01 10:00:00\n1,B,yesterday\n", SCHEMA)
    assert info.value.row == 3 and info.value.value == "yesterday"


def test_empty_log():
    with pytest.raises(EmptyLog):
        parse_csv("case,act,ts\n", SCHEMA)


def test_custom_delimiter_and_format():
    schema = CsvSchema(case_id="case", activity="act", timestamp="ts", delimiter=";",
                       timestamp_format="%d.%m.%Y %H:%M")
    log = parse_csv("case;act;ts\n1;A;02.01.2020 10:00\n", schema)
    assert log.traces[0].start.day == 2


_value = st.one_of(
    st.just(""),
    st.sampled_from(["x", "y", "10", "2.5", "-3"]),
    st.integers(-5, 5).map(str),
)


@settings(max_examples=60, deadline=None)
@given(
    rows=st.lists(
        st.tuples(st.sampled_from(["c1", "c2", "c3"]), st.sampled_from(["A", "B", "C"]),
                  st.integers(0, 10**6), _value, _value),
        min_size=1, max_size=25,
    )
)
def test_round_trip_is_stable(rows):
    lines = ["case,act,ts,u,v"]
    for cid, act, ms, u, v in rows:
        ts = (T0 + timedelta(milliseconds=ms)).strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]
        lines.append(f"{cid},{act},{ts},{u},{v}")
    log = parse_csv("\n".join(lines) + "\n", SCHEMA)
    again = parse_csv(to_csv(log), SCHEMA)
    assert again == log
    assert parse_csv(to_csv(again), SCHEMA) == again


# --- labeling -----------------------------------------------------------------


def test_activity_occurs_truncates_positive():
    log = log_from_activities({"p": ["A", "B", "C"], "n": ["A", "B"]})
    lab = label_outcome(log, ActivityOccurs("C", truncate=True))
    by = dict(zip([t.case_id for t in lab.traces], zip(lab.traces, lab.targets)))
    assert by["p"][1] == 1 and by["p"][0].activities == ["A", "B"]
    assert by["n"][1] == 0 and by["n"][0].activities == ["A", "B"]


def test_activity_occurs_without_truncation_keeps_trace():
    log = log_from_activities({"p": ["A", "C", "B"]})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lab = label_outcome(log, ActivityOccurs("C"))
    assert lab.targets == (1,) and lab.traces[0].activities == ["A", "C", "B"]


def test_truncation_at_first_event_drops_case():
    log = log_from_activities({"p": ["C", "A"], "n": ["A"], "q": ["A", "C"]})
    lab = label_outcome(log, ActivityOccurs("C", truncate=True))
    assert lab.dropped == ("p",)
    assert [t.case_id for t in lab.traces] == ["n", "q"]


def test_eventually_followed_examples():
    log = log_from_activities({"a": ["X", "Y", "X"], "b": ["X", "Y"], "c": ["A", "B"], "d": ["X", "X", "Y"]})
    lab = label_outcome(log, EventuallyFollowed("X", "Y"))
    assert dict(zip([t.case_id for t in lab.traces], lab.targets)) == {"a": 0, "b": 1, "c": 1, "d": 1}


def test_single_class_warns():
    log = log_from_activities({"a": ["A"], "b": ["B"]})
    with pytest.warns(RuleActivityAbsentEverywhere):
        lab = label_outcome(log, ActivityOccurs("Z"))
    assert lab.targets == (0, 0)


def brute_force_follows(acts, first, second):
    # every occurrence of `first` has some later `second`
    return all(any(acts[j] == second for j in range(i + 1, len(acts)))
               for i in range(len(acts)) if acts[i] == first)


traces_st = st.dictionaries(
    st.text("abcdefgh", min_size=1, max_size=4),
    st.lists(st.sampled_from("XYZ"), min_size=1, max_size=8),
    min_size=1, max_size=8,
)


@settings(max_examples=100, deadline=None)
@given(traces_st)
def test_eventually_followed_matches_pair_scan(traces):
    log = log_from_activities(traces)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lab = label_outcome(log, EventuallyFollowed("X", "Y"))
    for t, y in zip(lab.traces, lab.targets):
        assert y == int(brute_force_follows(traces[t.case_id], "X", "Y"))
    counts = lab.label_counts()
    assert counts[0] + counts[1] == len(traces)


@settings(max_examples=100, deadline=None)
@given(traces_st)
def test_truncated_traces_never_contain_label_activity(traces):
    log = log_from_activities(traces)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lab = label_outcome(log, ActivityOccurs("Z", truncate=True))
    assert len(lab.traces) + len(lab.dropped) == len(traces)
    for t, y in zip(lab.traces, lab.targets):
        assert "Z" not in t.activities
        assert y == int("Z" in traces[t.case_id])


# --- remaining time -----------------------------------------------------------


def test_remaining_time_subtraction():
    text = "case,act,ts\n1,A,2020-01-01 10:00:00\n1,B,2020-01-01 10:01:00\n1,C,2020-01-01 10:01:30\n"
    lab = remaining_time_targets(parse_csv(text, SCHEMA))
    assert lab.targets == ((90.0, 30.0, 0.0),)


def test_remaining_time_single_event():
    lab = remaining_time_targets(log_from_activities({"a": ["A"]}))
    assert lab.targets == ((0.0,),)


def test_remaining_time_constructed_generator():
    text, schema = remaining_time_log(n_cases=30, step=10)
    lab = remaining_time_targets(parse_csv(text, schema))
    for t, target in zip(lab.traces, lab.targets):
        n = len(t)
        assert target == tuple(10.0 * (n - l) for l in range(1, n + 1))
        assert all(a >= b >= 0 for a, b in zip(target, target[1:]))
