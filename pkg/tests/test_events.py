import gzip
import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repocentrality.events import (
    DEFAULT_KEYWORDS,
    EventKind,
    EventParseError,
    EventRecord,
    EventSchemaError,
    LabelStatus,
    MonthOutOfRange,
    UnknownRepositoryError,
    event_to_line,
    iter_events,
    label_all,
    label_repo,
    month_index,
    month_start,
    parse_event_line,
    parse_timestamp,
    read_events,
    read_labels_csv,
    scan_deprecation_keywords,
    write_events,
    write_labels_csv,
)


def ts(text):
    return parse_timestamp(text)


def line(etype, created="2015-03-17T12:00:00Z", payload=None, user="u1", repo="a/b"):
    obj = {"type": etype, "actor": {"login": user}, "repo": {"name": repo}, "created_at": created}
    if payload is not None:
        obj["payload"] = payload
    return json.dumps(obj)


def test_watch_event_maps_to_star():
    ev = parse_event_line(line("WatchEvent"))
    assert ev.kind is EventKind.STAR
    assert (ev.user, ev.repo) == ("u1", "a/b")
    assert ev.timestamp == datetime(2015, 3, 17, 12, tzinfo=timezone.utc)


def test_unmapped_type_is_skipped():
    assert parse_event_line(line("ForkEvent")) is None


def test_push_size_is_commit_count():
    assert parse_event_line(line("PushEvent", payload={"size": 3})).commit_count == 3
    assert parse_event_line(line("PushEvent")).commit_count == 1


@pytest.mark.parametrize("etype,payload,kind", [
    ("IssuesEvent", {"action": "opened"}, EventKind.ISSUE_OPENED),
    ("PullRequestEvent", {"action": "opened"}, EventKind.PR_OPENED),
    ("IssueCommentEvent", None, EventKind.COMMENT),
    ("CreateEvent", {"ref_type": "tag"}, EventKind.TAG_CREATED),
    ("ArchivedEvent", None, EventKind.ARCHIVED),
])
def test_type_mapping(etype, payload, kind):
    assert parse_event_line(line(etype, payload=payload)).kind is kind


@pytest.mark.parametrize("etype,payload", [
    ("IssuesEvent", {"action": "closed"}),
    ("PullRequestEvent", {"action": "synchronize"}),
    ("CreateEvent", {"ref_type": "branch"}),
])
def test_non_opening_actions_skip(etype, payload):
    assert parse_event_line(line(etype, payload=payload)) is None


def test_malformed_json_reports_byte_offset():
    with pytest.raises(EventParseError) as info:
        parse_event_line('{"type": "WatchEvent", oops}')
    assert info.value.offset == 23


def test_missing_required_field_is_schema_error():
    with pytest.raises(EventSchemaError):
        parse_event_line(json.dumps({"type": "WatchEvent", "repo": {"name": "a/b"},
                                     "created_at": "2015-03-17T12:00:00Z"}))
    with pytest.raises(EventSchemaError):
        parse_event_line(line("IssuesEvent", payload={}))


def test_bad_repo_name_and_push_size():
    with pytest.raises(EventSchemaError):
        parse_event_line(line("WatchEvent", repo="nonslash"))
    with pytest.raises(EventSchemaError):
        parse_event_line(line("PushEvent", payload={"size": 0}))


@pytest.mark.parametrize("stamp,index", [
    ("2011-01-15T00:00:00Z", 0),
    ("2015-03-17T12:00:00Z", 50),
    ("2011-12-31T23:59:59Z", 11),
    ("2012-01-01T00:00:00Z", 12),
])
def test_month_index(stamp, index):
    assert month_index(ts(stamp)) == index


def test_pre_epoch_is_out_of_range():
    with pytest.raises(MonthOutOfRange):
        month_index(ts("2010-12-31T23:59:59Z"))


def test_offset_timestamps_bucket_in_utc():
    # 2015-03-31T23:30-02:00 is already April in UTC
    assert month_index(ts("2015-03-31T23:30:00-02:00")) == 51


def test_keyword_examples():
    text = "This project is NO LONGER MAINTAINED"
    assert scan_deprecation_keywords(text, ["no longer maintained"]) == [("no longer maintained", 16)]
    fp = "versions from 1.0.14 to 1.1.4 are deprecated"
    assert scan_deprecation_keywords(fp, ["deprecated"]) == [("deprecated", fp.index("deprecated"))]
    assert scan_deprecation_keywords("active and healthy", ["deprecated"]) == []
    assert scan_deprecation_keywords("", DEFAULT_KEYWORDS) == []


def test_keyword_offsets_are_bytes_and_ordered():
    text = "é deprecated, abandoned, deprecated"
    hits = scan_deprecation_keywords(text, ["deprecated", "abandoned"])
    raw = text.encode()
    assert [h[1] for h in hits] == sorted(h[1] for h in hits)
    for kw, off in hits:
        assert raw[off: off + len(kw)].decode() == kw
    assert len(hits) == 3


def _events(*specs):
    return [EventRecord(kind, "u", "o/r", ts(stamp), 1 if kind is EventKind.PUSH else 0) for kind, stamp in specs]


def test_label_archived():
    evs = _events((EventKind.PUSH, "2018-05-02T00:00:00Z"), (EventKind.ARCHIVED, "2018-07-09T00:00:00Z"),
                  (EventKind.STAR, "2018-09-01T00:00:00Z"))
    lab = label_repo(evs, "deprecated", DEFAULT_KEYWORDS, 200)
    assert lab.status is LabelStatus.ARCHIVED
    assert lab.month == month_index(ts("2018-07-01T00:00:00Z"))
    assert lab.month <= lab.last_observed


def test_label_keyword_uses_last_event_month():
    evs = _events((EventKind.PUSH, "2018-05-02T00:00:00Z"), (EventKind.STAR, "2018-09-01T00:00:00Z"))
    lab = label_repo(evs, "deprecated in favor of X", DEFAULT_KEYWORDS, 200)
    assert lab.status is LabelStatus.KEYWORD
    assert lab.matched == "deprecated"
    assert lab.month == month_index(ts("2018-09-01T00:00:00Z"))


def test_label_alive_is_censored_at_horizon():
    evs = _events((EventKind.PUSH, "2018-05-02T00:00:00Z"))
    lab = label_repo(evs, "a fine library", DEFAULT_KEYWORDS, 120)
    assert lab.status is LabelStatus.ALIVE and not lab.deprecated
    assert lab.end_month == 120


def test_label_empty_is_unknown():
    with pytest.raises(UnknownRepositoryError):
        label_repo([], None, DEFAULT_KEYWORDS, 10)


def test_label_order_independent():
    evs = _events((EventKind.PUSH, "2018-05-02T00:00:00Z"), (EventKind.ARCHIVED, "2018-07-09T00:00:00Z"),
                  (EventKind.ARCHIVED, "2018-06-09T00:00:00Z"))
    assert label_repo(evs, None, DEFAULT_KEYWORDS, 0) == label_repo(evs[::-1], None, DEFAULT_KEYWORDS, 0)


def test_label_all_default_horizon(tmp_path):
    a = EventRecord(EventKind.PUSH, "u", "o/a", ts("2016-01-05T00:00:00Z"), 1)
    b = EventRecord(EventKind.STAR, "u", "o/b", ts("2016-04-05T00:00:00Z"))
    labels = label_all([a, b])
    assert labels["o/a"].end_month == month_index(b.timestamp)
    write_labels_csv(labels, tmp_path / "l.csv")
    assert read_labels_csv(tmp_path / "l.csv") == labels


def test_file_round_trip_and_gzip(tmp_path):
    evs = [
        EventRecord(EventKind.PUSH, "u1", "a/b", ts("2015-03-17T12:00:00Z"), 4),
        EventRecord(EventKind.STAR, "u2", "a/b", ts("2015-03-18T12:00:00.250000Z")),
        EventRecord(EventKind.ARCHIVED, "u1", "a/b", ts("2015-04-01T00:00:00Z")),
    ]
    for name in ("ev.jsonl", "ev.jsonl.gz"):
        path = tmp_path / name
        write_events(evs, path)
        assert read_events(path) == evs
    with gzip.open(tmp_path / "ev.jsonl.gz", "rb") as fh:
        assert fh.read(1) == b"{"


def test_iter_events_file_offsets_and_skips(tmp_path):
    good = line("WatchEvent")
    path = tmp_path / "ev.jsonl"
    path.write_text(good + "\n" + line("ForkEvent") + "\n\n" + '{"type": }' + "\n")
    stats = {}
    it = iter_events(path, stats)
    assert next(it).kind is EventKind.STAR
    with pytest.raises(EventParseError) as info:
        list(it)
    assert info.value.line_no == 4
    expected = len(good) + 1 + len(line("ForkEvent")) + 1 + 1 + 9
    assert info.value.offset == expected
    assert stats["skipped"] == 1


def test_iter_events_pre_epoch_carries_line(tmp_path):
    path = tmp_path / "ev.jsonl"
    path.write_text(line("WatchEvent") + "\n" + line("WatchEvent", created="2010-05-01T00:00:00Z") + "\n")
    with pytest.raises(MonthOutOfRange) as info:
        list(iter_events(path))
    assert info.value.line_no == 2


stamps = st.datetimes(min_value=datetime(2011, 1, 1), max_value=datetime(2030, 12, 31),
                      timezones=st.just(timezone.utc))
names = st.text(alphabet="abcdefghij-_0123456789", min_size=1, max_size=8)


@given(kind=st.sampled_from(list(EventKind)), user=names, owner=names, repo=names, when=stamps,
       size=st.integers(1, 50))
@settings(max_examples=200, deadline=None)
def test_reserialize_preserves_fields(kind, user, owner, repo, when, size):
    ev = EventRecord(kind, user, f"{owner}/{repo}", when, size if kind is EventKind.PUSH else 0)
    back = parse_event_line(event_to_line(ev))
    assert (back.kind, back.user, back.repo, back.timestamp) == (ev.kind, ev.user, ev.repo, ev.timestamp)


@given(a=stamps, b=stamps)
@settings(max_examples=200, deadline=None)
def test_month_index_monotone(a, b):
    if a <= b:
        assert month_index(a) <= month_index(b)
    else:
        assert month_index(a) >= month_index(b)


@given(m=st.integers(0, 600))
def test_month_start_inverts_index(m):
    assert month_index(month_start(m)) == m
    assert month_index(month_start(m) - timedelta(seconds=1)) == m - 1 if m else True
