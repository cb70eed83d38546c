"""GHArchive-style event parsing, month bucketing and deprecation labels."""

from __future__ import annotations

import csv
import enum
import gzip
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

EPOCH_YEAR = 2011
EPOCH = datetime(EPOCH_YEAR, 1, 1, tzinfo=timezone.utc)

DEFAULT_KEYWORDS = (
    "deprecated",
    "no longer maintained",
    "unmaintained",
    "no longer supported",
    "abandoned",
    "obsolete",
    "discontinued",
)


class EventKind(str, enum.Enum):
    STAR = "star"
    PUSH = "push"
    ISSUE_OPENED = "issue_opened"
    PR_OPENED = "pr_opened"
    COMMENT = "comment"
    TAG_CREATED = "tag_created"
    ARCHIVED = "archived"


class EventParseError(ValueError):
    """Malformed JSON. ``offset`` is a byte offset (into the file when known)."""

    def __init__(self, message: str, offset: int, line_no: int | None = None):
        self.msg = message
        self.offset = offset
        self.line_no = line_no
        where = f"byte {offset}" if line_no is None else f"line {line_no}, byte {offset}"
        super().__init__(f"{message} at {where}")


class EventSchemaError(ValueError):
    """A recognized event type is missing a required field."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        self.msg = message
        super().__init__(message if line_no is None else f"line {line_no}: {message}")


class MonthOutOfRange(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        self.msg = message
        self.line_no = line_no
        super().__init__(message if line_no is None else f"line {line_no}: {message}")


class UnknownRepositoryError(ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    kind: EventKind
    user: str
    repo: str
    timestamp: datetime
    commit_count: int = 0
    month: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.repo.count("/") != 1:
            raise EventSchemaError(f"repo {self.repo!r} is not of the form owner/name")
        if self.timestamp.tzinfo is None:
            raise EventSchemaError("timestamp must be timezone-aware")
        if self.kind is EventKind.PUSH and self.commit_count < 1:
            raise EventSchemaError("push events need commit_count >= 1")
        object.__setattr__(self, "month", month_index(self.timestamp))


# GHArchive type -> (kind, predicate on payload)
_TYPE_MAP = {
    "WatchEvent": EventKind.STAR,
    "PushEvent": EventKind.PUSH,
    "IssuesEvent": EventKind.ISSUE_OPENED,
    "PullRequestEvent": EventKind.PR_OPENED,
    "IssueCommentEvent": EventKind.COMMENT,
    "CreateEvent": EventKind.TAG_CREATED,
    "ArchivedEvent": EventKind.ARCHIVED,
}
_KIND_TO_TYPE = {v: k for k, v in _TYPE_MAP.items()}


def parse_timestamp(value: str) -> datetime:
    if not isinstance(value, str) or "T" not in value:
        raise EventSchemaError(f"created_at {value!r} is not an RFC 3339 timestamp")
    text = value[:-1] + "+00:00" if value.endswith(("Z", "z")) else value
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise EventSchemaError(f"created_at {value!r} is not an RFC 3339 timestamp") from exc
    if ts.tzinfo is None:
        raise EventSchemaError(f"created_at {value!r} has no UTC offset")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def _required(obj: dict, *path: str):
    cur = obj
    for key in path:
        if not isinstance(cur, dict) or key not in cur or cur[key] is None:
            raise EventSchemaError(f"missing required field {'.'.join(path)}")
        cur = cur[key]
    return cur


def parse_event_obj(obj: dict) -> EventRecord | None:
    """Map one decoded GHArchive object to an EventRecord, or None to skip it."""
    if not isinstance(obj, dict):
        raise EventSchemaError("event line is not a JSON object")
    etype = obj.get("type")
    kind = _TYPE_MAP.get(etype)
    if kind is None:
        return None
    payload = obj.get("payload") or {}
    if kind is EventKind.ISSUE_OPENED or kind is EventKind.PR_OPENED:
        if _required(obj, "payload", "action") != "opened":
            return None
    elif kind is EventKind.TAG_CREATED:
        if _required(obj, "payload", "ref_type") != "tag":
            return None

    user = _required(obj, "actor", "login")
    repo = _required(obj, "repo", "name")
    ts = parse_timestamp(_required(obj, "created_at"))
    commit_count = 0
    if kind is EventKind.PUSH:
        size = payload.get("size", 1) if isinstance(payload, dict) else 1
        if not isinstance(size, int) or isinstance(size, bool) or size < 1:
            raise EventSchemaError(f"push payload.size must be a positive int, got {size!r}")
        commit_count = size
    if not isinstance(user, str) or not isinstance(repo, str):
        raise EventSchemaError("actor.login and repo.name must be strings")
    return EventRecord(kind, user, repo, ts, commit_count)


def parse_event_line(line: str | bytes) -> EventRecord | None:
    """Parse one JSON line. Returns None for event types we do not model."""
    if isinstance(line, bytes):
        raw = line
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EventParseError("invalid UTF-8", exc.start) from None
    else:
        raw = None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        offset = len((raw.decode("utf-8") if raw else line)[: exc.pos].encode("utf-8"))
        raise EventParseError(exc.msg, offset) from None
    return parse_event_obj(obj)


def event_to_obj(event: EventRecord) -> dict:
    obj = {
        "type": _KIND_TO_TYPE[event.kind],
        "actor": {"login": event.user},
        "repo": {"name": event.repo},
        "created_at": format_timestamp(event.timestamp),
    }
    if event.kind is EventKind.PUSH:
        obj["payload"] = {"size": event.commit_count}
    elif event.kind in (EventKind.ISSUE_OPENED, EventKind.PR_OPENED):
        obj["payload"] = {"action": "opened"}
    elif event.kind is EventKind.TAG_CREATED:
        obj["payload"] = {"ref_type": "tag"}
    return obj


def event_to_line(event: EventRecord) -> str:
    return json.dumps(event_to_obj(event), separators=(",", ":"), sort_keys=True)


def _open_binary(path: str | Path) -> io.BufferedIOBase:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def iter_events(path: str | Path, stats: dict | None = None) -> Iterator[EventRecord]:
    """Stream events from a (optionally gzipped) JSON-lines file.

    Parse errors carry the byte offset into the decompressed stream.
    """
    offset = 0
    with _open_binary(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            start = offset
            offset += len(raw)
            if not raw.strip():
                continue
            if stats is not None:
                stats["lines"] = stats.get("lines", 0) + 1
            try:
                event = parse_event_line(raw)
            except EventParseError as exc:
                raise EventParseError(exc.msg, start + exc.offset, line_no) from None
            except EventSchemaError as exc:
                raise EventSchemaError(exc.msg, line_no) from None
            except MonthOutOfRange as exc:
                raise MonthOutOfRange(exc.msg, line_no) from None
            if event is None:
                if stats is not None:
                    stats["skipped"] = stats.get("skipped", 0) + 1
                continue
            if stats is not None:
                key = event.kind.value
                stats[key] = stats.get(key, 0) + 1
            yield event


def read_events(path: str | Path, stats: dict | None = None) -> list[EventRecord]:
    events = list(iter_events(path, stats))
    events.sort(key=lambda e: e.timestamp)
    return events


def write_events(events: Iterable[EventRecord], path: str | Path) -> int:
    n = 0
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="utf-8", newline="\n") as fh:
        for event in events:
            fh.write(event_to_line(event))
            fh.write("\n")
            n += 1
    return n


def month_index(ts: datetime) -> int:
    if ts.tzinfo is None:
        raise ValueError("timestamp must be timezone-aware")
    ts = ts.astimezone(timezone.utc)
    if ts < EPOCH:
        raise MonthOutOfRange(f"{format_timestamp(ts)} precedes the {EPOCH_YEAR}-01 epoch")
    return (ts.year - EPOCH_YEAR) * 12 + (ts.month - 1)


def month_start(index: int) -> datetime:
    if index < 0:
        raise MonthOutOfRange(f"month index {index} is negative")
    return datetime(EPOCH_YEAR + index // 12, index % 12 + 1, 1, tzinfo=timezone.utc)


def month_label(index: int) -> str:
    return f"{EPOCH_YEAR + index // 12:04d}-{index % 12 + 1:02d}"


def scan_deprecation_keywords(text: str, keywords: Sequence[str]) -> list[tuple[str, int]]:
    """All case-insensitive occurrences of ``keywords`` in ``text``.

    Returns ``(keyword, byte_offset)`` pairs sorted by offset (keyword order
    breaks ties).
    """
    if not text:
        return []
    # Lowercase char by char so indices stay aligned with ``text``.
    lowered = "".join(c.lower() if len(c.lower()) == 1 else c for c in text)
    hits: list[tuple[int, int, str]] = []
    for rank, kw in enumerate(keywords):
        kw = kw.lower()
        if not kw:
            continue
        start = lowered.find(kw)
        while start != -1:
            hits.append((start, rank, kw))
            start = lowered.find(kw, start + 1)
    hits.sort()
    return [(kw, len(text[:pos].encode("utf-8"))) for pos, _, kw in hits]


class LabelStatus(str, enum.Enum):
    ARCHIVED = "archived"
    KEYWORD = "keyword"
    ALIVE = "alive"


@dataclass(frozen=True)
class DeprecationLabel:
    status: LabelStatus
    last_observed: int
    month: int | None = None
    matched: str | None = None

    @property
    def deprecated(self) -> bool:
        return self.status is not LabelStatus.ALIVE

    @property
    def end_month(self) -> int:
        """Deprecation month, or the censoring month for live repositories."""
        return self.month if self.month is not None else self.last_observed


def label_repo(
    events: Sequence[EventRecord],
    description_text: str | None,
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
    horizon_end: int = 0,
) -> DeprecationLabel:
    if not events:
        raise UnknownRepositoryError("no events recorded for repository")
    archived = [e.month for e in events if e.kind is EventKind.ARCHIVED]
    last_month = max(e.month for e in events)
    if archived:
        return DeprecationLabel(LabelStatus.ARCHIVED, last_month, min(archived))
    if description_text:
        matches = scan_deprecation_keywords(description_text, keywords)
        if matches:
            return DeprecationLabel(LabelStatus.KEYWORD, last_month, last_month, matches[0][0])
    return DeprecationLabel(LabelStatus.ALIVE, horizon_end)


def group_by_repo(events: Iterable[EventRecord]) -> dict[str, list[EventRecord]]:
    out: dict[str, list[EventRecord]] = {}
    for e in events:
        out.setdefault(e.repo, []).append(e)
    return out


def label_all(
    events: Sequence[EventRecord],
    descriptions: dict[str, str] | None = None,
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
    horizon_end: int | None = None,
) -> dict[str, DeprecationLabel]:
    """Label every repository seen in a timestamp-sorted event log."""
    if horizon_end is None:
        horizon_end = max((e.month for e in events), default=0)
    descriptions = descriptions or {}
    return {
        repo: label_repo(evs, descriptions.get(repo), keywords, horizon_end)
        for repo, evs in sorted(group_by_repo(events).items())
    }


LABEL_HEADER = ["repo", "status", "deprecation_month", "last_observed", "matched"]


def write_labels_csv(labels: dict[str, DeprecationLabel], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for repo in sorted(labels):
            lab = labels[repo]
            w.writerow([repo, lab.status.value, "" if lab.month is None else lab.month,
                        lab.last_observed, lab.matched or ""])


def read_labels_csv(path: str | Path) -> dict[str, DeprecationLabel]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(LABEL_HEADER) - set(reader.fieldnames):
            raise EventSchemaError(f"{path}: expected columns {LABEL_HEADER}")
        for row in reader:
            month = int(row["deprecation_month"]) if row["deprecation_month"] else None
            out[row["repo"]] = DeprecationLabel(LabelStatus(row["status"]), int(row["last_observed"]),
                                                month, row["matched"] or None)
    return out


def read_descriptions_csv(path: str | Path) -> dict[str, str]:
    """``repo,description`` table of README/description text."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"repo", "description"} <= set(reader.fieldnames):
            raise EventSchemaError(f"{path}: expected columns repo, description")
        return {row["repo"]: row["description"] for row in reader}
