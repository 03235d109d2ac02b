"""
Ingest layer: parse, validate, deduplicate and window raw tweet-like records.

Input is UTF-8 line-delimited JSON exported by any crawler. Field names are
taken from a FieldMapping (dotted paths reach into nested objects, e.g.
"user.location"), so the pipeline never depends on one crawler's schema.

All public functions work on plain TweetRecord lists; records_frame() turns
them into the DataFrame the downstream analyzers consume.
"""

from __future__ import annotations

import glob
import json
import logging
from dataclasses import asdict, dataclass, fields
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence

import pandas as pd

from spatiotemporal.errors import (
    BadTimestamp,
    BadWindow,
    ConfigError,
    MalformedRecord,
    MissingField,
    RecordError,
)

logger = logging.getLogger(__name__)

_RT_PREFIX = "RT @"
_TWITTER_TIME_FORMAT = "%a %b %d %H:%M:%S %z %Y"
_MISSING = object()


class TweetType(str, Enum):
    ORIGINAL = "original"
    RETWEET = "retweet"


@dataclass(frozen=True)
class FieldMapping:
    """Source field names for each TweetRecord attribute (dotted paths allowed)."""

    id: str = "id"
    created_at: str = "created_at"
    text: str = "text"
    user_location: str = "user_location"
    retweet_flag: str = "is_retweet"
    language: str = "lang"

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any] | None) -> "FieldMapping":
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"Unknown field mapping key(s): {', '.join(unknown)}")
        return cls(**{k: str(v) for k, v in raw.items()})


@dataclass(frozen=True)
class TweetRecord:
    id: str
    created_at: datetime          # UTC, second resolution
    text: str
    user_location: str
    tweet_type: TweetType
    lang: str = ""


# ---------------------------------------------------------------------------
# Field helpers
# ---------------------------------------------------------------------------

def _lookup(obj: Mapping[str, Any], dotted: str) -> Any:
    """Follow a dotted path through nested dicts; _MISSING when any hop is absent."""
    current: Any = obj
    for part in dotted.split("."):
        if not isinstance(current, Mapping) or part not in current:
            return _MISSING
        current = current[part]
    return current


def parse_instant(value: Any) -> datetime:
    """
    Parse ISO-8601, Twitter v1.1 ("Wed Mar 11 08:00:00 +0000 2020") or epoch
    seconds into an aware UTC datetime truncated to whole seconds.

    Raises ValueError when nothing matches.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        dt = datetime.fromtimestamp(value, tz=timezone.utc)
    elif isinstance(value, str) and value.strip():
        text = value.strip()
        try:
            dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
        except ValueError:
            dt = datetime.strptime(text, _TWITTER_TIME_FORMAT)
    else:
        raise ValueError(f"not a timestamp: {value!r}")

    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def as_utc_datetime(value: date | datetime) -> datetime:
    """Dates become midnight UTC; naive datetimes are taken as UTC."""
    if isinstance(value, datetime):
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)
    return datetime(value.year, value.month, value.day, tzinfo=timezone.utc)


def _parse_flag(value: Any) -> bool | None:
    """Interpret a retweet flag; None means the source gave no usable flag."""
    if value is _MISSING or value is None:
        return None
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("", "null", "none"):
            return None
        return lowered in ("1", "true", "yes", "y", "t")
    # Nested objects such as "retweeted_status" count as set when non-empty
    return bool(value)


def _format_instant(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Parse / serialize
# ---------------------------------------------------------------------------

def parse_record(
    line: str,
    schema: FieldMapping | None = None,
    line_no: int = 0,
    source: str = "",
) -> TweetRecord:
    """
    Turn one serialized line into a TweetRecord.

    Missing user_location becomes "". When the retweet flag is absent the
    tweet type falls back to the "RT @" text prefix.
    """
    schema = schema or FieldMapping()
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"unparseable record ({exc.msg})", line_no, source) from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("record is not a JSON object", line_no, source)

    raw_id = _lookup(obj, schema.id)
    if raw_id is _MISSING or raw_id is None or str(raw_id).strip() == "":
        raise MissingField(f"missing '{schema.id}'", line_no, source)

    raw_time = _lookup(obj, schema.created_at)
    if raw_time is _MISSING or raw_time is None:
        raise MissingField(f"missing '{schema.created_at}'", line_no, source)

    text = _lookup(obj, schema.text)
    if text is _MISSING or text is None:
        raise MissingField(f"missing '{schema.text}'", line_no, source)

    try:
        created_at = parse_instant(raw_time)
    except (ValueError, TypeError, OverflowError, OSError) as exc:
        raise BadTimestamp(f"unparseable instant {raw_time!r}", line_no, source) from exc

    location = _lookup(obj, schema.user_location)
    lang = _lookup(obj, schema.language)

    text = str(text)
    flag = _parse_flag(_lookup(obj, schema.retweet_flag))
    if flag is None:
        flag = text.startswith(_RT_PREFIX)

    return TweetRecord(
        id=str(raw_id).strip(),
        created_at=created_at,
        text=text,
        user_location="" if location is _MISSING or location is None else str(location),
        tweet_type=TweetType.RETWEET if flag else TweetType.ORIGINAL,
        lang="" if lang is _MISSING or lang is None else str(lang),
    )


def serialize_record(record: TweetRecord) -> str:
    """JSON line using the default FieldMapping names; parse_record inverts it."""
    defaults = FieldMapping()
    payload = {
        defaults.id: record.id,
        defaults.created_at: _format_instant(record.created_at),
        defaults.text: record.text,
        defaults.user_location: record.user_location,
        defaults.retweet_flag: record.tweet_type is TweetType.RETWEET,
        defaults.language: record.lang,
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


# ---------------------------------------------------------------------------
# Corpus-level operations
# ---------------------------------------------------------------------------

def dedupe(records: Sequence[TweetRecord]) -> tuple[list[TweetRecord], int]:
    """Keep the first record per id in input order. Returns (kept, dropped)."""
    seen: set[str] = set()
    kept: list[TweetRecord] = []
    for rec in records:
        if rec.id in seen:
            continue
        seen.add(rec.id)
        kept.append(rec)
    dropped = len(records) - len(kept)
    if dropped:
        logger.info("dedupe: dropped %d duplicate record(s)", dropped)
    return kept, dropped


def filter_window(
    records: Sequence[TweetRecord],
    start: date | datetime,
    end: date | datetime,
) -> tuple[list[TweetRecord], int]:
    """Keep records with start <= created_at < end. Returns (kept, excluded)."""
    lo, hi = as_utc_datetime(start), as_utc_datetime(end)
    if lo >= hi:
        raise BadWindow(f"window start {lo.isoformat()} is not before end {hi.isoformat()}")
    kept = [r for r in records if lo <= r.created_at < hi]
    excluded = len(records) - len(kept)
    if excluded:
        logger.info("filter_window: excluded %d record(s) outside [%s, %s)",
                    excluded, lo.date(), hi.date())
    return kept, excluded


def filter_language(
    records: Sequence[TweetRecord],
    languages: Iterable[str] | None,
) -> tuple[list[TweetRecord], int]:
    """Optional pass-through predicate on the language field; empty/None disables it."""
    wanted = {lang.strip().lower() for lang in (languages or []) if lang.strip()}
    if not wanted:
        return list(records), 0
    kept = [r for r in records if r.lang.lower() in wanted]
    return kept, len(records) - len(kept)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def expand_inputs(patterns: Iterable[str | Path]) -> list[Path]:
    """Expand glob patterns into a sorted, de-duplicated file list."""
    paths: set[Path] = set()
    for pattern in patterns:
        matches = glob.glob(str(pattern))
        paths.update(Path(m) for m in matches if Path(m).is_file())
    return sorted(paths)


def read_records(
    paths: Iterable[str | Path],
    schema: FieldMapping | None = None,
    on_error: Literal["raise", "skip"] = "raise",
) -> list[TweetRecord]:
    """
    Parse every line of every shard, then merge deterministically.

    The merged list is stably sorted by (created_at, id), so shard order never
    changes the result; dedupe afterwards keeps the earliest copy of an id.
    """
    schema = schema or FieldMapping()
    records: list[TweetRecord] = []
    skipped = 0
    for path in paths:
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(parse_record(line, schema, line_no, str(path)))
                except RecordError as exc:
                    if on_error == "raise":
                        raise
                    skipped += 1
                    logger.warning("skipping bad record: %s", exc)
    if skipped:
        logger.warning("read_records: skipped %d bad line(s)", skipped)
    records.sort(key=lambda r: (r.created_at, r.id))
    return records


def write_records(records: Iterable[TweetRecord], path: str | Path) -> int:
    """Write normalized records as JSON lines; returns the number written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(serialize_record(rec) + "\n")
            n += 1
    return n


def records_frame(records: Sequence[TweetRecord]) -> pd.DataFrame:
    """
    Records as a DataFrame with derived columns.

    Columns:
        id, created_at (UTC Timestamp), text, user_location, tweet_type (str),
        lang, date (UTC midnight Timestamp), month ("2020-03")
    """
    columns = [f.name for f in fields(TweetRecord)]
    if not records:
        return pd.DataFrame(columns=columns + ["date", "month"])
    df = pd.DataFrame([asdict(r) for r in records], columns=columns)
    df["tweet_type"] = df["tweet_type"].map(lambda t: TweetType(t).value)
    df["created_at"] = pd.to_datetime(df["created_at"], utc=True)
    df["date"] = df["created_at"].dt.floor("D")
    df["month"] = df["created_at"].dt.strftime("%Y-%m")
    return df
