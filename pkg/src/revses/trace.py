"""Line-delimited trace files.

One JSON record per line: a header carrying the format version and the
run configuration, one record per executed step, and an optional
closing summary.  Keys are emitted in a fixed order so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
from typing import IO, Any

FORMAT_VERSION = 1

_FIELD_ORDER = [
    "type",
    "formatVersion",
    "tool",
    "source",
    "mode",
    "policy",
    "seed",
    "maxSteps",
    "stepIndex",
    "direction",
    "ruleName",
    "boxChannel",
    "stackLenBefore",
    "stackLenAfter",
    "confHash",
    "memoryId",
    "tagsCreated",
    "tagsConsumed",
    "steps",
    "finalHash",
    "memories",
    "boxes",
    "lockedCount",
    "lockedIds",
    "channel",
    "cBr",
    "cMo",
]
_RANK = {k: i for i, k in enumerate(_FIELD_ORDER)}


class TraceFormatError(Exception):
    pass


def _ordered(obj: Any) -> Any:
    if isinstance(obj, dict):
        keys = sorted(obj, key=lambda k: (_RANK.get(k, len(_RANK)), k))
        return {k: _ordered(obj[k]) for k in keys}
    if isinstance(obj, list):
        return [_ordered(x) for x in obj]
    return obj


def dump_record(rec: dict[str, Any]) -> str:
    return json.dumps(_ordered(rec))


def make_header(**fields: Any) -> dict[str, Any]:
    return {"type": "trace", "formatVersion": FORMAT_VERSION, **fields}


def write_trace(
    fp: IO[str],
    header: dict[str, Any],
    records: list[dict[str, Any]],
    summary: dict[str, Any] | None = None,
) -> None:
    fp.write(dump_record(header) + "\n")
    for rec in records:
        fp.write(dump_record({"type": "step", **rec}) + "\n")
    if summary is not None:
        fp.write(dump_record({"type": "summary", **summary}) + "\n")


def read_trace(
    fp: IO[str],
) -> tuple[dict[str, Any], list[dict[str, Any]], dict[str, Any] | None]:
    lines = [ln for ln in fp.read().splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"bad header line: {e}") from None
    if header.get("type") != "trace":
        raise TraceFormatError("missing trace header")
    if header.get("formatVersion") != FORMAT_VERSION:
        raise TraceFormatError(
            f"unsupported format version {header.get('formatVersion')!r}"
        )
    records: list[dict[str, Any]] = []
    summary: dict[str, Any] | None = None
    for n, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"line {n}: {e}") from None
        if rec.get("type") == "summary":
            summary = rec
        else:
            records.append(rec)
    return header, records, summary
