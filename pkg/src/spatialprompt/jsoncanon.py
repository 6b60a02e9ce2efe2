"""Canonical JSON encoding.

All persisted artifacts (sketches, constraint sets, requests, reports) use the
same byte-level convention so that digests are stable: UTF-8, keys sorted,
no insignificant whitespace, floats rendered as the shortest decimal that
round-trips IEEE 754 (Python's repr), NaN/Infinity rejected.
"""

import json
from typing import Any


def canonical_dumps(obj: Any) -> bytes:
    return json.dumps(
        obj,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def _reject_constant(name: str) -> float:
    raise ValueError(f"non-finite JSON constant not allowed: {name}")


def canonical_loads(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data, parse_constant=_reject_constant)
