"""UTC timestamp parsing/formatting shared by the stateful modules.

Storage and wire formats use ISO-8601 with an explicit offset; naive
inputs are taken as UTC.
"""

from __future__ import annotations

from datetime import datetime, timezone

from .errors import ValidationError


def parse_timestamp(value: str) -> datetime:
    if isinstance(value, datetime):
        dt = value
    else:
        try:
            dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            raise ValidationError(f"invalid ISO-8601 timestamp: {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return parse_timestamp(dt).isoformat()
