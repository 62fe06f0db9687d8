"""Order decisions: needs list minus observed inventory, debounced.

A category is ordered only when its deficit persisted across the last K
snapshots (hysteresis against one noisy frame) and it was not already
ordered within the cooldown window (against daily duplicates). The
decision is a pure function of its inputs; "now" is the latest
snapshot's timestamp, never the wall clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

from .dataset_io import TrackingList
from .errors import ValidationError
from .fusion import InventorySnapshot
from .timestamps import format_timestamp, parse_timestamp


@dataclass(frozen=True)
class OrderPolicy:
    confirm_snapshots: int = 2     # K: consecutive deficit snapshots required
    cooldown_hours: float = 24.0   # per-category re-order lockout
    min_order_quantity: int = 1

    def __post_init__(self):
        if self.confirm_snapshots < 1:
            raise ValidationError("confirm_snapshots must be >= 1")
        if self.cooldown_hours < 0:
            raise ValidationError("cooldown_hours must be >= 0")
        if self.min_order_quantity < 1:
            raise ValidationError("min_order_quantity must be >= 1")

    @classmethod
    def from_json(cls, data: bytes | str) -> "OrderPolicy":
        raw = json.loads(data)
        if not isinstance(raw, dict):
            raise ValidationError("order policy must be a JSON object")
        allowed = {"confirm_snapshots", "cooldown_hours", "min_order_quantity"}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ValidationError(f"unknown policy keys: {', '.join(unknown)}")
        return cls(**raw)

    @property
    def cooldown(self) -> timedelta:
        return timedelta(hours=self.cooldown_hours)


@dataclass(frozen=True)
class Order:
    created_at: datetime
    lines: tuple[tuple[str, int], ...]
    triggering_snapshots: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.lines:
            raise ValidationError("an order must contain at least one line")
        categories = [cat for cat, _ in self.lines]
        if len(categories) != len(set(categories)):
            raise ValidationError("an order may list each category once")
        for cat, quantity in self.lines:
            if quantity < 1:
                raise ValidationError(f"order line {cat!r} must have quantity >= 1")

    def to_json_dict(self) -> dict:
        return {
            "created_at": format_timestamp(self.created_at),
            "lines": [[cat, qty] for cat, qty in self.lines],
            "triggering_snapshots": list(self.triggering_snapshots),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "Order":
        try:
            return cls(
                created_at=parse_timestamp(raw["created_at"]),
                lines=tuple((str(c), int(q)) for c, q in raw["lines"]),
                triggering_snapshots=tuple(raw["triggering_snapshots"]),
                warnings=tuple(raw.get("warnings", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed order record: {exc}") from None


def decide_order(recent: Sequence[InventorySnapshot], needs: TrackingList,
                 policy: OrderPolicy, order_log: Sequence[Order]) -> Order | None:
    """Emit an order for categories whose deficit persisted K snapshots.

    ``recent`` is oldest-to-newest; fewer than K snapshots cannot confirm
    a deficit, so nothing is ordered. Ordered quantity is the latest
    snapshot's deficit. Categories ordered within the cooldown are
    skipped. Returns None when no line qualifies.
    """
    if not recent:
        raise ValidationError("decide_order needs at least one snapshot")
    for earlier, later in zip(recent, recent[1:]):
        if later.timestamp <= earlier.timestamp:
            raise ValidationError("recent snapshots must be oldest-to-newest")
    k = policy.confirm_snapshots
    if len(recent) < k:
        return None
    window = list(recent[-k:])
    now = window[-1].timestamp
    latest = window[-1]

    lines: list[tuple[str, int]] = []
    warnings: list[str] = []
    for category, desired in needs.entries:
        deficits = [max(0, desired - snap.counts.get(category, 0)) for snap in window]
        if not all(d > 0 for d in deficits):
            continue
        quantity = deficits[-1]
        if quantity < policy.min_order_quantity:
            continue
        last_ordered = _last_order_time(order_log, category)
        if last_ordered is not None and now - last_ordered < policy.cooldown:
            continue
        lines.append((category, quantity))
        if category not in latest.counts:
            warnings.append(
                f"{category}: no observations in the latest snapshot; treated as 0"
            )
    if not lines:
        return None
    return Order(
        created_at=now,
        lines=tuple(lines),
        triggering_snapshots=tuple(
            format_timestamp(snap.timestamp) for snap in window
        ),
        warnings=tuple(warnings),
    )


def _last_order_time(order_log: Sequence[Order], category: str) -> datetime | None:
    latest: datetime | None = None
    for order in order_log:
        if any(cat == category for cat, _ in order.lines):
            if latest is None or order.created_at > latest:
                latest = order.created_at
    return latest


def load_order_log(path) -> list[Order]:
    """Read the JSON-lines order log; missing file means no orders yet."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        return []
    orders = []
    for index, line in enumerate(filter(None, data.split(b"\n")), start=1):
        try:
            orders.append(Order.from_json_dict(json.loads(line)))
        except json.JSONDecodeError:
            raise ValidationError(f"{path}: corrupt order record on line {index}") from None
    return orders


def append_order(path, order: Order) -> None:
    line = json.dumps(
        order.to_json_dict(), sort_keys=True, separators=(",", ":")
    ).encode("utf-8") + b"\n"
    with open(path, "ab") as fh:
        fh.write(line)
