"""Fuse per-camera detections into a per-category inventory snapshot.

Counting rule: cameras in the same zone look at the same physical items
from different angles, so within a zone the per-category count is the
maximum any one camera saw; distinct zones hold distinct items, so zone
counts are summed. The rule is deliberately simple and is the documented
replacement point if a deployment needs something smarter.

Quality gate: a camera whose detections average below ``quality_min``
confidence is excluded from the snapshot and listed as degraded. This is
the mitigation for moisture/condensation blur, which shows up as a
low-confidence signature across a camera's detections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

from .errors import ValidationError
from .geometry import Detection
from .timestamps import format_timestamp, parse_timestamp


@dataclass(frozen=True)
class ZoneMap:
    """camera_id -> zone_id; zones are disjoint physical storage regions."""

    camera_to_zone: dict[str, str]

    def __post_init__(self):
        if not self.camera_to_zone:
            raise ValidationError("zone map must contain at least one camera")
        for camera, zone in self.camera_to_zone.items():
            if not camera or not zone:
                raise ValidationError("zone map entries must be non-empty strings")

    @classmethod
    def from_json(cls, data: bytes | str) -> "ZoneMap":
        raw = json.loads(data)
        if not isinstance(raw, dict):
            raise ValidationError("zone map must be a JSON object of camera_id: zone_id")
        return cls({str(k): str(v) for k, v in raw.items()})

    def zone_of(self, camera_id: str) -> str:
        try:
            return self.camera_to_zone[camera_id]
        except KeyError:
            raise ValidationError(f"camera {camera_id!r} has no zone assigned") from None


@dataclass(frozen=True)
class CameraFrame:
    """One camera's postprocessed detections for one captured image."""

    camera_id: str
    image_name: str
    detections: tuple[Detection, ...]

    def mean_confidence(self) -> float | None:
        if not self.detections:
            return None
        return sum(d.confidence for d in self.detections) / len(self.detections)

    def category_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for det in self.detections:
            counts[det.category] = counts.get(det.category, 0) + 1
        return counts


@dataclass(frozen=True)
class InventorySnapshot:
    """Timestamped fused per-category counts with quality provenance."""

    timestamp: datetime
    counts: dict[str, int]
    degraded_cameras: tuple[str, ...]
    source_frames: tuple[tuple[str, str, int], ...]  # (camera, image, det count)

    def to_json_dict(self) -> dict:
        return {
            "timestamp": format_timestamp(self.timestamp),
            "counts": dict(sorted(self.counts.items())),
            "degraded_cameras": list(self.degraded_cameras),
            "source_frames": [list(f) for f in self.source_frames],
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "InventorySnapshot":
        try:
            return cls(
                timestamp=parse_timestamp(raw["timestamp"]),
                counts={str(k): int(v) for k, v in raw["counts"].items()},
                degraded_cameras=tuple(raw["degraded_cameras"]),
                source_frames=tuple(
                    (str(c), str(i), int(n)) for c, i, n in raw["source_frames"]
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed snapshot record: {exc}") from None


def fuse_snapshot(frames: Sequence[CameraFrame], zones: ZoneMap,
                  quality_min: float, ts) -> InventorySnapshot:
    """Fuse one frame per camera into a snapshot at time ``ts``.

    Cameras averaging below ``quality_min`` confidence (with at least one
    detection) are excluded as degraded; cameras that saw nothing count
    as observing zero, not as degraded.
    """
    if not frames:
        raise ValidationError("cannot fuse an empty camera set")
    seen = set()
    for frame in frames:
        if frame.camera_id in seen:
            raise ValidationError(f"duplicate frame for camera {frame.camera_id!r}")
        seen.add(frame.camera_id)
        zones.zone_of(frame.camera_id)  # raises if unmapped

    degraded = []
    for frame in frames:
        mean = frame.mean_confidence()
        if mean is not None and mean < quality_min:
            degraded.append(frame.camera_id)

    per_zone: dict[str, dict[str, int]] = {}
    for frame in frames:
        if frame.camera_id in degraded:
            continue
        zone = zones.zone_of(frame.camera_id)
        zone_counts = per_zone.setdefault(zone, {})
        for category, count in frame.category_counts().items():
            zone_counts[category] = max(zone_counts.get(category, 0), count)

    totals: dict[str, int] = {}
    for zone_counts in per_zone.values():
        for category, count in zone_counts.items():
            totals[category] = totals.get(category, 0) + count

    return InventorySnapshot(
        timestamp=parse_timestamp(ts),
        counts=dict(sorted(totals.items())),
        degraded_cameras=tuple(sorted(degraded)),
        source_frames=tuple(
            (f.camera_id, f.image_name, len(f.detections)) for f in frames
        ),
    )
