"""Append-only JSON-lines store of inventory snapshots.

One snapshot per line; the log is the source of truth and the in-memory
state is rebuilt from it on open. Appends are whole-line writes followed
by fsync, so a crash can lose at most the in-flight record; a trailing
partial line is skipped (with a warning) on load, while corruption
anywhere earlier refuses to load rather than silently dropping history.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
from pathlib import Path

from .dataset_io import TrackingList
from .errors import ValidationError
from .fusion import InventorySnapshot

logger = logging.getLogger(__name__)


class InventoryStore:
    """Single-writer event log with a derived current-state view."""

    def __init__(self, path, tracking: TrackingList | None = None):
        self.path = Path(path)
        self.tracking = tracking
        self._snapshots: list[InventorySnapshot] = []
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        if not data:
            return
        lines = data.split(b"\n")
        trailing = lines.pop() if lines and lines[-1] != b"" else None
        # A complete log ends with a newline, leaving one empty tail entry.
        if lines and lines[-1] == b"":
            lines.pop()
        for index, line in enumerate(lines, start=1):
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                raise ValidationError(
                    f"{self.path}: corrupt snapshot record on line {index}"
                ) from None
            self._snapshots.append(InventorySnapshot.from_json_dict(record))
        if trailing is not None:
            try:
                record = json.loads(trailing)
            except json.JSONDecodeError:
                # A mid-record crash left an uncommitted tail; trim it so
                # the next append starts on a clean line boundary.
                logger.warning(
                    "%s: dropping truncated trailing record (%d bytes)",
                    self.path, len(trailing),
                )
                os.truncate(self.path, len(data) - len(trailing))
            else:
                self._snapshots.append(InventorySnapshot.from_json_dict(record))
        for earlier, later in zip(self._snapshots, self._snapshots[1:]):
            if later.timestamp <= earlier.timestamp:
                raise ValidationError(
                    f"{self.path}: snapshot timestamps are not strictly increasing"
                )

    def __len__(self) -> int:
        return len(self._snapshots)

    @property
    def is_empty(self) -> bool:
        return not self._snapshots

    def append_snapshot(self, snap: InventorySnapshot) -> None:
        """Durably append one snapshot; rejects non-monotonic timestamps."""
        if self._snapshots and snap.timestamp <= self._snapshots[-1].timestamp:
            raise ValidationError(
                f"snapshot timestamp {snap.timestamp.isoformat()} is not after "
                f"the latest stored {self._snapshots[-1].timestamp.isoformat()}"
            )
        line = json.dumps(
            snap.to_json_dict(), sort_keys=True, separators=(",", ":")
        ).encode("utf-8") + b"\n"
        with open(self.path, "ab") as fh:
            # Advisory lock: concurrent CLI invocations serialize here.
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
            try:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
            finally:
                fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
        self._snapshots.append(snap)

    def current_counts(self) -> tuple[dict[str, int], bool]:
        """(counts, no_observations flag) from the latest snapshot.

        Tracked categories are zero-filled when a tracking list is known;
        an empty store yields all zeros and the flag set.
        """
        counts: dict[str, int] = {}
        if self.tracking is not None:
            counts = {name: 0 for name in self.tracking.names}
        if self._snapshots:
            counts.update(self._snapshots[-1].counts)
            return counts, False
        return counts, True

    def history(self, last_n: int) -> list[InventorySnapshot]:
        """Up to ``last_n`` most recent snapshots, oldest first."""
        if last_n < 1:
            raise ValidationError("history needs last_n >= 1")
        return self._snapshots[-last_n:]
