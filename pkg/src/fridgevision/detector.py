"""The pluggable detection boundary.

Two ways to get detections: a fixture detector driven by the detection
CSV (fully offline, used by tests and the simulator) and a wire-protocol
client that talks line-delimited JSON to an external inference process
over a managed subprocess's stdio or a TCP socket.

Wire protocol v1, one JSON object per newline-terminated UTF-8 line:

    request:  {"v": 1, "type": "detect", "request_id": ..., "camera_id": ...,
               "image_b64": ..., "taxonomy_version": ...}
    response: {"v": 1, "type": "detections", "request_id": ..., "model_id": ...,
               "latency_ms": ..., "detections": [{"category": ...,
               "confidence": ..., "box": [x1, y1, x2, y2]}, ...]}
    error:    {"v": 1, "type": "error", "request_id": ..., "message": ...}
"""

from __future__ import annotations

import base64
import json
import logging
import os
import select
import socket
import struct
import subprocess
import time
from dataclasses import dataclass, replace

from .errors import DetectorTimeout, ProtocolError, ValidationError
from .geometry import Box, Detection, nms
from .metrics import parse_detections_csv

logger = logging.getLogger(__name__)

DEFAULT_MIN_CONFIDENCE = 0.25
DEFAULT_NMS_THRESHOLD = 0.45

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def png_dimensions(data: bytes) -> tuple[int, int]:
    """(width, height) from a PNG byte stream's IHDR chunk."""
    if len(data) < 24 or not data.startswith(_PNG_SIGNATURE):
        raise ValidationError("image payload is not a PNG stream")
    width, height = struct.unpack(">II", data[16:24])
    if width < 1 or height < 1:
        raise ValidationError("PNG header declares an empty image")
    return width, height


@dataclass(frozen=True)
class DetectRequest:
    """One inference request; exactly one of image_bytes/image_path is set."""

    request_id: str
    camera_id: str
    taxonomy_version: str
    image_bytes: bytes | None = None
    image_path: str | None = None

    def __post_init__(self):
        if (self.image_bytes is None) == (self.image_path is None):
            raise ValidationError(
                "exactly one of image_bytes or image_path must be provided"
            )
        if not self.request_id:
            raise ValidationError("request_id must be non-empty")

    def payload(self) -> bytes:
        if self.image_bytes is not None:
            return self.image_bytes
        with open(self.image_path, "rb") as fh:
            return fh.read()

    def to_wire(self) -> bytes:
        record = {
            "v": 1,
            "type": "detect",
            "request_id": self.request_id,
            "camera_id": self.camera_id,
            "image_b64": base64.b64encode(self.payload()).decode("ascii"),
            "taxonomy_version": self.taxonomy_version,
        }
        return json.dumps(record, separators=(",", ":")).encode("utf-8") + b"\n"


@dataclass(frozen=True)
class DetectResponse:
    request_id: str
    detections: tuple[Detection, ...]
    model_id: str
    latency_ms: float


class LineEndpoint:
    """Shared newline framing over a byte stream with a hard deadline."""

    def __init__(self):
        self._buffer = b""

    def _read_chunk(self, timeout_s: float) -> bytes | None:
        """Available bytes, None when nothing arrived in time, b'' on EOF."""
        raise NotImplementedError

    def send_line(self, line: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def recv_line(self, deadline: float) -> bytes:
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                # Drop the partial frame so a retry on a fresh call does
                # not resynchronize against stale bytes.
                self._buffer = b""
                raise DetectorTimeout("no response line before the deadline")
            chunk = self._read_chunk(remaining)
            if chunk == b"":
                raise ProtocolError("endpoint closed the stream mid-conversation")
            if chunk:
                self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line


class SubprocessEndpoint(LineEndpoint):
    """Managed sidecar subprocess speaking the protocol on stdio."""

    def __init__(self, argv: list[str]):
        super().__init__()
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        )

    def send_line(self, line: bytes) -> None:
        self._proc.stdin.write(line)
        self._proc.stdin.flush()

    def _read_chunk(self, timeout_s: float) -> bytes | None:
        ready, _, _ = select.select([self._proc.stdout], [], [], timeout_s)
        if not ready:
            return None
        return os.read(self._proc.stdout.fileno(), 65536)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class SocketEndpoint(LineEndpoint):
    """Local TCP endpoint speaking the protocol."""

    def __init__(self, host: str, port: int, connect_timeout_s: float = 10.0):
        super().__init__()
        self._sock = socket.create_connection((host, port), timeout=connect_timeout_s)

    def send_line(self, line: bytes) -> None:
        self._sock.sendall(line)

    def _read_chunk(self, timeout_s: float) -> bytes | None:
        self._sock.settimeout(timeout_s)
        try:
            return self._sock.recv(65536)
        except socket.timeout:
            return None

    def close(self) -> None:
        self._sock.close()


def _parse_detection_record(entry, camera_id: str) -> Detection:
    if not isinstance(entry, dict):
        raise ProtocolError(f"detection record must be an object, got {entry!r}")
    try:
        box_values = entry["box"]
        category = entry["category"]
        confidence = entry["confidence"]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"detection record missing field: {exc}") from None
    if not (isinstance(box_values, list) and len(box_values) == 4):
        raise ProtocolError(f"detection box must be [x1, y1, x2, y2], got {box_values!r}")
    try:
        box = Box(*(float(v) for v in box_values))
        return Detection(box, str(category), float(confidence), camera_id=camera_id)
    except (ValidationError, ValueError, TypeError) as exc:
        raise ProtocolError(f"invalid detection in response: {exc}") from None


def remote_detect(endpoint: LineEndpoint, req: DetectRequest,
                  timeout_ms: float) -> DetectResponse:
    """Send one request and await its schema-validated response.

    Raises DetectorTimeout (retryable; recreate the endpoint first) when
    no full response line arrives in time, and ProtocolError (not
    retryable) on schema violations, request_id mismatches, or an error
    response from the detector.
    """
    if timeout_ms <= 0:
        raise ValidationError("timeout must be positive")
    payload = req.payload()
    width, height = png_dimensions(payload)
    deadline = time.monotonic() + timeout_ms / 1000.0
    endpoint.send_line(req.to_wire())
    line = endpoint.recv_line(deadline)
    try:
        record = json.loads(line)
    except json.JSONDecodeError:
        logger.error("undecodable response payload: %r", line[:200])
        raise ProtocolError("response line is not valid JSON") from None
    if not isinstance(record, dict) or record.get("v") != 1:
        raise ProtocolError(f"unsupported protocol envelope: {record!r}")
    if record.get("request_id") != req.request_id:
        raise ProtocolError(
            f"request_id mismatch: sent {req.request_id!r}, "
            f"got {record.get('request_id')!r}"
        )
    kind = record.get("type")
    if kind == "error":
        raise ProtocolError(f"detector error: {record.get('message', '(no message)')}")
    if kind != "detections":
        raise ProtocolError(f"unexpected response type {kind!r}")
    raw = record.get("detections")
    if not isinstance(raw, list):
        raise ProtocolError("response detections must be a list")
    detections = tuple(_parse_detection_record(e, req.camera_id) for e in raw)
    for det in detections:
        b = det.box
        if b.x1 < 0 or b.y1 < 0 or b.x2 > width or b.y2 > height:
            raise ProtocolError(
                f"detection box {b.as_tuple()} outside the {width}x{height} image"
            )
    latency = record.get("latency_ms")
    if not isinstance(latency, (int, float)) or latency < 0:
        raise ProtocolError(f"invalid latency_ms: {latency!r}")
    return DetectResponse(
        request_id=req.request_id,
        detections=detections,
        model_id=str(record.get("model_id", "")),
        latency_ms=float(latency),
    )


class FixtureDetector:
    """File-driven stand-in for the neural detector.

    Backed by the detection interchange CSV; unknown images yield an
    empty list (cameras may capture frames with no fixture coverage)
    with a logged warning.
    """

    def __init__(self, source):
        self._by_image = parse_detections_csv(source)

    @classmethod
    def from_path(cls, path) -> "FixtureDetector":
        with open(path, "rb") as fh:
            return cls(fh.read())

    def detect(self, image_name: str, camera_id: str | None = None) -> list[Detection]:
        if image_name not in self._by_image:
            logger.warning("no fixture detections for image %r", image_name)
            return []
        dets = self._by_image[image_name]
        if camera_id is None:
            return list(dets)
        return [replace(d, camera_id=camera_id) for d in dets]


def fixture_detect(fixture, image_name: str) -> list[Detection]:
    """One-shot fixture lookup.

    ``fixture`` is a FixtureDetector, CSV content bytes, or a file path.
    """
    if isinstance(fixture, FixtureDetector):
        return fixture.detect(image_name)
    if isinstance(fixture, bytes):
        return FixtureDetector(fixture).detect(image_name)
    return FixtureDetector.from_path(fixture).detect(image_name)


def postprocess(raw: list[Detection], min_confidence: float = DEFAULT_MIN_CONFIDENCE,
                nms_threshold: float = DEFAULT_NMS_THRESHOLD) -> list[Detection]:
    """Confidence filter then per-category NMS; idempotent."""
    if not (0.0 <= min_confidence <= 1.0):
        raise ValidationError(f"min_confidence must be in [0, 1], got {min_confidence}")
    kept = [d for d in raw if d.confidence >= min_confidence]
    return nms(kept, nms_threshold)
