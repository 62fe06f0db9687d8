"""The request loop: decode, infer, remap, respond.

Single-threaded, one request in flight at a time, so stdio responses
always come back in request order. A malformed or undecodable request
produces a protocol error response and the loop keeps serving; only a
model that fails to load aborts startup.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import logging
import socket
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .models import ModelLoadError, load_model

logger = logging.getLogger(__name__)

DROP = "drop"


@dataclass
class SidecarConfig:
    model: str = "blob"
    weights_path: str | None = None
    category_map: dict[str, str] = field(default_factory=dict)
    listen: str = "stdio"          # "stdio" or "socket:<port>"
    max_image_px: int = 4096       # longest permitted image side

    @classmethod
    def from_json(cls, data: bytes | str) -> "SidecarConfig":
        raw = json.loads(data)
        if not isinstance(raw, dict):
            raise ValueError("sidecar config must be a JSON object")
        known = {"model", "weights_path", "category_map", "listen",
                 "max_image_px", "tracking_list"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown sidecar config keys: {', '.join(unknown)}")
        category_map = raw.get("category_map", {})
        if isinstance(category_map, str):
            with open(category_map, "rb") as fh:
                category_map = json.loads(fh.read())
        tracking = raw.get("tracking_list")
        if tracking:
            with open(tracking, "rb") as fh:
                allowed = {
                    " ".join(str(e["name"]).strip().lower().split())
                    for e in json.loads(fh.read())
                }
            bad = sorted(
                t for t in category_map.values() if t != DROP and t not in allowed
            )
            if bad:
                raise ValueError(
                    f"category map targets outside the tracking list: {', '.join(bad)}"
                )
        return cls(
            model=raw.get("model", "blob"),
            weights_path=raw.get("weights_path"),
            category_map=dict(category_map),
            listen=raw.get("listen", "stdio"),
            max_image_px=int(raw.get("max_image_px", 4096)),
        )


def _error(request_id, message: str) -> dict:
    return {"v": 1, "type": "error", "request_id": request_id, "message": message}


class RequestHandler:
    def __init__(self, cfg: SidecarConfig):
        self.cfg = cfg
        self.model = load_model(cfg.model, cfg.weights_path)  # may raise

    def handle_line(self, line: bytes) -> dict:
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            return _error(None, "request line is not valid JSON")
        request_id = record.get("request_id") if isinstance(record, dict) else None
        if not isinstance(request_id, str) or not request_id:
            return _error(None, "request is missing a request_id")
        if not isinstance(record, dict) or record.get("v") != 1 \
                or record.get("type") != "detect":
            return _error(request_id, "expected a v1 detect request")
        payload = record.get("image_b64")
        if not isinstance(payload, str):
            return _error(request_id, "request is missing image_b64")
        started = time.perf_counter()
        try:
            image = self._decode_image(payload)
        except ValueError as exc:
            return _error(request_id, str(exc))
        detections = self._run(image)
        latency_ms = round((time.perf_counter() - started) * 1000.0, 3)
        return {
            "v": 1,
            "type": "detections",
            "request_id": request_id,
            "model_id": self.model.model_id,
            "latency_ms": latency_ms,
            "detections": detections,
        }

    def _decode_image(self, payload: str) -> np.ndarray:
        try:
            raw = base64.b64decode(payload, validate=True)
        except (binascii.Error, ValueError):
            raise ValueError("image_b64 is not valid base64") from None
        try:
            with PILImage.open(io.BytesIO(raw)) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception:
            raise ValueError("cannot decode image") from None
        height, width = rgb.shape[:2]
        if max(width, height) > self.cfg.max_image_px:
            raise ValueError(
                f"image {width}x{height} exceeds the {self.cfg.max_image_px}px limit"
            )
        return rgb

    def _run(self, rgb: np.ndarray) -> list[dict]:
        height, width = rgb.shape[:2]
        out = []
        for det in self.model.detect(rgb):
            target = self.cfg.category_map.get(det.class_name, DROP)
            if target == DROP:
                continue
            x1 = min(max(det.x1, 0.0), float(width))
            y1 = min(max(det.y1, 0.0), float(height))
            x2 = min(max(det.x2, 0.0), float(width))
            y2 = min(max(det.y2, 0.0), float(height))
            if x1 >= x2 or y1 >= y2:
                continue
            out.append({
                "category": target,
                "confidence": min(max(det.confidence, 0.0), 1.0),
                "box": [x1, y1, x2, y2],
            })
        return out


def _serve_stream(handler: RequestHandler, reader, writer) -> None:
    while True:
        line = reader.readline()
        if not line:
            return
        if not line.strip():
            continue
        response = handler.handle_line(line)
        writer.write(json.dumps(response, separators=(",", ":")).encode("utf-8") + b"\n")
        writer.flush()


def serve(cfg: SidecarConfig) -> None:
    """Run until the peer disconnects (stdio) or forever (socket)."""
    handler = RequestHandler(cfg)  # model load failures propagate to main()
    if cfg.listen == "stdio":
        _serve_stream(handler, sys.stdin.buffer, sys.stdout.buffer)
        return
    if cfg.listen.startswith("socket:"):
        port = int(cfg.listen.split(":", 1)[1])
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind(("127.0.0.1", port))
        server.listen(1)
        logger.info("listening on 127.0.0.1:%d", port)
        while True:
            conn, peer = server.accept()
            logger.info("client connected: %s", peer)
            with conn, conn.makefile("rb") as reader, conn.makefile("wb") as writer:
                _serve_stream(handler, reader, writer)
        return
    raise ValueError(f"listen must be 'stdio' or 'socket:<port>', got {cfg.listen!r}")


__all__ = ["SidecarConfig", "RequestHandler", "serve", "ModelLoadError"]
