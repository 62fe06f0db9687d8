#!/usr/bin/env python3
"""Regenerate tests/fixtures/requests.jsonl, the recorded request tape.

The tape holds one frame per line exactly as a client would send it:
two well-formed detect requests (an empty fridge shelf and a scene with
produce blobs), one garbage line, one request whose payload is not an
image, and one request with no request_id. Protocol tests replay it and
validate every response frame.
"""

import base64
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def blank_scene(width=64, height=64) -> np.ndarray:
    yy = np.linspace(70, 110, height)[:, None]
    px = np.repeat(yy, width, axis=1)
    return np.stack([px, px + 6, px + 12], axis=-1).astype(np.uint8)


def produce_scene() -> np.ndarray:
    px = blank_scene(120, 90)
    ys, xs = np.mgrid[0:90, 0:120]
    banana = (((xs - 30) / 16.0) ** 2 + ((ys - 30) / 10.0) ** 2) <= 1.0
    tomato = (((xs - 85) / 12.0) ** 2 + ((ys - 55) / 12.0) ** 2) <= 1.0
    px[banana] = (230, 200, 40)
    px[tomato] = (200, 40, 30)
    return px


def detect_request(request_id: str, image: np.ndarray) -> str:
    return json.dumps({
        "v": 1,
        "type": "detect",
        "request_id": request_id,
        "camera_id": "cam-rec",
        "image_b64": base64.b64encode(png_bytes(image)).decode("ascii"),
        "taxonomy_version": "v1",
    }, separators=(",", ":"))


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    lines = [
        detect_request("rec-001", blank_scene()),
        detect_request("rec-002", produce_scene()),
        "{this is not json",
        json.dumps({
            "v": 1, "type": "detect", "request_id": "rec-004",
            "camera_id": "cam-rec",
            "image_b64": base64.b64encode(b"definitely not a png").decode("ascii"),
            "taxonomy_version": "v1",
        }, separators=(",", ":")),
        json.dumps({
            "v": 1, "type": "detect", "camera_id": "cam-rec",
            "image_b64": base64.b64encode(png_bytes(blank_scene())).decode("ascii"),
            "taxonomy_version": "v1",
        }, separators=(",", ":")),
    ]
    (FIXTURES / "requests.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("wrote", FIXTURES / "requests.jsonl")


if __name__ == "__main__":
    main()
