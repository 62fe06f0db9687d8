import io
import json
import socket
import sys
import threading

import numpy as np
import pytest
from PIL import Image as PILImage

from fridgevision.detector import (
    DetectRequest,
    FixtureDetector,
    SocketEndpoint,
    SubprocessEndpoint,
    fixture_detect,
    png_dimensions,
    postprocess,
    remote_detect,
)
from fridgevision.errors import DetectorTimeout, ProtocolError, ValidationError
from fridgevision.geometry import Box, Detection
from fridgevision.metrics import write_detections_csv

ECHO_SERVER = """
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    resp = {"v": 1, "type": "detections", "request_id": req["request_id"],
            "model_id": "stub", "latency_ms": 1, "detections": []}
    sys.stdout.write(json.dumps(resp) + "\\n")
    sys.stdout.flush()
"""

MISMATCH_SERVER = ECHO_SERVER.replace('req["request_id"]', '"wrong-id"')

SILENT_SERVER = "import time\ntime.sleep(60)\n"

GARBAGE_SERVER = """
import sys
sys.stdin.readline()
sys.stdout.write("this is not json\\n")
sys.stdout.flush()
"""

ERROR_SERVER = """
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    resp = {"v": 1, "type": "error", "request_id": req["request_id"],
            "message": "cannot decode image"}
    sys.stdout.write(json.dumps(resp) + "\\n")
    sys.stdout.flush()
"""


def tiny_png(width=8, height=8) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(np.zeros((height, width, 3), dtype=np.uint8)).save(
        buf, format="PNG")
    return buf.getvalue()


def request(request_id="r-1") -> DetectRequest:
    return DetectRequest(
        request_id=request_id, camera_id="cam-a",
        taxonomy_version="v1", image_bytes=tiny_png(),
    )


def spawn(script: str) -> SubprocessEndpoint:
    return SubprocessEndpoint([sys.executable, "-u", "-c", script])


class TestPngDimensions:
    def test_reads_ihdr(self):
        assert png_dimensions(tiny_png(12, 7)) == (12, 7)

    def test_rejects_non_png(self):
        with pytest.raises(ValidationError):
            png_dimensions(b"JFIF not a png")


class TestDetectRequest:
    def test_exactly_one_image_source(self):
        with pytest.raises(ValidationError):
            DetectRequest("r", "c", "v1")
        with pytest.raises(ValidationError):
            DetectRequest("r", "c", "v1", image_bytes=b"x", image_path="p")

    def test_wire_form_is_single_json_line(self):
        line = request().to_wire()
        assert line.endswith(b"\n")
        record = json.loads(line)
        assert record["v"] == 1
        assert record["type"] == "detect"
        assert record["camera_id"] == "cam-a"


class TestRemoteDetect:
    def test_echo_server_empty_detections(self):
        endpoint = spawn(ECHO_SERVER)
        try:
            resp = remote_detect(endpoint, request(), timeout_ms=5000)
            assert resp.detections == ()
            assert resp.model_id == "stub"
            assert resp.request_id == "r-1"
        finally:
            endpoint.close()

    def test_request_id_mismatch(self):
        endpoint = spawn(MISMATCH_SERVER)
        try:
            with pytest.raises(ProtocolError, match="request_id"):
                remote_detect(endpoint, request(), timeout_ms=5000)
        finally:
            endpoint.close()

    def test_timeout(self):
        endpoint = spawn(SILENT_SERVER)
        try:
            with pytest.raises(DetectorTimeout):
                remote_detect(endpoint, request(), timeout_ms=300)
        finally:
            endpoint.close()

    def test_non_json_response(self):
        endpoint = spawn(GARBAGE_SERVER)
        try:
            with pytest.raises(ProtocolError, match="JSON"):
                remote_detect(endpoint, request(), timeout_ms=5000)
        finally:
            endpoint.close()

    def test_error_response_raises_protocol_error(self):
        endpoint = spawn(ERROR_SERVER)
        try:
            with pytest.raises(ProtocolError, match="cannot decode image"):
                remote_detect(endpoint, request(), timeout_ms=5000)
        finally:
            endpoint.close()

    def test_out_of_bounds_box_rejected(self):
        script = ECHO_SERVER.replace(
            '"detections": []',
            '"detections": [{"category": "banana", "confidence": 0.9,'
            ' "box": [0, 0, 999, 999]}]',
        )
        endpoint = spawn(script)
        try:
            with pytest.raises(ProtocolError, match="outside"):
                remote_detect(endpoint, request(), timeout_ms=5000)
        finally:
            endpoint.close()

    def test_valid_detections_carry_camera_id(self):
        script = ECHO_SERVER.replace(
            '"detections": []',
            '"detections": [{"category": "banana", "confidence": 0.75,'
            ' "box": [1, 1, 5, 6]}]',
        )
        endpoint = spawn(script)
        try:
            resp = remote_detect(endpoint, request(), timeout_ms=5000)
            assert resp.detections[0].camera_id == "cam-a"
            assert resp.detections[0].box == Box(1, 1, 5, 6)
        finally:
            endpoint.close()

    def test_socket_endpoint(self):
        server = socket.socket()
        server.bind(("127.0.0.1", 0))
        server.listen(1)
        port = server.getsockname()[1]

        def serve_one():
            conn, _ = server.accept()
            data = b""
            while b"\n" not in data:
                data += conn.recv(4096)
            req = json.loads(data.split(b"\n")[0])
            resp = {"v": 1, "type": "detections", "request_id": req["request_id"],
                    "model_id": "sock", "latency_ms": 2, "detections": []}
            conn.sendall(json.dumps(resp).encode() + b"\n")
            conn.close()

        thread = threading.Thread(target=serve_one, daemon=True)
        thread.start()
        endpoint = SocketEndpoint("127.0.0.1", port)
        try:
            resp = remote_detect(endpoint, request(), timeout_ms=5000)
            assert resp.model_id == "sock"
        finally:
            endpoint.close()
            server.close()
            thread.join(timeout=5)


class TestFixtureDetector:
    def csv_bytes(self):
        return write_detections_csv({
            "img_1.jpg": [Detection(Box(0, 0, 10, 10), "banana", 0.9)],
            "img_2.jpg": [Detection(Box(5, 5, 15, 15), "milk", 0.7)],
        })

    def test_known_image(self):
        dets = fixture_detect(self.csv_bytes(), "img_1.jpg")
        assert len(dets) == 1
        assert dets[0].category == "banana"

    def test_unknown_image_empty_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            dets = fixture_detect(self.csv_bytes(), "missing.jpg")
        assert dets == []
        assert any("missing.jpg" in r.message for r in caplog.records)

    def test_round_trip_through_writer(self):
        original = {
            "img.png": [
                Detection(Box(0, 0, 10, 10), "banana", 0.9),
                Detection(Box(20, 20, 30, 30), "milk", 0.5),
            ],
        }
        detector = FixtureDetector(write_detections_csv(original))
        assert detector.detect("img.png") == original["img.png"]

    def test_bad_confidence_rejected(self):
        with pytest.raises(ValidationError):
            FixtureDetector(b"img.jpg,0,0,10,10,banana,1.5\n")

    def test_camera_id_attached(self):
        dets = FixtureDetector(self.csv_bytes()).detect("img_1.jpg", camera_id="cam-z")
        assert dets[0].camera_id == "cam-z"


class TestPostprocess:
    def test_permissive_thresholds_keep_everything(self):
        dets = [
            Detection(Box(0, 0, 10, 10), "banana", 0.9),
            Detection(Box(0, 0, 10, 10), "milk", 0.3),
        ]
        assert postprocess(dets, min_confidence=0.0, nms_threshold=1.0) == dets

    def test_all_below_cutoff(self):
        dets = [Detection(Box(0, 0, 10, 10), "banana", 0.1)]
        assert postprocess(dets, min_confidence=0.5) == []

    def test_duplicates_suppressed(self):
        d1 = Detection(Box(0, 0, 10, 10), "banana", 0.9)
        d2 = Detection(Box(0, 0.5, 10, 10.5), "banana", 0.8)
        assert postprocess([d1, d2], min_confidence=0.25, nms_threshold=0.45) == [d1]

    def test_idempotent(self):
        dets = [
            Detection(Box(0, 0, 10, 10), "banana", 0.9),
            Detection(Box(0, 1, 10, 11), "banana", 0.8),
            Detection(Box(50, 50, 60, 60), "milk", 0.6),
        ]
        once = postprocess(dets)
        assert postprocess(once) == once
