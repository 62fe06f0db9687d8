"""Pluggable detection backends.

Model references:

  - ``blob``: the built-in HSV color-blob detector. No weights, fully
    offline; intended as the reference backend for protocol testing and
    desk-scale runs.
  - ``torchvision:<arch>``: a published pretrained detector from
    torchvision (e.g. fasterrcnn_resnet50_fpn). Downloads COCO weights
    unless ``weights_path`` points at a local checkpoint; COCO class
    names are emitted and remapped by the category map.

Both backends return RawDetection records in pixel coordinates of the
submitted image; clipping/clamping to protocol invariants happens in the
server, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class RawDetection:
    class_name: str
    confidence: float
    x1: float
    y1: float
    x2: float
    y2: float


class ModelLoadError(Exception):
    """The configured model could not be constructed."""


# Hue in degrees (lo may exceed hi to wrap through 0), saturation and
# value in [0, 1]. Tuned for produce under neutral refrigerator light.
BLOB_COLOR_RANGES = {
    "banana": (40.0, 70.0, 0.45, 0.45),
    "carrot": (15.0, 40.0, 0.45, 0.40),
    "tomato": (345.0, 15.0, 0.45, 0.30),
    "avocado": (70.0, 150.0, 0.25, 0.20),
    "blueberry": (200.0, 260.0, 0.35, 0.25),
}
BLOB_WHITE_SAT_MAX = 0.12
BLOB_WHITE_VAL_MIN = 0.80


def _rgb_to_hsv(px: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = px.astype(np.float64) / 255.0
    maxc = p.max(axis=-1)
    minc = p.min(axis=-1)
    delta = maxc - minc
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    hue = np.zeros_like(maxc)
    mask = delta > 0
    rmax = mask & (maxc == r)
    gmax = mask & (maxc == g) & ~rmax
    bmax = mask & ~rmax & ~gmax
    hue[rmax] = ((g - b)[rmax] / delta[rmax]) % 6.0
    hue[gmax] = (b - r)[gmax] / delta[gmax] + 2.0
    hue[bmax] = (r - g)[bmax] / delta[bmax] + 4.0
    hue *= 60.0
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return hue, sat, maxc


class ColorBlobModel:
    """Detects groceries as connected regions of characteristic color."""

    model_id = "color-blob-v1"

    def __init__(self, min_area_px: int = 40):
        self.min_area_px = min_area_px

    def detect(self, rgb: np.ndarray) -> list[RawDetection]:
        hue, sat, val = _rgb_to_hsv(rgb)
        detections: list[RawDetection] = []
        for class_name, (hue_lo, hue_hi, sat_min, val_min) in \
                BLOB_COLOR_RANGES.items():
            if hue_lo <= hue_hi:
                in_hue = (hue >= hue_lo) & (hue <= hue_hi)
            else:
                in_hue = (hue >= hue_lo) | (hue <= hue_hi)
            mask = in_hue & (sat >= sat_min) & (val >= val_min)
            detections.extend(self._blobs_to_boxes(mask, class_name))
        white = (sat <= BLOB_WHITE_SAT_MAX) & (val >= BLOB_WHITE_VAL_MIN)
        detections.extend(self._blobs_to_boxes(white, "milk"))
        detections.sort(key=lambda d: (-d.confidence, d.class_name, d.x1, d.y1))
        return detections

    def _blobs_to_boxes(self, mask: np.ndarray, class_name: str
                        ) -> list[RawDetection]:
        labels, count = ndimage.label(mask)
        out = []
        for region in ndimage.find_objects(labels):
            if region is None:
                continue
            rows, cols = region
            area = int(mask[rows, cols].sum())
            box_area = (rows.stop - rows.start) * (cols.stop - cols.start)
            if area < self.min_area_px:
                continue
            fill = area / box_area
            out.append(RawDetection(
                class_name=class_name,
                confidence=0.5 + 0.5 * fill,
                x1=float(cols.start), y1=float(rows.start),
                x2=float(cols.stop), y2=float(rows.stop),
            ))
        return out


# COCO class indexing used by torchvision detection models; index 0 is
# background. Only the entries we can meaningfully map are listed here;
# everything else is emitted by raw name and dropped by the category map.
COCO_CLASSES = {
    44: "bottle", 47: "cup", 48: "fork", 52: "banana", 53: "apple",
    55: "orange", 56: "broccoli", 57: "carrot",
}


class TorchvisionModel:
    """Wraps a torchvision detection architecture behind the same surface."""

    def __init__(self, arch: str, weights_path: str | None = None,
                 score_floor: float = 0.05):
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise ModelLoadError(f"torchvision backend unavailable: {exc}") from None
        self._torch = torch
        builder = getattr(torchvision.models.detection, arch, None)
        if builder is None:
            raise ModelLoadError(f"unknown torchvision detection arch {arch!r}")
        try:
            if weights_path:
                model = builder(weights=None)
                state = torch.load(weights_path, map_location="cpu")
                model.load_state_dict(state)
            else:
                model = builder(weights="DEFAULT")
        except Exception as exc:
            raise ModelLoadError(f"could not load weights for {arch}: {exc}") from None
        model.eval()
        self._model = model
        self.model_id = f"torchvision:{arch}"
        self.score_floor = score_floor

    def detect(self, rgb: np.ndarray) -> list[RawDetection]:
        tensor = self._torch.from_numpy(
            rgb.astype(np.float32).transpose(2, 0, 1) / 255.0)
        with self._torch.no_grad():
            output = self._model([tensor])[0]
        detections = []
        for box, label, score in zip(
                output["boxes"].tolist(), output["labels"].tolist(),
                output["scores"].tolist()):
            if score < self.score_floor:
                continue
            name = COCO_CLASSES.get(int(label), f"coco_{int(label)}")
            detections.append(RawDetection(name, float(score), *box))
        return detections


def load_model(model_ref: str, weights_path: str | None = None):
    """Build a backend from its reference string; raises ModelLoadError."""
    if model_ref == "blob":
        return ColorBlobModel()
    if model_ref.startswith("torchvision:"):
        return TorchvisionModel(model_ref.split(":", 1)[1], weights_path)
    raise ModelLoadError(
        f"unknown model reference {model_ref!r}; expected 'blob' or 'torchvision:<arch>'"
    )
