"""In-memory RGB image type and the PNG boundary.

Inside the package images are raw (height, width, 3) uint8 arrays; PNG
encoding/decoding happens only at the CLI edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class Image:
    """Row-major RGB pixel buffer, 8-bit channels."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValidationError(
                f"expected (h, w, 3) uint8 pixels, got shape {px.shape} dtype {px.dtype}"
            )
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("image dimensions must be positive")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, fill: int = 0) -> "Image":
        return cls(np.full((height, width, 3), fill, dtype=np.uint8))

    def same_pixels(self, other: "Image") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


def read_png(path) -> Image:
    with PILImage.open(path) as im:
        return Image(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())


def write_png(image: Image, path) -> None:
    PILImage.fromarray(image.pixels, mode="RGB").save(path, format="PNG")
