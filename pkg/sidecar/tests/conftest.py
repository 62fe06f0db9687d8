import io
import sys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

sys.path.insert(0, str(Path(__file__).parent))


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def fridge_scene(width=120, height=90) -> np.ndarray:
    """Gradient background with a banana-, tomato-, and milk-colored blob."""
    yy = np.linspace(70, 110, height)[:, None]
    px = np.repeat(yy, width, axis=1)
    px = np.stack([px, px + 6, px + 12], axis=-1)
    ys, xs = np.mgrid[0:height, 0:width]
    banana = (((xs - 30) / 16.0) ** 2 + ((ys - 30) / 10.0) ** 2) <= 1.0
    tomato = (((xs - 85) / 12.0) ** 2 + ((ys - 55) / 12.0) ** 2) <= 1.0
    milk = (xs >= 5) & (xs < 25) & (ys >= 60) & (ys < 85)
    px[banana] = (230, 200, 40)
    px[tomato] = (200, 40, 30)
    px[milk] = (245, 245, 240)
    return px.astype(np.uint8)
