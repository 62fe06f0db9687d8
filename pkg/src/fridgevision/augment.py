"""Seeded, box-aware data augmentation.

Every pixel operation is written against plain numpy in float64 with a
single final rounding, and all randomness flows through the package's
splitmix64 generator, so a (seed, input, config) triple produces
byte-identical output on every platform and run.

Geometry note for rotation and shear: angles are measured with the
matrix convention [[cos, -sin], [sin, cos]] applied directly to pixel
coordinates (origin top-left, y down).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError
from .geometry import Box, clip_box
from .image_io import Image
from .rng import SplitMix64, derive_seed

Annotations = list[tuple[Box, str]]
Example = tuple[Image, Annotations]

# Fraction of the original box area that must survive clipping after a
# rotation for the annotation to be kept.
MIN_RETAINED_BOX_AREA = 0.20

AUTO_ORIENT_NOTE = (
    "auto-orient: no-op (raw RGB buffers carry no orientation metadata)"
)


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation recipe; defaults are the project's training recipe."""

    outputs_per_example: int = 3
    flip_horizontal_prob: float = 0.5
    rotation_range: float = 15.0        # degrees, symmetric
    grayscale_prob: float = 0.25
    hue_range: float = 25.0             # degrees, symmetric
    saturation_range: float = 0.25      # fraction, symmetric
    exposure_range: float = 0.25        # fraction, symmetric
    blur_max: float = 2.5               # px radius
    mosaic_enabled: bool = True
    bbox_shear_range: float = 15.0      # degrees, horizontal and vertical
    bbox_exposure_range: float = 0.25   # fraction, symmetric
    bbox_noise_max: float = 0.05        # fraction of in-box pixels
    target_width: int = 640
    target_height: int = 640

    def __post_init__(self):
        if self.outputs_per_example < 1:
            raise ValidationError("outputs_per_example must be >= 1")
        for prob in ("flip_horizontal_prob", "grayscale_prob"):
            v = getattr(self, prob)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{prob} must be in [0, 1], got {v}")
        for rng_field in ("rotation_range", "hue_range", "saturation_range",
                          "exposure_range", "blur_max", "bbox_shear_range",
                          "bbox_exposure_range", "bbox_noise_max"):
            if getattr(self, rng_field) < 0:
                raise ValidationError(f"{rng_field} must be non-negative")
        if self.target_width < 1 or self.target_height < 1:
            raise ValidationError("target size must be positive")

    @classmethod
    def from_json(cls, data: bytes | str) -> "AugmentConfig":
        raw = json.loads(data)
        if not isinstance(raw, dict):
            raise ValidationError("augment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown augment config keys: {', '.join(unknown)}")
        return cls(**raw)

    def identity(self) -> bool:
        return (
            self.flip_horizontal_prob == 0 and self.rotation_range == 0
            and self.grayscale_prob == 0 and self.hue_range == 0
            and self.saturation_range == 0 and self.exposure_range == 0
            and self.blur_max == 0 and not self.mosaic_enabled
            and self.bbox_shear_range == 0 and self.bbox_exposure_range == 0
            and self.bbox_noise_max == 0
        )


@dataclass(frozen=True)
class PhotometricParams:
    grayscale: bool = False
    hue_shift: float = 0.0          # degrees
    saturation_scale: float = 0.0   # fraction added to 1.0
    exposure_scale: float = 0.0     # fraction added to 1.0


@dataclass(frozen=True)
class BboxLocalParams:
    shear_h: float = 0.0   # degrees
    shear_v: float = 0.0   # degrees
    exposure: float = 0.0  # fraction added to 1.0
    noise: float = 0.0     # fraction of in-box pixels replaced


# --- geometric transforms ---

def resize_stretch(img: Image, anns: Annotations, target_w: int, target_h: int
                   ) -> Example:
    """Stretch to target size with independent x/y scales; bilinear."""
    if target_w < 1 or target_h < 1:
        raise ValidationError("target dimensions must be positive")
    sx = target_w / img.width
    sy = target_h / img.height
    if (target_w, target_h) == (img.width, img.height):
        out = img
    else:
        out = Image(_bilinear_resize(img.pixels, target_w, target_h))
    scaled = [
        (Box(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy), cat)
        for b, cat in anns
    ]
    return out, scaled


def _bilinear_resize(px: np.ndarray, tw: int, th: int) -> np.ndarray:
    h, w = px.shape[:2]
    xs = (np.arange(tw) + 0.5) * (w / tw) - 0.5
    ys = (np.arange(th) + 0.5) * (h / th) - 0.5
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    p = px.astype(np.float64)
    top = p[y0c][:, x0c] * (1.0 - fx) + p[y0c][:, x1c] * fx
    bottom = p[y1c][:, x0c] * (1.0 - fx) + p[y1c][:, x1c] * fx
    out = top * (1.0 - fy) + bottom * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def flip_horizontal(img: Image, anns: Annotations) -> Example:
    """Mirror left-right: pixel (x, y) -> (W-1-x, y), box x-extent reflected."""
    flipped = Image(np.ascontiguousarray(img.pixels[:, ::-1]))
    w = img.width
    mirrored = [
        (Box(w - b.x2, b.y1, w - b.x1, b.y2), cat)
        for b, cat in anns
    ]
    return flipped, mirrored


def rotate_with_boxes(img: Image, anns: Annotations, angle: float) -> Example:
    """Rotate about the image center on the same canvas, black fill.

    Each box is replaced by the axis-aligned hull of its rotated corners,
    clipped to the canvas; boxes retaining under 20% of their original
    area are dropped.
    """
    if abs(angle) > 180:
        raise ValidationError(f"rotation angle must be within +-180, got {angle}")
    if angle == 0.0:
        return img, list(anns)
    w, h = img.width, img.height
    cx, cy = w / 2.0, h / 2.0
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    # Inverse mapping: for each destination pixel center, sample the
    # source pixel it came from (rotation by -angle), nearest neighbor.
    dest_x = np.arange(w) + 0.5
    dest_y = np.arange(h) + 0.5
    dx = dest_x[None, :] - cx
    dy = dest_y[:, None] - cy
    src_x = cx + dx * cos_t + dy * sin_t
    src_y = cy - dx * sin_t + dy * cos_t
    ix = np.floor(src_x).astype(np.int64)
    iy = np.floor(src_y).astype(np.int64)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros_like(img.pixels)
    out[inside] = img.pixels[iy[inside], ix[inside]]

    kept: Annotations = []
    for box, cat in anns:
        corners = [
            (box.x1, box.y1), (box.x2, box.y1), (box.x1, box.y2), (box.x2, box.y2),
        ]
        xs, ys = [], []
        for x, y in corners:
            rx, ry = x - cx, y - cy
            xs.append(cx + rx * cos_t - ry * sin_t)
            ys.append(cy + rx * sin_t + ry * cos_t)
        hull = Box(min(xs), min(ys), max(xs), max(ys))
        clipped = clip_box(hull, w, h)
        if clipped is not None and clipped.area() >= MIN_RETAINED_BOX_AREA * box.area():
            kept.append((clipped, cat))
    return Image(out), kept


def mosaic_compose(examples: list[Example], seed: int,
                   target_size: tuple[int, int] | None = None) -> Example:
    """Tile four same-size examples onto a 2Wx2H canvas.

    Quadrant order is shuffled by the seed; each input's boxes are offset
    by its quadrant origin. When target_size is given the canvas is then
    stretch-resized to it.
    """
    if len(examples) != 4:
        raise ValidationError(f"mosaic needs exactly 4 examples, got {len(examples)}")
    w, h = examples[0][0].width, examples[0][0].height
    for img, _ in examples[1:]:
        if (img.width, img.height) != (w, h):
            raise ValidationError(
                f"mosaic inputs must share dimensions: {w}x{h} vs {img.width}x{img.height}"
            )
    order = [0, 1, 2, 3]
    SplitMix64(seed).shuffle(order)
    origins = [(0, 0), (w, 0), (0, h), (w, h)]
    canvas = np.zeros((2 * h, 2 * w, 3), dtype=np.uint8)
    anns: Annotations = []
    for quadrant, source in enumerate(order):
        ox, oy = origins[quadrant]
        img, source_anns = examples[source]
        canvas[oy:oy + h, ox:ox + w] = img.pixels
        anns.extend((box.translate(ox, oy), cat) for box, cat in source_anns)
    result: Example = (Image(canvas), anns)
    if target_size is not None:
        result = resize_stretch(result[0], result[1], *target_size)
    return result


# --- photometric transforms ---

def _rgb_to_hsv(px: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = px.astype(np.float64) / 255.0
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    maxc = np.max(p, axis=-1)
    minc = np.min(p, axis=-1)
    delta = maxc - minc
    hue = np.zeros_like(maxc)
    mask = delta > 0
    rmax = mask & (maxc == r)
    gmax = mask & (maxc == g) & ~rmax
    bmax = mask & ~rmax & ~gmax
    with np.errstate(divide="ignore", invalid="ignore"):
        hue[rmax] = ((g - b)[rmax] / delta[rmax]) % 6.0
        hue[gmax] = (b - r)[gmax] / delta[gmax] + 2.0
        hue[bmax] = (r - g)[bmax] / delta[bmax] + 4.0
    hue *= 60.0
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return hue, sat, maxc


def _hsv_to_rgb(hue: np.ndarray, sat: np.ndarray, val: np.ndarray) -> np.ndarray:
    h6 = (hue % 360.0) / 60.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    r = np.choose(i, [val, q, p, p, t, val])
    g = np.choose(i, [t, val, val, q, p, p])
    b = np.choose(i, [p, p, t, val, val, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def _luma(px: np.ndarray) -> np.ndarray:
    p = px.astype(np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def photometric(img: Image, params: PhotometricParams) -> Image:
    """Hue rotation, saturation/exposure scaling, optional grayscale.

    Hue rotates modulo 360 degrees; saturation and value are multiplied
    by (1 + fraction) and clamped. Grayscale replaces RGB with the luma
    average and is applied after the HSV adjustments so exposure still
    acts on the gray. Box coordinates are never touched.
    """
    if params == PhotometricParams():
        return img
    px = img.pixels
    if params.hue_shift != 0.0 or params.saturation_scale != 0.0 \
            or params.exposure_scale != 0.0:
        hue, sat, val = _rgb_to_hsv(px)
        hue = (hue + params.hue_shift) % 360.0
        sat = np.clip(sat * (1.0 + params.saturation_scale), 0.0, 1.0)
        val = np.clip(val * (1.0 + params.exposure_scale), 0.0, 1.0)
        px = _hsv_to_rgb(hue, sat, val)
    if params.grayscale:
        gray = np.clip(np.rint(_luma(px)), 0, 255).astype(np.uint8)
        px = np.repeat(gray[..., None], 3, axis=-1)
    return Image(px)


def gaussian_blur(img: Image, radius: float) -> Image:
    """Separable Gaussian blur, sigma = radius / 2, kernel cut at 3 sigma.

    Radius 0 is the identity. Edges are clamp-padded.
    """
    if radius < 0:
        raise ValidationError("blur radius must be non-negative")
    if radius == 0.0:
        return img
    sigma = radius / 2.0
    taps = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-taps, taps + 1, dtype=np.float64)
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    p = img.pixels.astype(np.float64)
    padded = np.pad(p, ((0, 0), (taps, taps), (0, 0)), mode="edge")
    horiz = np.zeros_like(p)
    for k, weight in enumerate(kernel):
        horiz += weight * padded[:, k:k + img.width]
    padded = np.pad(horiz, ((taps, taps), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(p)
    for k, weight in enumerate(kernel):
        out += weight * padded[k:k + img.height]
    return Image(np.clip(np.rint(out), 0, 255).astype(np.uint8))


# --- bounding-box-local transforms ---

def _inbox_mask(box: Box, width: int, height: int) -> tuple[slice, slice, np.ndarray]:
    """Pixel rows/cols touching the box and the centers-inside mask."""
    x_lo = max(int(math.floor(box.x1)), 0)
    y_lo = max(int(math.floor(box.y1)), 0)
    x_hi = min(int(math.ceil(box.x2)), width)
    y_hi = min(int(math.ceil(box.y2)), height)
    ys = np.arange(y_lo, y_hi) + 0.5
    xs = np.arange(x_lo, x_hi) + 0.5
    mask = (
        (xs[None, :] >= box.x1) & (xs[None, :] < box.x2)
        & (ys[:, None] >= box.y1) & (ys[:, None] < box.y2)
    )
    return slice(y_lo, y_hi), slice(x_lo, x_hi), mask


def bbox_local(img: Image, anns: Annotations, params: BboxLocalParams,
               rng: SplitMix64 | None = None) -> Example:
    """Apply shear/exposure/noise to pixels inside each annotated box.

    A pixel is inside a box when its center is. Shear warps the box's
    content about the box center (vacated areas go black, content never
    leaks outside the box); exposure scales the value channel; noise
    replaces exactly floor(params.noise * in-box pixel count) distinct
    pixels with uniform random channel values. Boxes are processed in
    annotation order; pixels outside every box are bit-identical to the
    input, and box coordinates never change.
    """
    if params.noise > 0.0 and rng is None:
        raise ValidationError("bbox_local noise requires a generator")
    if params == BboxLocalParams() or not anns:
        return img, list(anns)
    px = img.pixels.copy()
    for box, _ in anns:
        row_slice, col_slice, mask = _inbox_mask(box, img.width, img.height)
        if not mask.any():
            continue
        region = px[row_slice, col_slice]
        if params.shear_h != 0.0 or params.shear_v != 0.0:
            region = _shear_region(
                region, mask, box,
                x0=col_slice.start, y0=row_slice.start,
                shear_h=params.shear_h, shear_v=params.shear_v,
            )
        if params.exposure != 0.0:
            hue, sat, val = _rgb_to_hsv(region)
            val = np.clip(val * (1.0 + params.exposure), 0.0, 1.0)
            adjusted = _hsv_to_rgb(hue, sat, val)
            region = np.where(mask[..., None], adjusted, region)
        if params.noise > 0.0:
            count = int(np.count_nonzero(mask))
            replace = int(params.noise * count)
            if replace > 0:
                flat_targets = np.flatnonzero(mask.ravel())
                chosen = rng.sample_indices(count, replace)
                colors = np.array(
                    [[rng.randrange(256) for _ in range(3)] for _ in chosen],
                    dtype=np.uint8,
                ).reshape(replace, 3)
                flat = region.reshape(-1, 3).copy()
                flat[flat_targets[chosen]] = colors
                region = flat.reshape(region.shape)
        px[row_slice, col_slice] = region
    return Image(px), list(anns)


def _shear_region(region: np.ndarray, mask: np.ndarray, box: Box,
                  x0: int, y0: int, shear_h: float, shear_v: float) -> np.ndarray:
    """Shear in-box content about the box center; nearest-neighbor."""
    tan_h = math.tan(math.radians(shear_h))
    tan_v = math.tan(math.radians(shear_v))
    det = 1.0 - tan_h * tan_v
    cx = (box.x1 + box.x2) / 2.0
    cy = (box.y1 + box.y2) / 2.0
    rows, cols = region.shape[:2]
    dest_x = x0 + np.arange(cols) + 0.5 - cx
    dest_y = y0 + np.arange(rows) + 0.5 - cy
    dxg = np.broadcast_to(dest_x[None, :], (rows, cols))
    dyg = np.broadcast_to(dest_y[:, None], (rows, cols))
    # Inverse of [[1, tan_h], [tan_v, 1]].
    src_x = (dxg - tan_h * dyg) / det + cx
    src_y = (-tan_v * dxg + dyg) / det + cy
    ix = np.floor(src_x).astype(np.int64) - x0
    iy = np.floor(src_y).astype(np.int64) - y0
    src_inside = (
        (src_x >= box.x1) & (src_x < box.x2)
        & (src_y >= box.y1) & (src_y < box.y2)
        & (ix >= 0) & (ix < cols) & (iy >= 0) & (iy < rows)
    )
    sheared = np.zeros_like(region)
    valid = src_inside & mask
    sheared[valid] = region[iy[valid], ix[valid]]
    return np.where(mask[..., None], sheared, region)


# --- the pipeline ---

def draw_variant_params(rng: SplitMix64, cfg: AugmentConfig) -> dict:
    """Draw one variant's parameters in the pipeline's fixed order."""
    return {
        "flip": rng.random() < cfg.flip_horizontal_prob,
        "angle": rng.uniform(-cfg.rotation_range, cfg.rotation_range),
        "grayscale": rng.random() < cfg.grayscale_prob,
        "hue": rng.uniform(-cfg.hue_range, cfg.hue_range),
        "saturation": rng.uniform(-cfg.saturation_range, cfg.saturation_range),
        "exposure": rng.uniform(-cfg.exposure_range, cfg.exposure_range),
        "blur": rng.uniform(0.0, cfg.blur_max),
        "bbox": BboxLocalParams(
            shear_h=rng.uniform(-cfg.bbox_shear_range, cfg.bbox_shear_range),
            shear_v=rng.uniform(-cfg.bbox_shear_range, cfg.bbox_shear_range),
            exposure=rng.uniform(-cfg.bbox_exposure_range, cfg.bbox_exposure_range),
            noise=rng.uniform(0.0, cfg.bbox_noise_max),
        ),
    }


def augment_pipeline(example: Example, cfg: AugmentConfig, seed: int,
                     mosaic_partners: list[Example] | None = None
                     ) -> list[Example]:
    """Produce cfg.outputs_per_example augmented variants of one example.

    Each variant draws its parameters from a generator seeded by
    (seed, variant index) and always ends with a stretch-resize to the
    configured target size. When mosaic is enabled the transformed
    example is tiled with three partner examples (the example itself if
    no partners are supplied). Auto-orientation is a no-op on raw RGB
    buffers; see AUTO_ORIENT_NOTE.
    """
    variants: list[Example] = []
    for v in range(cfg.outputs_per_example):
        rng = SplitMix64(derive_seed(seed, v))
        params = draw_variant_params(rng, cfg)
        img, anns = example[0], list(example[1])
        if params["flip"]:
            img, anns = flip_horizontal(img, anns)
        img, anns = rotate_with_boxes(img, anns, params["angle"])
        img = photometric(img, PhotometricParams(
            grayscale=params["grayscale"],
            hue_shift=params["hue"],
            saturation_scale=params["saturation"],
            exposure_scale=params["exposure"],
        ))
        img = gaussian_blur(img, params["blur"])
        img, anns = bbox_local(img, anns, params["bbox"], rng)
        if cfg.mosaic_enabled:
            partners = mosaic_partners if mosaic_partners else [example] * 3
            if len(partners) != 3:
                raise ValidationError("mosaic needs exactly 3 partner examples")
            img, anns = mosaic_compose(
                [(img, anns)] + list(partners), seed=rng.next_u64()
            )
        variants.append(resize_stretch(img, anns, cfg.target_width, cfg.target_height))
    return variants


def augment_dataset(examples: list[Example], cfg: AugmentConfig, seed: int
                    ) -> list[tuple[int, int, Image, Annotations]]:
    """Augment a whole dataset; mosaic partners are the 3 following
    examples (wrapping). Returns (source index, variant index, image,
    annotations) tuples in deterministic order."""
    out = []
    n = len(examples)
    for i, example in enumerate(examples):
        partners = [examples[(i + k) % n] for k in (1, 2, 3)] if cfg.mosaic_enabled else None
        for v, (img, anns) in enumerate(
                augment_pipeline(example, cfg, derive_seed(seed, i), partners)):
            out.append((i, v, img, anns))
    return out
