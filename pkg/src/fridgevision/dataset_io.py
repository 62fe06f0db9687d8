"""Annotation dataset parsing, writing, and taxonomy remapping.

Two on-disk formats are supported:

* retail-shelf CSV with columns
  ``image_name,x1,y1,x2,y2,class,image_width,image_height`` (optional
  header row, auto-detected by a non-numeric x1 field);
* per-image YOLO text, one ``index cx cy w h`` line per object with
  center coordinates normalized to [0, 1].

Tracking-list and category-map configs are JSON; schemas are documented
in the README.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .geometry import Box, clip_box

# Boxes may poke this far (px) past the image edge before we treat the
# row as corrupt instead of clipping quietly: annotation jitter is real,
# wholesale excursions are not.
CLIP_TOLERANCE_PX = 2.0

# Misspellings that appear in tracking-list sources, repaired on load so
# they never become part of the file protocol.
CANONICAL_SPELLINGS = {
    "avacado": "avocado",
    "tamatos": "tomatoes",
}

DROP = "drop"

SKU110K_COLUMNS = (
    "image_name", "x1", "y1", "x2", "y2", "class", "image_width", "image_height",
)


def normalize_category(name: str) -> str:
    """Trim, lowercase, collapse inner whitespace, repair known misspellings."""
    cleaned = " ".join(name.strip().lower().split())
    return CANONICAL_SPELLINGS.get(cleaned, cleaned)


@dataclass
class ImageAnnotations:
    """All annotations of one image, with the image dimensions."""

    image_name: str
    image_width: int
    image_height: int
    annotations: list[tuple[Box, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.image_name:
            raise ValidationError("image_name must be non-empty")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValidationError(
                f"image dimensions must be positive, got "
                f"{self.image_width}x{self.image_height} for {self.image_name}"
            )


@dataclass(frozen=True)
class TrackingList:
    """Ordered (category, desired weekly quantity) pairs; names normalized."""

    entries: tuple[tuple[str, int], ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def desired(self, name: str) -> int:
        for entry_name, quantity in self.entries:
            if entry_name == name:
                return quantity
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return name in self.names


@dataclass(frozen=True)
class CategoryMap:
    """Source category -> tracking category, or DROP to discard."""

    mapping: dict[str, str]

    def validate_against(self, tracking: TrackingList) -> None:
        bad = sorted(
            target for target in self.mapping.values()
            if target != DROP and target not in tracking
        )
        if bad:
            raise ValidationError(
                f"category map targets not in tracking list: {', '.join(bad)}"
            )

    @classmethod
    def from_json(cls, data: bytes | str) -> "CategoryMap":
        raw = json.loads(data)
        if not isinstance(raw, dict):
            raise ValidationError("category map must be a JSON object")
        mapping = {}
        for source, target in raw.items():
            if not isinstance(target, str):
                raise ValidationError(f"category map target for {source!r} must be a string")
            mapping[source] = target if target == DROP else normalize_category(target)
        return cls(mapping)


def _ensure_text(stream) -> io.TextIOBase:
    if isinstance(stream, bytes):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def _parse_coord(value: str, line: int, column: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ParseError(f"non-numeric {column}: {value!r}", line) from None
    return v


def _parse_dimension(value: str, line: int, column: str) -> int:
    v = _parse_coord(value, line, column)
    if not v.is_integer() or v <= 0:
        raise ValidationError(f"line {line}: {column} must be a positive integer, got {value!r}")
    return int(v)


def _validated_box(x1: float, y1: float, x2: float, y2: float,
                   width: int, height: int, line: int) -> Box:
    if x2 <= x1 or y2 <= y1:
        raise ValidationError(
            f"line {line}: invalid box ({x1}, {y1}, {x2}, {y2}): "
            "x2 must exceed x1 and y2 must exceed y1"
        )
    excess = max(0.0 - x1, 0.0 - y1, x2 - width, y2 - height, 0.0)
    if excess > CLIP_TOLERANCE_PX:
        raise ValidationError(
            f"line {line}: box ({x1}, {y1}, {x2}, {y2}) extends "
            f"{excess:g}px beyond the {width}x{height} image"
        )
    clipped = clip_box(Box(x1, y1, x2, y2), width, height)
    if clipped is None:
        raise ValidationError(f"line {line}: box lies outside the image")
    return clipped


def parse_sku110k(stream) -> list[ImageAnnotations]:
    """Parse retail-shelf CSV annotations, grouped per image.

    Images appear in first-seen row order. Boxes are validated and
    clipped to the image bounds; rows that cannot be repaired raise with
    their line number.
    """
    text = _ensure_text(stream)
    images: dict[str, ImageAnnotations] = {}
    reader = csv.reader(text)
    for line, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(SKU110K_COLUMNS):
            raise ParseError(
                f"expected {len(SKU110K_COLUMNS)} columns, got {len(row)}", line
            )
        if line == 1:
            try:
                float(row[1])
            except ValueError:
                continue  # header row
        name = row[0].strip()
        if not name:
            raise ValidationError(f"line {line}: empty image_name")
        x1 = _parse_coord(row[1], line, "x1")
        y1 = _parse_coord(row[2], line, "y1")
        x2 = _parse_coord(row[3], line, "x2")
        y2 = _parse_coord(row[4], line, "y2")
        category = row[5].strip()
        width = _parse_dimension(row[6], line, "image_width")
        height = _parse_dimension(row[7], line, "image_height")
        box = _validated_box(x1, y1, x2, y2, width, height, line)
        if name in images:
            existing = images[name]
            if (existing.image_width, existing.image_height) != (width, height):
                raise ValidationError(
                    f"line {line}: image {name} was {existing.image_width}x"
                    f"{existing.image_height} earlier, now {width}x{height}"
                )
            existing.annotations.append((box, category))
        else:
            images[name] = ImageAnnotations(name, width, height, [(box, category)])
    return list(images.values())


def parse_yolo(text, image_name: str, image_width: int, image_height: int,
               index_map: dict[int, str]) -> ImageAnnotations:
    """Parse one image's YOLO text: ``index cx cy w h`` per line, normalized."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    result = ImageAnnotations(image_name, image_width, image_height, [])
    for line, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", line)
        try:
            index = int(parts[0])
        except ValueError:
            raise ParseError(f"non-integer class index: {parts[0]!r}", line) from None
        if index not in index_map:
            raise ValidationError(f"line {line}: unknown class index {index}")
        cx = _parse_coord(parts[1], line, "cx")
        cy = _parse_coord(parts[2], line, "cy")
        w = _parse_coord(parts[3], line, "w")
        h = _parse_coord(parts[4], line, "h")
        for label, value in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if not (0.0 <= value <= 1.0):
                raise ValidationError(
                    f"line {line}: {label}={value:g} outside the normalized [0, 1] range"
                )
        if w == 0.0 or h == 0.0:
            raise ValidationError(f"line {line}: zero-size box")
        box = _validated_box(
            (cx - w / 2) * image_width,
            (cy - h / 2) * image_height,
            (cx + w / 2) * image_width,
            (cy + h / 2) * image_height,
            image_width, image_height, line,
        )
        result.annotations.append((box, index_map[index]))
    return result


def _format_coord(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_sku110k(dataset: list[ImageAnnotations]) -> bytes:
    """Serialize to the retail-shelf CSV format (with header row).

    Integral coordinates are written as integers, the rest at full float
    precision, so a parse of the output reproduces the input exactly.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SKU110K_COLUMNS)
    for image in dataset:
        for box, category in image.annotations:
            writer.writerow([
                image.image_name,
                _format_coord(box.x1), _format_coord(box.y1),
                _format_coord(box.x2), _format_coord(box.y2),
                category,
                image.image_width, image.image_height,
            ])
    return out.getvalue().encode("utf-8")


def write_yolo(dataset: list[ImageAnnotations],
               category_indices: dict[str, int]) -> dict[str, bytes]:
    """Serialize each image to YOLO text, 6-decimal fixed point.

    Returns {image_name: file bytes}. Every category in the dataset must
    appear in ``category_indices``.
    """
    files: dict[str, bytes] = {}
    for image in dataset:
        lines = []
        for box, category in image.annotations:
            if category not in category_indices:
                raise ValidationError(
                    f"category {category!r} has no YOLO index (image {image.image_name})"
                )
            cx = (box.x1 + box.x2) / 2 / image.image_width
            cy = (box.y1 + box.y2) / 2 / image.image_height
            w = box.width / image.image_width
            h = box.height / image.image_height
            lines.append(
                f"{category_indices[category]} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}"
            )
        files[image.image_name] = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
    return files


def load_tracking_list(data: bytes | str) -> TrackingList:
    """Load the needs-list config: a JSON array of {name, desired_quantity}."""
    raw = json.loads(data)
    if not isinstance(raw, list):
        raise ValidationError("tracking list must be a JSON array")
    if not raw:
        raise ValidationError("tracking list must not be empty")
    entries: list[tuple[str, int]] = []
    seen = set()
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "name" not in item or "desired_quantity" not in item:
            raise ValidationError(
                f"tracking list entry {i} must be an object with name and desired_quantity"
            )
        name = normalize_category(str(item["name"]))
        if not name:
            raise ValidationError(f"tracking list entry {i} has an empty name")
        quantity = item["desired_quantity"]
        if not isinstance(quantity, int) or isinstance(quantity, bool) or quantity < 1:
            raise ValidationError(
                f"tracking list entry {name!r}: desired_quantity must be an integer >= 1"
            )
        if name in seen:
            raise ValidationError(f"duplicate tracking category after normalization: {name!r}")
        seen.add(name)
        entries.append((name, quantity))
    return TrackingList(tuple(entries))


def remap_categories(dataset: list[ImageAnnotations], cmap: CategoryMap
                     ) -> tuple[list[ImageAnnotations], dict[str, int]]:
    """Map dataset categories onto the tracking taxonomy.

    Annotations whose source category is absent from the map, or mapped
    to DROP, are removed and tallied per source category. Images left
    without annotations stay in the dataset: they are valid negatives.
    """
    remapped: list[ImageAnnotations] = []
    dropped: dict[str, int] = {}
    for image in dataset:
        kept: list[tuple[Box, str]] = []
        for box, category in image.annotations:
            target = cmap.mapping.get(category, DROP)
            if target == DROP:
                dropped[category] = dropped.get(category, 0) + 1
            else:
                kept.append((box, target))
        remapped.append(ImageAnnotations(
            image.image_name, image.image_width, image.image_height, kept
        ))
    return remapped, dropped
