"""Detection evaluation: greedy matching, PR curves, AP/mAP, recall.

Matching is greedy by descending confidence with once-only ground-truth
assignment, the community convention. AP uses all-points interpolation
(area under the right-maximum envelope of the PR curve) and is computed
in exact rational arithmetic from the integer TP/FP counts, so results
are bit-for-bit reproducible and independent of float summation order.

Plain IoU is the matching criterion; GIoU appears in the report only as
a diagnostic of how tightly the true positives localize.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .dataset_io import ImageAnnotations
from .errors import ParseError, ValidationError
from .geometry import Box, Detection, giou, iou

DETECTION_CSV_COLUMNS = (
    "image_name", "x1", "y1", "x2", "y2", "category", "confidence",
)


@dataclass(frozen=True)
class DetectionOutcome:
    """Fate of one detection: true positive with its ground truth, or FP."""

    is_tp: bool
    gt_index: int | None = None


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of one image's detections against its ground truth."""

    iou_threshold: float
    outcomes: tuple[DetectionOutcome, ...]  # aligned with the input detections
    gt_matched_by: tuple[int | None, ...]   # per GT: matching detection index

    @property
    def tp_count(self) -> int:
        return sum(1 for o in self.outcomes if o.is_tp)

    @property
    def fp_count(self) -> int:
        return len(self.outcomes) - self.tp_count

    @property
    def fn_count(self) -> int:
        return sum(1 for g in self.gt_matched_by if g is None)


def match_detections(gt: Sequence[tuple[Box, str]], dets: Sequence[Detection],
                     iou_threshold: float) -> MatchResult:
    """Match detections to ground truth greedily by descending confidence.

    Each detection claims the unmatched same-category ground truth with
    the highest IoU at or above the threshold (IoU ties to the earliest
    ground truth, confidence ties to input order). Unclaimed ground
    truths are false negatives.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    outcomes: list[DetectionOutcome | None] = [None] * len(dets)
    matched_by: list[int | None] = [None] * len(gt)
    for i in order:
        det = dets[i]
        best_j, best_iou = None, -1.0
        for j, (gt_box, gt_cat) in enumerate(gt):
            if matched_by[j] is not None or gt_cat != det.category:
                continue
            overlap = iou(det.box, gt_box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_j, best_iou = j, overlap
        if best_j is None:
            outcomes[i] = DetectionOutcome(False)
        else:
            matched_by[best_j] = i
            outcomes[i] = DetectionOutcome(True, best_j)
    return MatchResult(iou_threshold, tuple(outcomes), tuple(matched_by))


def pr_curve(pooled: Sequence[tuple[float, bool]], gt_count: int
             ) -> list[tuple[float, float]]:
    """Cumulative precision-recall points for one category.

    ``pooled`` holds (confidence, is_tp) for every detection of the
    category across all images. Points are emitted one per detection in
    descending confidence; within an equal-confidence group false
    positives are counted first, which makes the cumulative curve agree
    with a sweep over confidence thresholds (a threshold can never split
    a tie group).
    """
    if gt_count < 1:
        raise ValidationError("pr_curve needs at least one ground truth")
    ordered = sorted(pooled, key=lambda item: (-item[0], item[1]))
    points = []
    tp = fp = 0
    for _, is_tp in ordered:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / gt_count, tp / (tp + fp)))
    return points


def _ap_exact(points: Sequence[tuple[Fraction, Fraction]]) -> Fraction:
    """Area under the right-maximum envelope of a PR point sequence."""
    ap = Fraction(0)
    prev_recall = Fraction(0)
    envelopes: list[Fraction] = []
    running = Fraction(0)
    for _, precision in reversed(points):
        running = max(running, precision)
        envelopes.append(running)
    envelopes.reverse()
    for (recall, _), envelope in zip(points, envelopes):
        ap += (recall - prev_recall) * envelope
        prev_recall = recall
    return ap


def average_precision(points: Sequence[tuple[float, float]]) -> float:
    """All-points-interpolated AP of a PR curve.

    Precision is replaced by its running maximum from the right and
    integrated over the recall steps.
    """
    if not points:
        raise ValidationError("average_precision needs at least one PR point")
    exact = [(Fraction(r), Fraction(p)) for r, p in points]
    return float(_ap_exact(exact))


@dataclass(frozen=True)
class EvalReport:
    """Scalar summary of a detector run against a ground-truth dataset."""

    iou_threshold: float
    map_at_threshold: float
    per_category_ap: dict[str, float]
    recall: float
    mean_giou_of_true_positives: float | None
    images: int
    ground_truth: int
    detections: int
    tp: int
    fp: int
    fn: int
    zero_gt_categories: dict[str, int]  # category -> detection count

    def to_json_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "map_at_threshold": self.map_at_threshold,
            "per_category_ap": dict(sorted(self.per_category_ap.items())),
            "recall": self.recall,
            "mean_giou_of_true_positives": self.mean_giou_of_true_positives,
            "counts": {
                "images": self.images,
                "ground_truth": self.ground_truth,
                "detections": self.detections,
                "tp": self.tp,
                "fp": self.fp,
                "fn": self.fn,
            },
            "zero_gt_categories": dict(sorted(self.zero_gt_categories.items())),
        }


def evaluate(gt_dataset: Sequence[ImageAnnotations],
             detections_by_image: Mapping[str, Sequence[Detection]],
             iou_threshold: float,
             taxonomy: Sequence[str] | None = None) -> EvalReport:
    """Evaluate detections against ground truth at one IoU threshold.

    mAP is the unweighted mean of per-category AP over categories with
    at least one ground truth; categories that only appear in the
    detections are excluded from mAP and reported separately. Recall is
    total TP over total GT with every detection counted (confidence
    cutoff 0).
    """
    gt_names = {img.image_name for img in gt_dataset}
    unknown_images = sorted(set(detections_by_image) - gt_names)
    if unknown_images:
        raise ValidationError(
            "detections reference images absent from the ground truth: "
            + ", ".join(unknown_images)
        )
    if taxonomy is not None:
        allowed = set(taxonomy)
        bad = sorted(
            {cat for img in gt_dataset for _, cat in img.annotations} - allowed
        ) + sorted(
            {d.category for dets in detections_by_image.values() for d in dets} - allowed
        )
        if bad:
            raise ValidationError(f"categories outside the taxonomy: {', '.join(bad)}")

    gt_per_category: dict[str, int] = {}
    pooled: dict[str, list[tuple[float, bool]]] = {}
    giou_sum = 0.0
    total_tp = total_fp = total_fn = total_gt = total_det = 0

    for img in gt_dataset:
        dets = list(detections_by_image.get(img.image_name, []))
        result = match_detections(img.annotations, dets, iou_threshold)
        total_gt += len(img.annotations)
        total_det += len(dets)
        total_tp += result.tp_count
        total_fp += result.fp_count
        total_fn += result.fn_count
        for _, category in img.annotations:
            gt_per_category[category] = gt_per_category.get(category, 0) + 1
        for det, outcome in zip(dets, result.outcomes):
            pooled.setdefault(det.category, []).append((det.confidence, outcome.is_tp))
            if outcome.is_tp:
                giou_sum += giou(det.box, img.annotations[outcome.gt_index][0])

    per_category_ap: dict[str, float] = {}
    ap_sum = Fraction(0)
    for category, gt_count in sorted(gt_per_category.items()):
        flags = sorted(pooled.get(category, []), key=lambda item: (-item[0], item[1]))
        points: list[tuple[Fraction, Fraction]] = []
        tp = fp = 0
        for _, is_tp in flags:
            tp, fp = (tp + 1, fp) if is_tp else (tp, fp + 1)
            points.append((Fraction(tp, gt_count), Fraction(tp, tp + fp)))
        ap = _ap_exact(points) if points else Fraction(0)
        ap_sum += ap
        per_category_ap[category] = float(ap)

    map_exact = ap_sum / len(gt_per_category) if gt_per_category else Fraction(0)
    recall_exact = Fraction(total_tp, total_gt) if total_gt else Fraction(0)
    zero_gt = {
        category: len(flags)
        for category, flags in sorted(pooled.items())
        if category not in gt_per_category
    }
    return EvalReport(
        iou_threshold=iou_threshold,
        map_at_threshold=float(map_exact),
        per_category_ap=per_category_ap,
        recall=float(recall_exact),
        mean_giou_of_true_positives=(giou_sum / total_tp if total_tp else None),
        images=len(gt_dataset),
        ground_truth=total_gt,
        detections=total_det,
        tp=total_tp,
        fp=total_fp,
        fn=total_fn,
        zero_gt_categories=zero_gt,
    )


def parse_detections_csv(stream) -> dict[str, list[Detection]]:
    """Parse the detection interchange CSV.

    Columns: image_name,x1,y1,x2,y2,category,confidence. An optional
    header is auto-detected by a non-numeric x1. Returns detections per
    image in file order.
    """
    if isinstance(stream, bytes):
        text = stream.decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    result: dict[str, list[Detection]] = {}
    for line, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(DETECTION_CSV_COLUMNS):
            raise ParseError(
                f"expected {len(DETECTION_CSV_COLUMNS)} columns, got {len(row)}", line
            )
        if line == 1:
            try:
                float(row[1])
            except ValueError:
                continue  # header
        name = row[0].strip()
        try:
            coords = [float(v) for v in row[1:5]]
            confidence = float(row[6])
        except ValueError as exc:
            raise ParseError(f"non-numeric field: {exc}", line) from None
        try:
            det = Detection(Box(*coords), row[5].strip(), confidence)
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc}") from None
        result.setdefault(name, []).append(det)
    return result


def write_detections_csv(detections_by_image: Mapping[str, Sequence[Detection]]) -> bytes:
    """Serialize detections to the interchange CSV (with header)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DETECTION_CSV_COLUMNS)
    for name, dets in detections_by_image.items():
        for d in dets:
            writer.writerow([
                name,
                _fmt(d.box.x1), _fmt(d.box.y1), _fmt(d.box.x2), _fmt(d.box.y2),
                d.category, _fmt(d.confidence),
            ])
    return out.getvalue().encode("utf-8")


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))
