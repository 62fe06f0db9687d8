"""Command-line entry point wiring all modules together.

Subcommands: evaluate, convert, augment, ingest, reconcile, order,
simulate. Data goes to standard output, diagnostics to standard error.
Exit codes: 0 ok, 1 usage, 2 data/validation, 3 I/O, 4 protocol.

Every subcommand is deterministic given its inputs and flags: time is
injected via --now (reconcile) or the simulation script, never read from
the wall clock, and the simulator only ever uses fixture detections.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import uuid
from pathlib import Path

from .augment import AUTO_ORIENT_NOTE, AugmentConfig, augment_dataset
from .dataset_io import (
    ImageAnnotations,
    load_tracking_list,
    parse_sku110k,
    parse_yolo,
    write_sku110k,
    write_yolo,
)
from .detector import (
    DEFAULT_MIN_CONFIDENCE,
    DEFAULT_NMS_THRESHOLD,
    DetectRequest,
    FixtureDetector,
    SocketEndpoint,
    SubprocessEndpoint,
    postprocess,
    remote_detect,
)
from .errors import (
    DetectorTimeout,
    FridgeVisionError,
    ParseError,
    ProtocolError,
    ValidationError,
)
from .fusion import CameraFrame, ZoneMap, fuse_snapshot
from .geometry import Box, Detection
from .image_io import read_png, write_png
from .inventory import InventoryStore
from .metrics import evaluate, parse_detections_csv
from .ordering import OrderPolicy, append_order, decide_order, load_order_log
from .timestamps import parse_timestamp

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3
EXIT_PROTOCOL = 4

STORE_ENV_VAR = "FRIDGEVISION_STORE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fridgevision", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth annotation CSV")
    p.add_argument("--pred", required=True, help="detection CSV")
    p.add_argument("--iou-threshold", type=float, default=0.5)

    p = sub.add_parser("convert", help="convert between annotation formats")
    p.add_argument("--from", dest="from_fmt", required=True,
                   choices=("sku110k", "yolo"))
    p.add_argument("--to", dest="to_fmt", required=True,
                   choices=("sku110k", "yolo"))
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", dest="out_path", required=True)
    p.add_argument("--index-map", help="JSON {category: index}, required for yolo")
    p.add_argument("--width", type=int, help="image width for yolo input")
    p.add_argument("--height", type=int, help="image height for yolo input")

    p = sub.add_parser("augment", help="augment an annotated image directory")
    p.add_argument("--config", help="augment config JSON (default: recipe defaults)")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory with PNGs and annotations.csv")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("ingest", help="capture one camera frame's detections")
    p.add_argument("--camera", required=True)
    p.add_argument("--image", required=True, help="PNG file path")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--fixture", help="detection CSV standing in for a model")
    group.add_argument("--endpoint",
                       help="tcp:HOST:PORT or cmd:<command> detector endpoint")
    p.add_argument("--store", default=os.environ.get(STORE_ENV_VAR),
                   help=f"inventory log path (default from ${STORE_ENV_VAR})")
    p.add_argument("--zones", required=True, help="zone map JSON")
    p.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE)
    p.add_argument("--nms-threshold", type=float, default=DEFAULT_NMS_THRESHOLD)
    p.add_argument("--taxonomy-version", default="v1")
    p.add_argument("--timeout-ms", type=float, default=10000.0)
    p.add_argument("--request-id", help="override the generated request id")

    p = sub.add_parser("reconcile", help="fuse pending frames into a snapshot")
    p.add_argument("--store", default=os.environ.get(STORE_ENV_VAR))
    p.add_argument("--zones", required=True)
    p.add_argument("--quality-min", type=float, default=0.4)
    p.add_argument("--now", required=True, help="snapshot timestamp (ISO-8601)")

    p = sub.add_parser("order", help="diff inventory against the needs list")
    p.add_argument("--store", default=os.environ.get(STORE_ENV_VAR))
    p.add_argument("--needs", required=True, help="tracking list JSON")
    p.add_argument("--policy", required=True, help="order policy JSON")
    p.add_argument("--orders", required=True, help="order log path")

    p = sub.add_parser("simulate", help="replay a scripted week deterministically")
    p.add_argument("--script", required=True)
    p.add_argument("--out", dest="out_dir", required=True)

    return parser


def _require_store(args) -> Path:
    if not args.store:
        raise ValidationError(
            f"no store path given: pass --store or set ${STORE_ENV_VAR}"
        )
    return Path(args.store)


def _pending_path(store: Path) -> Path:
    return store.with_name(store.name + ".pending")


# --- subcommand handlers ---

def cmd_evaluate(args) -> int:
    with open(args.gt, "rb") as fh:
        gt = parse_sku110k(fh.read())
    with open(args.pred, "rb") as fh:
        pred = parse_detections_csv(fh.read())
    report = evaluate(gt, pred, args.iou_threshold)
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _load_index_map(path) -> dict[str, int]:
    with open(path, "rb") as fh:
        raw = json.loads(fh.read())
    if not isinstance(raw, dict):
        raise ValidationError("index map must be a JSON object of category: index")
    return {str(cat): int(ix) for cat, ix in raw.items()}


def _read_yolo_dir(args) -> list[ImageAnnotations]:
    if args.width is None or args.height is None:
        raise ValidationError("yolo input needs --width and --height")
    if not args.index_map:
        raise ValidationError("yolo input needs --index-map")
    categories = _load_index_map(args.index_map)
    index_to_cat = {ix: cat for cat, ix in categories.items()}
    dataset = []
    for txt in sorted(Path(args.in_path).glob("*.txt")):
        image_name = txt.name[: -len(".txt")]
        dataset.append(parse_yolo(
            txt.read_text(encoding="utf-8"), image_name,
            args.width, args.height, index_to_cat,
        ))
    return dataset


def cmd_convert(args) -> int:
    if args.from_fmt == "sku110k":
        with open(args.in_path, "rb") as fh:
            dataset = parse_sku110k(fh.read())
    else:
        dataset = _read_yolo_dir(args)

    if args.to_fmt == "sku110k":
        Path(args.out_path).write_bytes(write_sku110k(dataset))
    else:
        if not args.index_map:
            raise ValidationError("yolo output needs --index-map")
        files = write_yolo(dataset, _load_index_map(args.index_map))
        out_dir = Path(args.out_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        # File names keep the full image name so the reverse conversion
        # can recover it exactly: img_1.jpg -> img_1.jpg.txt
        for image_name, payload in files.items():
            (out_dir / f"{image_name}.txt").write_bytes(payload)
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = AugmentConfig()
    if args.config:
        with open(args.config, "rb") as fh:
            cfg = AugmentConfig.from_json(fh.read())
    in_dir = Path(args.in_dir)
    annotations_path = in_dir / "annotations.csv"
    if not annotations_path.exists():
        raise ValidationError(f"missing {annotations_path}")
    dataset = parse_sku110k(annotations_path.read_bytes())
    examples = []
    for image_ann in dataset:
        image = read_png(in_dir / image_ann.image_name)
        if (image.width, image.height) != (image_ann.image_width,
                                           image_ann.image_height):
            raise ValidationError(
                f"{image_ann.image_name}: annotations declare "
                f"{image_ann.image_width}x{image_ann.image_height} but the PNG is "
                f"{image.width}x{image.height}"
            )
        examples.append((image, image_ann.annotations))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_annotations: list[ImageAnnotations] = []
    for source_ix, variant_ix, image, anns in augment_dataset(
            examples, cfg, args.seed):
        stem = Path(dataset[source_ix].image_name).stem
        out_name = f"{stem}_aug{variant_ix}.png"
        write_png(image, out_dir / out_name)
        out_annotations.append(ImageAnnotations(
            out_name, image.width, image.height, anns,
        ))
    (out_dir / "annotations.csv").write_bytes(write_sku110k(out_annotations))
    report = {
        "auto_orient": AUTO_ORIENT_NOTE,
        "inputs": len(examples),
        "outputs": len(out_annotations),
        "outputs_per_example": cfg.outputs_per_example,
        "seed": args.seed,
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8",
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _detect_via_endpoint(args, image_name: str) -> list[Detection]:
    spec = args.endpoint
    if spec.startswith("tcp:"):
        _, host, port = spec.split(":", 2)
        endpoint = SocketEndpoint(host, int(port))
    elif spec.startswith("cmd:"):
        endpoint = SubprocessEndpoint(shlex.split(spec[len("cmd:"):]))
    else:
        raise ValidationError(
            f"endpoint must look like tcp:HOST:PORT or cmd:<command>, got {spec!r}"
        )
    try:
        request = DetectRequest(
            request_id=args.request_id or f"ingest-{uuid.uuid4()}",
            camera_id=args.camera,
            taxonomy_version=args.taxonomy_version,
            image_path=args.image,
        )
        response = remote_detect(endpoint, request, args.timeout_ms)
        return list(response.detections)
    finally:
        endpoint.close()


def cmd_ingest(args) -> int:
    store = _require_store(args)
    zones = ZoneMap.from_json(Path(args.zones).read_bytes())
    zones.zone_of(args.camera)  # fail before touching the pending set
    image_name = Path(args.image).name
    if args.fixture:
        detections = FixtureDetector.from_path(args.fixture).detect(
            image_name, camera_id=args.camera)
    else:
        detections = _detect_via_endpoint(args, image_name)
    detections = postprocess(detections, args.min_confidence, args.nms_threshold)
    record = {
        "camera_id": args.camera,
        "image_name": image_name,
        "detections": [
            {"box": list(d.box.as_tuple()), "category": d.category,
             "confidence": d.confidence}
            for d in detections
        ],
    }
    with open(_pending_path(store), "ab") as fh:
        fh.write(json.dumps(record, sort_keys=True,
                            separators=(",", ":")).encode("utf-8") + b"\n")
    print(f"pending: {args.camera} {image_name} {len(detections)} detections",
          file=sys.stderr)
    return EXIT_OK


def _load_pending(path: Path) -> list[CameraFrame]:
    if not path.exists():
        raise ValidationError(f"no pending frames at {path}")
    frames: dict[str, CameraFrame] = {}
    for line in filter(None, path.read_bytes().split(b"\n")):
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            raise ValidationError(f"{path}: corrupt pending record") from None
        detections = tuple(
            Detection(Box(*d["box"]), d["category"], d["confidence"],
                      camera_id=record["camera_id"])
            for d in record["detections"]
        )
        # Re-capturing a camera before reconcile replaces its frame.
        frames[record["camera_id"]] = CameraFrame(
            record["camera_id"], record["image_name"], detections)
    if not frames:
        raise ValidationError(f"no pending frames at {path}")
    return list(frames.values())


def cmd_reconcile(args) -> int:
    store_path = _require_store(args)
    zones = ZoneMap.from_json(Path(args.zones).read_bytes())
    pending = _pending_path(store_path)
    frames = _load_pending(pending)
    snapshot = fuse_snapshot(frames, zones, args.quality_min, args.now)
    store = InventoryStore(store_path)
    store.append_snapshot(snapshot)
    pending.unlink()
    print(json.dumps(snapshot.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_order(args) -> int:
    store_path = _require_store(args)
    needs = load_tracking_list(Path(args.needs).read_bytes())
    policy = OrderPolicy.from_json(Path(args.policy).read_bytes())
    store = InventoryStore(store_path, needs)
    past_orders = load_order_log(args.orders)
    recent = store.history(policy.confirm_snapshots)
    if not recent:
        print("no order")
        return EXIT_OK
    order = decide_order(recent, needs, policy, past_orders)
    if order is None:
        print("no order")
        return EXIT_OK
    append_order(args.orders, order)
    print(json.dumps(order.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _resolve(base: Path, ref):
    """Script values may be inline JSON or a path relative to the script."""
    if isinstance(ref, str):
        return (base / ref).read_bytes()
    return json.dumps(ref).encode("utf-8")


def cmd_simulate(args) -> int:
    script_path = Path(args.script)
    base = script_path.parent
    script = json.loads(script_path.read_bytes())
    for key in ("needs", "policy", "zones", "events"):
        if key not in script:
            raise ValidationError(f"simulation script is missing {key!r}")
    needs = load_tracking_list(_resolve(base, script["needs"]))
    policy = OrderPolicy.from_json(_resolve(base, script["policy"]))
    zones = ZoneMap.from_json(_resolve(base, script["zones"]))
    quality_min = float(script.get("quality_min", 0.4))
    min_confidence = float(script.get("min_confidence", DEFAULT_MIN_CONFIDENCE))
    nms_threshold = float(script.get("nms_threshold", DEFAULT_NMS_THRESHOLD))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store_path = out_dir / "inventory.jsonl"
    orders_path = out_dir / "orders.jsonl"
    for stale in (store_path, orders_path):
        if stale.exists():
            stale.unlink()
    store = InventoryStore(store_path, needs)

    fixtures: dict[str, FixtureDetector] = {}
    pending: dict[str, CameraFrame] = {}
    last_ts = None
    orders_made = 0
    no_order_decisions = 0

    for index, event in enumerate(script["events"]):
        kind = event.get("type")
        ts = parse_timestamp(event["timestamp"])
        if last_ts is not None and ts < last_ts:
            raise ValidationError(
                f"event {index}: timestamps must be non-decreasing"
            )
        last_ts = ts
        if kind == "frame":
            fixture_ref = event["fixture"]
            if fixture_ref not in fixtures:
                fixtures[fixture_ref] = FixtureDetector.from_path(base / fixture_ref)
            raw = fixtures[fixture_ref].detect(
                event["image_name"], camera_id=event["camera_id"])
            detections = postprocess(raw, min_confidence, nms_threshold)
            pending[event["camera_id"]] = CameraFrame(
                event["camera_id"], event["image_name"], tuple(detections))
        elif kind == "reconcile":
            if not pending:
                raise ValidationError(f"event {index}: reconcile with no pending frames")
            snapshot = fuse_snapshot(list(pending.values()), zones, quality_min, ts)
            store.append_snapshot(snapshot)
            pending.clear()
        elif kind == "order":
            recent = store.history(policy.confirm_snapshots)
            order = decide_order(recent, needs, policy,
                                 load_order_log(orders_path)) if recent else None
            if order is None:
                no_order_decisions += 1
            else:
                append_order(orders_path, order)
                orders_made += 1
        else:
            raise ValidationError(f"event {index}: unknown event type {kind!r}")

    orders_path.touch()
    counts, no_obs = store.current_counts()
    summary = {
        "events": len(script["events"]),
        "snapshots": len(store),
        "orders": orders_made,
        "no_order_decisions": no_order_decisions,
        "no_observations": no_obs,
        "final_counts": dict(sorted(counts.items())),
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8",
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


_HANDLERS = {
    "evaluate": cmd_evaluate,
    "convert": cmd_convert,
    "augment": cmd_augment,
    "ingest": cmd_ingest,
    "reconcile": cmd_reconcile,
    "order": cmd_order,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ProtocolError, DetectorTimeout) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except FridgeVisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
