#!/usr/bin/env python3
"""Regenerate the committed test fixtures under data/.

Everything here is deterministic; rerunning must reproduce the committed
files byte for byte (PNG bytes additionally depend on the Pillow zlib
encoder, so regenerate them only when intentionally refreshing).

  - data/eval_fixture/: a ground-truth + detection pair constructed so
    the evaluation report lands exactly on mAP@0.5 = 0.70, recall = 0.80
    (6 immediate hits, a block of misses, then two late hits at
    precision 1/2 over 10 ground truths).
  - data/augment_fixture/: 20 synthetic 100x100 grocery-blob scenes with
    box annotations.
  - data/simulation/: a scripted week of three-camera captures driving
    the end-to-end simulator, including one banana shortage that must
    persist two snapshots before the single order fires, and one
    condensation-degraded camera day.
"""

import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


# --- evaluation operating-point fixture ---

def make_eval_fixture():
    out = DATA / "eval_fixture"
    out.mkdir(parents=True, exist_ok=True)
    gt_boxes = [(30 * k, 50, 30 * k + 20, 80) for k in range(10)]
    gt_rows = ["image_name,x1,y1,x2,y2,class,image_width,image_height"]
    for box in gt_boxes:
        gt_rows.append("shelf_0.png,%d,%d,%d,%d,banana,640,480" % box)
    (out / "gt.csv").write_text("\n".join(gt_rows) + "\n", encoding="utf-8")

    pred_rows = ["image_name,x1,y1,x2,y2,category,confidence"]

    def pred(box, conf):
        pred_rows.append("shelf_0.png,%d,%d,%d,%d,banana,%.2f" % (*box, conf))

    for k in range(6):                       # ranks 1-6: hits at precision 1
        pred(gt_boxes[k], 0.96 - 0.01 * k)
    for k in range(7):                       # ranks 7-13: clean misses
        pred((30 * k, 200, 30 * k + 20, 230), 0.80 - 0.01 * k)
    pred(gt_boxes[6], 0.50)                  # rank 14: hit at 7/14
    pred((300, 200, 320, 230), 0.45)         # rank 15: miss
    pred(gt_boxes[7], 0.40)                  # rank 16: hit at 8/16
    (out / "pred.csv").write_text("\n".join(pred_rows) + "\n", encoding="utf-8")


# --- synthetic grocery scenes for the augmentation suite ---

BLOB_COLORS = {
    "banana": (230, 200, 40),
    "tomatoes": (200, 40, 30),
    "blueberries": (40, 60, 180),
    "carrots": (230, 120, 30),
    "avocado": (90, 140, 50),
    "milk": (240, 240, 235),
}


def draw_scene(rng, width=100, height=100):
    yy = np.linspace(60, 110, height)[:, None]
    px = np.repeat(yy, width, axis=1)
    px = np.stack([px, px + 8, px + 16], axis=-1)
    annotations = []
    categories = rng.permutation(sorted(BLOB_COLORS))[: rng.randint(2, 5)]
    for category in categories:
        w = rng.randint(14, 30)
        h = rng.randint(14, 30)
        x1 = rng.randint(2, width - w - 2)
        y1 = rng.randint(2, height - h - 2)
        cx, cy = x1 + w / 2, y1 + h / 2
        ys, xs = np.mgrid[0:height, 0:width]
        inside = (
            ((xs + 0.5 - cx) / (w / 2)) ** 2 + ((ys + 0.5 - cy) / (h / 2)) ** 2
        ) <= 1.0
        shade = rng.uniform(0.85, 1.0)
        px[inside] = np.array(BLOB_COLORS[category]) * shade
        annotations.append(((x1, y1, x1 + w, y1 + h), category))
    return np.clip(px, 0, 255).astype(np.uint8), annotations


def make_augment_fixture(count=20):
    from PIL import Image as PILImage

    out = DATA / "augment_fixture"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.RandomState(2026)
    rows = ["image_name,x1,y1,x2,y2,class,image_width,image_height"]
    for i in range(count):
        name = f"augfix_{i:02d}.png"
        pixels, annotations = draw_scene(rng)
        PILImage.fromarray(pixels, mode="RGB").save(out / name, format="PNG")
        for (x1, y1, x2, y2), category in annotations:
            rows.append(f"{name},{x1},{y1},{x2},{y2},{category},100,100")
    (out / "annotations.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


# --- the scripted week ---

# Bananas visible on the top shelf per day; the dip on days 2-3 must
# persist two snapshots before the single order (6 - 2 = 4) fires, the
# day-6 blip must not trigger anything.
TOP_BANANAS = {1: 6, 2: 2, 3: 2, 4: 6, 5: 6, 6: 5, 7: 6}


def banana_row(image, k, conf):
    x = 20 + 90 * k
    return f"{image},{x},60,{x + 70},150,banana,{conf:.2f}"


def make_simulation():
    out = DATA / "simulation"
    out.mkdir(parents=True, exist_ok=True)
    events = []
    for day in range(1, 8):
        rows = ["image_name,x1,y1,x2,y2,category,confidence"]
        top, side, drawer = f"d{day}_top.png", f"d{day}_side.png", f"d{day}_drawer.png"
        for k in range(TOP_BANANAS[day]):
            rows.append(banana_row(top, k, 0.92 - 0.01 * k))
        # The side camera always sees one banana fewer than the top
        # camera; on day 5 condensation drops its confidence under the
        # quality gate and it must be excluded as degraded.
        side_conf = 0.30 if day == 5 else 0.88
        side_count = TOP_BANANAS[day] if day == 5 else max(TOP_BANANAS[day] - 1, 0)
        for k in range(side_count):
            rows.append(banana_row(side, k, side_conf - 0.01 * k))
        rows.append(f"{drawer},40,40,140,200,milk,0.90")
        rows.append(f"{drawer},180,40,280,200,milk,0.89")
        rows.append(f"{drawer},320,60,420,180,salad mix,0.87")
        fixture_name = f"detections_day{day}.csv"
        (out / fixture_name).write_text("\n".join(rows) + "\n", encoding="utf-8")

        date = f"2026-01-{day:02d}"
        events.extend([
            {"type": "frame", "timestamp": f"{date}T08:00:00+00:00",
             "camera_id": "cam-top", "image_name": top, "fixture": fixture_name},
            {"type": "frame", "timestamp": f"{date}T08:00:30+00:00",
             "camera_id": "cam-top-side", "image_name": side, "fixture": fixture_name},
            {"type": "frame", "timestamp": f"{date}T08:01:00+00:00",
             "camera_id": "cam-drawer", "image_name": drawer, "fixture": fixture_name},
            {"type": "reconcile", "timestamp": f"{date}T08:05:00+00:00"},
            {"type": "order", "timestamp": f"{date}T08:10:00+00:00"},
        ])

    script = {
        "needs": [
            {"name": "banana", "desired_quantity": 6},
            {"name": "milk", "desired_quantity": 2},
            {"name": "salad mix", "desired_quantity": 1},
        ],
        "policy": {"confirm_snapshots": 2, "cooldown_hours": 24.0,
                   "min_order_quantity": 1},
        "zones": {"cam-top": "shelf-top", "cam-top-side": "shelf-top",
                  "cam-drawer": "drawer"},
        "quality_min": 0.4,
        "events": events,
    }
    (out / "week.json").write_text(
        json.dumps(script, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    make_eval_fixture()
    make_augment_fixture()
    make_simulation()
    print("fixtures written under", DATA)
