import json
import sys
from pathlib import Path

import pytest

from fridgevision.cli import main
from fridgevision.geometry import Detection
from fridgevision.metrics import write_detections_csv

DATA = Path(__file__).parent.parent / "data"
GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEvaluateCommand:
    def test_perfect_predictions(self, tmp_path, capsys):
        from fridgevision.dataset_io import parse_sku110k
        gt = parse_sku110k((DATA / "eval_fixture" / "gt.csv").read_bytes())
        perfect = {
            img.image_name: [Detection(b, c, 1.0) for b, c in img.annotations]
            for img in gt
        }
        pred_path = tmp_path / "pred.csv"
        pred_path.write_bytes(write_detections_csv(perfect))
        code, out, _ = run(
            capsys, "evaluate", "--gt", str(DATA / "eval_fixture" / "gt.csv"),
            "--pred", str(pred_path), "--iou-threshold", "0.5",
        )
        assert code == 0
        report = json.loads(out)
        assert report["map_at_threshold"] == 1.0
        assert report["recall"] == 1.0

    def test_paper_point_fixture(self, capsys):
        code, out, _ = run(
            capsys, "evaluate",
            "--gt", str(DATA / "eval_fixture" / "gt.csv"),
            "--pred", str(DATA / "eval_fixture" / "pred.csv"),
            "--iou-threshold", "0.5",
        )
        assert code == 0
        report = json.loads(out)
        assert abs(report["map_at_threshold"] - 0.70) <= 0.01
        assert abs(report["recall"] - 0.80) <= 0.01

    def test_malformed_gt_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("img.png,10,0,5,10,banana,100,100\n")
        code, _, err = run(
            capsys, "evaluate", "--gt", str(bad),
            "--pred", str(DATA / "eval_fixture" / "pred.csv"),
        )
        assert code == 2
        assert "line 1" in err

    def test_missing_file_exits_3(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "evaluate", "--gt", str(tmp_path / "nope.csv"),
            "--pred", str(DATA / "eval_fixture" / "pred.csv"),
        )
        assert code == 3


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == 1

    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["evaluate", "--gt", "x.csv"])
        assert excinfo.value.code == 1


class TestConvertCommand:
    def test_sku110k_yolo_round_trip(self, tmp_path, capsys):
        source = DATA / "augment_fixture" / "annotations.csv"
        index_map = tmp_path / "index.json"
        categories = sorted({
            line.split(",")[5]
            for line in source.read_text().splitlines()[1:]
        })
        index_map.write_text(json.dumps({c: i for i, c in enumerate(categories)}))
        yolo_dir = tmp_path / "yolo"
        code, _, _ = run(
            capsys, "convert", "--from", "sku110k", "--to", "yolo",
            "--in", str(source), "--out", str(yolo_dir),
            "--index-map", str(index_map),
        )
        assert code == 0
        assert sorted(yolo_dir.glob("*.txt"))
        back = tmp_path / "back.csv"
        code, _, _ = run(
            capsys, "convert", "--from", "yolo", "--to", "sku110k",
            "--in", str(yolo_dir), "--out", str(back),
            "--index-map", str(index_map), "--width", "100", "--height", "100",
        )
        assert code == 0
        from fridgevision.dataset_io import parse_sku110k
        original = {
            img.image_name: img for img in parse_sku110k(source.read_bytes())
        }
        for img in parse_sku110k(back.read_bytes()):
            want = original[img.image_name]
            assert len(img.annotations) == len(want.annotations)
            got_sorted = sorted(img.annotations, key=lambda a: a[0].as_tuple())
            want_sorted = sorted(want.annotations, key=lambda a: a[0].as_tuple())
            for (gb, gc), (wb, wc) in zip(got_sorted, want_sorted):
                assert gc == wc
                for g, w in zip(gb.as_tuple(), wb.as_tuple()):
                    assert abs(g - w) <= 1e-3  # 6-decimal normalized grid

    def test_yolo_requires_index_map(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "convert", "--from", "sku110k", "--to", "yolo",
            "--in", str(DATA / "augment_fixture" / "annotations.csv"),
            "--out", str(tmp_path / "yolo"),
        )
        assert code == 2
        assert "index-map" in err


class TestAugmentCommand:
    def small_input(self, tmp_path):
        src = DATA / "augment_fixture"
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        names = ["augfix_00.png", "augfix_01.png", "augfix_02.png", "augfix_03.png"]
        keep_rows = ["image_name,x1,y1,x2,y2,class,image_width,image_height"]
        for line in (src / "annotations.csv").read_text().splitlines()[1:]:
            if line.split(",")[0] in names:
                keep_rows.append(line)
        (in_dir / "annotations.csv").write_text("\n".join(keep_rows) + "\n")
        for name in names:
            (in_dir / name).write_bytes((src / name).read_bytes())
        return in_dir

    def test_deterministic_across_runs(self, tmp_path, capsys):
        in_dir = self.small_input(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "outputs_per_example": 2, "target_width": 128, "target_height": 128,
        }))
        outs = []
        for run_dir in ("out_a", "out_b"):
            code, _, _ = run(
                capsys, "augment", "--config", str(cfg),
                "--in", str(in_dir), "--out", str(tmp_path / run_dir),
                "--seed", "7",
            )
            assert code == 0
            outs.append(tmp_path / run_dir)
        files_a = sorted(p.name for p in outs[0].iterdir())
        files_b = sorted(p.name for p in outs[1].iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_emits_three_per_example_by_default(self, tmp_path, capsys):
        in_dir = self.small_input(tmp_path)
        out_dir = tmp_path / "out"
        code, out, _ = run(
            capsys, "augment", "--in", str(in_dir), "--out", str(out_dir),
            "--seed", "3",
        )
        assert code == 0
        assert len(list(out_dir.glob("*_aug*.png"))) == 4 * 3
        report = json.loads((out_dir / "report.json").read_text())
        assert "auto-orient" in report["auto_orient"]


class TestPipelineCommands:
    def write_frame_fixture(self, tmp_path):
        fixture = tmp_path / "dets.csv"
        fixture.write_text(
            "image_name,x1,y1,x2,y2,category,confidence\n"
            "frame.png,10,10,60,60,banana,0.9\n"
            "frame.png,100,10,150,60,banana,0.85\n"
            "frame.png,10,100,60,150,milk,0.8\n"
        )
        image = tmp_path / "frame.png"
        import numpy as np
        from fridgevision.image_io import Image, write_png
        write_png(Image(np.zeros((200, 200, 3), dtype=np.uint8)), image)
        return fixture, image

    def test_ingest_reconcile_order_flow(self, tmp_path, capsys):
        fixture, image = self.write_frame_fixture(tmp_path)
        zones = tmp_path / "zones.json"
        zones.write_text('{"cam-a": "shelf"}')
        needs = tmp_path / "needs.json"
        needs.write_text(json.dumps([
            {"name": "banana", "desired_quantity": 6},
            {"name": "milk", "desired_quantity": 1},
        ]))
        policy = tmp_path / "policy.json"
        policy.write_text('{"confirm_snapshots": 2, "cooldown_hours": 24}')
        store = tmp_path / "inventory.jsonl"
        orders = tmp_path / "orders.jsonl"

        code, _, err = run(
            capsys, "ingest", "--camera", "cam-a", "--image", str(image),
            "--fixture", str(fixture), "--store", str(store), "--zones", str(zones),
        )
        assert code == 0
        assert "2 detections" not in err  # 3 survive postprocess
        code, out, _ = run(
            capsys, "reconcile", "--store", str(store), "--zones", str(zones),
            "--quality-min", "0.4", "--now", "2026-02-01T08:00:00+00:00",
        )
        assert code == 0
        snapshot = json.loads(out)
        assert snapshot["counts"] == {"banana": 2, "milk": 1}
        assert not (tmp_path / "inventory.jsonl.pending").exists()

        code, out, _ = run(
            capsys, "order", "--store", str(store), "--needs", str(needs),
            "--policy", str(policy), "--orders", str(orders),
        )
        assert code == 0
        assert out.strip() == "no order"  # only one snapshot, K=2

        code, _, _ = run(
            capsys, "ingest", "--camera", "cam-a", "--image", str(image),
            "--fixture", str(fixture), "--store", str(store), "--zones", str(zones),
        )
        assert code == 0
        code, _, _ = run(
            capsys, "reconcile", "--store", str(store), "--zones", str(zones),
            "--quality-min", "0.4", "--now", "2026-02-02T08:00:00+00:00",
        )
        assert code == 0
        code, out, _ = run(
            capsys, "order", "--store", str(store), "--needs", str(needs),
            "--policy", str(policy), "--orders", str(orders),
        )
        assert code == 0
        order = json.loads(out)
        assert order["lines"] == [["banana", 4]]
        assert orders.read_bytes().count(b"\n") == 1

    def test_reconcile_without_pending_exits_2(self, tmp_path, capsys):
        zones = tmp_path / "zones.json"
        zones.write_text('{"cam-a": "shelf"}')
        code, _, err = run(
            capsys, "reconcile", "--store", str(tmp_path / "s.jsonl"),
            "--zones", str(zones), "--now", "2026-02-01T08:00:00+00:00",
        )
        assert code == 2
        assert "pending" in err

    def test_ingest_unknown_camera_exits_2(self, tmp_path, capsys):
        fixture, image = self.write_frame_fixture(tmp_path)
        zones = tmp_path / "zones.json"
        zones.write_text('{"cam-a": "shelf"}')
        code, _, err = run(
            capsys, "ingest", "--camera", "cam-zz", "--image", str(image),
            "--fixture", str(fixture), "--store", str(tmp_path / "s.jsonl"),
            "--zones", str(zones),
        )
        assert code == 2
        assert "cam-zz" in err

    def test_store_env_var_default(self, tmp_path, capsys, monkeypatch):
        fixture, image = self.write_frame_fixture(tmp_path)
        zones = tmp_path / "zones.json"
        zones.write_text('{"cam-a": "shelf"}')
        monkeypatch.setenv("FRIDGEVISION_STORE", str(tmp_path / "env-store.jsonl"))
        code, _, _ = run(
            capsys, "ingest", "--camera", "cam-a", "--image", str(image),
            "--fixture", str(fixture), "--zones", str(zones),
        )
        assert code == 0
        assert (tmp_path / "env-store.jsonl.pending").exists()

    def test_ingest_endpoint_protocol_failure_exits_4(self, tmp_path, capsys):
        _, image = self.write_frame_fixture(tmp_path)
        zones = tmp_path / "zones.json"
        zones.write_text('{"cam-a": "shelf"}')
        code, _, err = run(
            capsys, "ingest", "--camera", "cam-a", "--image", str(image),
            "--endpoint", f"cmd:{sys.executable} -c \"print('garbage')\"",
            "--store", str(tmp_path / "s.jsonl"), "--zones", str(zones),
            "--timeout-ms", "5000",
        )
        assert code == 4


class TestSimulateCommand:
    def test_matches_golden_files(self, tmp_path, capsys):
        out_dir = tmp_path / "sim"
        code, _, _ = run(
            capsys, "simulate", "--script", str(DATA / "simulation" / "week.json"),
            "--out", str(out_dir),
        )
        assert code == 0
        for name in ("inventory.jsonl", "orders.jsonl", "summary.json"):
            assert (out_dir / name).read_bytes() == (GOLDEN / name).read_bytes(), name

    def test_two_runs_byte_identical(self, tmp_path, capsys):
        outs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            code, _, _ = run(
                capsys, "simulate",
                "--script", str(DATA / "simulation" / "week.json"),
                "--out", str(out_dir),
            )
            assert code == 0
            outs.append(out_dir)
        for name in ("inventory.jsonl", "orders.jsonl", "summary.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_exactly_one_banana_order(self, tmp_path, capsys):
        out_dir = tmp_path / "sim"
        run(capsys, "simulate", "--script", str(DATA / "simulation" / "week.json"),
            "--out", str(out_dir))
        orders = [
            json.loads(line)
            for line in (out_dir / "orders.jsonl").read_text().splitlines()
        ]
        assert len(orders) == 1
        assert orders[0]["lines"] == [["banana", 4]]
        # Triggered by the two consecutive deficit snapshots, not the first.
        assert orders[0]["triggering_snapshots"] == [
            "2026-01-02T08:05:00+00:00", "2026-01-03T08:05:00+00:00",
        ]
