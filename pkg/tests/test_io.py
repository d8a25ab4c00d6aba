"""File-format tests: JSONL round trips, deterministic result tables, and
the SVG/CSV plot emitter."""

import os

import numpy as np
import pytest

from propbench.boxes import BBox, ProposalSet, ScoredBox
from propbench.detection import Detection
from propbench.io import (
    DataError,
    DatasetManifest,
    PlotSeries,
    ResultTable,
    atomic_write_bytes,
    emit_plot,
    load_dataset,
    load_detections,
    load_proposals,
    read_results,
    save_dataset,
    save_detections,
    save_proposals,
    sha256_file,
    worker_count,
    write_results,
)
from propbench.metrics import RecallCurve
from conftest import random_boxes, synthetic_annotations, synthetic_images


class TestDataset:
    def test_empty_annotations(self, tmp_path):
        (tmp_path / "images.jsonl").write_text('{"id": "a", "width": 10, "height": 20}\n')
        (tmp_path / "annotations.jsonl").write_text("")
        manifest = load_dataset(str(tmp_path))
        assert manifest.annotations == ()
        assert manifest.images[0].height == 20

    def test_round_trip(self, tmp_path, rng):
        images = synthetic_images(rng, 5)
        anns = synthetic_annotations(rng, images)
        manifest = DatasetManifest(tuple(images), tuple(anns), {"split": "test"})
        save_dataset(manifest, str(tmp_path))
        back = load_dataset(str(tmp_path))
        assert back.images == manifest.images
        assert len(back.annotations) == len(anns)
        for a, b in zip(back.annotations, anns):
            assert a.image_id == b.image_id and a.class_label == b.class_label
            assert a.box.as_tuple() == pytest.approx(b.box.as_tuple(), abs=0)
        assert back.metadata["split"] == "test"

    def test_fixture_parses_to_known_values(self, tmp_path):
        (tmp_path / "images.jsonl").write_text(
            '{"id": "a", "width": 640, "height": 480, "file": "a.ppm"}\n'
            '{"id": "b", "width": 320, "height": 240}\n'
        )
        (tmp_path / "annotations.jsonl").write_text(
            '{"image_id": "a", "class": "dog", "box": [1.5, 2, 30, 40], "difficult": true}\n'
            '{"image_id": "b", "class": "cat", "box": [0, 0, 5, 5], "crowd": true}\n'
            '{"image_id": "b", "class": "cat", "box": [10, 10, 5, 5]}\n'
        )
        manifest = load_dataset(str(tmp_path))
        assert manifest.images[0].raster_path == "a.ppm"
        assert manifest.annotations[0].difficult is True
        assert manifest.annotations[0].box == BBox(1.5, 2, 30, 40)
        assert manifest.annotations[1].crowd is True
        assert manifest.annotations[2].crowd is False

    def test_malformed_line_reports_number(self, tmp_path):
        (tmp_path / "images.jsonl").write_text(
            '{"id": "a", "width": 10, "height": 20}\nnot json\n'
        )
        (tmp_path / "annotations.jsonl").write_text("")
        with pytest.raises(DataError, match="images.jsonl:2"):
            load_dataset(str(tmp_path))

    def test_broken_reference_rejected(self, tmp_path):
        (tmp_path / "images.jsonl").write_text('{"id": "a", "width": 10, "height": 20}\n')
        (tmp_path / "annotations.jsonl").write_text(
            '{"image_id": "zz", "class": "c", "box": [0, 0, 1, 1]}\n'
        )
        with pytest.raises(DataError, match="unknown image"):
            load_dataset(str(tmp_path))

    def test_duplicate_image_ids_rejected(self, tmp_path):
        (tmp_path / "images.jsonl").write_text(
            '{"id": "a", "width": 10, "height": 20}\n{"id": "a", "width": 9, "height": 9}\n'
        )
        (tmp_path / "annotations.jsonl").write_text("")
        with pytest.raises(DataError, match="duplicate"):
            load_dataset(str(tmp_path))


class TestProposals:
    def test_round_trip(self, tmp_path, rng):
        path = str(tmp_path / "p.jsonl")
        sets = {}
        for i in range(3):
            boxes = random_boxes(rng, 4)
            scores = np.sort(rng.uniform(0, 1, size=4))[::-1]
            sets[f"im{i}"] = ProposalSet(
                f"im{i}",
                tuple(ScoredBox(b, float(s)) for b, s in zip(boxes, scores)),
                ordering_meaningful=True,
            )
        save_proposals(sets, path)
        back = load_proposals(path)
        assert set(back) == set(sets)
        for key in sets:
            assert [it.box.as_tuple() for it in back[key].items] == [
                it.box.as_tuple() for it in sets[key].items
            ]
            assert back[key].ordering_meaningful

    def test_injected_flags_round_trip(self, tmp_path):
        path = str(tmp_path / "p.jsonl")
        items = (ScoredBox(BBox(0, 0, 5, 5), injected=True), ScoredBox(BBox(1, 1, 5, 5), 0.5))
        save_proposals({"a": ProposalSet("a", items)}, path)
        back = load_proposals(path)["a"]
        assert back.items[0].injected and not back.items[1].injected

    def test_empty_file(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text("")
        assert load_proposals(str(path)) == {}

    def test_length_mismatch_rejected(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text('{"image_id": "a", "boxes": [[0,0,1,1]], "scores": [0.5, 0.4]}\n')
        with pytest.raises(DataError, match="scores length"):
            load_proposals(str(path))

    def test_invalid_box_rejected(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text('{"image_id": "a", "boxes": [[0,0,-1,1]]}\n')
        with pytest.raises(DataError, match="invalid box"):
            load_proposals(str(path))

    def test_duplicate_image_rejected(self, tmp_path):
        path = tmp_path / "p.jsonl"
        line = '{"image_id": "a", "boxes": [[0,0,1,1]]}\n'
        path.write_text(line + line)
        with pytest.raises(DataError, match="duplicate"):
            load_proposals(str(path))


class TestDetections:
    def test_round_trip(self, tmp_path, rng):
        path = str(tmp_path / "d.jsonl")
        dets = [
            Detection(f"im{i % 2}", "dog", b, float(rng.uniform(0, 1)))
            for i, b in enumerate(random_boxes(rng, 6))
        ]
        save_detections(dets, path)
        back = load_detections(path)
        assert len(back) == 6
        for a, b in zip(back, dets):
            assert a.image_id == b.image_id and a.score == b.score
            assert a.box.as_tuple() == b.box.as_tuple()


def small_table():
    return ResultTable(
        columns=("name", "value", "count"),
        units=("label", "dimensionless", "items"),
        rows=(("ar", 1 / 3, 10), ("abo, quoted", 0.25, 2)),
        provenance={"tool": "propbench", "seed": 7},
    )


class TestResults:
    @pytest.mark.parametrize("fmt", ["csv", "jsonl"])
    def test_write_read_write_identical_bytes(self, tmp_path, fmt):
        p1 = str(tmp_path / f"r1.{fmt}")
        p2 = str(tmp_path / f"r2.{fmt}")
        write_results(small_table(), p1, format=fmt)
        back = read_results(p1, format=fmt)
        write_results(back, p2, format=fmt)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_empty_rows_still_emit_header_and_provenance(self, tmp_path):
        table = ResultTable(("a",), ("u",), (), {"tool": "propbench"})
        path = str(tmp_path / "empty.csv")
        write_results(table, path)
        text = open(path).read()
        assert "provenance" in text and text.strip().endswith("a")

    def test_float_formatting_reference(self, tmp_path):
        path = str(tmp_path / "f.csv")
        write_results(small_table(), path)
        text = open(path).read()
        assert "0.333333" in text  # six significant digits for 1/3
        assert '"abo, quoted"' in text  # embedded comma quoted

    def test_validation(self):
        with pytest.raises(ValueError):
            ResultTable(("a", "b"), ("u",), (), {"x": 1})
        with pytest.raises(ValueError):
            ResultTable(("a",), ("u",), ((1, 2),), {"x": 1})
        with pytest.raises(ValueError):
            ResultTable(("a",), ("u",), (), {})

    def test_deterministic_bytes(self, tmp_path):
        p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        write_results(small_table(), p1)
        write_results(small_table(), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()


class TestPlot:
    def test_constant_curve_sidecar_matches(self, tmp_path):
        curve = RecallCurve((0.5, 0.75, 1.0), (0.8, 0.8, 0.8))
        path = str(tmp_path / "plot.svg")
        emit_plot([PlotSeries.from_curve("flat", curve)], path)
        sidecar = read_results(str(tmp_path / "plot.csv"))
        assert sidecar.columns == ("series", "x", "y")
        assert all(row[2] == 0.8 for row in sidecar.rows)
        assert [row[1] for row in sidecar.rows] == [0.5, 0.75, 1.0]

    def test_two_curves_two_legend_entries(self, tmp_path):
        a = PlotSeries("alpha", (0.0, 1.0), (0.0, 1.0))
        b = PlotSeries("beta", (0.0, 1.0), (1.0, 0.0))
        path = str(tmp_path / "two.svg")
        emit_plot([a, b], path)
        svg = open(path).read()
        assert ">alpha</text>" in svg and ">beta</text>" in svg
        assert svg.count("<polyline") == 2

    def test_axis_labels_cover_extrema(self, tmp_path):
        s = PlotSeries("s", (2.0, 10.0), (0.25, 0.75))
        path = str(tmp_path / "ax.svg")
        emit_plot([s], path)
        svg = open(path).read()
        assert ">2</text>" in svg and ">10</text>" in svg  # x ticks at extrema
        assert ">0.75</text>" in svg  # top y tick reaches the data maximum

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_plot([], str(tmp_path / "x.svg"))


class TestAtomicWrites:
    def test_no_partial_file_on_error(self, tmp_path):
        target_dir = tmp_path / "blocked"
        target_dir.write_text("a file, not a directory")
        target = str(target_dir / "out.csv")
        with pytest.raises(OSError):
            atomic_write_bytes(target, b"payload")
        assert not os.path.exists(target)

    def test_digest_is_stable(self, tmp_path):
        path = tmp_path / "x"
        path.write_bytes(b"hello")
        assert sha256_file(str(path)) == (
            "sha256:2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        )


class TestWorkerCount:
    def test_env_caps_workers(self, monkeypatch):
        monkeypatch.setenv("PROPBENCH_THREADS", "1")
        assert worker_count() == 1
        monkeypatch.setenv("PROPBENCH_THREADS", "100000")
        assert worker_count() == (os.cpu_count() or 1)
        monkeypatch.setenv("PROPBENCH_THREADS", "junk")
        with pytest.raises(DataError):
            worker_count()
        monkeypatch.delenv("PROPBENCH_THREADS")
        assert worker_count() >= 1
