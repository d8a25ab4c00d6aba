"""Segmentation tests on constructed fixtures with known region structure."""

import numpy as np
import pytest

from propbench.boxes import BBox
from propbench.segmentation import (
    Raster,
    SegParams,
    felzenszwalb_segment,
    read_pnm,
    superpixel_proposals,
    write_pnm,
)


def constant_raster(w=24, h=16, value=128):
    return Raster(w, h, 3, np.full((h, w, 3), value, dtype=np.uint8))


def two_halves_raster(w=40, h=40):
    """Left half black, right half white; contrast far above k/min_size."""
    samples = np.zeros((h, w, 3), dtype=np.uint8)
    samples[:, w // 2 :, :] = 255
    return Raster(w, h, 3, samples)


def photo_raster(w=96, h=64):
    """Deterministic pseudo-photo: smooth colour gradients plus blobs."""
    rng = np.random.default_rng(7)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = np.zeros((h, w, 3))
    for c in range(3):
        img[..., c] = 127 + 60 * np.sin(xx / (8 + 3 * c)) * np.cos(yy / (11 - 2 * c))
    for _ in range(6):
        cx, cy, r = rng.uniform(0, w), rng.uniform(0, h), rng.uniform(6, 16)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r**2
        img[mask] += rng.uniform(-80, 80, size=3)
    return Raster(w, h, 3, np.clip(img, 0, 255).astype(np.uint8))


class TestFelzenszwalb:
    def test_constant_image_single_region(self):
        labels = felzenszwalb_segment(constant_raster(), SegParams(300.0, 0.0, 20))
        assert labels.max() == 0
        assert labels.shape == (16, 24)

    def test_two_halves_two_regions(self):
        raster = two_halves_raster()
        labels = felzenszwalb_segment(raster, SegParams(300.0, 0.0, 20))
        assert labels.max() == 1
        # The forced merge order: zero-weight edges first unify each half,
        # then every cross edge weight exceeds k/|half|.
        half = raster.width * raster.height / 2
        assert 255.0 > 300.0 / half
        left = labels[:, : raster.width // 2]
        right = labels[:, raster.width // 2 :]
        assert np.all(left == left[0, 0])
        assert np.all(right == right[0, 0])

    def test_region_count_non_increasing_in_scale(self):
        raster = photo_raster()
        counts = [
            felzenszwalb_segment(raster, SegParams(k, 0.8, 10)).max() + 1
            for k in (50.0, 150.0, 300.0, 600.0, 1200.0)
        ]
        assert all(b <= a for a, b in zip(counts, counts[1:]))
        assert counts[0] > counts[-1]  # the sweep actually merges

    def test_labels_total_contiguous_and_min_size(self):
        raster = photo_raster(64, 48)
        params = SegParams(150.0, 0.8, 25)
        labels = felzenszwalb_segment(raster, params)
        ids, counts = np.unique(labels, return_counts=True)
        assert list(ids) == list(range(len(ids)))
        assert counts.min() >= params.min_size

    def test_first_seen_label_order(self):
        labels = felzenszwalb_segment(two_halves_raster(), SegParams(300.0, 0.0, 20))
        assert labels[0, 0] == 0  # row-major first appearance


class TestSuperpixelProposals:
    def test_single_region_is_full_image(self):
        labels = felzenszwalb_segment(constant_raster(24, 16), SegParams(300.0, 0.0, 20))
        ps = superpixel_proposals(labels, "img")
        assert len(ps.items) == 1
        assert ps.items[0].box == BBox(0, 0, 24, 16)

    def test_two_halves_tile_the_image(self):
        labels = felzenszwalb_segment(two_halves_raster(40, 40), SegParams(300.0, 0.0, 20))
        ps = superpixel_proposals(labels, "img")
        boxes = sorted((it.box.as_tuple() for it in ps.items))
        assert boxes == [(0.0, 0.0, 20.0, 40.0), (20.0, 0.0, 20.0, 40.0)]

    def test_region_pixel_counts_partition_image(self):
        raster = photo_raster(48, 32)
        labels = felzenszwalb_segment(raster, SegParams(100.0, 0.8, 10))
        _, counts = np.unique(labels, return_counts=True)
        assert counts.sum() == 48 * 32
        ps = superpixel_proposals(labels)
        assert len(ps.items) == len(counts)


class TestPnm:
    def test_ppm_round_trip(self, tmp_path):
        raster = photo_raster(20, 14)
        path = str(tmp_path / "img.ppm")
        write_pnm(raster, path)
        back = read_pnm(path)
        assert back.width == 20 and back.height == 14 and back.channels == 3
        assert np.array_equal(back.samples, raster.samples)

    def test_pgm_round_trip(self, tmp_path):
        samples = (np.arange(12, dtype=np.uint8) * 20).reshape(3, 4, 1)
        raster = Raster(4, 3, 1, samples)
        path = str(tmp_path / "img.pgm")
        write_pnm(raster, path)
        back = read_pnm(path)
        assert back.channels == 1
        assert np.array_equal(back.samples, samples)

    def test_header_comments_skipped(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x40\x80\xff")
        back = read_pnm(str(path))
        assert back.samples.ravel().tolist() == [0, 64, 128, 255]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.pnm"
        path.write_bytes(b"P3\n2 2\n255\n")
        with pytest.raises(ValueError):
            read_pnm(str(path))

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(ValueError):
            read_pnm(str(path))
