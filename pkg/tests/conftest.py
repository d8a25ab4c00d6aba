"""Shared fixtures and fuzz helpers."""

import math

import numpy as np
import pytest

from propbench.boxes import Annotation, BBox, ImageInfo, clip_to_image, features_to_box

CLASSES = ("person", "car", "dog", "chair", "bottle")


def random_boxes(rng, n, extent=100.0, min_size=1.0, max_size=40.0):
    """n random valid boxes with top-left corners in [0, extent)."""
    xy = rng.uniform(0.0, extent, size=(n, 2))
    wh = rng.uniform(min_size, max_size, size=(n, 2))
    return [BBox(x, y, w, h) for (x, y), (w, h) in zip(xy, wh)]


def synthetic_images(rng, n, lo=200, hi=640):
    return [
        ImageInfo(f"img{i:04d}", int(rng.integers(lo, hi)), int(rng.integers(lo, hi)))
        for i in range(n)
    ]


def synthetic_annotations(rng, images, per_image=3):
    """Annotations with clustered (roughly normal) box features, so fitted
    feature distributions look like real ground truth."""
    anns = []
    for img in images:
        made = 0
        while made < per_image:
            cx = rng.normal(0.5, 0.12) * img.width
            cy = rng.normal(0.45, 0.10) * img.height
            sa = abs(rng.normal(0.35, 0.08)) * math.sqrt(img.width * img.height)
            la = rng.normal(0.1, 0.3)
            if sa < 4.0:
                continue
            clipped = clip_to_image(features_to_box(cx, cy, sa, la), img)
            if clipped is None or clipped.w < 2 or clipped.h < 2:
                continue
            anns.append(Annotation(img.id, str(rng.choice(CLASSES)), clipped))
            made += 1
    return anns


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
