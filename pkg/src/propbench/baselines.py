"""Reference proposal generators: Uniform, Gaussian, SlidingWindow,
Superpixels.

The stochastic generators draw box features (centre, sqrt-area, log-aspect)
from distributions fitted on training annotations; features are normalised
by image dimensions by default so one fit transfers across image sizes
(``normalise=False`` restores fitting on absolute pixel values). Randomness
comes exclusively from seeded PCG64 generators, so identical seeds give
identical proposals across runs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .boxes import (
    Annotation,
    BBox,
    ImageInfo,
    ProposalSet,
    ScoredBox,
    box_features,
    clip_to_image,
    features_to_box,
)
from .io import atomic_write_bytes
from .segmentation import Raster, SegParams, felzenszwalb_segment, superpixel_proposals

__all__ = [
    "BoxStats",
    "fit_box_stats",
    "save_box_stats",
    "load_box_stats",
    "sample_uniform",
    "sample_gaussian",
    "sample_uniform_features",
    "sample_gaussian_features",
    "sliding_window",
    "derive_seed",
    "UniformGenerator",
    "GaussianGenerator",
    "SlidingWindowGenerator",
    "SuperpixelGenerator",
]

BOX_STATS_FORMAT = "propbench-box-stats"
BOX_STATS_VERSION = 1

_FEATURE_NAMES = ("cx", "cy", "sqrt_area", "log_aspect")


@dataclass(frozen=True)
class BoxStats:
    """Trimmed ranges plus mean/covariance of box features on a training set.

    All vectors are length 4 in (cx, cy, sqrt_area, log_aspect) order; when
    ``normalised`` the first three are divided by image width, height, and
    sqrt(width*height) respectively.
    """

    lo: np.ndarray
    hi: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    normalised: bool = True

    def __post_init__(self) -> None:
        for name in ("lo", "hi", "mean"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
            if getattr(self, name).shape != (4,):
                raise ValueError(f"{name} must be a 4-vector")
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if self.cov.shape != (4, 4):
            raise ValueError("cov must be a 4x4 matrix")
        if np.any(self.lo > self.hi):
            raise ValueError("lo must not exceed hi")
        if not np.allclose(self.cov, self.cov.T, atol=1e-9):
            raise ValueError("cov must be symmetric")
        scale = max(float(np.abs(self.cov).max()), 1.0)
        if np.linalg.eigvalsh(self.cov).min() < -1e-9 * scale:
            raise ValueError("cov must be positive semi-definite")

    @property
    def degenerate_dims(self) -> np.ndarray:
        """Mask of feature dimensions whose trimmed range collapsed."""
        return self.hi <= self.lo


def _feature_row(ann: Annotation, img: ImageInfo, normalised: bool) -> np.ndarray:
    cx, cy, sa, la = box_features(ann.box)
    if normalised:
        return np.array([cx / img.width, cy / img.height, sa / math.sqrt(img.width * img.height), la])
    return np.array([cx, cy, sa, la])


def fit_box_stats(
    annotations: Sequence[Annotation],
    images: Mapping[str, ImageInfo],
    trim: float = 0.005,
    normalise: bool = True,
) -> BoxStats:
    """Fit feature ranges and moments on training annotations.

    The per-dimension range keeps the [trim, 1-trim] quantile span, so the
    default discards the extreme 0.5% at each end and covers 99% of the
    data; mean and covariance are computed on the untrimmed features.
    """
    if len(annotations) < 2:
        raise ValueError("need at least two annotations to fit box statistics")
    if not 0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    feats = np.stack([_feature_row(a, images[a.image_id], normalise) for a in annotations])
    lo = np.quantile(feats, trim, axis=0)
    hi = np.quantile(feats, 1.0 - trim, axis=0)
    mean = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    return BoxStats(lo, hi, mean, cov, normalised=normalise)


def save_box_stats(stats: BoxStats, path: str) -> None:
    doc = {
        "format": BOX_STATS_FORMAT,
        "version": BOX_STATS_VERSION,
        "features": list(_FEATURE_NAMES),
        "normalised": stats.normalised,
        "lo": stats.lo.tolist(),
        "hi": stats.hi.tolist(),
        "mean": stats.mean.tolist(),
        "cov": stats.cov.tolist(),
    }
    payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, payload.encode("utf-8"))


def load_box_stats(path: str) -> BoxStats:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != BOX_STATS_FORMAT:
        raise ValueError(f"{path} is not a box-stats document")
    if doc.get("version") != BOX_STATS_VERSION:
        raise ValueError(f"unsupported box-stats version {doc.get('version')}")
    return BoxStats(doc["lo"], doc["hi"], doc["mean"], doc["cov"], doc["normalised"])


def derive_seed(seed: int, image_id: str) -> int:
    """Stable per-image seed derived from a global seed (not salted, so the
    same inputs produce the same stream on every platform and run)."""
    digest = hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def sample_uniform_features(stats: BoxStats, k: int, rng: np.random.Generator) -> np.ndarray:
    """k feature rows drawn independently and uniformly on [lo, hi]."""
    if np.any(stats.degenerate_dims):
        raise ValueError("degenerate feature range; cannot sample uniformly")
    return rng.uniform(stats.lo, stats.hi, size=(k, 4))


def sample_gaussian_features(stats: BoxStats, k: int, rng: np.random.Generator) -> np.ndarray:
    """k feature rows drawn from the fitted multivariate normal via an
    eigenvalue square root of the covariance (valid for singular fits)."""
    vals, vecs = np.linalg.eigh(stats.cov)
    scale = max(float(np.abs(stats.cov).max()), 1.0)
    if vals.min() < -1e-9 * scale:
        raise ValueError("covariance is not positive semi-definite")
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = rng.standard_normal((k, 4))
    return stats.mean + z @ root.T


def _denormalise(feats: np.ndarray, stats: BoxStats, img: ImageInfo) -> np.ndarray:
    if not stats.normalised:
        return feats
    out = feats.copy()
    out[:, 0] *= img.width
    out[:, 1] *= img.height
    out[:, 2] *= math.sqrt(img.width * img.height)
    return out


def _sample_boxes(
    stats: BoxStats,
    img: ImageInfo,
    k: int,
    seed: int,
    feature_sampler: Callable[[BoxStats, int, np.random.Generator], np.ndarray],
) -> ProposalSet:
    """Draw features, de-normalise, clip to the image; boxes that clip away
    entirely are redrawn so exactly k valid proposals come back."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    boxes: list[BBox] = []
    for _ in range(1000):
        feats = _denormalise(feature_sampler(stats, k - len(boxes), rng), stats, img)
        for cx, cy, sa, la in feats:
            if sa <= 0:
                continue
            clipped = clip_to_image(features_to_box(cx, cy, sa, la), img)
            if clipped is not None:
                boxes.append(clipped)
        if len(boxes) == k:
            items = tuple(ScoredBox(b) for b in boxes)
            return ProposalSet(img.id, items, ordering_meaningful=False)
    raise RuntimeError("sampler failed to produce in-image boxes; check the fit")


def sample_uniform(stats: BoxStats, img: ImageInfo, k: int, seed: int) -> ProposalSet:
    """k proposals with features drawn uniformly on the fitted ranges."""
    return _sample_boxes(stats, img, k, seed, sample_uniform_features)


def sample_gaussian(stats: BoxStats, img: ImageInfo, k: int, seed: int) -> ProposalSet:
    """k proposals drawn from the fitted multivariate normal."""
    return _sample_boxes(stats, img, k, seed, sample_gaussian_features)


def _ladder(limit: float, min_side: float, step: float) -> list[float]:
    """Geometric size ladder from min_side up to the image extent."""
    top = float(limit)
    first = min(min_side, top)
    rungs = [first]
    while rungs[-1] * step <= top:
        rungs.append(rungs[-1] * step)
    if rungs[-1] < top:
        rungs.append(top)
    return rungs


def _grid_positions(n: int, extent: float) -> np.ndarray:
    """n offsets spanning [0, extent]; a single window sits centred."""
    if n == 1:
        return np.array([extent / 2.0])
    return np.linspace(0.0, extent, n)


def sliding_window(
    img: ImageInfo, k: int, min_side: float = 16.0, step: float = math.sqrt(2.0)
) -> ProposalSet:
    """Deterministic regular-grid windows.

    Window widths and heights follow a sqrt(2)-geometric ladder from
    ``min_side`` to the image size. The budget is split as evenly as
    possible across (width, height) pairs, remainders going to the sizes
    nearest the median of the area-ordered ladder; per size, window centres
    form a uniform grid covering the image.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pairs = sorted(
        ((w, h) for w in _ladder(img.width, min_side, step) for h in _ladder(img.height, min_side, step)),
        key=lambda wh: (wh[0] * wh[1], wh[0]),
    )
    n_pairs = len(pairs)
    caps = [1 if (w >= img.width and h >= img.height) else k for (w, h) in pairs]
    median = (n_pairs - 1) // 2
    priority = sorted(range(n_pairs), key=lambda i: (abs(i - median), i))

    shares = [k // n_pairs] * n_pairs
    for i in priority[: k % n_pairs]:
        shares[i] += 1
    # Move allocation that exceeds a capped size onto sizes with headroom.
    excess = 0
    for i in range(n_pairs):
        if shares[i] > caps[i]:
            excess += shares[i] - caps[i]
            shares[i] = caps[i]
    for i in priority:
        if excess == 0:
            break
        room = caps[i] - shares[i]
        take = min(room, excess)
        shares[i] += take
        excess -= take

    items: list[ScoredBox] = []
    for (w, h), budget in zip(pairs, shares):
        if budget == 0:
            continue
        rx, ry = img.width - w, img.height - h
        if rx <= 0 and ry <= 0:
            items.append(ScoredBox(BBox(0.0, 0.0, float(img.width), float(img.height))))
            continue
        if rx <= 0:
            nx, ny = 1, budget
        elif ry <= 0:
            nx, ny = budget, 1
        else:
            nx = int(round(math.sqrt(budget * rx / ry)))
            nx = min(max(nx, 1), budget)
            ny = math.ceil(budget / nx)
        xs = _grid_positions(nx, max(rx, 0.0))
        ys = _grid_positions(ny, max(ry, 0.0))
        made = 0
        for y in ys:
            for x in xs:
                if made == budget:
                    break
                items.append(ScoredBox(BBox(float(x), float(y), float(w), float(h))))
                made += 1
    return ProposalSet(img.id, tuple(items), ordering_meaningful=False)


class UniformGenerator(BaseEstimator):
    """Image-independent baseline sampling box features uniformly on ranges
    fitted to training annotations."""

    def __init__(self, trim: float = 0.005, normalise: bool = True):
        self.trim = trim
        self.normalise = normalise

    def fit(self, annotations: Sequence[Annotation], images: Mapping[str, ImageInfo]) -> "UniformGenerator":
        self.stats_ = fit_box_stats(annotations, images, self.trim, self.normalise)
        return self

    def propose(self, img: ImageInfo, k: int, seed: int) -> ProposalSet:
        check_is_fitted(self, "stats_")
        return sample_uniform(self.stats_, img, k, seed)


class GaussianGenerator(BaseEstimator):
    """Image-independent baseline sampling box features from a multivariate
    normal fitted to training annotations."""

    def __init__(self, trim: float = 0.005, normalise: bool = True):
        self.trim = trim
        self.normalise = normalise

    def fit(self, annotations: Sequence[Annotation], images: Mapping[str, ImageInfo]) -> "GaussianGenerator":
        self.stats_ = fit_box_stats(annotations, images, self.trim, self.normalise)
        return self

    def propose(self, img: ImageInfo, k: int, seed: int) -> ProposalSet:
        check_is_fitted(self, "stats_")
        return sample_gaussian(self.stats_, img, k, seed)


class SlidingWindowGenerator(BaseEstimator):
    """Deterministic regular-grid baseline; needs no fitting."""

    def __init__(self, min_side: float = 16.0, step: float = math.sqrt(2.0)):
        self.min_side = min_side
        self.step = step

    def fit(self, annotations=None, images=None) -> "SlidingWindowGenerator":
        return self

    def propose(self, img: ImageInfo, k: int, seed: Optional[int] = None) -> ProposalSet:
        return sliding_window(img, k, self.min_side, self.step)


class SuperpixelGenerator(BaseEstimator):
    """Lower-bound baseline: each low-level segment becomes one proposal."""

    def __init__(self, scale_k: float = 300.0, presmooth_sigma: float = 0.8, min_size: int = 20):
        self.scale_k = scale_k
        self.presmooth_sigma = presmooth_sigma
        self.min_size = min_size

    def fit(self, annotations=None, images=None) -> "SuperpixelGenerator":
        return self

    def propose(self, raster: Raster, image_id: str = "") -> ProposalSet:
        params = SegParams(self.scale_k, self.presmooth_sigma, self.min_size)
        labels = felzenszwalb_segment(raster, params)
        return superpixel_proposals(labels, image_id)
