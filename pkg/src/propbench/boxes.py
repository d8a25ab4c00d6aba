"""Domain types and axis-aligned box geometry.

Coordinates are continuous and 0-indexed with (x, y) at the top-left corner;
boxes are stored as (x, y, w, h) and areas are plain w*h (no "+1" pixel
convention). Corner-style inputs from other formats are converted at
ingestion time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "BBox",
    "ImageInfo",
    "Annotation",
    "ScoredBox",
    "ProposalSet",
    "PerturbationSpec",
    "PERTURBATION_KINDS",
    "JPEG_LOSSLESS",
    "iou",
    "iou_matrix",
    "clip_to_image",
    "inscribed_crop",
    "project_box",
    "box_features",
    "features_to_box",
    "boxes_to_array",
    "array_to_boxes",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle in pixel coordinates (continuous values allowed)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"box fields must be finite, got {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive width and height, got {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    def corners(self) -> np.ndarray:
        """The four corners as a (4, 2) array, clockwise from top-left."""
        x2, y2 = self.x + self.w, self.y + self.h
        return np.array(
            [[self.x, self.y], [x2, self.y], [x2, y2], [self.x, y2]], dtype=float
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class ImageInfo:
    """Identity and pixel dimensions of one image; raster data is optional."""

    id: str
    width: int
    height: int
    raster_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self}")


@dataclass(frozen=True)
class Annotation:
    """One ground-truth object. The box may extend past the image border;
    clipping is an explicit operation, never implicit."""

    image_id: str
    class_label: str
    box: BBox
    difficult: bool = False
    crowd: bool = False


@dataclass(frozen=True)
class ScoredBox:
    """A proposal window with an optional confidence (higher = better).

    ``injected`` marks boxes inserted by a diagnostic oracle (ground-truth
    augmentation); such boxes rank ahead of every scored proposal instead of
    carrying a sentinel score.
    """

    box: BBox
    score: Optional[float] = None
    injected: bool = False

    def __post_init__(self) -> None:
        if self.score is not None and not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class ProposalSet:
    """Ordered proposals for one image.

    If ``ordering_meaningful`` the sequence order encodes rank. Scores are
    all-or-none across non-injected items, and non-increasing whenever both
    scores are present and the ordering is meaningful.
    """

    image_id: str
    items: tuple[ScoredBox, ...]
    ordering_meaningful: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        regular = [it for it in self.items if not it.injected]
        n_scored = sum(it.score is not None for it in regular)
        if n_scored not in (0, len(regular)):
            raise ValueError("either all proposals carry a score or none do")
        if self.ordering_meaningful and n_scored == len(regular) and regular:
            scores = [it.score for it in regular]
            for a, b in zip(scores, scores[1:]):
                if b > a:  # type: ignore[operator]
                    raise ValueError("rank-ordered scores must be non-increasing")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def scored(self) -> bool:
        return any(it.score is not None for it in self.items)

    def boxes_array(self) -> np.ndarray:
        """(N, 4) float array of (x, y, w, h)."""
        return boxes_to_array(it.box for it in self.items)

    def scores_array(self) -> np.ndarray:
        """(N,) float array; injected items read as +inf so they sort first."""
        return np.array(
            [math.inf if it.injected else (it.score if it.score is not None else math.nan)
             for it in self.items],
            dtype=float,
        )

    def replace_items(self, items: Iterable[ScoredBox]) -> "ProposalSet":
        return ProposalSet(self.image_id, tuple(items), self.ordering_meaningful)


PERTURBATION_KINDS = (
    "none",
    "scale",
    "rotation",
    "blur",
    "jpeg",
    "illumination",
    "saltpepper",
)

#: Sentinel for the lossless compression level of the jpeg perturbation.
JPEG_LOSSLESS = math.inf


@dataclass(frozen=True)
class PerturbationSpec:
    """Kind and parameter of one image perturbation.

    Parameter meaning by kind: scale factor, rotation angle in degrees,
    blur sigma in pixels, jpeg quality in percent (or :data:`JPEG_LOSSLESS`),
    brightness factor in percent, count of noise pixels. ``none`` carries 0.
    """

    kind: str
    param: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        p = self.param
        ok = {
            "none": p == 0,
            "scale": p > 0 and math.isfinite(p),
            "rotation": -20.0 <= p <= 20.0,
            "blur": 0.0 <= p <= 8.0,
            "jpeg": (5.0 <= p <= 100.0) or p == JPEG_LOSSLESS,
            "illumination": 50.0 <= p <= 150.0,
            "saltpepper": 1 <= p <= 1000 and float(p).is_integer(),
        }[self.kind]
        if not ok:
            raise ValueError(f"parameter {p} out of range for kind {self.kind!r}")

    @property
    def geometric(self) -> bool:
        """Whether back-projection is a non-identity coordinate transform."""
        return self.kind in ("scale", "rotation")

    def label(self) -> str:
        """Stable ``kind-param`` label used in file layouts and tables."""
        if self.kind == "none":
            return "none-0"
        if self.kind == "jpeg" and self.param == JPEG_LOSSLESS:
            return "jpeg-lossless"
        p = self.param
        text = f"{p:g}"
        return f"{self.kind}-{text}"


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    """Pack boxes into an (N, 4) float array of (x, y, w, h)."""
    arr = np.array([(b.x, b.y, b.w, b.h) for b in boxes], dtype=float)
    return arr.reshape(-1, 4)


def array_to_boxes(arr: np.ndarray) -> list[BBox]:
    return [BBox(float(x), float(y), float(w), float(h)) for x, y, w, h in np.asarray(arr, dtype=float).reshape(-1, 4)]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Areas are derived from the same corner arithmetic as the intersection so
    identical rectangles score exactly 1.0.
    """
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    ix = min(ax2, bx2) - max(a.x, b.x)
    iy = min(ay2, by2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (ax2 - a.x) * (ay2 - a.y)
    area_b = (bx2 - b.x) * (by2 - b.y)
    return inter / (area_a + area_b - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of two (N, 4) / (M, 4) box arrays, shape (N, M)."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    shape = (a.shape[0], b.shape[0])
    return _iou_matrix_into(a, b, tuple(np.empty(shape) for _ in range(3)))


def _iou_matrix_into(
    a: np.ndarray, b: np.ndarray, buffers: tuple[np.ndarray, np.ndarray, np.ndarray]
) -> np.ndarray:
    """IoU matrix computed entirely inside three caller-owned (N, M)
    scratch arrays; the result is a view of ``buffers[0]``. Hot matching
    loops reuse the buffers so large matrices are not reallocated per call.
    """
    ax1, ay1 = a[:, 0], a[:, 1]
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    inter, other, union = buffers
    np.minimum(ax2[:, None], bx2[None, :], out=inter)
    np.maximum(ax1[:, None], bx1[None, :], out=other)
    np.subtract(inter, other, out=inter)
    np.maximum(inter, 0.0, out=inter)  # intersection width
    np.minimum(ay2[:, None], by2[None, :], out=other)
    np.maximum(ay1[:, None], by1[None, :], out=union)
    np.subtract(other, union, out=other)
    np.maximum(other, 0.0, out=other)  # intersection height
    np.multiply(inter, other, out=inter)
    # Areas from the corner arithmetic, so identical boxes hit exactly 1.0.
    area_a = ((ax2 - ax1) * (ay2 - ay1))[:, None]
    area_b = ((bx2 - bx1) * (by2 - by1))[None, :]
    np.add(area_a, area_b, out=union)
    np.subtract(union, inter, out=union)
    np.divide(inter, union, out=inter)
    return inter


def clip_to_image(b: BBox, img: ImageInfo) -> Optional[BBox]:
    """Intersect a box with the image extent; None if nothing remains."""
    x1 = max(b.x, 0.0)
    y1 = max(b.y, 0.0)
    x2 = min(b.x + b.w, float(img.width))
    y2 = min(b.y + b.h, float(img.height))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BBox(x1, y1, x2 - x1, y2 - y1)


def inscribed_crop(width: float, height: float, theta_max: float) -> BBox:
    """Largest centred rectangle with the image's aspect ratio that stays
    inside the image under a rotation of ``theta_max`` degrees about the
    image centre.

    The same crop is reused for every smaller rotation angle, so the visible
    content is comparable across the whole angle grid.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    if not 0 <= theta_max < 90:
        raise ValueError("theta_max must lie in [0, 90)")
    t = math.radians(theta_max)
    c, s = abs(math.cos(t)), abs(math.sin(t))
    aspect = width / height
    # Half-height v bounded by both image half-extents once the crop corners
    # (+-aspect*v, +-v) are rotated back into the image frame.
    v = min(width / (2.0 * (aspect * c + s)), height / (2.0 * (aspect * s + c)))
    u = aspect * v
    return BBox(width / 2.0 - u, height / 2.0 - v, 2.0 * u, 2.0 * v)


def project_box(
    b: BBox,
    spec: PerturbationSpec,
    perturbed_img: ImageInfo,
    crop: Optional[BBox] = None,
) -> BBox:
    """Map a box from the perturbed image frame back into the reference frame.

    Photometric perturbations are geometric identities. Scale divides all
    coordinates by the factor. Rotation rotates the corners by the inverse
    angle about the perturbed image centre, takes their axis-aligned bounding
    box, and shifts it by the crop offset into the reference frame.
    """
    if spec.kind == "scale":
        s = spec.param
        return BBox(b.x / s, b.y / s, b.w / s, b.h / s)
    if spec.kind == "rotation":
        if crop is None:
            raise ValueError("rotation projection requires the crop rectangle")
        t = math.radians(-spec.param)
        c, s = math.cos(t), math.sin(t)
        centre = np.array([perturbed_img.width / 2.0, perturbed_img.height / 2.0])
        pts = b.corners() - centre
        rot = np.stack([pts[:, 0] * c - pts[:, 1] * s, pts[:, 0] * s + pts[:, 1] * c], axis=1)
        rot += centre
        x1, y1 = rot.min(axis=0)
        x2, y2 = rot.max(axis=0)
        return BBox(x1 + crop.x, y1 + crop.y, x2 - x1, y2 - y1)
    return b


def box_features(b: BBox) -> tuple[float, float, float, float]:
    """(centre-x, centre-y, sqrt-area, log-aspect) of a box."""
    return (b.cx, b.cy, math.sqrt(b.w * b.h), math.log(b.w / b.h))


def features_to_box(
    cx: float, cy: float, sqrt_area: float, log_aspect: float
) -> BBox:
    """Inverse of :func:`box_features`."""
    half = math.exp(log_aspect / 2.0)
    w = sqrt_area * half
    h = sqrt_area / half
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)
