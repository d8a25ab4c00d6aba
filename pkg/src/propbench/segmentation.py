"""Graph-based image segmentation and the superpixel proposal baseline.

Implements the classic efficient graph segmentation: an 8-connected grid
graph with colour-distance edge weights, merged in ascending weight order
whenever the joining edge is no heavier than the internal difference of
either component plus its size-dependent slack, followed by a minimum-size
post-merge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .boxes import BBox, ProposalSet, ScoredBox

__all__ = [
    "Raster",
    "SegParams",
    "read_pnm",
    "write_pnm",
    "felzenszwalb_segment",
    "superpixel_proposals",
]


@dataclass(frozen=True)
class Raster:
    """8-bit image samples, shape (height, width, channels), channels 1 or 3."""

    width: int
    height: int
    channels: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        expected = (self.height, self.width, self.channels)
        if self.samples.shape != expected:
            raise ValueError(f"samples shape {self.samples.shape} != {expected}")
        if self.samples.dtype != np.uint8:
            raise ValueError("samples must be uint8")


@dataclass(frozen=True)
class SegParams:
    """Segmentation knobs: merge slack constant, pre-smoothing sigma, and
    the minimum region size enforced by the post-merge pass."""

    scale_k: float = 300.0
    presmooth_sigma: float = 0.8
    min_size: int = 20

    def __post_init__(self) -> None:
        if self.scale_k <= 0:
            raise ValueError("scale_k must be positive")
        if self.presmooth_sigma < 0:
            raise ValueError("presmooth_sigma must be >= 0")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")


def read_pnm(path: str) -> Raster:
    """Read a binary PPM (P6) or PGM (P5) file with maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r} in {path}")
    fields = []
    for _ in range(3):
        tok, pos = _token(data, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    pos += 1  # single whitespace byte after maxval
    payload = data[pos : pos + width * height * channels]
    if len(payload) != width * height * channels:
        raise ValueError(f"truncated pixel payload in {path}")
    samples = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Raster(width, height, channels, samples.copy())


def write_pnm(raster: Raster, path: str) -> None:
    """Write a Raster as binary PPM (3 channels) or PGM (1 channel)."""
    magic = b"P6" if raster.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, raster.width, raster.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raster.samples.tobytes())


def _token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping '#' comments."""
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("unexpected end of PNM header")
    return data[start:pos], pos


class _Forest:
    """Union-find over pixels with component size and merge threshold."""

    def __init__(self, n: int, scale_k: float) -> None:
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n
        self.thresh = [scale_k] * n
        self.count = n

    def find(self, x: int) -> int:
        root = x
        parent = self.parent
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def join(self, a: int, b: int) -> int:
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        self.count -= 1
        return a


def _grid_edges(smoothed: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8-connected pixel pairs and their Euclidean colour distances."""
    h, w = smoothed.shape[:2]
    ids = np.arange(h * w).reshape(h, w)
    starts, ends, weights = [], [], []
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        ys = slice(0, h - dy)
        xs = slice(0, w - dx) if dx >= 0 else slice(-dx, w)
        ys2 = slice(dy, h)
        xs2 = slice(dx, w) if dx >= 0 else slice(0, w + dx)
        a = ids[ys, xs].ravel()
        b = ids[ys2, xs2].ravel()
        diff = smoothed[ys, xs] - smoothed[ys2, xs2]
        wgt = np.sqrt((diff * diff).sum(axis=2)).ravel()
        starts.append(a)
        ends.append(b)
        weights.append(wgt)
    return np.concatenate(starts), np.concatenate(ends), np.concatenate(weights)


def felzenszwalb_segment(raster: Raster, params: SegParams = SegParams()) -> np.ndarray:
    """Segment a raster into superpixels; returns an (h, w) int label map
    with region ids contiguous from 0 in row-major first-appearance order.

    Every region holds at least ``params.min_size`` pixels after the
    post-merge pass.
    """
    img = raster.samples.astype(float)
    if params.presmooth_sigma > 0:
        sigma = params.presmooth_sigma
        img = gaussian_filter(img, sigma=(sigma, sigma, 0.0), truncate=4.0, mode="reflect")
    starts, ends, weights = _grid_edges(img)
    order = np.argsort(weights, kind="stable")
    starts, ends, weights = starts[order], ends[order], weights[order]

    n = raster.width * raster.height
    forest = _Forest(n, params.scale_k)
    find, join = forest.find, forest.join
    size, thresh = forest.size, forest.thresh
    k = params.scale_k
    for a, b, wgt in zip(starts.tolist(), ends.tolist(), weights.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb and wgt <= thresh[ra] and wgt <= thresh[rb]:
            root = join(ra, rb)
            thresh[root] = wgt + k / size[root]

    # Absorb undersized components along the same edge order.
    min_size = params.min_size
    for a, b in zip(starts.tolist(), ends.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            join(ra, rb)

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    _, first_pos, inverse = np.unique(roots, return_index=True, return_inverse=True)
    relabel = np.argsort(np.argsort(first_pos))
    return relabel[inverse].reshape(raster.height, raster.width)


def superpixel_proposals(labels: np.ndarray, image_id: str = "") -> ProposalSet:
    """One unscored proposal per region: the tight bounding box of its
    pixels, ordered by region id."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label map must be two-dimensional")
    h, w = labels.shape
    n = int(labels.max()) + 1 if labels.size else 0
    flat = labels.ravel()
    xs = np.tile(np.arange(w), h)
    ys = np.repeat(np.arange(h), w)
    min_x = np.full(n, w, dtype=np.int64)
    min_y = np.full(n, h, dtype=np.int64)
    max_x = np.full(n, -1, dtype=np.int64)
    max_y = np.full(n, -1, dtype=np.int64)
    np.minimum.at(min_x, flat, xs)
    np.minimum.at(min_y, flat, ys)
    np.maximum.at(max_x, flat, xs)
    np.maximum.at(max_y, flat, ys)
    items = tuple(
        ScoredBox(BBox(float(x0), float(y0), float(x1 + 1 - x0), float(y1 + 1 - y0)))
        for x0, y0, x1, y1 in zip(min_x, min_y, max_x, max_y)
    )
    return ProposalSet(image_id, items, ordering_meaningful=False)
