"""Canonical file formats and results persistence.

All record files are JSON Lines (UTF-8, LF): one object per line so large
proposal files stream and parse errors carry line numbers. Result tables
serialise deterministically (identical inputs and seeds must produce
byte-identical files) and every writer goes through a write-to-temp,
rename-on-success path so no partial file survives an error.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

from .boxes import Annotation, BBox, ImageInfo, ProposalSet, ScoredBox
from .detection import Detection
from .metrics import RecallCurve

__all__ = [
    "DataError",
    "DatasetManifest",
    "ResultTable",
    "PlotSeries",
    "load_dataset",
    "save_dataset",
    "load_proposals",
    "save_proposals",
    "load_detections",
    "save_detections",
    "write_results",
    "read_results",
    "emit_plot",
    "atomic_write_bytes",
    "sha256_file",
    "worker_count",
]

RESULTS_MAGIC = "propbench-results v1"


class DataError(Exception):
    """Malformed or inconsistent input data (maps to CLI exit code 2)."""


def worker_count() -> int:
    """Worker cap for per-image fan-out, from PROPBENCH_THREADS."""
    cap = os.environ.get("PROPBENCH_THREADS")
    available = os.cpu_count() or 1
    if cap is None:
        return available
    try:
        value = int(cap)
    except ValueError as exc:
        raise DataError(f"PROPBENCH_THREADS must be an integer, got {cap!r}") from exc
    return max(1, min(available, value))


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a temp file in the same directory and rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


@dataclass(frozen=True)
class DatasetManifest:
    """Images plus annotations with referential integrity enforced."""

    images: tuple[ImageInfo, ...]
    annotations: tuple[Annotation, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [img.id for img in self.images]
        if len(ids) != len(set(ids)):
            raise DataError("duplicate image ids in manifest")
        known = set(ids)
        for ann in self.annotations:
            if ann.image_id not in known:
                raise DataError(f"annotation references unknown image {ann.image_id!r}")

    def image_map(self) -> dict[str, ImageInfo]:
        return {img.id: img for img in self.images}


def _read_jsonl(path: str) -> Iterable[tuple[int, dict]]:
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def _box_from_list(values, where: str) -> BBox:
    try:
        x, y, w, h = (float(v) for v in values)
        return BBox(x, y, w, h)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: invalid box {values!r} ({exc})") from exc


def load_dataset(directory: str) -> DatasetManifest:
    """Read ``images.jsonl`` and ``annotations.jsonl`` from a directory."""
    images_path = os.path.join(directory, "images.jsonl")
    annotations_path = os.path.join(directory, "annotations.jsonl")
    images = []
    for lineno, obj in _read_jsonl(images_path):
        where = f"{images_path}:{lineno}"
        try:
            images.append(
                ImageInfo(
                    id=str(obj["id"]),
                    width=int(obj["width"]),
                    height=int(obj["height"]),
                    raster_path=obj.get("file"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where}: {exc}") from exc
    annotations = []
    for lineno, obj in _read_jsonl(annotations_path):
        where = f"{annotations_path}:{lineno}"
        try:
            annotations.append(
                Annotation(
                    image_id=str(obj["image_id"]),
                    class_label=str(obj["class"]),
                    box=_box_from_list(obj["box"], where),
                    difficult=bool(obj.get("difficult", False)),
                    crowd=bool(obj.get("crowd", False)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where}: {exc}") from exc
    metadata_path = os.path.join(directory, "metadata.json")
    metadata: dict[str, str] = {}
    if os.path.exists(metadata_path):
        with open(metadata_path, "r", encoding="utf-8") as fh:
            metadata = json.load(fh)
    return DatasetManifest(tuple(images), tuple(annotations), metadata)


def save_dataset(manifest: DatasetManifest, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = []
    for img in manifest.images:
        obj: dict = {"id": img.id, "width": img.width, "height": img.height}
        if img.raster_path is not None:
            obj["file"] = img.raster_path
        lines.append(json.dumps(obj, sort_keys=True))
    atomic_write_bytes(
        os.path.join(directory, "images.jsonl"),
        ("\n".join(lines) + "\n" if lines else "").encode("utf-8"),
    )
    lines = []
    for ann in manifest.annotations:
        lines.append(
            json.dumps(
                {
                    "image_id": ann.image_id,
                    "class": ann.class_label,
                    "box": list(ann.box.as_tuple()),
                    "difficult": ann.difficult,
                    "crowd": ann.crowd,
                },
                sort_keys=True,
            )
        )
    atomic_write_bytes(
        os.path.join(directory, "annotations.jsonl"),
        ("\n".join(lines) + "\n" if lines else "").encode("utf-8"),
    )
    if manifest.metadata:
        payload = json.dumps(dict(manifest.metadata), sort_keys=True, indent=2) + "\n"
        atomic_write_bytes(os.path.join(directory, "metadata.json"), payload.encode("utf-8"))


def load_proposals(path: str) -> dict[str, ProposalSet]:
    """Read a proposals.jsonl file into per-image proposal sets."""
    out: dict[str, ProposalSet] = {}
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            image_id = str(obj["image_id"])
            boxes = obj["boxes"]
            scores = obj.get("scores")
            injected = obj.get("injected")
        except KeyError as exc:
            raise DataError(f"{where}: missing field {exc}") from exc
        if image_id in out:
            raise DataError(f"{where}: duplicate image id {image_id!r}")
        if scores is not None and len(scores) != len(boxes):
            raise DataError(f"{where}: scores length {len(scores)} != boxes {len(boxes)}")
        if injected is not None and len(injected) != len(boxes):
            raise DataError(f"{where}: injected length {len(injected)} != boxes {len(boxes)}")
        items = []
        for i, raw in enumerate(boxes):
            box = _box_from_list(raw, where)
            score = None
            if scores is not None and scores[i] is not None:
                score = float(scores[i])
            flag = bool(injected[i]) if injected is not None else False
            if flag:
                score = None
            items.append(ScoredBox(box, score, flag))
        try:
            out[image_id] = ProposalSet(image_id, tuple(items), bool(obj.get("sorted", False)))
        except ValueError as exc:
            raise DataError(f"{where}: {exc}") from exc
    return out


def save_proposals(proposals: Mapping[str, ProposalSet], path: str) -> None:
    lines = []
    for image_id in sorted(proposals):
        ps = proposals[image_id]
        obj: dict = {
            "image_id": image_id,
            "boxes": [list(it.box.as_tuple()) for it in ps.items],
            "sorted": ps.ordering_meaningful,
        }
        if any(it.score is not None for it in ps.items):
            obj["scores"] = [it.score for it in ps.items]
        if any(it.injected for it in ps.items):
            obj["injected"] = [it.injected for it in ps.items]
        lines.append(json.dumps(obj, sort_keys=True))
    atomic_write_bytes(path, ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))


def load_detections(path: str) -> list[Detection]:
    out = []
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            out.append(
                Detection(
                    image_id=str(obj["image_id"]),
                    class_label=str(obj["class"]),
                    box=_box_from_list(obj["box"], where),
                    score=float(obj["score"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where}: {exc}") from exc
    return out


def save_detections(dets: Sequence[Detection], path: str) -> None:
    lines = [
        json.dumps(
            {
                "image_id": d.image_id,
                "class": d.class_label,
                "box": list(d.box.as_tuple()),
                "score": d.score,
            },
            sort_keys=True,
        )
        for d in dets
    ]
    atomic_write_bytes(path, ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))


Cell = Union[str, int, float]


@dataclass(frozen=True)
class ResultTable:
    """Rectangular result rows with named columns, units, and provenance."""

    columns: tuple[str, ...]
    units: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]
    provenance: Mapping[str, object]

    def __post_init__(self) -> None:
        if len(self.columns) != len(self.units):
            raise ValueError("need one unit per column")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("rows must match the column count")
        if not self.provenance:
            raise ValueError("provenance must not be empty")


def _format_cell(value: Cell) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return repr(value)  # 'nan', 'inf', '-inf'
        return f"{value:.6g}"
    return value


def _quote_csv(text: str) -> str:
    if any(ch in text for ch in ",\"\n"):
        return '"' + text.replace('"', '""') + '"'
    return text


def _parse_cell(text: str) -> Cell:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_results(table: ResultTable, path: str, format: str = "csv") -> None:
    """Serialise a result table; bytes depend only on the table contents."""
    if format == "csv":
        lines = [f"# {RESULTS_MAGIC}"]
        lines.append("# provenance: " + json.dumps(dict(table.provenance), sort_keys=True))
        lines.append("# units: " + ",".join(_quote_csv(u) for u in table.units))
        lines.append(",".join(_quote_csv(c) for c in table.columns))
        for row in table.rows:
            lines.append(",".join(_quote_csv(_format_cell(v)) for v in row))
        payload = ("\n".join(lines) + "\n").encode("utf-8")
    elif format == "jsonl":
        header = {
            "magic": RESULTS_MAGIC,
            "columns": list(table.columns),
            "units": list(table.units),
            "provenance": dict(table.provenance),
        }
        lines = [json.dumps(header, sort_keys=True)]
        for row in table.rows:
            lines.append(json.dumps(list(row)))
        payload = ("\n".join(lines) + "\n").encode("utf-8")
    else:
        raise ValueError(f"unknown results format {format!r}")
    atomic_write_bytes(path, payload)


def _split_csv_line(line: str) -> list[str]:
    fields, buf, quoted = [], [], False
    i = 0
    while i < len(line):
        ch = line[i]
        if quoted:
            if ch == '"':
                if i + 1 < len(line) and line[i + 1] == '"':
                    buf.append('"')
                    i += 1
                else:
                    quoted = False
            else:
                buf.append(ch)
        elif ch == '"':
            quoted = True
        elif ch == ",":
            fields.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    fields.append("".join(buf))
    return fields


def read_results(path: str, format: str = "csv") -> ResultTable:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if format == "csv":
        if not lines or lines[0] != f"# {RESULTS_MAGIC}":
            raise DataError(f"{path}: not a results file")
        provenance = json.loads(lines[1].removeprefix("# provenance: "))
        units = tuple(_split_csv_line(lines[2].removeprefix("# units: ")))
        columns = tuple(_split_csv_line(lines[3]))
        rows = tuple(
            tuple(_parse_cell(f) for f in _split_csv_line(line)) for line in lines[4:]
        )
        return ResultTable(columns, units, rows, provenance)
    if format == "jsonl":
        header = json.loads(lines[0])
        if header.get("magic") != RESULTS_MAGIC:
            raise DataError(f"{path}: not a results file")
        rows = tuple(tuple(json.loads(line)) for line in lines[1:])
        return ResultTable(
            tuple(header["columns"]), tuple(header["units"]), rows, header["provenance"]
        )
    raise ValueError(f"unknown results format {format!r}")


@dataclass(frozen=True)
class PlotSeries:
    """One named line for :func:`emit_plot`."""

    label: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.xs) != len(self.ys) or not self.xs:
            raise ValueError("series needs matching, non-empty xs and ys")

    @classmethod
    def from_curve(cls, label: str, curve: RecallCurve) -> "PlotSeries":
        return cls(label, curve.thresholds, curve.recall)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def emit_plot(series: Sequence[PlotSeries], path: str, title: str = "") -> None:
    """Write a self-contained SVG line chart plus a sidecar data CSV.

    The sidecar CSV (same path with a .csv suffix) is the contract; the
    graphic is a dependency-free convenience rendering.
    """
    if not series:
        raise ValueError("nothing to plot")
    width, height = 640.0, 440.0
    ml, mr, mt, mb = 60.0, 150.0, 30.0, 45.0
    x_min = min(min(s.xs) for s in series)
    x_max = max(max(s.xs) for s in series)
    y_min = min(0.0, min(min(s.ys) for s in series))
    y_max = max(max(max(s.ys) for s in series), y_min + 1e-9)
    if x_max == x_min:
        x_max = x_min + 1.0

    def sx(x: float) -> float:
        return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr)

    def sy(y: float) -> float:
        return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{title}</text>')
    ax_color = "#333333"
    parts.append(
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="{ax_color}"/>'
    )
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="{ax_color}"/>')
    for i in range(6):
        fx = x_min + (x_max - x_min) * i / 5
        fy = y_min + (y_max - y_min) * i / 5
        parts.append(
            f'<text x="{sx(fx):.1f}" y="{height - mb + 16:.1f}" text-anchor="middle">{fx:.3g}</text>'
        )
        parts.append(
            f'<text x="{ml - 6:.1f}" y="{sy(fy) + 4:.1f}" text-anchor="end">{fy:.3g}</text>'
        )
    for i, s in enumerate(series):
        colour = _PALETTE[i % len(_PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(s.xs, s.ys))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{points}"/>')
        ly = mt + 14 + 16 * i
        lx = width - mr + 10
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        label = s.label.replace("&", "&amp;").replace("<", "&lt;")
        parts.append(f'<text x="{lx + 24}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    atomic_write_bytes(path, ("\n".join(parts) + "\n").encode("utf-8"))

    sidecar = os.path.splitext(path)[0] + ".csv"
    table = ResultTable(
        columns=("series", "x", "y"),
        units=("label", "iou-or-count", "value"),
        rows=tuple((s.label, float(x), float(y)) for s in series for x, y in zip(s.xs, s.ys)),
        provenance={"tool": "propbench", "kind": "plot-sidecar"},
    )
    write_results(table, sidecar, format="csv")
