"""Command-line surface tying the toolkit together.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Every
stochastic subcommand requires an explicit --seed; outputs are byte-stable
for identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baselines import (
    GaussianGenerator,
    SlidingWindowGenerator,
    SuperpixelGenerator,
    UniformGenerator,
    derive_seed,
    fit_box_stats,
    load_box_stats,
    save_box_stats,
)
from .boxes import ImageInfo, PerturbationSpec, ProposalSet
from .detection import augment_with_gt, filter_by_proposals, oracle_nms
from .io import (
    DataError,
    DatasetManifest,
    PlotSeries,
    ResultTable,
    emit_plot,
    load_dataset,
    load_detections,
    load_proposals,
    read_results,
    save_detections,
    save_proposals,
    sha256_file,
    worker_count,
    write_results,
)
from .matching import best_overlap, greedy_match
from .metrics import (
    abo,
    average_recall,
    default_thresholds,
    pearson,
    recall_at,
    recall_curve,
    vus,
    CurveFamily,
)
from .ops import adaptive_nms, dedup, nms, random_k, top_k
from .repeatability import (
    DEFAULT_BUDGET,
    run_repeatability_experiment,
)
from .segmentation import read_pnm

__all__ = ["cli_dispatch", "main", "build_parser"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(prog="propbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"propbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit-stats", help="fit box feature statistics on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trim", type=float, default=0.005)
    p.add_argument("--absolute", action="store_true", help="fit on absolute pixel features")

    p = sub.add_parser("baseline", help="generate baseline proposals")
    p.add_argument("--method", required=True, choices=("uniform", "gaussian", "sliding", "superpixels"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stats", default=None, help="box-stats JSON (fitted here when absent)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("recall", help="evaluate proposal recall against annotations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="needed when --k samples unordered sets")
    p.add_argument("--ar-lo", type=float, default=0.5)
    p.add_argument("--ar-hi", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--curve-out",
        default=None,
        help="recall curve CSV path (default: <out stem>-curve.csv)",
    )

    p = sub.add_parser("recall-vs-count", help="recall metrics across proposal budgets")
    p.add_argument("--dataset", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--ks", required=True, help="comma-separated ascending budgets")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("repeatability", help="repeatability across perturbation levels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--theta-max", type=float, default=20.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="apply a diagnostic oracle")
    p.add_argument("--mode", required=True, choices=("gt", "nms"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--proposals", default=None, help="required for --mode gt")
    p.add_argument("--detections", default=None, help="required for --mode nms")
    p.add_argument("--iou-tp", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter-detections", help="keep detections covered by proposals")
    p.add_argument("--detections", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--min-iou", type=float, default=0.8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlate", help="Pearson correlation between two result columns")
    p.add_argument("--results", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)

    p = sub.add_parser("nms", help="non-maximum suppression on proposals")
    p.add_argument("--proposals", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("adaptive-nms", help="adaptive non-maximum suppression")
    p.add_argument("--proposals", required=True)
    p.add_argument("--beta0", type=float, default=0.90)
    p.add_argument("--eta", type=float, default=0.9996)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dedup", help="drop exact duplicate proposals")
    p.add_argument("--proposals", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plot", help="render a line chart from a sidecar-format CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title", default="")

    return parser


def _provenance(command: str, inputs: dict[str, str], **extra) -> dict:
    prov: dict = {
        "tool": "propbench",
        "version": __version__,
        "command": command,
        "inputs": {name: sha256_file(path) for name, path in inputs.items()},
    }
    prov.update({k: v for k, v in extra.items() if v is not None})
    return prov


def _dataset_inputs(directory: str) -> dict[str, str]:
    return {
        "images.jsonl": os.path.join(directory, "images.jsonl"),
        "annotations.jsonl": os.path.join(directory, "annotations.jsonl"),
    }


def _truncate_for_eval(ps: ProposalSet, k: Optional[int], seed: Optional[int]) -> ProposalSet:
    if k is None or len(ps.items) <= k:
        return ps
    if ps.scored or ps.ordering_meaningful:
        return top_k(ps, k)
    if seed is None:
        raise _UsageError("--seed is required to sample unordered proposal sets with --k")
    return random_k(ps, k, derive_seed(seed, ps.image_id))


def _pooled_matched_ious(
    manifest: DatasetManifest,
    proposals: dict[str, ProposalSet],
    k: Optional[int],
    seed: Optional[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Matched IoU and best overlap per countable annotation, pooled over
    the dataset; crowd annotations are excluded, difficult ones included."""
    matched: list[float] = []
    best: list[float] = []
    for img in manifest.images:
        anns = [a for a in manifest.annotations if a.image_id == img.id and not a.crowd]
        if not anns:
            continue
        targets = [a.box for a in anns]
        ps = proposals.get(img.id)
        if ps is None:
            matched.extend([0.0] * len(targets))
            best.extend([0.0] * len(targets))
            continue
        ps = _truncate_for_eval(ps, k, seed)
        cands = [it.box for it in ps.items]
        matched.extend(greedy_match(cands, targets, min_iou=0.0).gt_iou)
        best.extend(best_overlap(cands, targets))
    if not matched:
        raise DataError("dataset has no countable annotations")
    return np.array(matched), np.array(best)


def _cmd_fit_stats(args) -> int:
    manifest = load_dataset(args.dataset)
    stats = fit_box_stats(
        manifest.annotations, manifest.image_map(), trim=args.trim, normalise=not args.absolute
    )
    save_box_stats(stats, args.out)
    print(f"fitted {len(manifest.annotations)} annotations -> {args.out}")
    return 0


def _cmd_baseline(args) -> int:
    manifest = load_dataset(args.dataset)
    images = manifest.image_map()
    method = args.method
    if method in ("uniform", "gaussian") and args.seed is None:
        raise _UsageError(f"--seed is required for the stochastic {method} baseline")

    if method in ("uniform", "gaussian"):
        gen = UniformGenerator() if method == "uniform" else GaussianGenerator()
        if args.stats:
            gen.stats_ = load_box_stats(args.stats)
        else:
            gen.fit(manifest.annotations, images)

        def propose(img: ImageInfo) -> ProposalSet:
            return gen.propose(img, args.k, derive_seed(args.seed, img.id))

    elif method == "sliding":
        sliding = SlidingWindowGenerator()

        def propose(img: ImageInfo) -> ProposalSet:
            return sliding.propose(img, args.k)

    else:  # superpixels
        spx = SuperpixelGenerator()

        def propose(img: ImageInfo) -> ProposalSet:
            if img.raster_path is None:
                raise DataError(f"image {img.id} has no raster file for superpixels")
            path = img.raster_path
            if not os.path.isabs(path):
                path = os.path.join(args.dataset, path)
            ps = spx.propose(read_pnm(path), img.id)
            return _truncate_for_eval(ps, args.k, args.seed) if len(ps.items) > args.k else ps

    ordered = sorted(images.values(), key=lambda im: im.id)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        produced = list(pool.map(propose, ordered))
    save_proposals({ps.image_id: ps for ps in produced}, args.out)
    print(f"wrote proposals for {len(produced)} images -> {args.out}")
    return 0


def _cmd_recall(args) -> int:
    manifest = load_dataset(args.dataset)
    proposals = load_proposals(args.proposals)
    matched, best = _pooled_matched_ious(manifest, proposals, args.k, args.seed)
    ar = average_recall(matched, args.ar_lo, args.ar_hi)
    abo_value = abo(best)
    curve = recall_curve(matched, default_thresholds(0.5, 1.0, 0.005))
    prov = _provenance(
        "recall",
        {**_dataset_inputs(args.dataset), "proposals.jsonl": args.proposals},
        seed=args.seed,
        k=args.k,
        ar_lo=args.ar_lo,
        ar_hi=args.ar_hi,
    )
    table = ResultTable(
        columns=("metric", "value"),
        units=("name", "dimensionless"),
        rows=(
            ("AR", float(ar)),
            ("ABO", float(abo_value)),
            ("recall_at_0.5", recall_at(matched, 0.5)),
            ("recall_at_0.8", recall_at(matched, 0.8)),
            ("annotations", int(matched.size)),
        ),
        provenance=prov,
    )
    write_results(table, args.out, format="csv")
    curve_out = args.curve_out or os.path.splitext(args.out)[0] + "-curve.csv"
    curve_table = ResultTable(
        columns=("iou", "recall"),
        units=("threshold", "fraction"),
        rows=tuple((t, r) for t, r in zip(curve.thresholds, curve.recall)),
        provenance=prov,
    )
    write_results(curve_table, curve_out, format="csv")
    print(f"AR={ar:.6f}")
    print(f"ABO={abo_value:.6f}")
    return 0


def _cmd_recall_vs_count(args) -> int:
    try:
        ks = tuple(int(v) for v in args.ks.split(","))
    except ValueError as exc:
        raise _UsageError(f"--ks must be comma-separated integers: {exc}")
    manifest = load_dataset(args.dataset)
    proposals = load_proposals(args.proposals)
    grid = default_thresholds(0.0, 1.0, 0.005)
    curves = []
    rows = []
    for k in ks:
        matched, _ = _pooled_matched_ious(manifest, proposals, k, args.seed)
        curves.append(recall_curve(matched, grid))
        rows.append(
            (
                k,
                average_recall(matched),
                recall_at(matched, 0.5),
                recall_at(matched, 0.8),
            )
        )
    family = CurveFamily(ks, tuple(curves))
    prov = _provenance(
        "recall-vs-count",
        {**_dataset_inputs(args.dataset), "proposals.jsonl": args.proposals},
        seed=args.seed,
        ks=list(ks),
    )
    table = ResultTable(
        columns=("k", "AR", "recall_at_0.5", "recall_at_0.8"),
        units=("proposals", "dimensionless", "fraction", "fraction"),
        rows=tuple(rows),
        provenance=prov,
    )
    write_results(table, args.out, format="csv")
    print(f"VUS={vus(family):.6f}")
    return 0


def _cmd_repeatability(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        spec_doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(args.manifest))

    def resolve(path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(base, path)

    try:
        dataset_dir = resolve(spec_doc["dataset"])
        reference_path = resolve(spec_doc["reference"])
        entries = spec_doc["perturbed"]
    except KeyError as exc:
        raise DataError(f"{args.manifest}: missing field {exc}")
    manifest = load_dataset(dataset_dir)
    images = manifest.image_map()
    reference = load_proposals(reference_path)
    perturbed = {}
    input_digests = {"reference": reference_path}
    for entry in entries:
        spec = PerturbationSpec(entry["kind"], float(entry["param"]))
        path = resolve(entry["path"])
        perturbed[spec] = load_proposals(path)
        input_digests[spec.label()] = path
    run = run_repeatability_experiment(
        images,
        reference,
        perturbed,
        budget=args.budget,
        bins=args.bins,
        theta_max=args.theta_max,
    )
    for label, image_id in run.missing:
        print(f"warning: no proposals for image {image_id} under {label}", file=sys.stderr)
    prov = _provenance(
        "repeatability",
        {**_dataset_inputs(dataset_dir), **input_digests},
        budget=args.budget,
        bins=args.bins,
    )
    bin_cols = tuple(f"bin_{i}" for i in range(args.bins))
    table = ResultTable(
        columns=("kind", "param", "overall", "matched", "references") + bin_cols,
        units=("perturbation", "kind-specific", "mean-iou", "count", "count")
        + tuple("mean-iou" for _ in bin_cols),
        rows=tuple(
            (
                r.spec.kind,
                float(r.spec.param),
                r.overall,
                r.matched_pairs,
                r.reference_count,
            )
            + tuple(float("nan") if s is None else s for s in r.per_bin_scores)
            for r in run.reports
        ),
        provenance=prov,
    )
    write_results(table, args.out, format="csv")
    for r in run.reports:
        print(f"{r.spec.label()}: repeatability={r.overall:.6f}")
    return 0


def _cmd_oracle(args) -> int:
    manifest = load_dataset(args.dataset)
    if args.mode == "gt":
        if not args.proposals:
            raise _UsageError("--proposals is required for --mode gt")
        proposals = load_proposals(args.proposals)
        augmented = augment_with_gt(proposals, manifest.annotations)
        save_proposals(augmented, args.out)
        print(f"augmented {len(augmented)} proposal sets -> {args.out}")
        return 0
    if not args.detections:
        raise _UsageError("--detections is required for --mode nms")
    dets = load_detections(args.detections)
    survivors = oracle_nms(dets, manifest.annotations, iou_tp=args.iou_tp)
    save_detections(survivors, args.out)
    print(f"kept {len(survivors)}/{len(dets)} detections -> {args.out}")
    return 0


def _cmd_filter_detections(args) -> int:
    dets = load_detections(args.detections)
    proposals = load_proposals(args.proposals)
    kept = filter_by_proposals(dets, proposals, min_iou=args.min_iou)
    save_detections(kept, args.out)
    print(f"kept {len(kept)}/{len(dets)} detections -> {args.out}")
    return 0


def _cmd_correlate(args) -> int:
    table = read_results(args.results, format="csv")
    try:
        xi = table.columns.index(args.x)
        yi = table.columns.index(args.y)
    except ValueError:
        raise DataError(
            f"columns {args.x!r}/{args.y!r} not found in {list(table.columns)}"
        )
    try:
        xs = [float(row[xi]) for row in table.rows]
        ys = [float(row[yi]) for row in table.rows]
    except (TypeError, ValueError) as exc:
        raise DataError(f"non-numeric cells in correlation columns: {exc}")
    r = pearson(xs, ys)
    print(f"pearson={r:.6f}")
    return 0


def _proposals_filter_command(args, transform) -> int:
    proposals = load_proposals(args.proposals)
    out = {image_id: transform(ps) for image_id, ps in proposals.items()}
    save_proposals(out, args.out)
    total_in = sum(len(ps.items) for ps in proposals.values())
    total_out = sum(len(ps.items) for ps in out.values())
    print(f"kept {total_out}/{total_in} proposals -> {args.out}")
    return 0


def _cmd_plot(args) -> int:
    table = read_results(args.data, format="csv")
    try:
        si = table.columns.index("series")
        xi = table.columns.index("x")
        yi = table.columns.index("y")
    except ValueError:
        raise DataError("plot input needs 'series', 'x', and 'y' columns")
    groups: dict[str, list[tuple[float, float]]] = {}
    for row in table.rows:
        groups.setdefault(str(row[si]), []).append((float(row[xi]), float(row[yi])))
    series = [
        PlotSeries(label, tuple(x for x, _ in pts), tuple(y for _, y in pts))
        for label, pts in groups.items()
    ]
    emit_plot(series, args.out, title=args.title)
    print(f"wrote {args.out}")
    return 0


def cli_dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
        if args.command == "fit-stats":
            return _cmd_fit_stats(args)
        if args.command == "baseline":
            return _cmd_baseline(args)
        if args.command == "recall":
            return _cmd_recall(args)
        if args.command == "recall-vs-count":
            return _cmd_recall_vs_count(args)
        if args.command == "repeatability":
            return _cmd_repeatability(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "filter-detections":
            return _cmd_filter_detections(args)
        if args.command == "correlate":
            return _cmd_correlate(args)
        if args.command == "nms":
            return _proposals_filter_command(args, lambda ps: nms(ps, args.beta))
        if args.command == "adaptive-nms":
            return _proposals_filter_command(
                args, lambda ps: adaptive_nms(ps, args.k, args.beta0, args.eta)
            )
        if args.command == "dedup":
            return _proposals_filter_command(args, dedup)
        if args.command == "plot":
            return _cmd_plot(args)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    try:
        code = cli_dispatch(sys.argv[1:])
    except SystemExit as exc:  # --help / --version paths
        raise exc
    sys.exit(code)
