"""Command-line surface wiring the library into batch pipeline stages.

Stages exchange plain files so any detector stack can participate: a
teacher dumps raw per-view detections, ``aggregate`` turns them into
candidates, ``threshold`` derives the adaptive threshold report,
``filter`` emits the weighted pseudo-label dataset and the merged
training set for an external trainer, and ``eval``/``simulate`` measure
quality.  ``pipeline`` chains aggregate, threshold, filter, and
(optionally) eval in one invocation, reloading every intermediate file so
its outputs are byte-identical to running the stages one by one.

Exit codes: 0 success, 2 IO/parse failure, 3 integrity violation,
4 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import dataio, plots
from .dataio import (
    ConfigError,
    Dataset,
    IntegrityError,
    ParseError,
    PipelineConfig,
)
from .evaluation import (
    annotations_to_detections,
    annotations_to_groundtruth,
    average_precision,
    match_dataset,
    pr_curve,
    pr_f1,
)
from .geometry import parse_views
from .nms import Detection, aggregate_views
from .pseudolabel import (
    alpha_weight,
    build_pseudo_dataset,
    bundle_counts,
    emit_pseudo_dataset,
    filter_candidates,
    merge_datasets,
)
from .simulator import SimulationSpec, run_iteration_loop, run_threshold_sweep
from .thresholding import (
    HistogramConfig,
    MissingClassThresholdError,
    compute_thresholds,
    threshold_report,
    threshold_set_from_report,
)

log = logging.getLogger("pseudodet")

EXIT_OK = 0
EXIT_IO = 2
EXIT_INTEGRITY = 3
EXIT_CONFIG = 4


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--range expects lo:hi, got {text!r}") from exc
    return lo, hi


def _parse_sweep(text: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--sweep expects lo:hi:step, got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise ConfigError(f"--sweep needs step > 0 and hi >= lo, got {text!r}")
    values = []
    k = 0
    while lo + k * step <= hi + 1e-9:
        values.append(round(lo + k * step, 9))
        k += 1
    return values


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = dataio.load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    histogram = None
    if getattr(args, "bins", None) is not None or getattr(args, "range", None) is not None:
        lo, hi = _parse_range(args.range) if args.range else (cfg.histogram.lo, cfg.histogram.hi)
        bins = args.bins if args.bins is not None else cfg.histogram.n_bins
        try:
            histogram = HistogramConfig(lo=lo, hi=hi, n_bins=bins)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    views = tuple(args.views.split(",")) if getattr(args, "views", None) else None
    try:
        return dataio.config_with_overrides(
            cfg,
            nms_iou=getattr(args, "nms_iou", None),
            histogram=histogram,
            mode=getattr(args, "mode", None),
            views=views,
            scale_factor=getattr(args, "scale_factor", None),
            seed=getattr(args, "seed", None),
            workers=getattr(args, "workers", None),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_csv(path: Path, fieldnames: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k)) for k in fieldnames})


def _csv_value(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


# ---------------------------------------------------------------------------
# Stage cores (shared by individual commands and the pipeline command)


def _candidates_as_detections(candidates: Dataset) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for ann in candidates.annotations:
        if ann.score is None:
            raise IntegrityError(f"candidate annotation {ann.id} carries no score")
        out.setdefault(ann.image_id, []).append(Detection(ann.category_id, ann.box, ann.score))
    return out


def _detections_sort_key(d: Detection):
    return (d.class_id, -d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2)


def _candidates_to_dataset(
    candidates: dict[int, list[Detection]], pool: Dataset
) -> Dataset:
    image_map = pool.image_map()
    images = [image_map[i] for i in sorted(candidates)]
    annotations = []
    ann_id = 1
    for image_id in sorted(candidates):
        for det in sorted(candidates[image_id], key=_detections_sort_key):
            annotations.append(
                dataio.Annotation(ann_id, image_id, det.class_id, det.box, score=det.score)
            )
            ann_id += 1
    return Dataset(images=images, annotations=annotations, categories=list(pool.categories))


def _run_aggregate(detections_path, dataset_path, out_path, cfg: PipelineConfig) -> Dataset:
    pool = dataio.load_dataset(dataset_path)
    preds = dataio.load_detections(detections_path, pool, cfg.scale_factor)
    image_map = pool.image_map()
    class_wise = not cfg.cross_class_nms

    def one_image(image_id: int) -> tuple[int, list[Detection]]:
        dets = aggregate_views(
            preds[image_id], image_map[image_id].dims, cfg.nms_iou, class_wise=class_wise
        )
        return image_id, dets

    image_ids = sorted(preds)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool_exec:
            results = list(pool_exec.map(one_image, image_ids))
    else:
        results = [one_image(i) for i in image_ids]

    candidates = {image_id: dets for image_id, dets in sorted(results) if dets}
    out = _candidates_to_dataset(candidates, pool)
    dataio.save_dataset(out, out_path)
    log.info("aggregate: %d candidate images, %d candidates -> %s",
             len(out.images), len(out.annotations), out_path)
    return out


def _run_threshold(candidates_path, out_dir: Path, cfg: PipelineConfig, figures: bool) -> dict:
    candidates = dataio.load_dataset(candidates_path)
    dets = [d for lst in _candidates_as_detections(candidates).values() for d in lst]
    ts = compute_thresholds(dets, cfg.histogram, cfg.mode)
    report = threshold_report(ts)
    dataio.write_json(report, out_dir / "thresholds.json")

    rows = [
        {
            "class_id": int(key),
            "tau": entry["tau"],
            "n_binned": sum(entry["counts"]),
            "n_below": entry["n_below"],
        }
        for key, entry in sorted(report["classes"].items(), key=lambda kv: int(kv[0]))
    ]
    _write_csv(out_dir / "thresholds.csv", ["class_id", "tau", "n_binned", "n_below"], rows)
    if figures:
        plots.save_histogram_figure(report, out_dir / "histograms.png")
    log.info("threshold: mode=%s uniform_tau=%s -> %s",
             report["mode"], report["uniform_tau"], out_dir / "thresholds.json")
    return report


def _run_filter(
    candidates_path,
    thresholds_path,
    labeled_path,
    out_dir: Path,
    cfg: PipelineConfig,
    *,
    weighted: bool,
    unlabeled_path=None,
) -> dict:
    candidates_ds = dataio.load_dataset(candidates_path)
    ts = threshold_set_from_report(dataio.read_json(thresholds_path))
    labeled = dataio.load_dataset(labeled_path)

    candidates = _candidates_as_detections(candidates_ds)
    filtered = filter_candidates(candidates, ts)
    entries = emit_pseudo_dataset(filtered, ts, weighted=weighted)

    next_ann_id = max((a.id for a in labeled.annotations), default=0) + 1
    pseudo = build_pseudo_dataset(entries, candidates_ds, start_ann_id=next_ann_id)
    merged = merge_datasets(labeled, pseudo)
    dataio.save_dataset(pseudo, out_dir / "pseudo.json")
    dataio.save_dataset(merged, out_dir / "merged.json")

    summary: dict[str, Any] = {
        "n_labeled": len(labeled.images),
        "n_candidate_images": len(candidates_ds.images),
        "n_pseudo_images": len(pseudo.images),
        "n_pseudo_labels": len(pseudo.annotations),
        "n_merged_images": len(merged.images),
        "weighted": weighted,
    }
    if unlabeled_path is not None:
        n_unlabeled = len(dataio.load_dataset(unlabeled_path).images)
        summary.update(
            bundle_counts(
                len(labeled.images), n_unlabeled, len(candidates_ds.images), len(pseudo.images)
            )
        )
    dataio.write_json(summary, out_dir / "summary.json")
    log.info("filter: %d pseudo images, %d labels -> %s",
             len(pseudo.images), len(pseudo.annotations), out_dir)
    return summary


def _run_eval(predictions_path, gt_path, out_dir: Path, iou_t: float, figures: bool) -> dict:
    preds_ds = dataio.load_dataset(predictions_path)
    gt_ds = dataio.load_dataset(gt_path)
    dets = annotations_to_detections(preds_ds.annotations)
    gts = annotations_to_groundtruth(gt_ds.annotations)

    mr = match_dataset(dets, gts, iou_t)
    precision, recall, f1 = pr_f1(mr)
    ap = average_precision(dets, gts)
    metrics = {
        "iou_threshold": iou_t,
        "tp": mr.tp,
        "fp": mr.fp,
        "fn": mr.fn,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "map": ap.mean_ap,
        "ap_iou_thresholds": list(ap.iou_thresholds),
        "per_class_ap": {str(c): v for c, v in sorted(ap.per_class.items())},
        "classes_without_gt": list(ap.classes_without_gt),
    }
    dataio.write_json(metrics, out_dir / "metrics.json")
    _write_csv(
        out_dir / "per_class_ap.csv",
        ["class_id", "ap"],
        [{"class_id": c, "ap": v} for c, v in sorted(ap.per_class.items())],
    )
    if figures:
        curves = {c: pr_curve(dets, gts, c, iou_t) for c in sorted(ap.per_class)}
        plots.save_pr_figure(curves, iou_t, out_dir / "pr_curves.png")
    log.info("eval: mAP=%.4f f1@%.2f=%.4f -> %s", ap.mean_ap, iou_t, f1, out_dir)
    return metrics


# ---------------------------------------------------------------------------
# Commands


def cmd_aggregate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _run_aggregate(args.detections, args.dataset, args.out, cfg)
    return EXIT_OK


def cmd_threshold(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_threshold(args.candidates, out_dir, cfg, figures=not args.no_figures)
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_filter(
        args.candidates,
        args.thresholds,
        args.labeled,
        out_dir,
        cfg,
        weighted=not args.no_weights,
        unlabeled_path=args.unlabeled,
    )
    return EXIT_OK


def cmd_weights(args: argparse.Namespace) -> int:
    _resolve_config(args)
    ds = dataio.load_dataset(args.dataset)
    ts = threshold_set_from_report(dataio.read_json(args.thresholds))
    for ann in ds.annotations:
        if args.no_weights:
            ann.alpha = 1.0
        elif ann.score is None:
            ann.alpha = 1.0  # labels without scores are implicitly certain
        else:
            tau = ts.tau_for(ann.category_id)
            ann.alpha = 1.0 if tau is None else alpha_weight(ann.score, tau)
    dataio.save_dataset(ds, args.out)
    log.info("weights: annotated %d entries -> %s", len(ds.annotations), args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_eval(args.predictions, args.ground_truth, out_dir, args.iou, figures=not args.no_figures)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    spec = SimulationSpec.from_dict(dict(cfg.simulator))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = parse_views(cfg.views, cfg.scale_factor)
    labeled, unlabeled = spec.make_pools(cfg.seed)
    dataio.save_dataset(labeled, out_dir / "labeled.json")
    dataio.save_dataset(unlabeled, out_dir / "unlabeled.json")
    figures = not args.no_figures

    if args.sweep:
        taus = _parse_sweep(args.sweep)
        rows = [
            r.as_dict()
            for r in run_threshold_sweep(
                unlabeled,
                spec.detector,
                taus,
                views=views,
                nms_iou=cfg.nms_iou,
                histogram=cfg.histogram,
                mode=cfg.mode,
                seed=cfg.seed,
            )
        ]
        dataio.write_json({"mode": cfg.mode, "seed": cfg.seed, "results": rows},
                          out_dir / "report.json")
        fields = ["label", "tau", "n_pseudo_images", "n_pseudo_labels",
                  "precision", "recall", "f1"]
        _write_csv(out_dir / "sweep.csv", fields, rows)
        if figures:
            plots.save_sweep_figure(rows, out_dir / "sweep.png")
        log.info("simulate: sweep over %s -> %s", taus, out_dir)
        return EXIT_OK

    reports = run_iteration_loop(
        labeled,
        unlabeled,
        spec.detector,
        spec.improvement,
        spec.iterations,
        views=views,
        nms_iou=cfg.nms_iou,
        histogram=cfg.histogram,
        mode=cfg.mode,
        seed=cfg.seed,
        weighted=not args.no_weights,
    )
    rows = [r.as_dict() for r in reports]
    dataio.write_json({"mode": cfg.mode, "seed": cfg.seed, "iterations": rows},
                      out_dir / "report.json")
    fields = [
        "iteration", "n_candidate_images", "n_candidates", "n_pseudo_images",
        "n_pseudo_labels", "uniform_tau", "pseudo_precision", "pseudo_recall", "pseudo_f1",
        "student_precision", "student_recall", "student_f1",
        "refined_precision", "refined_recall", "refined_f1",
    ]
    _write_csv(out_dir / "iterations.csv", fields, rows)
    if figures:
        plots.save_iteration_figure(rows, out_dir / "iterations.png")
    log.info("simulate: %d iterations -> %s", len(rows), out_dir)
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    paths = dict(cfg.paths)
    for key in ("detections", "dataset", "labeled"):
        if key not in paths:
            raise ConfigError(f"pipeline config must provide paths.{key}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = not args.no_figures

    # Each stage reloads the previous stage's file, so chaining here is
    # byte-identical to invoking the stages separately.
    candidates_path = out_dir / "candidates.json"
    _run_aggregate(paths["detections"], paths["dataset"], candidates_path, cfg)
    _run_threshold(candidates_path, out_dir, cfg, figures=figures)
    _run_filter(
        candidates_path,
        out_dir / "thresholds.json",
        paths["labeled"],
        out_dir,
        cfg,
        weighted=not args.no_weights,
        unlabeled_path=paths["dataset"],
    )
    if "eval_gt" in paths:
        _run_eval(out_dir / "pseudo.json", paths["eval_gt"], out_dir, args.iou, figures=figures)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--mode", choices=["uniform", "class-wise"], help="thresholding mode")
    p.add_argument("--bins", type=int, help="histogram bin count")
    p.add_argument("--range", help="histogram score range as lo:hi")
    p.add_argument("--nms-iou", type=float, dest="nms_iou", help="NMS IoU threshold")
    p.add_argument("--views", help="comma-separated view kinds")
    p.add_argument("--scale-factor", type=float, dest="scale_factor", help="scaled-view factor")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--workers", type=int, help="worker count for per-image stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudodet",
        description="Multi-view pseudo-labeling pipeline stages for object detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="merge per-view detections into candidate labels")
    p.add_argument("--detections", required=True, help="per-view detection file")
    p.add_argument("--dataset", required=True, help="unlabeled pool dataset (image metadata)")
    p.add_argument("--out", required=True, help="candidate dataset output path")
    _add_common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("threshold", help="derive adaptive score thresholds from candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("filter", help="select pseudo-labels and merge with the labeled set")
    p.add_argument("--candidates", required=True)
    p.add_argument("--thresholds", required=True, help="threshold report JSON")
    p.add_argument("--labeled", required=True, help="labeled dataset")
    p.add_argument("--unlabeled", help="unlabeled pool dataset (for full counts)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-weights", action="store_true", help="emit all weights as 1")
    _add_common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("weights", help="attach confidence weights to a scored dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-weights", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", required=True, dest="ground_truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--iou", type=float, default=0.5, help="IoU for P/R/F1 matching")
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="run the synthetic self-training loop")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sweep", help="fixed-threshold sweep lo:hi:step instead of the loop")
    p.add_argument("--no-weights", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="aggregate, threshold, filter, and eval in one run")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--no-weights", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (IntegrityError, MissingClassThresholdError) as exc:
        log.error("integrity error: %s", exc)
        return EXIT_INTEGRITY
    except (ParseError, OSError) as exc:
        log.error("io error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
