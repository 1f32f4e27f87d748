"""Command-line pipeline: data generation, training, inference, post-processing,
evaluation, hyperparameter sweeps and SVG reports.

Subcommands: gen-data, train, infer, postprocess, evaluate, sweep, report.
Exit codes: 0 success, 2 configuration error, 3 missing input, 4 numeric
failure. Every command writes a run.json provenance record into the output
directory and all outputs are written atomically.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__, evaluation, pgmio, phantom, postproc, svgplot, uncertainty
from . import config as config_mod
from .config import ConfigError
from .segnet import (
    NetworkError,
    dice_macro,
    load_weights,
    mc_sample,
    save_training_log,
    save_weights,
    train,
)
from .segnet import network as segnet_network

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4

SPLITS = ("train", "val", "test")
SOURCES = ("mc_variance", "entropy")


class MissingInputError(FileNotFoundError):
    """An upstream artifact (dataset, model, maps, masks) is not there yet."""


# ---------------------------------------------------------------------------
# plumbing


def _load_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    cfg.validate()
    if args.set:
        cfg = config_mod.apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg = _apply_seed(cfg, args.command, args.seed)
    return cfg


def _apply_seed(cfg, command, seed):
    data = config_mod.to_dict(cfg)
    if command == "gen-data":
        data["phantom"]["seed"] = seed
    elif command in ("train", "sweep"):
        data["training"]["seed"] = seed
    elif command == "infer":
        data["inference"]["seed"] = seed
    return config_mod.from_dict(data)


def _write_run_record(cfg, command, started, extra=None) -> None:
    out_dir = cfg.paths.output_dir
    os.makedirs(out_dir, exist_ok=True)
    record = {
        "command": command,
        "config_hash": config_mod.config_hash(cfg),
        "config": config_mod.to_dict(cfg),
        "seeds": {
            "phantom": cfg.phantom.seed,
            "training": cfg.training.seed,
            "inference": cfg.inference.seed,
        },
        "versions": {
            "anomseg": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": round(time.time() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    if extra:
        record.update(extra)
    pgmio.write_json(os.path.join(out_dir, "run.json"), record)


def _manifest(cfg) -> dict:
    try:
        return phantom.load_manifest(cfg.paths.data_root)
    except FileNotFoundError as exc:
        raise MissingInputError(
            f"no dataset manifest under {cfg.paths.data_root!r}; run gen-data first"
        ) from exc


def _healthy_pairs(cfg, manifest, split):
    pairs = []
    for entry in phantom.volumes_in_split(manifest, split, "healthy"):
        vol = phantom.load_volume(cfg.paths.data_root, entry)
        pairs.extend(zip(vol.bscans, vol.labels))
    return pairs


def _model(cfg):
    if not os.path.exists(cfg.paths.model_path):
        raise MissingInputError(
            f"model file {cfg.paths.model_path!r} not found; run train first"
        )
    return load_weights(cfg.paths.model_path)


def _umap_dir(cfg, volume_id):
    return os.path.join(cfg.paths.output_dir, "uncertainty", volume_id)


def _mask_dir(cfg, variant, source, volume_id=None):
    tag = variant if source == "mc_variance" else f"{variant}-entropy"
    base = os.path.join(cfg.paths.output_dir, "masks", tag)
    return base if volume_id is None else os.path.join(base, volume_id)


def _metrics_dir(cfg, split, variant, source):
    tag = f"{split}-{variant}" if source == "mc_variance" else f"{split}-{variant}-entropy"
    return os.path.join(cfg.paths.output_dir, "metrics", tag)


def _load_maps(cfg, entry, source):
    stem = "u" if source == "mc_variance" else "ent"
    vdir = _umap_dir(cfg, entry["volume_id"])
    maps = []
    for i in range(int(entry["bscans"])):
        path = os.path.join(vdir, f"{stem}_{i}.f32")
        if not os.path.exists(path):
            raise MissingInputError(f"{path} not found; run infer first")
        maps.append(uncertainty.load_map(path))
    return maps


def _load_masks(cfg, entry, variant, source):
    vdir = _mask_dir(cfg, variant, source, entry["volume_id"])
    masks = []
    for i in range(int(entry["bscans"])):
        path = os.path.join(vdir, f"mask_{i}.pgm")
        if not os.path.exists(path):
            raise MissingInputError(f"{path} not found; run postprocess first")
        masks.append((pgmio.read_pgm(path) > 0).astype(np.uint8))
    return masks


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg, args) -> None:
    counts = cfg.dataset.as_dict()
    manifest = phantom.generate_dataset(cfg.phantom, counts, cfg.paths.data_root)
    logger.info("wrote %d volumes under %s", len(manifest["volumes"]), cfg.paths.data_root)


def cmd_train(cfg, args) -> None:
    manifest = _manifest(cfg)
    train_pairs = _healthy_pairs(cfg, manifest, "train")
    val_pairs = _healthy_pairs(cfg, manifest, "val")
    if not train_pairs or not val_pairs:
        raise MissingInputError("dataset has no healthy train or val volumes")
    result = train(train_pairs, val_pairs, cfg.network, cfg.training, progress=True)
    os.makedirs(os.path.dirname(cfg.paths.model_path) or ".", exist_ok=True)
    save_weights(cfg.paths.model_path, result.weights)
    os.makedirs(cfg.paths.output_dir, exist_ok=True)
    save_training_log(os.path.join(cfg.paths.output_dir, "training_log.csv"), result.log)
    logger.info("best epoch %d val dice %.4f", result.best_epoch, result.best_val_dice)
    if result.diverged:
        raise NetworkError("training diverged; saved the last good checkpoint")


def cmd_infer(cfg, args) -> None:
    manifest = _manifest(cfg)
    store = _model(cfg)
    entries = phantom.volumes_in_split(manifest, args.split)
    if not entries:
        raise MissingInputError(f"no volumes in split {args.split!r}")
    for entry in entries:
        vol = phantom.load_volume(cfg.paths.data_root, entry)
        vdir = _umap_dir(cfg, entry["volume_id"])
        os.makedirs(vdir, exist_ok=True)
        for i, scan in enumerate(vol.bscans):
            seed = np.random.SeedSequence(
                [cfg.inference.seed, int(entry["seed_spawn_index"]), i]
            )
            stack = mc_sample(store, cfg.network, scan, cfg.inference.n_samples, seed)
            umap = uncertainty.uncertainty_map(stack)
            uncertainty.save_map(os.path.join(vdir, f"u_{i}.f32"), umap)
            probs = segnet_network.forward(store, cfg.network, scan)
            emap = uncertainty.entropy_map(probs, dropout_rate=cfg.network.dropout_rate)
            uncertainty.save_map(os.path.join(vdir, f"ent_{i}.f32"), emap)
            pgmio.write_pgm(os.path.join(vdir, f"seg_{i}.pgm"), probs.argmax(axis=0))
        logger.info("inferred %s", entry["volume_id"])


def cmd_postprocess(cfg, args) -> None:
    manifest = _manifest(cfg)
    params = replace(cfg.postproc, variant=args.variant)
    entries = phantom.volumes_in_split(manifest, args.split)
    if not entries:
        raise MissingInputError(f"no volumes in split {args.split!r}")
    for entry in entries:
        maps = _load_maps(cfg, entry, args.source)
        bottoms = None
        if params.flatten:
            vol = phantom.load_volume(cfg.paths.data_root, entry)
            bottoms = vol.bottom_boundary
        vdir = _mask_dir(cfg, args.variant, args.source, entry["volume_id"])
        os.makedirs(vdir, exist_ok=True)
        for i, umap in enumerate(maps):
            bottom = bottoms[i] if bottoms is not None else None
            mask = postproc.pipeline(umap, params, bottom_boundary=bottom)
            pgmio.write_pgm(os.path.join(vdir, f"mask_{i}.pgm"), mask * 255)


def cmd_evaluate(cfg, args) -> None:
    manifest = _manifest(cfg)
    entries = phantom.volumes_in_split(manifest, args.split)
    if not entries:
        raise MissingInputError(f"no volumes in split {args.split!r}")
    out_dir = _metrics_dir(cfg, args.split, args.variant, args.source)
    os.makedirs(out_dir, exist_ok=True)

    pixel_rows, per_volume = [], []
    score_rows, healthy_scores, diseased_scores = [], [], []
    u_sums, gt_areas = [], []
    diseased_preds, diseased_gts = [], []
    for entry in entries:
        vid = entry["volume_id"]
        masks = _load_masks(cfg, entry, args.variant, args.source)
        maps = _load_maps(cfg, entry, args.source)
        score = evaluation.volume_score(vid, entry["condition"], masks, maps)
        gt_area = 0
        if entry["condition"] == "diseased":
            vol = phantom.load_volume(cfg.paths.data_root, entry)
            metrics = evaluation.pixel_metrics(masks, vol.anomaly_masks)
            per_volume.append(metrics)
            pixel_rows.append((vid, metrics.precision, metrics.recall, metrics.dice,
                               metrics.tp, metrics.fp, metrics.fn, metrics.empty_pair))
            diseased_preds.extend(masks)
            diseased_gts.extend(vol.anomaly_masks)
            gt_area = int(sum(int(m.sum()) for m in vol.anomaly_masks))
            u_sums.append(score.uncertainty_sum)
            gt_areas.append(gt_area)
            diseased_scores.append(score.mean_anomalous_pixels)
        else:
            healthy_scores.append(score.mean_anomalous_pixels)
        score_rows.append((vid, entry["condition"], score.mean_anomalous_pixels,
                           score.uncertainty_sum, gt_area))

    summary = {"split": args.split, "variant": args.variant, "source": args.source}
    if per_volume:
        summary["pixel"] = evaluation.summarize(per_volume)
        curve = evaluation.lesion_curves(diseased_preds, diseased_gts, cfg.eval.d_grid)
        pgmio.write_csv(
            os.path.join(out_dir, "lesion_curve.csv"),
            ("d", "ld_recall", "ld_precision", "tp_recall", "fn", "tp_precision", "fp"),
            [(float(d), float(re), float(pr), int(a), int(b), int(c), int(e))
             for d, re, pr, a, b, c, e in zip(curve.d_grid, curve.ld_recall,
                                              curve.ld_precision, curve.tp_recall,
                                              curve.fn, curve.tp_precision, curve.fp)],
        )
    pgmio.write_csv(
        os.path.join(out_dir, "per_volume.csv"),
        ("volume_id", "precision", "recall", "dice", "tp", "fp", "fn", "empty_pair"),
        pixel_rows,
    )
    pgmio.write_csv(
        os.path.join(out_dir, "volume_scores.csv"),
        ("volume_id", "condition", "mean_anomalous_px", "uncertainty_sum", "gt_anomaly_px"),
        score_rows,
    )
    if healthy_scores and diseased_scores:
        summary["separation"] = evaluation.separation_report(
            healthy_scores, diseased_scores, bins=cfg.eval.histogram_bins
        )
    if len(u_sums) >= 3:
        try:
            rho, slope, intercept = evaluation.pearson(u_sums, gt_areas)
            summary["correlation"] = {"rho": rho, "slope": slope, "intercept": intercept}
        except ValueError as exc:
            summary["correlation"] = {"undefined": str(exc)}
    pgmio.write_json(os.path.join(out_dir, "summary.json"), summary)
    if per_volume:
        logger.info("split %s: mean dice %.4f", args.split, summary["pixel"]["dice_mean"])


def cmd_sweep(cfg, args) -> None:
    manifest = _manifest(cfg)
    out_dir = os.path.join(cfg.paths.output_dir, "sweeps")
    os.makedirs(out_dir, exist_ok=True)
    if args.kind == "threshold":
        best, rows = _sweep_threshold(cfg, manifest)
        pgmio.write_csv(os.path.join(out_dir, "threshold.csv"),
                        ("t", "mean_dice", "sd_dice"), rows)
        pgmio.write_json(os.path.join(out_dir, "threshold_best.json"),
                         {"kind": "threshold", "best": best})
    else:
        best, rows = _sweep_dropout(cfg, manifest)
        pgmio.write_csv(os.path.join(out_dir, "dropout.csv"),
                        ("p", "mean_dice"), rows)
        pgmio.write_json(os.path.join(out_dir, "dropout_best.json"),
                         {"kind": "dropout", "best": best})
    logger.info("sweep %s -> best %s", args.kind, best)


def _sweep_threshold(cfg, manifest, source="mc_variance"):
    entries = phantom.volumes_in_split(manifest, "val", "diseased")
    if not entries:
        raise MissingInputError("threshold sweep needs diseased validation volumes")
    umaps, gts, bottoms = [], [], []
    for entry in entries:
        umaps.append(_load_maps(cfg, entry, source))
        vol = phantom.load_volume(cfg.paths.data_root, entry)
        gts.append(vol.anomaly_masks)
        bottoms.append(vol.bottom_boundary)
    return evaluation.sweep_threshold(
        umaps, gts, cfg.eval.t_grid, cfg.postproc,
        bottoms_by_volume=bottoms if cfg.postproc.flatten else None,
    )


def _sweep_dropout(cfg, manifest):
    train_pairs = _healthy_pairs(cfg, manifest, "train")
    val_pairs = _healthy_pairs(cfg, manifest, "val")
    diseased = phantom.volumes_in_split(manifest, "val", "diseased")
    if not train_pairs or not val_pairs or not diseased:
        raise MissingInputError("dropout sweep needs train, val-healthy and val-diseased volumes")
    diseased_vols = [phantom.load_volume(cfg.paths.data_root, e) for e in diseased]
    # independent derived seeds per grid point
    children = np.random.SeedSequence(cfg.training.seed).spawn(len(cfg.eval.p_grid))

    def cycle(index_and_p):
        index, p = index_and_p
        net_cfg = replace(cfg.network, dropout_rate=p)
        train_cfg = replace(cfg.training, seed=int(children[index].generate_state(1)[0]))
        result = train(train_pairs, val_pairs, net_cfg, train_cfg)
        umaps, gts = [], []
        for vol in diseased_vols:
            vol_maps = []
            for i, scan in enumerate(vol.bscans):
                stack = mc_sample(result.weights, net_cfg, scan,
                                  cfg.inference.n_samples,
                                  np.random.SeedSequence([cfg.inference.seed, index, i]))
                vol_maps.append(uncertainty.uncertainty_map(stack))
            umaps.append(vol_maps)
            gts.append(vol.anomaly_masks)
        _, rows = evaluation.sweep_threshold(umaps, gts, cfg.eval.t_grid, cfg.postproc)
        return max(r[1] for r in rows)

    indexed = list(enumerate(cfg.eval.p_grid))
    scores = {p: cycle((i, p)) for i, p in indexed}
    return evaluation.sweep_dropout(cfg.eval.p_grid, lambda p: scores[p])


def cmd_report(cfg, args) -> None:
    metrics_root = os.path.join(cfg.paths.output_dir, "metrics")
    if not os.path.isdir(metrics_root):
        raise MissingInputError(f"no metrics under {cfg.paths.output_dir!r}; run evaluate first")
    report_dir = os.path.join(cfg.paths.output_dir, "report")
    os.makedirs(report_dir, exist_ok=True)
    made = 0
    for tag in sorted(os.listdir(metrics_root)):
        mdir = os.path.join(metrics_root, tag)
        summary_path = os.path.join(mdir, "summary.json")
        if not os.path.exists(summary_path):
            continue
        with open(summary_path) as fh:
            summary = json.load(fh)
        made += _report_one(cfg, report_dir, tag, mdir, summary)
    if made == 0:
        raise MissingInputError("metrics directories contained no summaries")


def _report_one(cfg, report_dir, tag, mdir, summary) -> int:
    made = 0
    if "pixel" in summary:
        px = summary["pixel"]
        rows = [("pixel mean", px["precision_mean"], px["recall_mean"], px["dice_mean"]),
                ("pixel sd", px["precision_sd"], px["recall_sd"], px["dice_sd"])]
        svgplot.table_svg(os.path.join(report_dir, f"summary_{tag}.svg"),
                          ("metric", "precision", "recall", "dice"), rows,
                          f"anomaly segmentation [{tag}]")
        made += 1
    curve_path = os.path.join(mdir, "lesion_curve.csv")
    if os.path.exists(curve_path):
        rows = _read_csv(curve_path)
        grid = [float(r["d"]) for r in rows]
        re = [float(r["ld_recall"]) for r in rows]
        pr = [float(r["ld_precision"]) for r in rows]
        svgplot.curves_svg(os.path.join(report_dir, f"ld_curves_{tag}.svg"), grid,
                           [("LD-Recall", re, svgplot.BLUE), ("LD-Precision", pr, svgplot.RED)],
                           "required lesion dice d", "rate", f"lesion detection [{tag}]")
        made += 1
    scores = _read_csv(os.path.join(mdir, "volume_scores.csv"))
    diseased = [r for r in scores if r["condition"] == "diseased"]
    if len(diseased) >= 3 and "correlation" in summary and "rho" in summary.get("correlation", {}):
        corr = summary["correlation"]
        svgplot.scatter_fit_svg(
            os.path.join(report_dir, f"scatter_{tag}.svg"),
            [float(r["uncertainty_sum"]) for r in diseased],
            [float(r["gt_anomaly_px"]) for r in diseased],
            corr["slope"], corr["intercept"], corr["rho"],
            "summed uncertainty", "annotated anomaly area (px)",
            f"uncertainty vs anomaly area [{tag}]",
        )
        made += 1
    if "separation" in summary:
        sep = summary["separation"]
        svgplot.histogram_svg(
            os.path.join(report_dir, f"volume_hist_{tag}.svg"),
            sep["bin_edges"], sep["healthy_hist"], sep["diseased_hist"],
            "mean anomalous pixels per scan",
            f"volume separation, AUC {sep['auc']:.3f} [{tag}]",
        )
        healthy = [float(r["mean_anomalous_px"]) for r in scores if r["condition"] == "healthy"]
        svgplot.strip_svg(
            os.path.join(report_dir, f"volume_strip_{tag}.svg"),
            [("healthy", healthy, svgplot.GREEN),
             ("diseased", [float(r["mean_anomalous_px"]) for r in diseased], svgplot.RED)],
            "mean anomalous pixels per scan", f"volume scores [{tag}]",
        )
        made += 1
    return made


def _read_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomseg",
        description="Uncertainty-driven anomaly segmentation pipeline on layered phantoms",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration (defaults used if omitted)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config entry (repeatable), e.g. postproc.threshold=0.08")
        p.add_argument("--seed", type=int, help="override the command's primary seed")

    common(sub.add_parser("gen-data", help="write a phantom dataset"))
    common(sub.add_parser("train", help="train the segmentation network on healthy volumes"))
    p = sub.add_parser("infer", help="write uncertainty maps and probability summaries")
    common(p)
    p.add_argument("--split", choices=SPLITS, default="test")
    p = sub.add_parser("postprocess", help="turn uncertainty maps into anomaly masks")
    common(p)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--variant", choices=postproc.VARIANTS, default="full")
    p.add_argument("--source", choices=SOURCES, default="mc_variance")
    p = sub.add_parser("evaluate", help="pixel, lesion and volume metrics")
    common(p)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--variant", choices=postproc.VARIANTS, default="full")
    p.add_argument("--source", choices=SOURCES, default="mc_variance")
    p = sub.add_parser("sweep", help="hyperparameter sweep (threshold or dropout)")
    common(p)
    p.add_argument("--kind", choices=("threshold", "dropout"), required=True)
    common(sub.add_parser("report", help="emit SVG plots from evaluation CSVs"))
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "postprocess": cmd_postprocess,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](cfg, args)
        _write_run_record(cfg, args.command, started)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except MissingInputError as exc:
        logger.error("missing input: %s", exc)
        return EXIT_MISSING
    except (NetworkError, FloatingPointError) as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
