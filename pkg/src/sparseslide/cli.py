"""Command-line interface.

Commands:

* ``synth``    generate a synthetic cohort: grid JSONs, PGMs, manifest
* ``tile``     tile one slide from a thumbnail (and optional annotation)
* ``run``      sequential inference on a grid, one trace CSV per replicate
* ``evaluate`` per-slide detection statistics and the summary table
* ``curves``   metric-vs-budget curves, threshold tables, wall-clock costs

Shared flags: ``--config`` (JSON), ``--out`` (output root, also via the
SPARSESLIDE_OUT environment variable), ``--seed``, ``--threads`` and
``--plot``. Flags override config values, which override defaults.
Everything lands under ``<out>/<experiment-name>/``; files are written
to a temp name and renamed, so readers never see partial output, and a
rerun with the same config is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import engine, metrics, tiling
from .config import ExperimentConfig
from .imaging import read_mask_pgm, read_pgm, write_mask_pgm, write_pgm, build_integral
from .rng import Rng, derive_seed
from .synth import CohortSlide, SynthScorerSpec, generate_samples, assemble_cohort
from .tiling import MODE_INFERENCE, tissue_mask

ENV_OUT = "SPARSESLIDE_OUT"


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic(path: Path, writer) -> None:
    """Run ``writer(tmp_path)`` then rename the temp file into place."""
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValueError("--seed must be a 64-bit unsigned integer")
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        cfg.threads = args.threads
    return cfg


def _experiment_dir(args, cfg: ExperimentConfig) -> Path:
    root = args.out or os.environ.get(ENV_OUT) or "out"
    exp = Path(root) / cfg.name
    for sub in ("grids", "traces", "tables", "plots"):
        (exp / sub).mkdir(parents=True, exist_ok=True)
    return exp


def _grid_filename(slide_id: str, magnification: float) -> str:
    return f"{slide_id}_{magnification:g}x.json"


def _mag_key(magnification: float) -> str:
    return f"{magnification:g}"


def _build_scorer(cfg: ExperimentConfig):
    """Scorer from config; None means use the per-cohort synthetic scorer."""
    if "table" in cfg.scorer:
        return engine.load_score_table(cfg.scorer["table"])
    return None


def _cohorts_by_magnification(cfg: ExperimentConfig) -> dict[float, list[CohortSlide]]:
    """Resolve the configured cohort into per-magnification slide lists."""
    table_scorer = _build_scorer(cfg)
    if "synthetic" in cfg.cohort:
        samples = generate_samples(cfg.slide_specs(), cfg.seed)
        scorer_spec = cfg.scorer_spec() or SynthScorerSpec()
        out = {}
        for mag in cfg.magnifications:
            cohort, _ = assemble_cohort(samples, scorer_spec, cfg.seed, mag)
            if table_scorer is not None:
                cohort = [CohortSlide(g, table_scorer, label) for g, _, label in cohort]
            out[mag] = cohort
        return out
    # pre-tiled grids: group by their own magnification
    scorer = table_scorer
    if scorer is None:
        scorer_spec = cfg.scorer_spec() or SynthScorerSpec()
        from .synth import synth_scorer

        scorer = synth_scorer(scorer_spec, seed=derive_seed(cfg.seed, "scorer"))
    out = {}
    for path in cfg.cohort["grids"]:
        grid = tiling.load_grid(path)
        out.setdefault(grid.magnification, []).append(CohortSlide(grid, scorer, grid.label))
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    exp = _experiment_dir(args, cfg)
    samples = generate_samples(cfg.slide_specs(), cfg.seed)
    scorer_spec = cfg.scorer_spec() or SynthScorerSpec()

    slides_doc = {
        s.slide_id: {
            "slide_id": s.slide_id,
            "label": s.spec.label,
            "thumbnail": f"grids/{s.slide_id}_thumb.pgm",
            "annotation": f"grids/{s.slide_id}_annotation.pgm" if s.spec.label else None,
            "grids": {},
        }
        for s in samples
    }
    thresholds = {}
    for mag in cfg.magnifications:
        cohort, threshold = assemble_cohort(samples, scorer_spec, cfg.seed, mag)
        thresholds[_mag_key(mag)] = threshold
        for slide in cohort:
            name = _grid_filename(slide.grid.slide_id, mag)
            _atomic_write_text(exp / "grids" / name, tiling.dumps_grid(slide.grid))
            slides_doc[slide.grid.slide_id]["grids"][_mag_key(mag)] = {
                "path": f"grids/{name}",
                "patches": len(slide.grid),
                "positive_patches": slide.grid.positive_patches,
            }
    for s in samples:
        _atomic(exp / "grids" / f"{s.slide_id}_thumb.pgm", lambda p, s=s: write_pgm(s.thumbnail, p))
        if s.spec.label:
            _atomic(
                exp / "grids" / f"{s.slide_id}_annotation.pgm",
                lambda p, s=s: write_mask_pgm(s.annotation, p),
            )

    manifest = {
        "name": cfg.name,
        "seed": cfg.seed,
        "magnifications": cfg.magnifications,
        "label_threshold": thresholds,
        "slides": [slides_doc[s.slide_id] for s in samples],
    }
    _atomic_write_text(exp / "manifest.json", _dump_json(manifest))
    print(f"wrote {len(samples)} slides x {len(cfg.magnifications)} magnifications to {exp}")
    return 0


def cmd_tile(args) -> int:
    cfg = _load_config(args)
    exp = _experiment_dir(args, cfg)
    thumbnail = read_pgm(args.thumbnail)
    mask = tissue_mask(thumbnail)
    grid = tiling.tile_slide(
        args.slide_id,
        (args.ref_width, args.ref_height),
        args.magnification,
        args.mode,
        build_integral(mask),
        args.thumb_scale,
        label=args.label == "positive",
    )
    if args.annotation:
        annotation = read_mask_pgm(args.annotation)
        threshold = args.threshold
        if threshold is None:
            threshold = tiling.label_threshold([annotation])
        grid = tiling.label_patches(grid, build_integral(annotation), args.ann_scale, threshold)
    name = _grid_filename(grid.slide_id, grid.magnification)
    _atomic_write_text(exp / "grids" / name, tiling.dumps_grid(grid))
    print(f"wrote grids/{name}: {len(grid)} patches, {grid.positive_patches} positive")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    exp = _experiment_dir(args, cfg)
    scorer = _build_scorer(cfg)
    if scorer is None:
        from .synth import synth_scorer

        scorer = synth_scorer(
            cfg.scorer_spec() or SynthScorerSpec(), seed=derive_seed(cfg.seed, "scorer")
        )
    written = 0
    for grid_path in args.grid:
        grid = tiling.load_grid(grid_path)
        for rep in range(args.replicates):
            seed = derive_seed(cfg.seed, "run", grid.slide_id, rep)
            perm = engine.sample_permutation(len(grid.patches), Rng(seed))
            trace = engine.run_sequential(grid, scorer, perm, cfg.capacity, rng_seed=seed)
            name = f"{grid.slide_id}_rep{rep:03d}.csv"
            _atomic(exp / "traces" / name, lambda p, t=trace: engine.write_trace_csv(t, p))
            written += 1
    print(f"wrote {written} trace files to {exp / 'traces'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    exp = _experiment_dir(args, cfg)
    cohorts = _cohorts_by_magnification(cfg)
    multi = len(cohorts) > 1
    stats_by_mag: dict[float, list[metrics.SlideEvalStats]] = {}
    for mag, cohort in sorted(cohorts.items()):
        stats = []
        for slide in cohort:
            if not slide.label:
                continue
            rng = Rng(derive_seed(cfg.seed, "ttd", _mag_key(mag), slide.grid.slide_id))
            stats.append(
                metrics.ttd_monte_carlo(
                    slide.grid,
                    slide.scorer,
                    capacity=cfg.capacity,
                    trials=cfg.trials_ttd,
                    rng=rng,
                )
            )
        if not stats:
            raise ValueError(f"no positive slides to evaluate at {mag:g}x")
        stats_by_mag[mag] = stats
        name = f"slides_{_mag_key(mag)}x.csv" if multi else "slides.csv"
        _atomic(exp / "tables" / name, lambda p, s=stats: metrics.write_slide_stats_csv(s, p))

    def table1(path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["magnification", "ttd_mean", "ttd_sd", "miss_rate"])
            for mag, stats in sorted(stats_by_mag.items()):
                means = [s.ttd_mean for s in stats if s.ttd_mean is not None]
                if means:
                    mean, sd = metrics._mean_sd(means)
                    mean_s, sd_s = repr(mean), repr(sd)
                else:
                    mean_s = sd_s = ""
                writer.writerow([f"{mag:g}", mean_s, sd_s, repr(metrics.miss_rate(stats))])

    _atomic(exp / "tables" / "table1.csv", table1)
    if args.plot:
        from . import plots

        _atomic(exp / "plots" / "ttd.svg", lambda p: plots.plot_ttd(stats_by_mag, p))
    print(f"wrote tables/table1.csv for {len(stats_by_mag)} magnification(s) to {exp}")
    return 0


def cmd_curves(args) -> int:
    cfg = _load_config(args)
    exp = _experiment_dir(args, cfg)
    cohorts = _cohorts_by_magnification(cfg)
    curves: dict[tuple[float, str], metrics.CostCurve] = {}
    for mag, cohort in sorted(cohorts.items()):
        max_patches = max(len(slide.grid) for slide in cohort)
        if max_patches == 0:
            raise ValueError(f"cohort at {mag:g}x has no patches")
        budgets = cfg.budgets(max_patches)
        for metric in (metrics.METRIC_AP, metrics.METRIC_AUC):
            rng = Rng(derive_seed(cfg.seed, "curves", _mag_key(mag), metric))
            curves[(mag, metric)] = metrics.cost_curve(
                cohort,
                metric,
                budgets,
                cfg.replicates_curves,
                cfg.capacity,
                rng,
                threads=cfg.threads,
            )

    def write_curves(path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["magnification", "metric", "n", "mean", "sd"])
            for (mag, metric), curve in sorted(curves.items()):
                for p in curve.points:
                    writer.writerow([f"{mag:g}", metric, p.n, repr(p.mean), repr(p.sd)])

    def write_table2(path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["magnification", "metric", "threshold", "n_min", "n_max"])
            for (mag, metric), curve in sorted(curves.items()):
                threshold = cfg.thresholds[metric]
                n_min, n_max = metrics.threshold_range(curve, threshold)
                writer.writerow(
                    [
                        f"{mag:g}",
                        metric,
                        repr(float(threshold)),
                        "" if n_min is None else n_min,
                        "" if n_max is None else n_max,
                    ]
                )

    def write_wallclock(path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "magnification",
                    "metric",
                    "threshold",
                    "profile",
                    "seconds_per_patch",
                    "seconds_min",
                    "seconds_max",
                ]
            )
            for (mag, metric), curve in sorted(curves.items()):
                threshold = cfg.thresholds[metric]
                n_min, n_max = metrics.threshold_range(curve, threshold)
                for profile, spp in sorted(cfg.seconds_per_patch.items()):
                    writer.writerow(
                        [
                            f"{mag:g}",
                            metric,
                            repr(float(threshold)),
                            profile,
                            repr(float(spp)),
                            "" if n_min is None else repr(metrics.estimate_wall_clock(n_min, spp)),
                            "" if n_max is None else repr(metrics.estimate_wall_clock(n_max, spp)),
                        ]
                    )

    _atomic(exp / "tables" / "curves.csv", write_curves)
    _atomic(exp / "tables" / "table2.csv", write_table2)
    _atomic(exp / "tables" / "wallclock.csv", write_wallclock)
    if args.plot:
        from . import plots

        _atomic(
            exp / "plots" / "curves.svg",
            lambda p: plots.plot_cost_curves(curves, p, thresholds=cfg.thresholds),
        )
    print(f"wrote tables/curves.csv, table2.csv, wallclock.csv to {exp}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseslide",
        description="Sparse sequential patch sampling over gridded slide images.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--out", help=f"output root directory (default ${ENV_OUT} or ./out)")
    common.add_argument("--seed", type=int, help="master seed, overrides config")
    common.add_argument("--threads", type=int, help="worker threads, overrides config")
    common.add_argument("--plot", action="store_true", help="also render SVG figures")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tile", parents=[common], help="tile one slide from a thumbnail PGM")
    p.add_argument("--thumbnail", required=True, help="thumbnail PGM (P5)")
    p.add_argument("--annotation", help="annotation mask PGM, positives only")
    p.add_argument("--slide-id", required=True)
    p.add_argument("--ref-width", type=int, required=True)
    p.add_argument("--ref-height", type=int, required=True)
    p.add_argument("--magnification", type=float, default=10.0)
    p.add_argument("--mode", choices=[tiling.MODE_TRAINING, MODE_INFERENCE], default=MODE_INFERENCE)
    p.add_argument("--thumb-scale", type=float, default=0.05, help="thumbnail px per reference px")
    p.add_argument("--ann-scale", type=float, default=0.05, help="annotation px per reference px")
    p.add_argument("--label", choices=["positive", "negative"], default="negative")
    p.add_argument("--threshold", type=int, help="positive-patch area threshold")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("run", parents=[common], help="sequential inference traces")
    p.add_argument("--grid", action="append", required=True, help="grid JSON (repeatable)")
    p.add_argument("--replicates", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", parents=[common], help="detection statistics tables")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curves", parents=[common], help="metric-vs-budget curves and tables")
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
