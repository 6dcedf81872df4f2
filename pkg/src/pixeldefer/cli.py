"""Command-line entry point: gen-data | train | eval | sweep | serve | report.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 training abort.
Failures print one machine-parseable line on stderr:
    error: {"kind": "...", "message": "..."}
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, config, experts, metrics, model, pgmio, routing, synthdata, trainer
from .errors import ConfigError, DataError, TrainAbortError
from .gridmath import BACKEND


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write("error: " + json.dumps({"kind": kind, "message": message}) + "\n")
    return code


def _prepare_outdir(outdir: Path, overwrite: bool) -> None:
    if (outdir / "manifest.json").exists() and not overwrite:
        raise ConfigError(
            f"{outdir} already holds a completed run; pass --overwrite to replace it")
    outdir.mkdir(parents=True, exist_ok=True)


def _write_manifest(outdir: Path, run_cfg, extra: dict) -> None:
    manifest = {
        "tool": "pixeldefer",
        "version": __version__,
        "backend": BACKEND,
        "config": run_cfg.to_json_dict(),
        "config_hash": run_cfg.hash(),
    }
    manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_samples(data_dir, run_cfg):
    if data_dir:
        samples, _ = synthdata.load_dataset(data_dir)
        return samples
    return synthdata.generate(run_cfg.dataset)


def cmd_gen_data(args) -> int:
    run_cfg = config.apply_overrides(config.load_run_config(args.config), args.set)
    outdir = Path(args.out)
    _prepare_outdir(outdir, args.overwrite)
    samples = synthdata.generate(run_cfg.dataset)
    synthdata.save_dataset(samples, run_cfg.dataset, outdir)
    print(f"wrote {len(samples)} samples to {outdir}")
    return 0


def cmd_train(args) -> int:
    run_cfg = config.apply_overrides(config.load_run_config(args.config), args.set)
    outdir = Path(args.out)
    _prepare_outdir(outdir, args.overwrite)
    samples = _load_samples(args.data, run_cfg)
    train_set, val_set = trainer.split_by_id(samples)
    profiles = run_cfg.profiles()
    cfg = run_cfg.training
    net = model.DeferralNet(expert_count=len(profiles),
                            encoder_channels=cfg.encoder_channels,
                            deferral_hidden=cfg.deferral_hidden,
                            height=run_cfg.dataset.height,
                            width=run_cfg.dataset.width,
                            seed=cfg.seed)
    net, log = trainer.train(net, train_set, val_set, cfg, profiles)
    model.save_checkpoint(net, outdir / "checkpoint.bin")
    log.write_csv(outdir / "trainlog.csv")
    (outdir / "trainlog.json").write_text(json.dumps(log.to_json_dict(), indent=2) + "\n")
    _write_manifest(outdir, run_cfg, {
        "command": "train",
        "train_samples": len(train_set),
        "val_samples": len(val_set),
        "epochs_run": len(log.epochs),
        "best_val_system_dsc": log.header.get("best_val_system_dsc"),
    })
    print(f"trained {len(log.epochs)} epochs; "
          f"best val System DSC {log.header.get('best_val_system_dsc')}")
    return 0


def _render_sample_outputs(outdir: Path, net, sample, preds):
    out = model.forward(net, sample.image)
    field = routing.RoutingField.from_logits(out.routing_logits.value)
    decisions = routing.decide(field)
    heat = routing.deferral_heatmap(field)
    sid = sample.id
    pgmio.write_pgm(outdir / f"{sid}_segprob.pgm",
                    np.round(out.seg_prob.value.plane() * 255).astype(np.uint8))
    pgmio.write_pgm(outdir / f"{sid}_decisions.pgm",
                    routing.decisions_to_gray(decisions, field.expert_count))
    pgmio.write_pgm(outdir / f"{sid}_heatmap.pgm", routing.heatmap_to_gray(heat))


def cmd_eval(args) -> int:
    run_cfg = config.apply_overrides(config.load_run_config(args.config), args.set)
    outdir = Path(args.out)
    _prepare_outdir(outdir, args.overwrite)
    net = model.load_checkpoint(args.checkpoint)
    samples = _load_samples(args.data, run_cfg)
    profiles = run_cfg.profiles()
    if len(profiles) != net.expert_count:
        raise ConfigError(f"checkpoint expects {net.expert_count} experts, "
                          f"config supplies {len(profiles)}")
    draws = [experts.simulate(s.mask, s.boundary_band, profiles,
                              trainer._derived_seed(run_cfg.training.seed, 11, i)).predictions
             for i, s in enumerate(samples)]
    per, report = trainer.evaluate_net(net, samples, draws)
    rows = metrics.report_rows(report, dataset=args.data or "generated",
                               config=run_cfg.hash())
    metrics.write_report_csv(outdir / "metrics.csv", rows)
    metrics.write_report_json(outdir / "metrics.json", report)
    for s, d in list(zip(samples, draws))[:args.visualize]:
        _render_sample_outputs(outdir, net, s, d)
    _write_manifest(outdir, run_cfg, {"command": "eval", "samples": len(samples),
                                      "checkpoint": str(args.checkpoint)})
    sysd = report["branches"]["system"]["dsc"]["mean"]
    print(f"evaluated {len(samples)} samples; System DSC {sysd}")
    return 0


def cmd_sweep(args) -> int:
    run_cfg = config.apply_overrides(config.load_run_config(args.config), args.set)
    outdir = Path(args.out)
    _prepare_outdir(outdir, args.overwrite)
    samples = _load_samples(args.data, run_cfg)
    train_set, val_set = trainer.split_by_id(samples)
    if args.kind == "lambda":
        cells = trainer.lambda_grid_cells()
    else:
        cells = trainer.expert_subset_cells(args.kind)
    rows = trainer.sweep(cells, run_cfg.training, train_set, val_set)
    trainer.write_sweep_csv(outdir / "sweep.csv", rows)
    _write_manifest(outdir, run_cfg, {"command": "sweep", "kind": args.kind,
                                      "cells": len(rows)})
    print(f"swept {len(rows)} cells -> {outdir / 'sweep.csv'}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.runs) / "sweep.csv"
    if not path.exists():
        raise DataError(f"no sweep.csv under {args.runs}")
    import csv as _csv
    with open(path, newline="") as fh:
        rows = list(_csv.DictReader(fh))
    if not rows:
        raise DataError("sweep.csv is empty")
    key_cols = [c for c in ("lambda1", "lambda2", "expert_count", "experts", "pool")
                if c in rows[0]]
    metric_cols = [c for c in rows[0]
                   if c.endswith("_mean") and not c.startswith("risk")]
    header = key_cols + metric_cols
    widths = [max(len(h), 12) for h in header]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for row in rows:
        cells = []
        for c, w in zip(header, widths):
            v = row.get(c, "")
            try:
                v = f"{float(v):.4f}"
            except (TypeError, ValueError):
                v = str(v)
            cells.append(v.ljust(w))
        print("  ".join(cells))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(args.checkpoint, persist_dir=args.persist)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixeldefer",
                                     description="pixel-wise learning-to-defer segmentation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data_opt=True):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--overwrite", action="store_true",
                       help="replace an existing completed run directory")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a scalar config field")
        if data_opt:
            p.add_argument("--data", help="dataset directory (default: generate in memory)")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    add_common(p, data_opt=False)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a deferral segmentor")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--visualize", type=int, default=4,
                   help="how many samples get PGM visualizations")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a hyperparameter or expert-subset sweep")
    add_common(p)
    p.add_argument("--kind", choices=("lambda", "scalability", "complementary"),
                   default="lambda")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print a sweep result table")
    p.add_argument("--runs", required=True, help="sweep output directory")
    p.add_argument("--out", help="optional CSV copy of the table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the annotation session API")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--persist", help="directory for session persistence")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", str(exc), 1)
    except DataError as exc:
        return _fail("data", str(exc), 2)
    except TrainAbortError as exc:
        sys.stderr.write("error: " + json.dumps(
            {"kind": "train-abort", "message": str(exc), "snapshot": exc.snapshot}) + "\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
