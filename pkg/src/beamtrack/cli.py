"""Command-line entry point.

Every subcommand takes ``--config`` (flat ``key = value`` file, defaults when
omitted) and ``--out`` (directory). Results are written as a metrics CSV plus a
``manifest.json`` that echoes the config and seeds. Failures exit with status
1 and print a single ``error: {json}`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .array_signal import write_codebook_text, write_phase_grid
from .channel_mobility import generate_dataset, write_dataset_jsonl
from .pipeline import (
    ExperimentConfig,
    TrainedModels,
    evaluate_stage3,
    metrics_rows,
    simulate,
    sweep,
    train_stage1,
    train_stage2,
    write_metrics_csv,
)

log = logging.getLogger("beamtrack")


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()


def _write_manifest(out: Path, command: str, config: ExperimentConfig, outputs: list, started: float, **extra):
    manifest = {
        "command": command,
        "version": __version__,
        "seeds": {k: getattr(config, k) for k in ("data_seed", "pn_seed", "noise_seed", "init_seed")},
        "config": dataclasses.asdict(config),
        "outputs": sorted(str(p) for p in outputs),
        "elapsed_s": round(time.perf_counter() - started, 3),
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_dataset(args) -> None:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ds = generate_dataset(cfg.scenario, cfg.num_trajectories, cfg.history_len, cfg.prediction_len, cfg.data_seed)
    data = simulate(cfg, ds)
    write_dataset_jsonl(out / "frames.jsonl", ds)
    write_codebook_text(out / "pencil_codebook.txt", data.pencil.columns)
    write_codebook_text(out / "pn_codebook.txt", data.pn.columns)
    write_phase_grid(out / "pn_phases.txt", data.pn)
    outputs = ["frames.jsonl", "pencil_codebook.txt", "pn_codebook.txt", "pn_phases.txt"]
    counts = {name: len(ids) for name, ids in ds.partitions.items()}
    _write_manifest(out, "dataset generate", cfg, outputs, t0, partitions=counts)
    log.info("wrote %d trajectories to %s", len(ds.trajectories), out)


def cmd_train(args) -> None:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data = simulate(cfg)
    outputs = []
    if args.stage in ("1", "all"):
        mm1, mm2 = train_stage1(cfg, data)
        mm1.save(out / "mmrapid1.json")
        mm2.save(out / "mmrapid2.json")
        outputs += ["mmrapid1.json", "mmrapid2.json"]
    if args.stage in ("2", "all"):
        train_stage2(cfg, data).save(out / "tracker.json")
        outputs.append("tracker.json")
    _write_manifest(out, f"train --stage {args.stage}", cfg, outputs, t0)


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    models = TrainedModels.load(args.models)
    if models.tracker is None:
        raise FileNotFoundError(f"no tracker.json in {args.models}; run 'train --stage 2' first")
    ev = evaluate_stage3(cfg, simulate(cfg), models)
    write_metrics_csv(out / "metrics.csv", metrics_rows(cfg, ev.reports))
    summary = {v: {"accuracy": r.accuracy, "gl_percentiles_db": {str(p): x for p, x in r.gain_loss_db_percentiles.items()},
                   "infinite_gain_loss": r.num_infinite}
               for v, r in ev.reports.items()}
    _write_manifest(out, "evaluate", cfg, ["metrics.csv"], t0, test_frames=len(ev.oracle), summary=summary)
    print((out / "metrics.csv").read_text(), end="")


def cmd_sweep(args) -> None:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = sweep(cfg, args.grid)
    name = f"sweep_{args.grid}.csv"
    write_metrics_csv(out / name, rows)
    _write_manifest(out, f"sweep --grid {args.grid}", cfg, [name], t0)


def cmd_report(args) -> None:
    """Print metric CSVs as a table and flag cells meeting the gain-loss threshold."""
    threshold = args.threshold if args.threshold is not None else _config(args).gain_loss_threshold_db
    rows = []
    for path in args.metrics:
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    if not rows:
        raise ValueError("no metric rows found")
    cols = ["variant", "M_I", "M_L", "T", "P", "accuracy", "gl_p90_db", "avg_meas", "overhead_vs_exhaustive",
            "overhead_vs_mmrapid"]
    fmt = lambda c, v: f"{float(v):.4f}" if c not in ("variant", "M_I", "M_L", "T", "P") else v
    table = [cols] + [[fmt(c, r[c]) for c in cols] for r in rows]
    widths = [max(len(t[i]) for t in table) for i in range(len(cols))]
    for t in table:
        print("  ".join(s.rjust(w) for s, w in zip(t, widths)))
    print()
    for variant in sorted({r["variant"] for r in rows}):
        ok = [r for r in rows if r["variant"] == variant and float(r["gl_p90_db"]) <= threshold]
        if ok:
            best = min(ok, key=lambda r: (float(r["avg_meas"]), float(r["gl_p90_db"])))
            print(f"{variant}: fewest measurements/step with p90 gain loss <= {threshold} dB: "
                  f"{float(best['avg_meas']):.4f} at M_I={best['M_I']} M_L={best['M_L']} T={best['T']} P={best['P']}")
        else:
            print(f"{variant}: no cell meets p90 gain loss <= {threshold} dB")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamtrack", description="Beam tracking simulation, training and evaluation.")
    p.add_argument("--log-level", default="INFO")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="flat key = value config file")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    ds = sub.add_parser("dataset", help="synthetic trajectory data")
    ds_sub = ds.add_subparsers(dest="action", required=True)
    gen = ds_sub.add_parser("generate")
    common(gen)
    gen.set_defaults(func=cmd_dataset)

    tr = sub.add_parser("train", help="train mmRAPID (stage 1), the tracker (stage 2) or both")
    common(tr)
    tr.add_argument("--stage", choices=("1", "2", "all"), default="all")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="score trained models on the test trajectories")
    common(ev)
    ev.add_argument("--models", required=True, help="directory written by 'train --stage all'")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="train and evaluate over a parameter grid")
    common(sw)
    sw.add_argument("--grid", choices=("measurements", "windows"), required=True)
    sw.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="summarise metric CSVs")
    common(rp, out=False)
    rp.add_argument("metrics", nargs="+", help="metric CSV files")
    rp.add_argument("--threshold", type=float, help="gain-loss threshold in dB (default from config)")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        args.func(args)
    except Exception as exc:  # reported as one machine-readable line
        log.debug("command failed", exc_info=True)
        print("error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
