"""Command-line entry point: ``bdrnilm {synth,train,eval,disaggregate,inspect}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import pipeline
from .config import ConfigError, load_config
from .data import denormalize, format_channel, parse_channel_file, write_channel_file
from .metrics import build_report, mae, sae
from .network import build_network, layer_table, network_receptive_field, param_count, receptive_field
from .synth import synth_generate
from .training import disaggregate, predict_midpoints, train
from .weights import load_weights, save_weights

logger = logging.getLogger("bdrnilm")

REFERENCE_PARAMS = 912_641
MODEL_FILE = "model.bdrn"


def _echo(args, text):
    if not args.quiet:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _run_config(args):
    run = load_config(args.config)
    if args.seed is not None:
        run = run.with_seed(args.seed)
    return run


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_synth(args):
    run = _run_config(args)
    run.require_synth()
    s = run.synth
    scene = synth_generate(run.profiles(), s["length"], s["noise_sigma"], s["seed"], s["start"], s["period"])
    out = args.out or "."
    _ensure_dir(out)
    write_channel_file(pipeline.channel_path(out, 1), scene.aggregate)
    labels = ["1 mains"]
    for i, (name, series) in enumerate(zip(scene.names, scene.appliances), start=2):
        write_channel_file(pipeline.channel_path(out, i), series)
        labels.append(f"{i} {name}")
    with open(os.path.join(out, pipeline.LABELS_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(labels) + "\n")
    manifest = {
        "seed": s["seed"],
        "length": s["length"],
        "noise_sigma": s["noise_sigma"],
        "period": s["period"],
        "start": s["start"],
        "clamped_samples": int(scene.clamped.sum()),
        "channels": {"1": "mains", **{str(i): n for i, n in enumerate(scene.names, start=2)}},
        "profiles": s["profiles"],
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _echo(args, f"wrote {len(scene.names) + 1} channels of {s['length']} samples to {out}")
    return 0


def _data_dir(args, run):
    data_dir = args.data or run.data["dir"]
    if not data_dir:
        raise ValueError("no data directory: pass --data or set data.dir")
    if not os.path.isdir(data_dir):
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    return data_dir


def cmd_train(args):
    run = _run_config(args)
    net_cfg = run.network_config().validate()
    tcfg = run.train_config().validate()
    data_dir = _data_dir(args, run)
    prep = pipeline.prepare(run, pipeline.load_pair(run, data_dir))
    out = args.out or "."
    _ensure_dir(out)
    model = build_network(net_cfg, seed=run.model["seed"])
    best, history = train(model, prep.train, prep.val, tcfg)
    model_path = os.path.join(out, MODEL_FILE)
    save_weights(best, model_path)
    pipeline.write_stats(
        os.path.join(out, pipeline.STATS_FILE), prep.stats_in, prep.stats_target,
        run.appliance["name"], net_cfg.window_length,
    )
    with open(os.path.join(out, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(history.to_dict(), fh, indent=2)
    _echo(args, f"trained {len(history.train_mse)} epoch(s); best epoch {history.best_epoch} "
                f"val_mse {history.val_mse[history.best_epoch]:.6f}; weights -> {model_path}")
    return 0


def cmd_eval(args):
    run = _run_config(args)
    net_cfg = run.network_config().validate()
    data_dir = _data_dir(args, run)
    pair = pipeline.load_pair(run, data_dir)
    stats = pipeline.stats_beside(args.model) if args.model else None
    prep = pipeline.prepare(run, pair, stats)
    test = prep.test
    idx = test.target_index
    truth = pair.appliance[idx]
    if args.predictions:
        series = parse_channel_file(args.predictions)
        pos = np.searchsorted(series.timestamps, pair.timestamps[idx])
        pos = np.clip(pos, 0, len(series) - 1)
        if not np.array_equal(series.timestamps[pos], pair.timestamps[idx]):
            raise ValueError(f"{args.predictions} does not cover every test timestamp")
        pred = series.watts[pos]
    else:
        if not args.model:
            raise ValueError("pass --model or --predictions")
        model = load_weights(args.model, net_cfg)
        pred = np.maximum(denormalize(predict_midpoints(model, test), prep.stats_target), 0.0)
    name = run.appliance["name"] or "appliance"
    report = build_report({name: (mae(pred, truth), sae(pred, truth))})
    out = args.out or "."
    _ensure_dir(out)
    with open(os.path.join(out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.format_table())
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out, "plot_data.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("timestamp,aggregate,truth,prediction\n")
        for t, a, y, p in zip(pair.timestamps[idx], pair.aggregate[idx], truth, pred):
            fh.write(f"{int(t)},{float(a)!r},{float(y)!r},{float(p)!r}\n")
    _echo(args, report.format_table())
    return 0


def cmd_disaggregate(args):
    run = _run_config(args)
    net_cfg = run.network_config().validate()
    if not args.model or not args.mains:
        raise ValueError("disaggregate needs --model and --mains")
    stats = pipeline.stats_beside(args.model)
    if stats is None:
        stats_in, stats_target = run.aggregate_stats(), run.target_stats()
        if stats_in is None or stats_target is None:
            raise ValueError(
                f"no {pipeline.STATS_FILE} next to the model; set appliance.aggregate_mean/std "
                "and appliance.mean/std (or a built-in appliance name)"
            )
    else:
        stats_in, stats_target = stats
    model = load_weights(args.model, net_cfg)
    mains = parse_channel_file(args.mains)
    watts = disaggregate(model, mains, stats_in, stats_target)
    out = args.out or "predictions.dat"
    parent = os.path.dirname(os.path.abspath(out))
    _ensure_dir(parent)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_channel(mains.timestamps, watts))
    _echo(args, f"wrote {len(watts)} predictions to {out}")
    return 0


def inspect_report(run):
    """Architecture summary as a dict (also printed by ``inspect``)."""
    cfg = run.network_config().validate()
    report = {}
    if run.model["stack"] is not None:
        rf = receptive_field(run.stack())
        report["stack_receptive_field"] = rf._asdict()
    rf = network_receptive_field(cfg)
    rows = layer_table(cfg)
    learnable = sum(r[2] for r in rows)
    stats = sum(r[3] for r in rows)
    built = param_count(build_network(cfg, seed=run.model["seed"]))
    if built != (learnable, learnable + stats):
        raise AssertionError(f"layer table {learnable} disagrees with built model {built}")
    report.update({
        "window_length": cfg.window_length,
        "receptive_field": rf._asdict(),
        "receptive_field_exceeds_window": rf.length > cfg.window_length,
        "layers": [
            {"name": n, "output_shape": list(shape), "learnable": p, "running_stats": s}
            for n, shape, p, s in rows
        ],
        "learnable_parameters": learnable,
        "total_with_running_stats": learnable + stats,
        "reference_parameters": REFERENCE_PARAMS,
        "delta_learnable": learnable - REFERENCE_PARAMS,
        "delta_total": learnable + stats - REFERENCE_PARAMS,
        "note": (
            "reference count 912,641 cannot be decomposed from the published description: "
            "the input-convolution kernel, shortcut/skip 1x1 convolutions and whether "
            "normalization statistics were counted are unstated. Here convolutions "
            "that feed batch normalization have no bias, residual shortcuts are identity "
            "whenever channel counts agree, and skip outputs are summed without projection."
        ),
    })
    return report


def format_inspect(report):
    lines = []
    if "stack_receptive_field" in report:
        s = report["stack_receptive_field"]
        lines.append(f"stack receptive field: {s['length']} (left {s['left_extent']}, right {s['right_extent']})")
    rf = report["receptive_field"]
    lines.append(f"network receptive field: {rf['length']} (left {rf['left_extent']}, "
                 f"right {rf['right_extent']}); window {report['window_length']}")
    width = max(len(r["name"]) for r in report["layers"])
    lines.append(f"{'layer'.ljust(width)}  {'output':>12}  {'learnable':>10}  {'stats':>6}")
    for r in report["layers"]:
        shape = "x".join(str(v) for v in r["output_shape"])
        lines.append(f"{r['name'].ljust(width)}  {shape:>12}  {r['learnable']:>10,}  {r['running_stats']:>6,}")
    lines.append(f"learnable parameters: {report['learnable_parameters']:,}")
    lines.append(f"including running statistics: {report['total_with_running_stats']:,}")
    lines.append(f"reference total: {report['reference_parameters']:,} "
                 f"(delta learnable {report['delta_learnable']:+,}, delta total {report['delta_total']:+,})")
    lines.append("note: " + report["note"])
    return "\n".join(lines) + "\n"


def cmd_inspect(args):
    run = _run_config(args)
    report = inspect_report(run)
    if args.out:
        _ensure_dir(args.out)
        with open(os.path.join(args.out, "inspect.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    _echo(args, format_inspect(report))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "disaggregate": cmd_disaggregate,
    "inspect": cmd_inspect,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override every seed in the configuration")
    common.add_argument("--out", help="output directory (output file for disaggregate)")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(prog="bdrnilm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic scene")
    p = sub.add_parser("train", parents=[common], help="train a model on a dataset directory")
    p.add_argument("--data", help="directory with channel_N.dat and labels.dat")
    p = sub.add_parser("eval", parents=[common], help="MAE/SAE on the test split")
    p.add_argument("--data", help="directory with channel_N.dat and labels.dat")
    p.add_argument("--model", help="weights file")
    p.add_argument("--predictions", help="score this channel file instead of running a model")
    p = sub.add_parser("disaggregate", parents=[common], help="estimate an appliance trace from mains")
    p.add_argument("--model", help="weights file")
    p.add_argument("--mains", help="mains channel file")
    sub.add_parser("inspect", parents=[common], help="receptive field and parameter accounting")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
