"""Glue between a run configuration, a dataset directory and the model."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .data import (
    AlignedPair,
    NormStats,
    align_series,
    combine_series,
    make_windows,
    parse_channel_file,
    parse_labels,
    split_dataset,
)

logger = logging.getLogger(__name__)

LABELS_FILE = "labels.dat"
STATS_FILE = "stats.json"


def channel_path(data_dir, channel):
    return os.path.join(data_dir, f"channel_{channel}.dat")


def _read_channel(data_dir, channel):
    path = channel_path(data_dir, channel)
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing channel file: {path}")
    return parse_channel_file(path)


def _name_key(name):
    return name.strip().lower().replace("_", " ")


def resolve_channels(run, data_dir):
    """Return ``(mains_channels, appliance_channel)`` for the configured run."""
    d = run.data
    labels_path = os.path.join(data_dir, LABELS_FILE)
    labels = {}
    if os.path.exists(labels_path):
        labels = parse_labels(labels_path)
    mains = d["mains_channels"]
    if mains is None:
        mains = sorted(c for c, n in labels.items() if _name_key(n) == "mains") or [1]
    if not d["sum_mains"]:
        mains = mains[:1]
    target = d["appliance_channel"]
    if target is None:
        name = run.appliance["name"]
        if not name:
            raise ValueError("appliance.name or data.appliance_channel must be set")
        hits = sorted(c for c, n in labels.items() if _name_key(n) == _name_key(name))
        if not hits:
            raise ValueError(f"no channel labelled {name!r} in {labels_path}")
        target = hits[0]
    return list(mains), int(target)


def load_pair(run, data_dir):
    mains_channels, target = resolve_channels(run, data_dir)
    mains = combine_series([_read_channel(data_dir, c) for c in mains_channels])
    appliance = _read_channel(data_dir, target)
    return align_series(mains, appliance, run.data["period"], run.data["gap_limit"])


@dataclass
class Prepared:
    pair: AlignedPair
    stats_in: NormStats
    stats_target: NormStats
    train: object
    val: object
    test: object
    excess_peaks: int


def resolve_stats(run, pair):
    cut = int(np.floor(len(pair) * run.data["train_fraction"]))
    stats_in = run.aggregate_stats() or NormStats.of(pair.aggregate[:cut])
    stats_target = run.target_stats() or NormStats.of(pair.appliance[:cut])
    return stats_in, stats_target


def prepare(run, pair, stats=None):
    """Normalize, window and split ``pair`` chronologically."""
    stats_in, stats_target = stats or resolve_stats(run, pair)
    ds = make_windows(pair, stats_in, stats_target, run.appliance["window_length"])
    mid = ds.target_index
    excess = pair.appliance[mid] > pair.aggregate[mid]
    n_excess = int(excess.sum())
    if n_excess:
        logger.info("%d target sample(s) exceed the aggregate reading", n_excess)
    if run.data["drop_excess_peaks"] and n_excess:
        ds = ds.subset(~excess)
    train_rows, test = split_dataset(ds, run.data["train_fraction"])
    train, val = split_dataset(train_rows, 1 - run.train["validation_fraction"])
    return Prepared(pair, stats_in, stats_target, train, val, test, n_excess)


def write_stats(path, stats_in, stats_target, appliance, window_length):
    payload = {
        "appliance": appliance,
        "window_length": window_length,
        "aggregate": {"mean": stats_in.mean, "std": stats_in.std},
        "target": {"mean": stats_target.mean, "std": stats_target.std},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


def read_stats(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return NormStats(**payload["aggregate"]), NormStats(**payload["target"])


def stats_beside(model_path):
    path = os.path.join(os.path.dirname(os.path.abspath(model_path)), STATS_FILE)
    return read_stats(path) if os.path.exists(path) else None
