"""Disaggregation error metrics and their tabular reports."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} readings")
    if pred.size == 0:
        raise ValueError("metrics need at least one time point")
    return pred, truth


def mae(pred, truth):
    """Mean absolute error in watts, ``mean(|pred - truth|)``."""
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def sae(pred, truth):
    """Signal aggregate error ``|sum(pred) - sum(truth)| / sum(truth)``."""
    pred, truth = _pair(pred, truth)
    total = float(np.sum(truth))
    if total <= 0:
        raise ValueError("SAE is undefined when the true total energy is zero")
    return abs(float(np.sum(pred)) - total) / total


@dataclass(frozen=True)
class ApplianceScore:
    appliance: str
    mae_watts: float
    sae: float


@dataclass
class MetricsReport:
    rows: list
    overall: ApplianceScore

    def to_records(self):
        records = [
            {"appliance": r.appliance, "mae_watts": r.mae_watts, "sae": r.sae} for r in self.rows
        ]
        records.append({"appliance": "overall", "mae_watts": self.overall.mae_watts, "sae": self.overall.sae})
        return records

    def to_json(self):
        return json.dumps(self.to_records(), indent=2)

    def format_table(self, model_name="Seq2point BDRN", digits=3):
        """Plain-text table with one row per metric and an Overall column."""
        header = ["Error metric", "Model"] + [r.appliance for r in self.rows] + ["Overall"]
        mae_row = ["MAE", model_name] + [f"{r.mae_watts:.{digits}f}" for r in self.rows]
        mae_row.append(f"{self.overall.mae_watts:.{digits}f}")
        sae_row = ["SAE", model_name] + [f"{r.sae:.{digits}f}" for r in self.rows]
        sae_row.append(f"{self.overall.sae:.{digits}f}")
        table = [header, mae_row, sae_row]
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table
        ) + "\n"


def build_report(results):
    """Collect per-appliance scores; the overall row is their arithmetic mean.

    ``results`` is a mapping ``name -> (mae, sae)`` or an iterable of
    ``(name, mae, sae)`` triples.
    """
    if isinstance(results, dict):
        items = [(k, *v) for k, v in results.items()]
    else:
        items = [tuple(r) for r in results]
    if not items:
        raise ValueError("a report needs at least one appliance")
    rows = [ApplianceScore(str(n), float(m), float(s)) for n, m, s in items]
    overall = ApplianceScore(
        "overall",
        float(np.mean([r.mae_watts for r in rows])),
        float(np.mean([r.sae for r in rows])),
    )
    return MetricsReport(rows, overall)
