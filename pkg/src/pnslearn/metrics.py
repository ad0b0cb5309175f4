"""Scoring predicted bounds against the informer truth."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from pnslearn import N_OBSERVED
from pnslearn.errors import MalformedInputError
from pnslearn.oracle import key_bits


@dataclass(frozen=True)
class MetricReport:
    scm: str
    bound_side: str
    mse: float
    mae: float
    n: int
    weighted: bool = False


@dataclass(frozen=True)
class BinnedConfusion:
    bins: int
    matrix: np.ndarray  # rows: true bin, columns: predicted bin

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.bins + 1)


def _align(pred, truth):
    """Two equal-length arrays, from arrays in a shared key order or key->value mappings."""
    if isinstance(pred, Mapping) or isinstance(truth, Mapping):
        if not (isinstance(pred, Mapping) and isinstance(truth, Mapping)):
            raise MalformedInputError("pass both predictions and truth as mappings, or neither")
        if set(pred) != set(truth):
            raise MalformedInputError("prediction and truth key sets differ")
        keys = sorted(truth)
        return np.array([pred[k] for k in keys], dtype=float), np.array([truth[k] for k in keys], dtype=float)
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise MalformedInputError(f"prediction and truth shapes differ: {pred.shape} vs {truth.shape}")
    return pred, truth


def score(pred, truth, side: str, scm: str = "", weights=None) -> MetricReport:
    """Unweighted MSE/MAE over subgroups; pass `weights` (e.g. P(c)) for the population-weighted variant."""
    pred, truth = _align(pred, truth)
    if len(pred) == 0:
        raise MalformedInputError("nothing to score")
    err = pred - truth
    if weights is None:
        mse = float(np.mean(err * err))
        mae = float(np.mean(np.abs(err)))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != err.shape or np.any(w < 0) or w.sum() <= 0:
            raise MalformedInputError("weights must be non-negative, nonzero, and match the predictions")
        mse = float(np.sum(w * err * err) / w.sum())
        mae = float(np.sum(w * np.abs(err)) / w.sum())
    return MetricReport(str(scm), side, mse, mae, len(pred), weights is not None)


def bin_index(values, bins: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if np.any((values < 0.0) | (values > 1.0)) or np.any(np.isnan(values)):
        raise MalformedInputError("confusion binning needs values in [0, 1]")
    return np.minimum(np.floor(values * bins).astype(np.int64), bins - 1)


def confusion(pred, truth, bins: int = 10) -> BinnedConfusion:
    if bins < 2:
        raise MalformedInputError("need at least 2 bins")
    pred, truth = _align(pred, truth)
    cells = bin_index(truth, bins) * bins + bin_index(pred, bins)
    matrix = np.bincount(cells, minlength=bins * bins).reshape(bins, bins)
    return BinnedConfusion(bins, matrix)


# popcount of every 15-bit XOR pattern
_POPCOUNT = key_bits(np.arange(1 << N_OBSERVED)).sum(axis=1).astype(np.int8)


def nearest_subgroup_baseline(train, keys, chunk: int = 4096) -> np.ndarray:
    """Label of the Hamming-nearest training key; ties go to the lowest key."""
    if len(train) == 0:
        raise MalformedInputError("baseline needs a nonempty training set")
    order = np.argsort(train.keys, kind="stable")
    train_keys = np.asarray(train.keys)[order]
    labels = np.asarray(train.labels, dtype=float)[order]
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty(len(keys))
    for start in range(0, len(keys), chunk):
        q = keys[start:start + chunk]
        dist = _POPCOUNT[q[:, None] ^ train_keys[None, :]]
        # argmin returns the first minimum, i.e. the lowest key after sorting.
        out[start:start + chunk] = labels[np.argmin(dist, axis=1)]
    return out


def write_metrics_json(report: MetricReport, path: str | Path, model: str = "mlp",
                       activation: str | None = None, bins: int = 10) -> None:
    doc = {
        "scm": report.scm,
        "bound": report.bound_side,
        "model": model,
        "activation": activation,
        "mse": report.mse,
        "mae": report.mae,
        "n": report.n,
        "bins": bins,
        "weighted": report.weighted,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_scatter_csv(keys, truth, pred, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("key,true,pred\n")
        for k, t, p in zip(keys, truth, pred):
            fh.write(f"{int(k)},{float(t)!r},{float(p)!r}\n")


def write_confusion_csv(cm: BinnedConfusion, path: str | Path) -> None:
    edges = cm.edges
    labels = [f"{edges[i]:.2f}-{edges[i + 1]:.2f}" for i in range(cm.bins)]
    with open(path, "w") as fh:
        fh.write("true\\pred," + ",".join(labels) + "\n")
        for label, row in zip(labels, cm.matrix):
            fh.write(label + "," + ",".join(str(int(v)) for v in row) + "\n")


def report_dict(report: MetricReport) -> dict:
    return asdict(report)
