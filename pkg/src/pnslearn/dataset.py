"""Per-bound training tables built from sufficiently sampled subgroups."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from pnslearn import N_OBSERVED
from pnslearn.bounds import pns_bounds_arrays
from pnslearn.errors import EmptyDatasetError, MalformedInputError
from pnslearn.oracle import key_bits
from pnslearn.sampler import RegimeCounts, estimate_arrays
from pnslearn.scm import ScmKind

LOWER = "lb"
UPPER = "ub"
DEFAULT_THRESHOLD = 1300


@dataclass(frozen=True)
class LabeledExample:
    features: tuple[int, ...]
    label: float


@dataclass(frozen=True)
class BoundDataset:
    bound_side: str
    keys: np.ndarray
    labels: np.ndarray
    threshold: int
    scm: ScmKind | None = None

    def __post_init__(self):
        if self.bound_side not in (LOWER, UPPER):
            raise MalformedInputError(f"bound_side must be 'lb' or 'ub', not {self.bound_side!r}")
        if len(self.keys) != len(self.labels):
            raise MalformedInputError("keys and labels differ in length")
        if len(np.unique(self.keys)) != len(self.keys):
            raise MalformedInputError("duplicate subgroup keys")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def features(self) -> np.ndarray:
        return key_bits(self.keys).astype(np.float64)

    def rows(self) -> list[LabeledExample]:
        bits = key_bits(self.keys)
        return [LabeledExample(tuple(int(b) for b in bits[i]), float(self.labels[i])) for i in range(len(self))]


def qualifying_keys(obs: RegimeCounts, exp: RegimeCounts, threshold: int) -> np.ndarray:
    """Keys with at least `threshold` samples in each regime."""
    return np.flatnonzero((obs.subgroup_totals >= threshold) & (exp.subgroup_totals >= threshold))


def build_training(obs: RegimeCounts, exp: RegimeCounts, threshold: int = DEFAULT_THRESHOLD,
                   scm: ScmKind | str | None = None) -> tuple[BoundDataset, BoundDataset]:
    """Lower- and upper-bound tables from subgroups sampled at least `threshold` times per regime.

    A subgroup with crossed bounds is dropped from both tables; a side whose
    estimate is undefined (empty experimental arm) is dropped from that table only.
    """
    if threshold < 1:
        raise MalformedInputError("threshold must be >= 1")
    scm = ScmKind(scm) if scm is not None else (obs.scm or exp.scm)
    keys = qualifying_keys(obs, exp, threshold)
    if len(keys) == 0:
        raise EmptyDatasetError(f"no subgroup has {threshold} samples in both regimes")
    est = estimate_arrays(obs, exp)
    lb, ub, valid = pns_bounds_arrays(*(est[n][keys] for n in ("p_yx", "p_yxp", "p_xy", "p_xyp", "p_xpy", "p_xpyp")))
    # np.maximum/minimum propagate NaN, and NaN compares false in the validity check.
    defined = ~np.isnan(est["p_yx"][keys]) & ~np.isnan(est["p_yxp"][keys])
    keep_lb = defined & ~np.isnan(lb) & (valid | np.isnan(ub))
    keep_ub = defined & ~np.isnan(ub) & (valid | np.isnan(lb))
    if not keep_lb.any() and not keep_ub.any():
        raise EmptyDatasetError("every qualifying subgroup had undefined or crossed bounds")
    return (
        BoundDataset(LOWER, keys[keep_lb], lb[keep_lb], threshold, scm),
        BoundDataset(UPPER, keys[keep_ub], ub[keep_ub], threshold, scm),
    )


def train_val_split(ds: BoundDataset, val_fraction: float = 0.1, seed: int = 0) -> tuple[BoundDataset, BoundDataset]:
    if not 0.0 < val_fraction < 1.0:
        raise MalformedInputError("val_fraction must lie strictly between 0 and 1")
    n = len(ds)
    n_val = math.floor(n * val_fraction)
    if n < 2 or n_val < 1 or n_val >= n:
        raise MalformedInputError(f"cannot split {n} rows with val_fraction={val_fraction}")
    order = np.random.default_rng(seed).permutation(n)
    val_idx = np.sort(order[:n_val])
    train_idx = np.sort(order[n_val:])
    return (
        replace(ds, keys=ds.keys[train_idx], labels=ds.labels[train_idx]),
        replace(ds, keys=ds.keys[val_idx], labels=ds.labels[val_idx]),
    )


TRAINING_HEADER = ["key"] + [f"z{i + 1}" for i in range(N_OBSERVED)] + ["label"]


def write_training_csv(ds: BoundDataset, path: str | Path) -> None:
    bits = key_bits(ds.keys)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRAINING_HEADER) + "\n")
        for i, key in enumerate(ds.keys):
            fh.write(f"{int(key)},{','.join(str(int(b)) for b in bits[i])},{float(ds.labels[i])!r}\n")


def read_training_csv(path: str | Path, bound_side: str, threshold: int = 0,
                      scm: ScmKind | str | None = None) -> BoundDataset:
    keys, labels = [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != TRAINING_HEADER:
            raise MalformedInputError(f"{path}: unexpected training header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != len(TRAINING_HEADER):
                raise MalformedInputError(f"{path}:{lineno}: malformed row")
            key = int(parts[0])
            if [int(b) for b in parts[1:-1]] != key_bits(key).tolist():
                raise MalformedInputError(f"{path}:{lineno}: feature bits disagree with key")
            label = float(parts[-1])
            if not 0.0 <= label <= 1.0:
                raise MalformedInputError(f"{path}:{lineno}: label outside [0, 1]")
            keys.append(key)
            labels.append(label)
    if not keys:
        raise EmptyDatasetError(f"{path}: no rows")
    return BoundDataset(bound_side, np.array(keys, dtype=np.int64), np.array(labels), threshold,
                        ScmKind(scm) if scm is not None else None)
