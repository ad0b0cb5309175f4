"""Exact causal quantities by enumeration over the exogenous noise.

Individual level: for a full feature vector z, X_Z(z) and Y_Z(z) are fixed, so
every quantity is a finite sum over the binary exogenous assignments.
Subgroup level: a key fixes z1..z15, and the 32 completions of z16..z20 are
averaged with weights equal to the product of their Bernoulli priors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from pnslearn import N_FEATURES, N_HIDDEN, N_OBSERVED, N_SUBGROUPS
from pnslearn.bounds import BoundPair, CausalDistribution, pns_bounds_arrays
from pnslearn.errors import MalformedInputError
from pnslearn.scm import ScmKind, ScmSpec, dot_xz, dot_yz, f_m, f_x, f_y, feature_sum_tables

QUANTITIES = ("p_yx", "p_yxp", "p_xy", "p_xyp", "p_xpy", "p_xpyp", "pns_point")


def _prior(p: float, u: int) -> float:
    return p if u == 1 else 1.0 - p


def _outcome(spec: ScmSpec, x, yz, u_m, u_y):
    m = f_m(spec, x, u_m) if spec.kind is ScmKind.MEDIATOR else None
    return f_y(spec, x, m, yz, u_y)


def _individual(spec: ScmSpec, xz, yz) -> dict[str, np.ndarray]:
    """All per-vector quantities given X_Z and Y_Z arrays.

    Enumeration order is fixed: u_x, then u_m, then u_y, each ascending.
    """
    xz = np.asarray(xz, dtype=float)
    yz = np.asarray(yz, dtype=float)
    shape = np.broadcast(xz, yz).shape
    out = {name: np.zeros(shape) for name in QUANTITIES}
    u_ms = (0, 1) if spec.kind is ScmKind.MEDIATOR else (0,)

    # Interventional and PNS terms do not involve u_x.
    for u_m in u_ms:
        pm = _prior(spec.bern_m, u_m) if spec.kind is ScmKind.MEDIATOR else 1.0
        for u_y in (0, 1):
            w = pm * _prior(spec.bern_y, u_y)
            y1 = _outcome(spec, 1, yz, u_m, u_y)
            y0 = _outcome(spec, 0, yz, u_m, u_y)
            out["p_yx"] += w * y1
            out["p_yxp"] += w * y0
            out["pns_point"] += w * ((y1 == 1) & (y0 == 0))

    cells = {(1, 1): "p_xy", (1, 0): "p_xyp", (0, 1): "p_xpy", (0, 0): "p_xpyp"}
    for u_x in (0, 1):
        px = _prior(spec.bern_x, u_x)
        x = f_x(spec, xz, u_x)
        for u_m in u_ms:
            pm = _prior(spec.bern_m, u_m) if spec.kind is ScmKind.MEDIATOR else 1.0
            for u_y in (0, 1):
                w = px * pm * _prior(spec.bern_y, u_y)
                y = _outcome(spec, x, yz, u_m, u_y)
                for (cx, cy), name in cells.items():
                    out[name] += w * ((x == cx) & (y == cy))
    return out


def _sums(spec: ScmSpec, z):
    z = np.asarray(z)
    if z.shape[-1] != N_FEATURES or not np.isin(z, (0, 1)).all():
        raise MalformedInputError("z must be 20 binary values")
    xz = dot_xz(spec, z) if spec.kind.has_xz else 0.0
    yz = dot_yz(spec, z) if spec.kind.has_yz else 0.0
    return xz, yz


def pns_point(spec: ScmSpec, z) -> float:
    """P(Y_x = 1, Y_x' = 0 | z)."""
    return float(_individual(spec, *_sums(spec, z))["pns_point"])


def interventional_point(spec: ScmSpec, z, x: int) -> float:
    q = _individual(spec, *_sums(spec, z))
    return float(q["p_yx"] if x == 1 else q["p_yxp"])


def observational_joint(spec: ScmSpec, z) -> tuple[float, float, float, float]:
    """(P(x,y), P(x,y'), P(x',y), P(x',y')) given z, never normalized by P(x)."""
    q = _individual(spec, *_sums(spec, z))
    return tuple(float(q[n]) for n in ("p_xy", "p_xyp", "p_xpy", "p_xpyp"))


def key_bits(key) -> np.ndarray:
    """Observed features z1..z15 of a subgroup key (bit i is z_{i+1})."""
    key = np.asarray(key, dtype=np.int64)
    return ((key[..., None] >> np.arange(N_OBSERVED)) & 1).astype(np.int8)


def bits_key(bits) -> int:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] != N_OBSERVED:
        raise MalformedInputError(f"a subgroup key needs {N_OBSERVED} bits")
    return int((bits << np.arange(N_OBSERVED)).sum())


def hidden_weights(spec: ScmSpec) -> np.ndarray:
    """Weight of hidden pattern j (bit k of j is z_{16+k}); sums to 1."""
    j = np.arange(1 << N_HIDDEN)
    w = np.ones(len(j))
    for k in range(N_HIDDEN):
        p = spec.bern_z[N_OBSERVED + k]
        w = w * np.where((j >> k) & 1, p, 1.0 - p)
    return w


def subgroup_weights(spec: ScmSpec) -> np.ndarray:
    """P(c) for every key, from the observed-feature priors only."""
    keys = np.arange(N_SUBGROUPS)
    w = np.ones(N_SUBGROUPS)
    for k in range(N_OBSERVED):
        p = spec.bern_z[k]
        w = w * np.where((keys >> k) & 1, p, 1.0 - p)
    return w


def hidden_completions(spec: ScmSpec, key: int) -> list[tuple[np.ndarray, float]]:
    observed = key_bits(key)
    weights = hidden_weights(spec)
    out = []
    for j, w in enumerate(weights):
        hidden = (j >> np.arange(N_HIDDEN)) & 1
        out.append((np.concatenate([observed, hidden]).astype(np.int8), float(w)))
    return out


@lru_cache(maxsize=8)
def completion_table(spec: ScmSpec) -> dict[str, np.ndarray]:
    """Per-completion quantities, each shaped (32 hidden patterns, 32768 keys).

    Full-vector index is key + (hidden << 15), so a reshape gives this layout.
    """
    xz, yz = feature_sum_tables(spec)
    q = _individual(spec, xz, yz)
    table = {}
    for name, arr in q.items():
        arr = arr.reshape(1 << N_HIDDEN, N_SUBGROUPS)
        arr.flags.writeable = False
        table[name] = arr
    return table


@dataclass(frozen=True)
class InformerRecord:
    key: int
    dist: CausalDistribution
    pns_point: float
    pns_bounds: BoundPair
    weight: float


@dataclass(frozen=True)
class InformerTable:
    """Ground truth for every subgroup, one column per field, indexed by key."""

    scm: ScmKind
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.columns["key"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def bounds(self, side: str) -> np.ndarray:
        return self.columns["pns_lb" if side == "lb" else "pns_ub"]

    def record(self, key: int) -> InformerRecord:
        c = self.columns
        dist = CausalDistribution(
            p_yx=float(c["p_yx"][key]), p_yxp=float(c["p_yxp"][key]),
            p_xy=float(c["p_xy"][key]), p_xyp=float(c["p_xyp"][key]),
            p_xpy=float(c["p_xpy"][key]), p_xpyp=float(c["p_xpyp"][key]),
        )
        bp = BoundPair(float(c["pns_lb"][key]), float(c["pns_ub"][key]), bool(c["valid"][key]))
        return InformerRecord(int(key), dist, float(c["pns_point"][key]), bp, float(c["weight"][key]))

    def __iter__(self):
        for key in range(len(self)):
            yield self.record(key)


def _aggregate(spec: ScmSpec, keys) -> dict[str, np.ndarray]:
    table = completion_table(spec)
    w = hidden_weights(spec).astype(np.longdouble)
    agg = {}
    for name in QUANTITIES:
        per = table[name][:, keys].astype(np.longdouble)
        acc = np.zeros(per.shape[1:], dtype=np.longdouble)
        for j in range(len(w)):
            acc += w[j] * per[j]
        agg[name] = acc.astype(np.float64)
    return agg


def subgroup_truth(spec: ScmSpec, key: int) -> InformerRecord:
    if not 0 <= key < N_SUBGROUPS:
        raise MalformedInputError(f"key out of range: {key}")
    agg = {k: v.item() for k, v in _aggregate(spec, np.array([key])).items()}
    lb, ub, valid = pns_bounds_arrays(
        agg["p_yx"], agg["p_yxp"], agg["p_xy"], agg["p_xyp"], agg["p_xpy"], agg["p_xpyp"]
    )
    dist = CausalDistribution(*(agg[n] for n in QUANTITIES[:6]))
    return InformerRecord(
        key=key,
        dist=dist,
        pns_point=agg["pns_point"],
        pns_bounds=BoundPair(float(lb), float(ub), bool(valid)),
        weight=float(subgroup_weights(spec)[key]),
    )


def build_informer(spec: ScmSpec) -> InformerTable:
    keys = np.arange(N_SUBGROUPS)
    agg = _aggregate(spec, keys)
    lb, ub, valid = pns_bounds_arrays(
        agg["p_yx"], agg["p_yxp"], agg["p_xy"], agg["p_xyp"], agg["p_xpy"], agg["p_xpyp"]
    )
    columns = {"key": keys, **agg, "pns_lb": lb, "pns_ub": ub, "valid": valid,
               "weight": subgroup_weights(spec)}
    return InformerTable(spec.kind, columns)


INFORMER_HEADER = (
    ["key"] + [f"z{i + 1}" for i in range(N_OBSERVED)]
    + ["p_yx", "p_yxp", "p_xy", "p_xyp", "p_xpy", "p_xpyp", "pns_point", "pns_lb", "pns_ub", "weight"]
)
_VALUE_COLS = INFORMER_HEADER[1 + N_OBSERVED:]


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def write_informer_csv(table: InformerTable, path: str | Path) -> None:
    bits = key_bits(table["key"])
    cols = [table[name] for name in _VALUE_COLS]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(INFORMER_HEADER) + "\n")
        for i, key in enumerate(table["key"]):
            row = [str(int(key))] + [str(int(b)) for b in bits[i]] + [_fmt(c[i]) for c in cols]
            fh.write(",".join(row) + "\n")


def read_informer_csv(path: str | Path, scm: ScmKind | str | None = None) -> InformerTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != INFORMER_HEADER:
            raise MalformedInputError(f"{path}: unexpected informer header")
        rows = list(reader)
    if len(rows) != N_SUBGROUPS:
        raise MalformedInputError(f"{path}: expected {N_SUBGROUPS} rows, got {len(rows)}")
    data = np.array([[float(v) for v in r] for r in rows])
    keys = data[:, 0].astype(np.int64)
    if not np.array_equal(keys, np.arange(N_SUBGROUPS)):
        raise MalformedInputError(f"{path}: keys must be 0..{N_SUBGROUPS - 1} in order")
    columns = {"key": keys}
    for j, name in enumerate(_VALUE_COLS):
        columns[name] = data[:, 1 + N_OBSERVED + j]
    columns["valid"] = columns["pns_lb"] <= columns["pns_ub"] + 1e-12
    return InformerTable(ScmKind(scm) if scm is not None else None, columns)
