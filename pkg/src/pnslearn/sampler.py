"""Monte Carlo observational and experimental samples, kept as per-subgroup counts.

No rows are stored: each regime is a (32768, 4) integer table of
(n_xy, n_xyp, n_xpy, n_xpyp) per subgroup key.

Randomness: numpy PCG64 streams. The root SeedSequence(seed) spawns one child
per regime (observational first), and each regime child spawns one child per
shard. Within a shard, samples are drawn in chunks; per chunk the draw order is
U_Z1..U_Z20 (one vector each), then U_X (or the treatment coin in the
experimental regime), then U_M (mediator only), then U_Y. A Bernoulli(p) draw is
`u < p` on a 53-bit uniform double. Shard tables merge by addition, so results
depend on (seed, shards, chunk_size) but not on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pnslearn import N_FEATURES, N_SUBGROUPS
from pnslearn.bounds import CausalDistribution
from pnslearn.errors import InsufficientDataError, MalformedInputError
from pnslearn.scm import ScmKind, ScmSpec, f_m, f_x, f_y, feature_sum_tables

OBSERVATIONAL = "observational"
EXPERIMENTAL = "experimental"
CELLS = ("n_xy", "n_xyp", "n_xpy", "n_xpyp")


@dataclass(frozen=True)
class SimConfig:
    n_obs: int = 10_000_000
    n_exp: int = 10_000_000
    seed: int = 0
    treatment_prob: float = 0.5
    shards: int = 8
    chunk_size: int = 1 << 20
    workers: int = 1

    def __post_init__(self):
        if self.n_obs <= 0 or self.n_exp <= 0:
            raise MalformedInputError("sample counts must be positive")
        if not 0.0 < self.treatment_prob < 1.0:
            raise MalformedInputError("treatment_prob must lie in (0, 1)")
        if self.shards < 1 or self.chunk_size < 1 or self.workers < 1:
            raise MalformedInputError("shards, chunk_size and workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise MalformedInputError("seed must be a 64-bit unsigned integer")


@dataclass
class RegimeCounts:
    regime: str
    counts: np.ndarray  # (32768, 4) int64, columns in CELLS order
    scm: ScmKind | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def subgroup_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, RegimeCounts)
            and self.regime == other.regime
            and np.array_equal(self.counts, other.counts)
        )


def _shard_sizes(n: int, shards: int) -> list[int]:
    base, extra = divmod(n, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def _run_shard(spec: ScmSpec, regime: str, n: int, seed_seq, chunk_size: int, treatment_prob: float):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    xz_table, yz_table = feature_sum_tables(spec)
    bern_z = spec.bern_z
    mediator = spec.kind is ScmKind.MEDIATOR
    counts = np.zeros(N_SUBGROUPS * 4, dtype=np.int64)
    done = 0
    while done < n:
        m = min(chunk_size, n - done)
        idx = np.zeros(m, dtype=np.int64)
        for i in range(N_FEATURES):
            idx |= (rng.random(m) < bern_z[i]).astype(np.int64) << i
        yz = yz_table[idx]
        if regime == OBSERVATIONAL:
            u_x = (rng.random(m) < spec.bern_x).astype(np.int8)
            x = f_x(spec, xz_table[idx], u_x)
        else:
            x = (rng.random(m) < treatment_prob).astype(np.int8)
        if mediator:
            u_m = (rng.random(m) < spec.bern_m).astype(np.int8)
            med = f_m(spec, x, u_m)
        else:
            med = None
        u_y = (rng.random(m) < spec.bern_y).astype(np.int8)
        y = f_y(spec, x, med, yz, u_y)
        cell = (1 - x.astype(np.int64)) * 2 + (1 - y.astype(np.int64))
        key = idx & (N_SUBGROUPS - 1)
        counts += np.bincount(key * 4 + cell, minlength=N_SUBGROUPS * 4)
        done += m
    return counts


def _run_regime(spec, regime, n, seed_seq, cfg: SimConfig) -> RegimeCounts:
    children = seed_seq.spawn(cfg.shards)
    sizes = _shard_sizes(n, cfg.shards)
    jobs = [(spec, regime, size, ss, cfg.chunk_size, cfg.treatment_prob) for size, ss in zip(sizes, children)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(lambda a: _run_shard(*a), jobs))
    else:
        parts = [_run_shard(*a) for a in jobs]
    total = np.zeros(N_SUBGROUPS * 4, dtype=np.int64)
    for part in parts:
        total += part
    return RegimeCounts(regime, total.reshape(N_SUBGROUPS, 4), spec.kind)


def sample_counts(spec: ScmSpec, cfg: SimConfig) -> tuple[RegimeCounts, RegimeCounts]:
    """Simulate both regimes; returns (observational, experimental)."""
    obs_seq, exp_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    obs = _run_regime(spec, OBSERVATIONAL, cfg.n_obs, obs_seq, cfg)
    exp = _run_regime(spec, EXPERIMENTAL, cfg.n_exp, exp_seq, cfg)
    return obs, exp


def estimate_arrays(obs: RegimeCounts, exp: RegimeCounts) -> dict[str, np.ndarray]:
    """Empirical distribution for every key; NaN wherever a denominator is zero."""
    e = exp.counts.astype(float)
    o = obs.counts.astype(float)
    n_x = e[:, 0] + e[:, 1]
    n_xp = e[:, 2] + e[:, 3]
    n_obs = o.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = {
            "p_yx": e[:, 0] / n_x,
            "p_yxp": e[:, 2] / n_xp,
            "p_xy": o[:, 0] / n_obs,
            "p_xyp": o[:, 1] / n_obs,
            "p_xpy": o[:, 2] / n_obs,
            "p_xpyp": o[:, 3] / n_obs,
        }
    return out


def estimate_distribution(obs: RegimeCounts, exp: RegimeCounts, key: int) -> CausalDistribution:
    if not 0 <= key < N_SUBGROUPS:
        raise MalformedInputError(f"key out of range: {key}")
    e = exp.counts[key]
    o = obs.counts[key]
    n_x, n_xp, n_o = int(e[0] + e[1]), int(e[2] + e[3]), int(o.sum())
    if n_x == 0 or n_xp == 0:
        raise InsufficientDataError(f"subgroup {key}: an experimental arm is empty")
    if n_o == 0:
        raise InsufficientDataError(f"subgroup {key}: no observational samples")
    return CausalDistribution(
        p_yx=e[0] / n_x,
        p_yxp=e[2] / n_xp,
        p_xy=o[0] / n_o,
        p_xyp=o[1] / n_o,
        p_xpy=o[2] / n_o,
        p_xpyp=o[3] / n_o,
    )


COUNTS_HEADER = ["regime", "key", *CELLS]


def write_counts_csv(obs: RegimeCounts, exp: RegimeCounts, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COUNTS_HEADER) + "\n")
        for table in (obs, exp):
            for key, row in enumerate(table.counts):
                fh.write(f"{table.regime},{key},{row[0]},{row[1]},{row[2]},{row[3]}\n")


def read_counts_csv(path: str | Path, scm: ScmKind | str | None = None) -> tuple[RegimeCounts, RegimeCounts]:
    tables = {r: np.zeros((N_SUBGROUPS, 4), dtype=np.int64) for r in (OBSERVATIONAL, EXPERIMENTAL)}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != COUNTS_HEADER:
            raise MalformedInputError(f"{path}: unexpected counts header {header}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 6 or parts[0] not in tables:
                raise MalformedInputError(f"{path}:{lineno}: malformed row")
            key = int(parts[1])
            if not 0 <= key < N_SUBGROUPS:
                raise MalformedInputError(f"{path}:{lineno}: key out of range")
            values = [int(v) for v in parts[2:]]
            if min(values) < 0:
                raise MalformedInputError(f"{path}:{lineno}: negative count")
            tables[parts[0]][key] += values
    kind = ScmKind(scm) if scm is not None else None
    return (RegimeCounts(OBSERVATIONAL, tables[OBSERVATIONAL], kind),
            RegimeCounts(EXPERIMENTAL, tables[EXPERIMENTAL], kind))
