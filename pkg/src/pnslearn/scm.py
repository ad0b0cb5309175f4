"""The four binary SCMs: structural functions, coefficients and exogenous priors.

Every exogenous variable is Bernoulli, and every threshold is a strict
inequality, so a value sitting exactly on a threshold maps to 0.

Structural functions accept scalars or numpy arrays and broadcast; they
return int8 arrays (0-d for scalar input).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from pnslearn import N_FEATURES, N_HIDDEN, N_OBSERVED
from pnslearn.errors import MalformedInputError, UnsupportedForKindError


class ScmKind(str, enum.Enum):
    CONFOUNDER = "confounder"
    OUTCOME_COVARIATE = "outcome-covariate"
    DIRECT = "direct"
    MEDIATOR = "mediator"

    @property
    def has_xz(self) -> bool:
        return self in (ScmKind.CONFOUNDER, ScmKind.MEDIATOR)

    @property
    def has_yz(self) -> bool:
        return self is not ScmKind.DIRECT


XZ_COEFFS = (
    0.259223510143, -0.658140989167, -0.75025831768, 0.162906462426,
    0.652023463285, -0.0892939586541, 0.421469107769, -0.443129684766,
    0.802624388789, -0.225740978499, 0.716621631717, 0.0650682260309,
    -0.220690334026, 0.156355773665, -0.50693672491, -0.707060278115,
    0.418812816935, -0.0822118703986, 0.769299853833, -0.511585391002,
)

YZ_COEFFS = (
    -0.792867111918, 0.759967136147, 0.55437722369, 0.503970540409,
    -0.527187144651, 0.378619988091, 0.269255196301, 0.671597043594,
    0.396010142274, 0.325228576643, 0.657808327574, 0.801655023993,
    0.0907679484097, -0.0713852594543, -0.0691046005285, -0.222582013343,
    -0.848408031595, -0.584285069026, -0.324874831799, 0.625621583197,
)

BERN_Z = (
    0.352913861526, 0.460995855543, 0.331702473392, 0.885505026779,
    0.017026872706, 0.380772701708, 0.028092602705, 0.220819399962,
    0.617742227477, 0.981975046713, 0.142042291381, 0.833602592350,
    0.882938907115, 0.542143191999, 0.085023436884, 0.645357252864,
    0.863787135134, 0.460539711624, 0.314014079207, 0.685879388218,
)


@dataclass(frozen=True)
class ScmSpec:
    """Constants of one SCM. Fields a kind does not use are None."""

    kind: ScmKind
    bern_z: tuple[float, ...]
    bern_x: float
    bern_y: float
    xz_coeffs: tuple[float, ...] | None = None
    yz_coeffs: tuple[float, ...] | None = None
    bern_m: float | None = None
    c_y: float | None = None
    c_m: float | None = None
    c_yx: float | None = None
    c_ym: float | None = None
    n_observed: int = N_OBSERVED
    n_hidden: int = N_HIDDEN

    def __post_init__(self):
        object.__setattr__(self, "kind", ScmKind(self.kind))
        for name in ("bern_z", "xz_coeffs", "yz_coeffs"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(float(v) for v in value)
                if len(value) != N_FEATURES:
                    raise MalformedInputError(f"{name} must have {N_FEATURES} entries, got {len(value)}")
                object.__setattr__(self, name, value)
        probs = list(self.bern_z) + [self.bern_x, self.bern_y]
        if self.bern_m is not None:
            probs.append(self.bern_m)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise MalformedInputError("Bernoulli parameters must lie in [0, 1]")
        if self.n_observed + self.n_hidden != N_FEATURES:
            raise MalformedInputError("n_observed + n_hidden must equal 20")

        kind = self.kind
        missing = []
        if kind.has_xz and self.xz_coeffs is None:
            missing.append("xz_coeffs")
        if kind.has_yz and self.yz_coeffs is None:
            missing.append("yz_coeffs")
        if kind is ScmKind.MEDIATOR:
            missing += [n for n in ("bern_m", "c_m", "c_yx", "c_ym") if getattr(self, n) is None]
        elif self.c_y is None:
            missing.append("c_y")
        if missing:
            raise MalformedInputError(f"{kind.value} SCM is missing {', '.join(missing)}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for f in fields(self):
            if f.name == "kind":
                continue
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScmSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise MalformedInputError(f"unknown SCM keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        return cls.from_dict(json.loads(text))


def builtin_spec(kind: ScmKind | str) -> ScmSpec:
    kind = ScmKind(kind)
    if kind is ScmKind.MEDIATOR:
        return ScmSpec(
            kind=kind,
            bern_z=BERN_Z,
            bern_x=0.698319142733,
            bern_y=0.502331024722,
            bern_m=0.402331024722,
            xz_coeffs=XZ_COEFFS,
            yz_coeffs=YZ_COEFFS,
            c_m=-0.74234511918,
            c_ym=0.24235642321,
            c_yx=0.87953605542,
        )
    return ScmSpec(
        kind=kind,
        bern_z=BERN_Z,
        bern_x=0.601680857267,
        bern_y=0.497668975278,
        xz_coeffs=XZ_COEFFS if kind.has_xz else None,
        yz_coeffs=YZ_COEFFS if kind.has_yz else None,
        c_y=-0.77953605542,
    )


def load_spec(source: str | Path) -> ScmSpec:
    """Resolve a preset name or a path to a JSON SCM document."""
    source = str(source)
    try:
        return builtin_spec(source)
    except ValueError:
        pass
    path = Path(source)
    if not path.is_file():
        raise MalformedInputError(f"not a preset name or SCM file: {source!r}")
    return ScmSpec.from_json(path.read_text())


def _weighted_sum(coeffs, z):
    # Sequential accumulation in feature order, so scalar and vectorized
    # callers produce bit-identical sums.
    z = np.asarray(z)
    if z.shape[-1] != N_FEATURES:
        raise MalformedInputError(f"feature vector must have {N_FEATURES} entries")
    acc = np.zeros(z.shape[:-1])
    for i, c in enumerate(coeffs):
        acc = acc + z[..., i] * c
    return acc


def dot_xz(spec: ScmSpec, z) -> np.ndarray:
    if spec.xz_coeffs is None:
        raise UnsupportedForKindError(f"{spec.kind.value} SCM has no X_Z term")
    return _weighted_sum(spec.xz_coeffs, z)


def dot_yz(spec: ScmSpec, z) -> np.ndarray:
    if spec.yz_coeffs is None:
        raise UnsupportedForKindError(f"{spec.kind.value} SCM has no Y_Z term")
    return _weighted_sum(spec.yz_coeffs, z)


def f_x(spec: ScmSpec, x_z, u_x) -> np.ndarray:
    if spec.kind.has_xz:
        v = np.add(x_z, u_x)
    else:
        v = np.asarray(u_x, dtype=float)
    return (v > 0.5).astype(np.int8)


def f_m(spec: ScmSpec, x, u_m) -> np.ndarray:
    if spec.kind is not ScmKind.MEDIATOR:
        raise UnsupportedForKindError(f"{spec.kind.value} SCM has no mediator")
    v = np.multiply(spec.c_m, x) + u_m
    return (v > 0.5).astype(np.int8)


def f_y(spec: ScmSpec, x, m, y_z, u_y) -> np.ndarray:
    kind = spec.kind
    if kind is ScmKind.MEDIATOR:
        if m is None:
            raise MalformedInputError("mediator SCM needs m")
        v = np.multiply(spec.c_yx, x) + np.multiply(spec.c_ym, m) + y_z + u_y
        return (v > 2.0).astype(np.int8)
    if m is not None:
        raise MalformedInputError(f"{kind.value} SCM takes no mediator value")
    if kind is ScmKind.DIRECT:
        v = np.multiply(spec.c_y, x) + u_y
        return (v > 0.7).astype(np.int8)
    v = np.multiply(spec.c_y, x) + y_z + u_y
    return (((v > 0.0) & (v < 1.0)) | ((v > 1.0) & (v < 2.0))).astype(np.int8)


def all_feature_vectors() -> np.ndarray:
    """All 2**20 full feature vectors; row index i has z_{k+1} = bit k of i."""
    idx = np.arange(1 << N_FEATURES, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(N_FEATURES)) & 1
    return bits.astype(np.int8)


@lru_cache(maxsize=8)
def feature_sum_tables(spec: ScmSpec) -> tuple[np.ndarray, np.ndarray]:
    """X_Z and Y_Z for every full feature vector (zeros where a kind lacks the term)."""
    z = all_feature_vectors()
    zeros = np.zeros(len(z))
    xz = dot_xz(spec, z) if spec.kind.has_xz else zeros
    yz = dot_yz(spec, z) if spec.kind.has_yz else zeros
    xz.flags.writeable = False
    yz.flags.writeable = False
    return xz, yz
