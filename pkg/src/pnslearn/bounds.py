"""Tian-Pearl tight bounds for PNS, PN and PS, and point identification under monotonicity.

Notation: p_yx = P(y_x), p_yxp = P(y_{x'}); joint cells p_xy = P(x,y),
p_xyp = P(x,y'), p_xpy = P(x',y), p_xpyp = P(x',y').
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import astuple, dataclass

import numpy as np

from pnslearn.errors import MalformedInputError, UndefinedConditionalError

VALID_TOL = 1e-12
NORM_TOL = 1e-9


class QueryKind(str, enum.Enum):
    PNS = "pns"
    PN = "pn"
    PS = "ps"


@dataclass(frozen=True)
class CausalDistribution:
    p_yx: float
    p_yxp: float
    p_xy: float
    p_xyp: float
    p_xpy: float
    p_xpyp: float

    @property
    def p_y(self) -> float:
        return self.p_xy + self.p_xpy

    def check(self) -> None:
        values = astuple(self)
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise MalformedInputError(f"probabilities must lie in [0, 1]: {values}")
        total = self.p_xy + self.p_xyp + self.p_xpy + self.p_xpyp
        if abs(total - 1.0) > NORM_TOL:
            raise MalformedInputError(f"joint P(X, Y) sums to {total!r}, not 1")


@dataclass(frozen=True)
class BoundPair:
    """`valid` means lower <= upper + 1e-12; crossed pairs keep their raw clamped values."""

    lower: float
    upper: float
    valid: bool


def _finish(lower, upper):
    lower = np.clip(lower, 0.0, 1.0)
    upper = np.clip(upper, 0.0, 1.0)
    return lower, upper, lower <= upper + VALID_TOL


def pns_bounds_arrays(p_yx, p_yxp, p_xy, p_xyp, p_xpy, p_xpyp):
    """Vectorized PNS bounds; returns (lower, upper, valid) without input checks.

    Crossed bounds are reported with valid = False rather than raised.
    """
    p_yx, p_yxp, p_xy, p_xyp, p_xpy, p_xpyp = (
        np.asarray(v, dtype=float) for v in (p_yx, p_yxp, p_xy, p_xyp, p_xpy, p_xpyp)
    )
    p_y = p_xy + p_xpy
    lower = np.maximum.reduce([np.zeros_like(p_y), p_yx - p_yxp, p_y - p_yxp, p_yx - p_y])
    upper = np.minimum.reduce([
        p_yx + np.zeros_like(p_y),
        1.0 - p_yxp,
        p_xy + p_xpyp,
        p_yx - p_yxp + p_xyp + p_xpy,
    ])
    return _finish(lower, upper)


def pns_bounds(d: CausalDistribution) -> BoundPair:
    d.check()
    lower, upper, valid = pns_bounds_arrays(*astuple(d))
    return BoundPair(float(lower), float(upper), bool(valid))


def pn_bounds(d: CausalDistribution) -> BoundPair:
    d.check()
    if d.p_xy == 0.0:
        raise UndefinedConditionalError("PN bounds need P(x, y) > 0")
    lower = max(0.0, (d.p_y - d.p_yxp) / d.p_xy)
    upper = min(1.0, ((1.0 - d.p_yxp) - d.p_xpyp) / d.p_xy)
    lower, upper, valid = _finish(lower, upper)
    return BoundPair(float(lower), float(upper), bool(valid))


def ps_bounds(d: CausalDistribution) -> BoundPair:
    d.check()
    if d.p_xpyp == 0.0:
        raise UndefinedConditionalError("PS bounds need P(x', y') > 0")
    p_yp = 1.0 - d.p_y
    p_ypx = 1.0 - d.p_yx
    lower = max(0.0, (p_yp - p_ypx) / d.p_xpyp)
    upper = min(1.0, (d.p_yx - d.p_xy) / d.p_xpyp)
    lower, upper, valid = _finish(lower, upper)
    return BoundPair(float(lower), float(upper), bool(valid))


def query_bounds(d: CausalDistribution, kind: QueryKind | str) -> BoundPair:
    kind = QueryKind(kind)
    return {QueryKind.PNS: pns_bounds, QueryKind.PN: pn_bounds, QueryKind.PS: ps_bounds}[kind](d)


def identify_monotone(d: CausalDistribution) -> tuple[float, float, float]:
    """(PNS, PN, PS) point values, valid only when Y is monotone in X.

    The caller vouches for monotonicity; it cannot be checked from data.
    """
    d.check()
    if d.p_xy == 0.0:
        raise UndefinedConditionalError("PN needs P(x, y) > 0")
    if d.p_xpyp == 0.0:
        raise UndefinedConditionalError("PS needs P(x', y') > 0")
    pns = d.p_yx - d.p_yxp
    pn = (d.p_y - d.p_yxp) / d.p_xy
    ps = (d.p_yx - d.p_y) / d.p_xpyp
    return pns, pn, ps


def is_monotone(spec, z) -> bool:
    """True iff no exogenous assignment gives Y_x = 0 together with Y_x' = 1."""
    from pnslearn.scm import ScmKind, dot_yz, f_m, f_y

    yz = float(dot_yz(spec, z)) if spec.kind.has_yz else 0.0
    mediator = spec.kind is ScmKind.MEDIATOR
    for u_m, u_y in itertools.product((0, 1), (0, 1)):
        if not mediator and u_m == 1:
            continue
        m1 = f_m(spec, 1, u_m) if mediator else None
        m0 = f_m(spec, 0, u_m) if mediator else None
        y1 = f_y(spec, 1, m1, yz, u_y)
        y0 = f_y(spec, 0, m0, yz, u_y)
        if y1 == 0 and y0 == 1:
            return False
    return True
