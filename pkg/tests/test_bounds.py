import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnslearn.bounds import (
    BoundPair,
    CausalDistribution,
    QueryKind,
    identify_monotone,
    is_monotone,
    pn_bounds,
    pns_bounds,
    pns_bounds_arrays,
    ps_bounds,
    query_bounds,
)
from pnslearn.errors import MalformedInputError, UndefinedConditionalError
from pnslearn.scm import ScmSpec, builtin_spec

from reference import lp_pns_range, response_type_data

PERFECT = CausalDistribution(1.0, 0.0, 0.5, 0.0, 0.0, 0.5)


def spec_with(**changes):
    d = builtin_spec("confounder").to_dict()
    d["yz_coeffs"] = [0.0] * 20
    d.update(changes)
    return ScmSpec.from_dict(d)


def q_from_weights(weights):
    q = np.asarray(weights, dtype=float)
    return q / q.sum()


distributions = st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8).filter(lambda w: sum(w) > 1e-3)


class TestPnsBounds:
    def test_zero_effect_upper(self):
        b = pns_bounds(CausalDistribution(0.0, 0.4, 0.1, 0.3, 0.3, 0.3))
        assert (b.lower, b.upper) == (0.0, 0.0)

    def test_perfect_treatment(self):
        assert pns_bounds(PERFECT) == BoundPair(1.0, 1.0, True)

    def test_worked_example(self):
        # lower terms {0, 0.5, 0.2, 0.3}; upper terms {0.7, 0.8, 0.7, 0.8}
        b = pns_bounds(CausalDistribution(0.7, 0.2, 0.3, 0.2, 0.1, 0.4))
        assert b.lower == pytest.approx(0.5, abs=1e-15)
        assert b.upper == pytest.approx(0.7, abs=1e-15)
        assert b.valid

    def test_rejects_unnormalized_joint(self):
        with pytest.raises(MalformedInputError):
            pns_bounds(CausalDistribution(0.5, 0.5, 0.3, 0.3, 0.3, 0.3))

    def test_rejects_out_of_range(self):
        with pytest.raises(MalformedInputError):
            pns_bounds(CausalDistribution(1.2, 0.5, 0.25, 0.25, 0.25, 0.25))

    def test_crossing_is_flagged_not_raised(self):
        # Incoherent noisy estimates: lower term P(y_x) - P(y_x') = 0.6 exceeds upper term P(x,y) + P(x',y') = 0.2.
        b = pns_bounds(CausalDistribution(0.8, 0.2, 0.1, 0.4, 0.4, 0.1))
        assert not b.valid
        assert b.lower > b.upper

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = q_from_weights(rng.random(8))
            data, _ = response_type_data(q)
            lo, hi, ok = pns_bounds_arrays(*data)
            b = pns_bounds(CausalDistribution(*data))
            assert (float(lo), float(hi), bool(ok)) == (b.lower, b.upper, b.valid)

    @settings(max_examples=300, deadline=None)
    @given(distributions)
    def test_coherent_data_gives_valid_bounds(self, weights):
        data, pns = response_type_data(q_from_weights(weights))
        b = pns_bounds(CausalDistribution(*np.clip(data, 0.0, 1.0)))
        assert b.valid
        # Tight bounds can cross by an ulp; validity allows 1e-12.
        assert 0.0 <= b.lower <= b.upper + 1e-12
        assert b.upper <= 1.0
        assert b.lower - 1e-9 <= pns <= b.upper + 1e-9

    @settings(max_examples=200, deadline=None)
    @given(distributions)
    def test_matches_lp_oracle(self, weights):
        data, _ = response_type_data(q_from_weights(weights))
        lo, hi = lp_pns_range(data)
        b = pns_bounds(CausalDistribution(*np.clip(data, 0.0, 1.0)))
        assert b.lower == pytest.approx(lo, abs=1e-9)
        assert b.upper == pytest.approx(hi, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(distributions)
    def test_relabeling_symmetry(self, weights):
        """Swapping x<->x' and y<->y' turns PNS into P(y'_x', y_x) = P(y_x, y'_x'): bounds must agree."""
        q = q_from_weights(weights).reshape(2, 4)
        # Relabeling X swaps the x rows; relabeling both maps helped->helped, hurt->hurt, never<->always.
        q_rel = q[::-1][:, [1, 0, 2, 3]]
        data, pns = response_type_data(q)
        data_rel, pns_rel = response_type_data(q_rel)
        assert pns == pytest.approx(pns_rel, abs=1e-12)
        a = pns_bounds(CausalDistribution(*np.clip(data, 0, 1)))
        b = pns_bounds(CausalDistribution(*np.clip(data_rel, 0, 1)))
        assert a.lower == pytest.approx(b.lower, abs=1e-12)
        assert a.upper == pytest.approx(b.upper, abs=1e-12)


class TestPnPs:
    def test_pn_zero_numerator(self):
        d = CausalDistribution(0.6, 0.4, 0.3, 0.2, 0.1, 0.4)  # P(y) = 0.4 = P(y_x')
        assert pn_bounds(d).lower == 0.0

    def test_pn_perfect(self):
        b = pn_bounds(PERFECT)
        assert (b.lower, b.upper) == (1.0, 1.0)

    def test_pn_undefined(self):
        with pytest.raises(UndefinedConditionalError):
            pn_bounds(CausalDistribution(0.5, 0.5, 0.0, 0.5, 0.25, 0.25))

    def test_ps_zero_numerator(self):
        d = CausalDistribution(0.6, 0.3, 0.3, 0.2, 0.3, 0.2)  # P(y') = 0.4 = P(y'_x)
        assert ps_bounds(d).lower == 0.0

    def test_ps_perfect(self):
        b = ps_bounds(PERFECT)
        assert (b.lower, b.upper) == (1.0, 1.0)

    def test_ps_undefined(self):
        with pytest.raises(UndefinedConditionalError):
            ps_bounds(CausalDistribution(0.5, 0.5, 0.25, 0.25, 0.5, 0.0))

    def test_query_dispatch(self):
        assert query_bounds(PERFECT, "pn") == pn_bounds(PERFECT)
        assert query_bounds(PERFECT, QueryKind.PS) == ps_bounds(PERFECT)

    @settings(max_examples=200, deadline=None)
    @given(distributions)
    def test_pn_ps_contain_truth(self, weights):
        q = q_from_weights(weights).reshape(2, 4)
        data, _ = response_type_data(q)
        d = CausalDistribution(*np.clip(data, 0, 1))
        # PN = P(y'_x' | x, y): treated units with y=1 are {always, helped}; of these only helped has y_x' = 0.
        if d.p_xy > 1e-6:
            pn = q[1, 2] / d.p_xy
            b = pn_bounds(d)
            assert b.lower - 1e-9 <= pn <= b.upper + 1e-9
        # PS = P(y_x | x', y'): untreated units with y=0 are {never, helped}; helped has y_x = 1.
        if d.p_xpyp > 1e-6:
            ps = q[0, 2] / d.p_xpyp
            b = ps_bounds(d)
            assert b.lower - 1e-9 <= ps <= b.upper + 1e-9


class TestMonotone:
    def test_identify_perfect(self):
        assert identify_monotone(PERFECT) == (1.0, 1.0, 1.0)

    def test_identify_no_effect(self):
        assert identify_monotone(CausalDistribution(0.4, 0.4, 0.2, 0.3, 0.2, 0.3))[0] == 0.0

    def test_identify_worked_example(self):
        pns, pn, ps = identify_monotone(CausalDistribution(0.7, 0.2, 0.35, 0.15, 0.1, 0.4))
        assert pns == pytest.approx(0.5, abs=1e-15)
        assert pn == pytest.approx((0.45 - 0.2) / 0.35, abs=1e-15)
        assert ps == pytest.approx((0.7 - 0.45) / 0.4, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6).filter(lambda w: sum(w) > 1e-3))
    def test_monotone_point_inside_bounds(self, weights):
        # Monotone populations carry no "hurt" type (column 3).
        w = np.array(weights[:3] + [0.0] + weights[3:] + [0.0])
        q = q_from_weights(w.reshape(2, 4)[[0, 1]].ravel())
        data, pns = response_type_data(q)
        d = CausalDistribution(*np.clip(data, 0, 1))
        b = pns_bounds(d)
        point = d.p_yx - d.p_yxp
        assert point == pytest.approx(pns, abs=1e-12)
        assert b.lower - 1e-9 <= point <= b.upper + 1e-9

    def test_is_monotone_identity(self):
        assert is_monotone(spec_with(c_y=0.5), np.zeros(20))

    def test_is_monotone_constant(self):
        assert is_monotone(spec_with(c_y=0.0), np.zeros(20))

    def test_direct_not_monotone(self):
        assert not is_monotone(builtin_spec("direct"), np.zeros(20))
