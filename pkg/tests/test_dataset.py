import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnslearn import N_SUBGROUPS
from pnslearn.bounds import pns_bounds
from pnslearn.dataset import (
    LOWER,
    UPPER,
    BoundDataset,
    build_training,
    qualifying_keys,
    read_training_csv,
    train_val_split,
    write_training_csv,
)
from pnslearn.errors import EmptyDatasetError, MalformedInputError
from pnslearn.sampler import (
    EXPERIMENTAL,
    OBSERVATIONAL,
    RegimeCounts,
    SimConfig,
    estimate_distribution,
    read_counts_csv,
    sample_counts,
    write_counts_csv,
)
from pnslearn.scm import builtin_spec


def table(regime, rows):
    counts = np.zeros((N_SUBGROUPS, 4), dtype=np.int64)
    for key, row in rows.items():
        counts[key] = row
    return RegimeCounts(regime, counts)


@pytest.fixture(scope="module")
def direct_counts():
    return sample_counts(builtin_spec("direct"), SimConfig(n_obs=1_000_000, n_exp=1_000_000, seed=4))


class TestBuildTraining:
    def test_threshold_is_per_regime(self):
        obs = table(OBSERVATIONAL, {1: (10, 10, 10, 10), 2: (10, 10, 10, 10), 3: (1, 1, 1, 1)})
        exp = table(EXPERIMENTAL, {1: (10, 10, 10, 10), 2: (1, 1, 1, 1), 3: (10, 10, 10, 10)})
        assert qualifying_keys(obs, exp, 40).tolist() == [1]
        lb, ub = build_training(obs, exp, threshold=40)
        assert lb.keys.tolist() == [1] and ub.keys.tolist() == [1]

    def test_labels_match_scalar_bounds(self, direct_counts):
        obs, exp = direct_counts
        lb, ub = build_training(obs, exp, threshold=500)
        for key, lo in zip(lb.keys[:20], lb.labels[:20]):
            b = pns_bounds(estimate_distribution(obs, exp, int(key)))
            assert lo == b.lower
        for key, hi in zip(ub.keys[:20], ub.labels[:20]):
            assert hi == pns_bounds(estimate_distribution(obs, exp, int(key))).upper

    def test_empty(self):
        obs = table(OBSERVATIONAL, {1: (1, 1, 1, 1)})
        exp = table(EXPERIMENTAL, {1: (1, 1, 1, 1)})
        with pytest.raises(EmptyDatasetError):
            build_training(obs, exp, threshold=1300)

    def test_bad_threshold(self, direct_counts):
        with pytest.raises(MalformedInputError):
            build_training(*direct_counts, threshold=0)

    def test_crossed_rows_dropped_from_both(self):
        # Counts reproduce the incoherent distribution (0.8, 0.2, 0.1, 0.4, 0.4, 0.1).
        obs = table(OBSERVATIONAL, {7: (1, 4, 4, 1), 8: (3, 2, 1, 4)})
        exp = table(EXPERIMENTAL, {7: (4, 1, 1, 4), 8: (7, 3, 2, 8)})
        lb, ub = build_training(obs, exp, threshold=10)
        assert lb.keys.tolist() == [8] and ub.keys.tolist() == [8]

    def test_empty_arm_dropped(self):
        obs = table(OBSERVATIONAL, {7: (5, 5, 5, 5), 8: (5, 5, 5, 5)})
        exp = table(EXPERIMENTAL, {7: (0, 0, 10, 10), 8: (5, 5, 5, 5)})
        lb, ub = build_training(obs, exp, threshold=20)
        assert lb.keys.tolist() == [8] and ub.keys.tolist() == [8]

    def test_direct_upper_labels_near_zero(self, direct_counts):
        _, ub = build_training(*direct_counts, threshold=1300)
        assert len(ub) > 50
        assert np.std(ub.labels) < 0.02
        assert np.all(ub.labels == 0.0)

    def test_scm_recorded(self, direct_counts):
        lb, _ = build_training(*direct_counts, threshold=1300)
        assert lb.scm.value == "direct" and lb.bound_side == LOWER

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 50), min_size=8, max_size=8))
    def test_labels_lie_in_unit_interval(self, counts):
        obs = table(OBSERVATIONAL, {3: counts[:4]})
        exp = table(EXPERIMENTAL, {3: counts[4:]})
        try:
            lb, ub = build_training(obs, exp, threshold=1)
        except EmptyDatasetError:
            return
        for ds in (lb, ub):
            assert np.all((ds.labels >= 0.0) & (ds.labels <= 1.0))


class TestSplit:
    def make(self, n):
        return BoundDataset(LOWER, np.arange(n) * 3, np.linspace(0, 1, n), 1300)

    def test_sizes(self):
        train, val = train_val_split(self.make(2000), 0.1, seed=0)
        assert (len(train), len(val)) == (1800, 200)

    def test_partition(self):
        ds = self.make(2311)
        train, val = train_val_split(ds, 0.1, seed=3)
        assert len(val) == 231
        assert sorted(train.keys.tolist() + val.keys.tolist()) == ds.keys.tolist()

    def test_deterministic(self):
        a = train_val_split(self.make(500), 0.1, seed=9)
        b = train_val_split(self.make(500), 0.1, seed=9)
        c = train_val_split(self.make(500), 0.1, seed=10)
        assert np.array_equal(a[1].keys, b[1].keys)
        assert not np.array_equal(a[1].keys, c[1].keys)

    @pytest.mark.parametrize("frac", [0.0, 1.0, 0.01])
    def test_rejects_degenerate(self, frac):
        with pytest.raises(MalformedInputError):
            train_val_split(self.make(20), frac)


class TestDatasetType:
    def test_features(self):
        ds = BoundDataset(UPPER, np.array([0, 5]), np.array([0.1, 0.2]), 1)
        assert ds.features.shape == (2, 15)
        assert ds.features[1, :3].tolist() == [1.0, 0.0, 1.0]
        assert ds.rows()[1].label == 0.2

    def test_rejects_duplicates(self):
        with pytest.raises(MalformedInputError):
            BoundDataset(LOWER, np.array([1, 1]), np.array([0.1, 0.2]), 1)

    def test_rejects_bad_side(self):
        with pytest.raises(MalformedInputError):
            BoundDataset("mid", np.array([1]), np.array([0.1]), 1)


class TestCsv:
    def test_labels_survive_counts_and_training_files(self, tmp_path):
        spec = builtin_spec("confounder")
        obs, exp = sample_counts(spec, SimConfig(n_obs=500_000, n_exp=500_000, seed=2))
        write_counts_csv(obs, exp, tmp_path / "counts.csv")
        obs2, exp2 = read_counts_csv(tmp_path / "counts.csv")
        lb, ub = build_training(obs, exp, threshold=300)
        lb2, ub2 = build_training(obs2, exp2, threshold=300)
        assert np.array_equal(lb.labels, lb2.labels) and np.array_equal(ub.keys, ub2.keys)
        write_training_csv(lb, tmp_path / "train.csv")
        back = read_training_csv(tmp_path / "train.csv", LOWER)
        assert np.array_equal(back.keys, lb.keys)
        assert np.array_equal(back.labels, lb.labels)

    def test_rejects_mismatched_bits(self, tmp_path):
        path = tmp_path / "t.csv"
        header = "key," + ",".join(f"z{i}" for i in range(1, 16)) + ",label\n"
        path.write_text(header + "1," + ",".join(["0"] * 15) + ",0.5\n")
        with pytest.raises(MalformedInputError):
            read_training_csv(path, LOWER)

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("key," + ",".join(f"z{i}" for i in range(1, 16)) + ",label\n")
        with pytest.raises(EmptyDatasetError):
            read_training_csv(path, LOWER)
