import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muoppo.data import (
    BagCollection,
    BagSpec,
    LabeledPool,
    MulticlassPool,
    apply_size_shift,
    even_priors,
    gaussian_pool,
    load_pool,
    make_binary_task,
    positive_count,
    sample_bags,
    write_csv_pool,
)
from muoppo.errors import CapacityError, InvalidPartitionError, InvalidSpecError, ParseError


def toy_multiclass():
    ids = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 1])
    return MulticlassPool(np.arange(20.0).reshape(10, 2), ids, "toy")


class TestBinaryTask:
    def test_counts(self):
        pool = make_binary_task(toy_multiclass(), {0})
        assert (pool.labels == 1).sum() == 3
        assert (pool.labels == -1).sum() == 7
        assert pool.positive_fraction == pytest.approx(0.3)

    def test_full_partition_rejected(self):
        with pytest.raises(InvalidPartitionError):
            make_binary_task(toy_multiclass(), {0, 1, 2})

    def test_empty_partition_rejected(self):
        with pytest.raises(InvalidPartitionError):
            make_binary_task(toy_multiclass(), set())


class TestEvenPriors:
    def test_default_grid(self):
        p = even_priors(10, 0.1, 0.9)
        assert p[0] == pytest.approx(0.1) and p[-1] == pytest.approx(0.9)
        assert np.diff(p) == pytest.approx(np.full(9, 0.8 / 9))
        assert p[1] == pytest.approx(0.1889, abs=1e-4)

    def test_endpoints(self):
        assert even_priors(2, 0.1, 0.9) == pytest.approx([0.1, 0.9])
        assert even_priors(5, 0.0, 1.0) == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])

    def test_m_too_small(self):
        with pytest.raises(InvalidSpecError):
            even_priors(1, 0.1, 0.9)


class TestBagSpec:
    def test_pair_relation_enforced(self):
        with pytest.raises(InvalidSpecError):
            BagSpec([0.2, 0.8], [10, 10], (0, 1))

    def test_equal_priors_rejected(self):
        with pytest.raises(InvalidSpecError):
            BagSpec([0.5, 0.5], [10, 10], (0, 1))

    def test_pair_distinct(self):
        with pytest.raises(InvalidSpecError):
            BagSpec([0.2, 0.8], [10, 10], (1, 1))


@pytest.fixture(scope="module")
def pool():
    return gaussian_pool(3000, 2, 4.0, seed=1)


class TestSampleBags:
    def test_counts_and_rho(self, pool):
        spec = BagSpec.even(10, 0.1, 0.9, 300, seed=4)
        bags = sample_bags(pool, spec)
        assert bags.rho.sum() == pytest.approx(1.0, abs=1e-12)
        for j, h in enumerate(bags.hidden_labels):
            assert bags.bags[j].shape == (300, 2)
            assert abs((h == 1).mean() - spec.priors[j]) <= 0.5 / 300 + 1e-12
        assert bags.pair == (9, 0)

    def test_pure_bag(self, pool):
        bags = sample_bags(pool, BagSpec([1.0, 0.0], [50, 50], (0, 1)))
        assert np.all(bags.hidden_labels[0] == 1)
        assert np.all(bags.hidden_labels[1] == -1)

    def test_deterministic(self, pool):
        spec = BagSpec.even(4, 0.1, 0.9, 100, seed=9)
        a, b = sample_bags(pool, spec), sample_bags(pool, spec)
        for x, y in zip(a.bags, b.bags):
            assert x.tobytes() == y.tobytes()

    def test_seed_preserves_counts(self, pool):
        a = sample_bags(pool, BagSpec.even(4, 0.1, 0.9, 101, seed=1))
        b = sample_bags(pool, BagSpec.even(4, 0.1, 0.9, 101, seed=2))
        assert [int((h == 1).sum()) for h in a.hidden_labels] == [int((h == 1).sum()) for h in b.hidden_labels]
        assert not np.array_equal(a.bags[0], b.bags[0])

    def test_no_duplicates_within_bag(self, pool):
        bags = sample_bags(pool, BagSpec.even(3, 0.1, 0.9, 500, seed=0))
        for x in bags.bags:
            assert np.unique(x, axis=0).shape[0] == x.shape[0]

    def test_capacity(self):
        small = LabeledPool(np.zeros((4, 1)), [1, 1, -1, -1])
        with pytest.raises(CapacityError):
            sample_bags(small, BagSpec([0.9, 0.1], [10, 10], (0, 1)))

    @given(st.floats(0, 1), st.integers(1, 500))
    def test_rounding_bound(self, p, n):
        assert abs(positive_count(p, n) / n - p) <= 0.5 / n + 1e-12

    def test_rounding_ties_up(self):
        assert positive_count(0.5, 3) == 2
        assert positive_count(0.25, 2) == 1


class TestSizeShift:
    def test_identity(self):
        spec = BagSpec.even(10, 0.1, 0.9, 200)
        assert apply_size_shift(spec, 1.0).sizes == spec.sizes

    def test_half_scaled(self):
        spec = BagSpec.even(10, 0.1, 0.9, 200)
        out = apply_size_shift(spec, 0.2, "half-scaled", seed=3)
        assert sorted(out.sizes) == [40] * 5 + [200] * 5
        assert out.priors == spec.priors

    def test_floor_at_one(self):
        spec = BagSpec.even(4, 0.1, 0.9, 3)
        assert min(apply_size_shift(spec, 0.0, "half-scaled", seed=1).sizes) == 1

    @settings(max_examples=30)
    @given(st.integers(2, 12), st.integers(0, 1000), st.floats(0.0, 0.99))
    def test_random_simplex_conserves(self, m, seed, tau):
        spec = BagSpec(even_priors(m, 0.1, 0.9), [50] * m, (m - 1, 0))
        out = apply_size_shift(spec, tau, "random-simplex", seed=seed)
        assert sum(out.sizes) == 50 * m
        assert min(out.sizes) >= 1

    def test_random_simplex_uniform_over_compositions(self):
        # compositions of 5 into 3 positive parts: C(4,2) = 6, each should appear ~1/6 of the time
        spec = BagSpec([0.9, 0.5, 0.1], [1, 1, 3], (0, 2))
        counts = {}
        for s in range(3000):
            key = tuple(apply_size_shift(spec, 0.5, "random-simplex", seed=s).sizes)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        assert all(abs(c / 3000 - 1 / 6) < 0.03 for c in counts.values())


class TestLoadPool:
    def test_csv(self, tmp_path):
        p = tmp_path / "pool.csv"
        p.write_text("label,f1,f2\n+1,0.1,0.2\n-1,0.3,0.4\n1,0.5,0.6\n-1,0.7,0.8\n")
        pool = load_pool(p, "csv")
        assert pool.features.shape == (4, 2)
        assert list(pool.labels) == [1, -1, 1, -1]

    def test_csv_bad_label(self, tmp_path):
        p = tmp_path / "pool.csv"
        p.write_text("label,f1\n+1,0.1\n0,0.2\n")
        with pytest.raises(ParseError) as err:
            load_pool(p, "csv")
        assert err.value.row == 2

    def test_csv_bad_header(self, tmp_path):
        p = tmp_path / "pool.csv"
        p.write_text("y,f1\n+1,0.1\n")
        with pytest.raises(ParseError):
            load_pool(p, "csv")

    def test_csv_length_mismatch(self, tmp_path):
        p = tmp_path / "pool.csv"
        p.write_text("label,f1,f2\n+1,0.1\n")
        with pytest.raises(ParseError) as err:
            load_pool(p, "csv")
        assert err.value.row == 1

    def test_csv_round_trip(self, tmp_path):
        pool = gaussian_pool(5, 3, seed=2)
        write_csv_pool(pool, tmp_path / "p.csv")
        back = load_pool(tmp_path / "p.csv", "csv")
        assert np.array_equal(back.features, pool.features)
        assert np.array_equal(back.labels, pool.labels)

    @pytest.mark.parametrize("compress", [False, True])
    def test_idx_image(self, tmp_path, compress):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(6, 28, 28), dtype=np.uint8)
        labels = np.array([0, 1, 2, 3, 4, 5], dtype=np.uint8)
        img_bytes = struct.pack(">IIII", 0x00000803, 6, 28, 28) + images.tobytes()
        lab_bytes = struct.pack(">II", 0x00000801, 6) + labels.tobytes()
        suffix = ".gz" if compress else ""
        opener = gzip.open if compress else open
        ip = tmp_path / f"train-images-idx3-ubyte{suffix}"
        lp = tmp_path / f"train-labels-idx1-ubyte{suffix}"
        with opener(ip, "wb") as fh:
            fh.write(img_bytes)
        with opener(lp, "wb") as fh:
            fh.write(lab_bytes)
        pool = load_pool(ip, "idx-image")
        assert pool.features.shape == (6, 784)
        assert pool.features.min() >= 0.0 and pool.features.max() <= 1.0
        assert list(pool.labels) == [1, -1, 1, -1, 1, -1]

    def test_idx_bad_magic(self, tmp_path):
        ip = tmp_path / "x-images-idx3-ubyte"
        ip.write_bytes(struct.pack(">IIII", 0x00000801, 1, 1, 1) + b"\0")
        with pytest.raises(ParseError):
            load_pool(ip, "idx-image", labels_path=ip)


def test_collection_validates_hidden_labels():
    with pytest.raises(ValueError):
        BagCollection([np.zeros((2, 1)), np.zeros((3, 1))], (0, 1), [np.ones(2), np.ones(2)])
