import math
from dataclasses import replace

import numpy as np
import pytest

from muoppo.ccpe import (
    CcpeConfig,
    PriorVector,
    pair_seed,
    rank_pairs,
    run_ccpe,
    run_eccpe,
    run_mos_m,
    run_pair,
)
from muoppo.data import BagCollection, BagSpec, gaussian_pool, sample_bags
from muoppo.errors import EstimationError
from muoppo.prior_est import EstimatorConfig, PriorEstimate, estimate_pair_mutual


@pytest.fixture(scope="module")
def pool():
    return gaussian_pool(5000, 2, 4.0, seed=11)


def small_bags(pool, m=4, n=300, seed=0):
    return sample_bags(pool, BagSpec.even(m, 0.1, 0.9, n, seed=seed))


class TestRankPairs:
    def test_largest_gap_first(self):
        order = rank_pairs([0.1, 0.5, 0.9])
        assert order[0] == (2, 0)
        assert order == [(2, 0), (1, 0), (2, 1)]

    def test_ties_deterministic(self):
        order = rank_pairs([0.3] * 4)
        assert order == rank_pairs([0.3] * 4)
        assert order[0] == (0, 1)
        assert len(set(order)) == 6

    def test_length(self):
        assert len(rank_pairs(np.linspace(0.1, 0.9, 10))) == math.comb(10, 2)

    def test_larger_first(self):
        for hi, lo in rank_pairs([0.7, 0.2, 0.4, 0.9, 0.1]):
            assert [0.7, 0.2, 0.4, 0.9, 0.1][hi] >= [0.7, 0.2, 0.4, 0.9, 0.1][lo]

    def test_too_short(self):
        with pytest.raises(ValueError):
            rank_pairs([0.5])


class TestConfig:
    def test_gamma_positive(self):
        with pytest.raises(ValueError):
            CcpeConfig(gamma=0)

    def test_selector_checked(self):
        with pytest.raises(ValueError):
            CcpeConfig(selector="oracle")

    def test_gamma_above_pair_count(self, pool):
        bags = small_bags(pool, m=3, n=100)
        with pytest.raises(ValueError):
            run_eccpe(bags, CcpeConfig(gamma=4))

    def test_mutual_rejected(self, pool):
        bags = small_bags(pool, m=3, n=100)
        with pytest.raises(ValueError):
            run_ccpe(bags, CcpeConfig(estimator=EstimatorConfig(method="mutual")))


def test_pair_seed_depends_on_order():
    assert pair_seed(0, (3, 1)) == pair_seed(0, (3, 1))
    assert pair_seed(0, (3, 1)) != pair_seed(0, (1, 3))
    assert pair_seed(0, (3, 1)) != pair_seed(1, (3, 1))


class TestCcpe:
    def test_two_separable_bags(self):
        pool = gaussian_pool(5000, 2, 10.0, seed=2)
        bags = sample_bags(pool, BagSpec([0.8, 0.2], [1000, 1000], (0, 1), seed=1))
        out = run_ccpe(bags, CcpeConfig(selector="loss"))
        assert out.values[0] > out.values[1]
        assert out.values == pytest.approx([0.8, 0.2], abs=0.05)

    def test_copies_of_alpha_agree(self, pool):
        ref = small_bags(pool, m=2, n=400, seed=3)
        a, b = ref.bags[1], ref.bags[0]
        bags = BagCollection([a, b, a.copy(), a.copy()], (0, 1))
        vals = run_ccpe(bags, CcpeConfig(selector="loss")).values
        same = vals[[0, 2, 3]]
        assert same.max() - same.min() < 0.03

    def test_provenance_and_length(self, pool):
        bags = small_bags(pool)
        out = run_ccpe(bags, CcpeConfig(selector="loss"))
        assert len(out) == bags.m
        assert all(p == [bags.pair] for p in out.provenance)
        assert np.all((out.values >= 0) & (out.values <= 1))

    def test_deterministic(self, pool):
        bags = small_bags(pool)
        cfg = CcpeConfig(seed=5)
        assert run_ccpe(bags, cfg).values.tobytes() == run_ccpe(bags, cfg).values.tobytes()

    def test_failed_bag_reports_id(self, pool, monkeypatch):
        import muoppo.ccpe as ccpe_mod
        from muoppo.errors import UnstableTailError

        real = ccpe_mod.estimate_bag

        def fail_on_two(bag, confident, source, cfg, bag_id=-1):
            if bag_id == 2:
                raise UnstableTailError("forced")
            return real(bag, confident, source, cfg, bag_id)

        monkeypatch.setattr(ccpe_mod, "estimate_bag", fail_on_two)
        with pytest.raises(EstimationError) as err:
            run_ccpe(small_bags(pool, m=3, n=200), CcpeConfig(selector="loss"))
        assert err.value.bag_id == 2


class TestEccpe:
    def test_single_declared_pair_reduces_to_ccpe(self, pool):
        bags = small_bags(pool)
        cfg = CcpeConfig(gamma=1, seed=4)
        a = run_ccpe(bags, cfg)
        b = run_eccpe(bags, cfg, pairs=[bags.pair])
        assert [e.value for e in a.estimates] == [e.value for e in b.estimates]
        assert [e.side1 for e in a.estimates] == [e.side1 for e in b.estimates]
        assert b.declared_included

    def test_average_of_pair_runs(self, pool):
        bags = small_bags(pool)
        cfg = CcpeConfig(gamma=3, selector="loss", seed=1)
        out = run_eccpe(bags, cfg)
        pairs = out.provenance[0]
        assert len(pairs) == 3
        assert pairs == rank_pairs(run_ccpe(bags, cfg))[:3]
        runs = [run_pair(bags, p, cfg).estimates for p in pairs]
        for j in range(bags.m):
            assert out.values[j] == pytest.approx(np.mean([r[j].value for r in runs]), abs=1e-15)

    def test_failed_pair_skipped(self, pool, monkeypatch):
        import muoppo.ccpe as ccpe_mod

        bags = small_bags(pool)
        real = ccpe_mod.run_pair

        def flaky(b, pair, cfg):
            if tuple(pair) == (2, 0):
                raise EstimationError(1, "forced")
            return real(b, pair, cfg)

        monkeypatch.setattr(ccpe_mod, "run_pair", flaky)
        with pytest.warns(RuntimeWarning, match="skipped"):
            out = run_eccpe(bags, CcpeConfig(selector="loss"), pairs=[(3, 0), (2, 0)])
        assert out.skipped_pairs == [(2, 0)]
        assert all(p == [(3, 0)] for p in out.provenance)
        assert out.declared_included

    def test_all_pairs_failed(self, pool, monkeypatch):
        import muoppo.ccpe as ccpe_mod

        def broken(b, pair, cfg):
            raise EstimationError(0, "forced")

        monkeypatch.setattr(ccpe_mod, "run_pair", broken)
        with pytest.warns(RuntimeWarning):
            with pytest.raises(EstimationError):
                run_eccpe(small_bags(pool), CcpeConfig(), pairs=[(3, 0)])

    def test_averaging_shrinks_spread(self, pool):
        """Std over seeds of the averaged estimate is at most the mean per-rank std."""
        finals, per_rank = [], []
        for seed in range(10):
            bags = small_bags(pool, n=300, seed=seed)
            cfg = CcpeConfig(gamma=3, seed=seed)
            pairs = rank_pairs(run_ccpe(bags, cfg))[:3]
            runs = [run_pair(bags, p, cfg).estimates for p in pairs]
            per_rank.append([[e.value for e in r] for r in runs])
            finals.append(run_eccpe(bags, cfg, pairs=pairs).values)
        finals = np.array(finals)
        per_rank = np.array(per_rank)
        std_final = finals.std(axis=0)
        mean_std = per_rank.std(axis=0).mean(axis=0)
        assert np.all(std_final <= mean_std + 1e-12)

    def test_direction_preserved(self, pool):
        bags = small_bags(pool, seed=2)
        cfg = CcpeConfig(gamma=3, selector="loss", seed=2)
        out = run_eccpe(bags, cfg)
        a, b = bags.pair
        runs = [run_pair(bags, p, cfg).estimates for p in out.provenance[0]]
        assert all(r[a].value > r[b].value for r in runs)
        assert out.values[a] > out.values[b]


class TestMosM:
    def test_two_bags_is_direct_inversion(self, pool):
        bags = sample_bags(pool, BagSpec([0.8, 0.3], [600, 600], (0, 1), seed=4))
        cfg = CcpeConfig(gamma=1, selector="loss", seed=3)
        out = run_mos_m(bags, cfg)
        hi, lo = estimate_pair_mutual(
            bags.bags[0], bags.bags[1],
            replace(cfg.estimator, method="mutual", seed=pair_seed(3, (0, 1))), ids=(0, 1))
        assert out.values.tolist() == [hi.value, lo.value]
        assert out.provenance == [[(0, 1)], [(0, 1)]]

    def test_uncovered_bags_keep_init(self, pool):
        bags = small_bags(pool, m=4)
        out = run_mos_m(bags, CcpeConfig(gamma=1, selector="loss"))
        covered = {i for p in out.provenance for i in p[0]} if out.provenance else set()
        assert covered
        flagged = [e.bag_id for e in out.estimates if "ccpe-init" in e.flags]
        mutual = [e.bag_id for e in out.estimates if e.method == "mutual"]
        assert len(flagged) == 2 and len(mutual) == 2
        assert sorted(flagged + mutual) == list(range(4))


def test_prior_vector_requires_provenance():
    e = PriorEstimate(0.5, 0.5, 0.5, "standard", 0)
    with pytest.raises(ValueError):
        PriorVector([e], [[]])
