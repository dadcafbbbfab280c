"""Mini-batch construction and the mining procedure against brute force."""

import numpy as np
import numpy.testing as npt
import pytest

from deepmetric import data, embedder, metric, mining
from deepmetric.errors import UnusableAnchorError

from oracles import brute_force_mining


def two_view_dataset(num_identities=6, samples_per_view=4, seed=0):
    return data.generate_synthetic(data.SyntheticConfig(
        num_identities=num_identities, samples_per_view=samples_per_view,
        input_dim=8, manifold_curvature=2.0, intra_class_spread=0.5,
        view_offset_magnitude=0.3, seed=seed))


class TestBuildMinibatch:
    def test_contract(self):
        ds = two_view_dataset()
        rng = np.random.default_rng(1)
        anchor = ds[0]
        batch = mining.build_minibatch(ds, anchor, k=3, rng=rng)
        assert batch.k == 3
        opposite = 2 if anchor.view == 1 else 1
        for p in batch.positives:
            assert p.identity == anchor.identity and p.view == opposite
        for n in batch.negatives:
            assert n.identity != anchor.identity and n.view == opposite

    def test_forced_single_candidate(self):
        samples = [
            data.Sample(0, 1, np.array([0.0, 0.0])),
            data.Sample(0, 2, np.array([1.0, 0.0])),
            data.Sample(1, 2, np.array([0.0, 1.0])),
        ]
        ds = data.Dataset.from_samples(samples)
        batch = mining.build_minibatch(ds, ds[0], k=1, rng=np.random.default_rng(0))
        npt.assert_array_equal(batch.positives[0].features, [1.0, 0.0])
        npt.assert_array_equal(batch.negatives[0].features, [0.0, 1.0])

    def test_replacement_when_pool_small(self):
        ds = two_view_dataset(num_identities=2, samples_per_view=2)
        batch = mining.build_minibatch(ds, ds[0], k=6, rng=np.random.default_rng(2))
        assert len(batch.positives) == 6 and len(batch.negatives) == 6

    def test_unusable_anchor(self):
        samples = [data.Sample(0, 1, np.zeros(2)), data.Sample(1, 2, np.ones(2))]
        ds = data.Dataset.from_samples(samples)
        with pytest.raises(UnusableAnchorError):
            mining.build_minibatch(ds, ds[0], k=1, rng=np.random.default_rng(0))

    def test_negative_identity_frequencies_near_uniform(self):
        ds = two_view_dataset(num_identities=6, samples_per_view=4)
        anchor = ds[0]
        rng = np.random.default_rng(3)
        counts = {i: 0 for i in range(1, 6)}
        draws = 10_000
        for _ in range(draws):
            batch = mining.build_minibatch(ds, anchor, k=2, rng=rng)
            for n in batch.negatives:
                counts[n.identity] += 1
        total = draws * 2
        expected = total / 5
        sigma = np.sqrt(total * (1 / 5) * (4 / 5))
        for identity, count in counts.items():
            assert abs(count - expected) <= 3 * sigma, (identity, count)

    def test_deterministic_under_seed(self):
        ds = two_view_dataset()
        a = mining.build_minibatch(ds, ds[0], 4, np.random.default_rng(9))
        b = mining.build_minibatch(ds, ds[0], 4, np.random.default_rng(9))
        for sa, sb in zip(a.positives + a.negatives, b.positives + b.negatives):
            npt.assert_array_equal(sa.features, sb.features)


class TestMiningRules:
    def test_hardest_negative_forced(self):
        assert mining.mine_hardest_negative([2.0, 1.5, 3.0]) == 1

    def test_hardest_negative_singleton(self):
        assert mining.mine_hardest_negative([1.0]) == 0

    def test_hardest_negative_tie_breaks_low(self):
        assert mining.mine_hardest_negative([0.7, 0.7]) == 0

    def test_moderate_positive_forced(self):
        idx, fallback = mining.mine_moderate_positive([0.5, 1.2, 1.8], 1.5)
        assert (idx, fallback) == (1, False)

    def test_moderate_positive_fallback(self):
        idx, fallback = mining.mine_moderate_positive([2.0, 1.8], 1.5)
        assert (idx, fallback) == (1, True)

    def test_moderate_positive_tie_breaks_low(self):
        idx, fallback = mining.mine_moderate_positive([1.0, 1.0, 0.2], 1.5)
        assert (idx, fallback) == (0, False)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mining.mine_hardest_negative([])
        with pytest.raises(ValueError):
            mining.mine_moderate_positive([], 1.0)

    def test_against_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(10_000):
            k = int(rng.integers(1, 9))
            pos = rng.uniform(0, 2, size=k)
            neg = rng.uniform(0, 2, size=k)
            hardest = mining.mine_hardest_negative(neg)
            moderate, fallback = mining.mine_moderate_positive(pos, neg[hardest])
            o_mod, o_hard, o_fb = brute_force_mining(list(pos), list(neg))
            assert (moderate, hardest, fallback) == (o_mod, o_hard, o_fb)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            pos = rng.uniform(0, 2, size=6)
            neg = rng.uniform(0, 2, size=6)
            c = float(rng.uniform(0.1, 10.0))
            base_h = mining.mine_hardest_negative(neg)
            base_m = mining.mine_moderate_positive(pos, neg[base_h])
            scaled_h = mining.mine_hardest_negative(c * neg)
            scaled_m = mining.mine_moderate_positive(c * pos, c * neg[scaled_h])
            assert base_h == scaled_h and base_m == scaled_m

    def test_moderate_positive_dominates_eligible(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            pos = rng.uniform(0, 2, size=5)
            threshold = float(rng.uniform(0, 2))
            idx, fallback = mining.mine_moderate_positive(pos, threshold)
            if not fallback:
                for i, d in enumerate(pos):
                    if d <= threshold:
                        assert pos[idx] >= d
            else:
                assert np.all(pos > threshold)


class TestMineEndToEnd:
    def setup_method(self):
        self.cfg = embedder.EmbedderConfig(
            input_dim=8, num_branches=2, overlap_fraction=0.0,
            branch_hidden_dims=(5,), joint_hidden_dim=8, output_dim=6, seed=1)
        self.emb = embedder.init(self.cfg)
        self.met = metric.init(6, 6, np.random.default_rng(2))

    def test_result_invariants_over_random_batches(self):
        ds = two_view_dataset(num_identities=8, samples_per_view=4)
        rng = np.random.default_rng(7)
        usable = np.arange(len(ds))
        for _ in range(1000):
            anchor = ds[int(usable[rng.integers(len(usable))])]
            batch = mining.build_minibatch(ds, anchor, k=4, rng=rng)
            result = mining.mine(self.emb, self.met, batch)
            assert 0 <= result.moderate_positive_index < 4
            assert 0 <= result.hardest_negative_index < 4
            if not result.fallback_used:
                assert result.positive_distance <= result.negative_distance

    def test_k1_forced(self):
        ds = two_view_dataset(num_identities=3, samples_per_view=1)
        batch = mining.build_minibatch(ds, ds[0], k=1, rng=np.random.default_rng(8))
        result = mining.mine(self.emb, self.met, batch)
        assert result.moderate_positive_index == 0
        assert result.hardest_negative_index == 0
        assert result.fallback_used == (result.positive_distance
                                        > result.negative_distance)

    def test_identity_network_matches_euclidean_mining_on_raw_features(self):
        # identity embedder (single branch, identity maps) and W = I reduce
        # mining to Euclidean mining on normalized raw features
        cfg = embedder.EmbedderConfig(input_dim=4, num_branches=1,
                                      branch_hidden_dims=(), joint_hidden_dim=4,
                                      output_dim=4, seed=0)
        params = embedder.init(cfg)
        params.flat[:] = 0.0
        params.block("joint.w")[:] = np.eye(4)
        params.block("out.w")[:] = np.eye(4)
        met = metric.MetricParams(np.eye(4))

        rng = np.random.default_rng(9)
        feats = rng.uniform(0.5, 2.0, size=(7, 4))  # positive: rectifier-safe
        anchor = data.Sample(0, 1, feats[0])
        positives = [data.Sample(0, 2, f) for f in feats[1:4]]
        negatives = [data.Sample(1, 2, f) for f in feats[4:]]
        batch = mining.MiniBatch(anchor, positives, negatives, 3)
        result = mining.mine(params, met, batch)

        unit = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        d_pos = [np.linalg.norm(unit[0] - unit[i]) for i in range(1, 4)]
        d_neg = [np.linalg.norm(unit[0] - unit[i]) for i in range(4, 7)]
        o_mod, o_hard, o_fb = brute_force_mining(d_pos, d_neg)
        assert result.moderate_positive_index == o_mod
        assert result.hardest_negative_index == o_hard
        assert result.fallback_used == o_fb
