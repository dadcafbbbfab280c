"""Branched embedder: segmentation, forward contract, exact backward."""

import numpy as np
import numpy.testing as npt
import pytest

from deepmetric import embedder
from deepmetric.errors import ConfigError, DegenerateEmbeddingError, ShapeError


def small_config(**overrides):
    base = dict(input_dim=12, num_branches=3, overlap_fraction=0.5,
                branch_hidden_dims=(5,), joint_hidden_dim=7, output_dim=6, seed=0)
    base.update(overrides)
    return embedder.EmbedderConfig(**base)


class TestConfig:
    def test_valid_overlap_geometry(self):
        cfg = small_config()
        assert cfg.segment_geometry() == (6, 3)
        npt.assert_array_equal(cfg.segment_starts(), [0, 3, 6])

    def test_partition_geometry(self):
        cfg = small_config(overlap_fraction=0.0)
        assert cfg.segment_geometry() == (4, 0)
        npt.assert_array_equal(cfg.segment_starts(), [0, 4, 8])

    def test_two_branch_overlap_from_spec_arithmetic(self):
        cfg = small_config(input_dim=9, num_branches=2, overlap_fraction=0.5)
        assert cfg.segment_geometry() == (6, 3)
        npt.assert_array_equal(cfg.segment_starts(), [0, 3])

    def test_rejects_inexact_arithmetic(self):
        with pytest.raises(ConfigError, match="arithmetic"):
            small_config(input_dim=12, num_branches=3, overlap_fraction=0.25)

    def test_single_branch_takes_whole_input(self):
        cfg = small_config(num_branches=1, overlap_fraction=0.0)
        assert cfg.segment_geometry() == (12, 0)


class TestSplitSegments:
    def test_disjoint_partition(self):
        cfg = small_config(overlap_fraction=0.0)
        segs = embedder.split_segments(np.arange(12.0), cfg)
        npt.assert_array_equal(segs[0], [0, 1, 2, 3])
        npt.assert_array_equal(segs[1], [4, 5, 6, 7])
        npt.assert_array_equal(segs[2], [8, 9, 10, 11])

    def test_overlapping_segments(self):
        cfg = small_config(input_dim=9, num_branches=2, overlap_fraction=0.5)
        segs = embedder.split_segments(np.arange(9.0), cfg)
        npt.assert_array_equal(segs[0], [0, 1, 2, 3, 4, 5])
        npt.assert_array_equal(segs[1], [3, 4, 5, 6, 7, 8])

    def test_reconstruction_oracle(self):
        rng = np.random.default_rng(0)
        for cfg in (small_config(), small_config(overlap_fraction=0.0),
                    small_config(input_dim=9, num_branches=2, overlap_fraction=0.5)):
            x = rng.normal(size=cfg.input_dim)
            segs = embedder.split_segments(x, cfg)
            _, overlap = cfg.segment_geometry()
            rebuilt = list(segs[0])
            for seg in segs[1:]:
                rebuilt.extend(seg[overlap:])
            npt.assert_array_equal(np.array(rebuilt), x)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            embedder.split_segments(np.zeros(5), small_config())


class TestInit:
    def test_deterministic(self):
        a = embedder.init(small_config(seed=4))
        b = embedder.init(small_config(seed=4))
        npt.assert_array_equal(a.flat, b.flat)

    def test_tied_branches_share_one_block(self):
        params = embedder.init(small_config(tied_branches=True))
        names = {n for n in params.layout.blocks if n.startswith("branch")}
        assert names == {"branch.layer0.w", "branch.layer0.b"}
        assert params.branch_block_names(0) == params.branch_block_names(2)

    def test_biases_zero(self):
        params = embedder.init(small_config())
        for name in params.layout.blocks:
            if name.endswith(".b"):
                npt.assert_array_equal(params.block(name), 0.0)

    def test_fan_in_scaling(self):
        cfg = small_config(input_dim=32, num_branches=2, overlap_fraction=0.0,
                           branch_hidden_dims=(16,), joint_hidden_dim=24,
                           output_dim=12)
        pooled = {}
        for seed in range(10):
            params = embedder.init(embedder.EmbedderConfig(
                **{**cfg.__dict__, "seed": seed}))
            for name, (off, shape) in params.layout.blocks.items():
                if name.endswith(".w"):
                    pooled.setdefault((name, shape[1]), []).append(
                        params.block(name).ravel())
        for (name, fan_in), chunks in pooled.items():
            std = np.std(np.concatenate(chunks))
            assert abs(std - 1.0 / np.sqrt(fan_in)) <= 0.2 / np.sqrt(fan_in), name


class TestForward:
    def test_unit_norm_on_random_inputs(self):
        # unit norm, or the explicit degenerate error when the joint
        # rectifier kills the whole vector (rare under random init)
        params = embedder.init(small_config(seed=1))
        rng = np.random.default_rng(2)
        degenerate = 0
        for _ in range(1000):
            try:
                emb, _ = embedder.forward(params, rng.normal(size=12))
            except DegenerateEmbeddingError:
                degenerate += 1
                continue
            assert abs(np.linalg.norm(emb) - 1.0) <= 1e-12
        assert degenerate < 50

    def test_zero_params_degenerate(self):
        params = embedder.init(small_config())
        params.flat[:] = 0.0
        with pytest.raises(DegenerateEmbeddingError):
            embedder.forward(params, np.ones(12))

    def test_identity_network_normalizes_input(self):
        # single branch, no hidden layers, identity joint and output maps;
        # positive input passes the joint rectifier untouched
        cfg = embedder.EmbedderConfig(input_dim=4, num_branches=1,
                                      branch_hidden_dims=(), joint_hidden_dim=4,
                                      output_dim=4, seed=0)
        params = embedder.init(cfg)
        params.flat[:] = 0.0
        params.block("joint.w")[:] = np.eye(4)
        params.block("out.w")[:] = np.eye(4)
        x = np.array([1.0, 2.0, 0.5, 4.0])
        emb, _ = embedder.forward(params, x)
        npt.assert_allclose(emb, x / np.linalg.norm(x), atol=1e-12)

    def test_dimension_mismatch(self):
        params = embedder.init(small_config())
        with pytest.raises(ShapeError):
            embedder.forward(params, np.zeros(13))


def probe_value(params, x, u):
    emb, _ = embedder.forward(params, x)
    return float(u @ emb)


class TestBackward:
    def test_zero_grad_gives_zero_grads(self):
        params = embedder.init(small_config(seed=3))
        _, tape = embedder.forward(params, np.arange(12.0) / 12.0)
        g_flat, g_x = embedder.backward(params, tape, np.zeros(6))
        npt.assert_array_equal(g_flat, 0.0)
        npt.assert_array_equal(g_x, 0.0)

    @pytest.mark.parametrize("tied", [False, True])
    def test_parameter_gradients_match_finite_differences(self, tied):
        cfg = small_config(seed=5, tied_branches=tied)
        params = embedder.init(cfg)
        rng = np.random.default_rng(6)
        x = rng.normal(size=12)
        u = rng.normal(size=6)

        emb, tape = embedder.forward(params, x)
        g_flat, g_x = embedder.backward(params, tape, u)

        step = 1e-6
        fd = np.zeros_like(g_flat)
        for i in range(len(params.flat)):
            orig = params.flat[i]
            params.flat[i] = orig + step
            fp = probe_value(params, x, u)
            params.flat[i] = orig - step
            fm = probe_value(params, x, u)
            params.flat[i] = orig
            fd[i] = (fp - fm) / (2 * step)
        npt.assert_allclose(g_flat, fd, rtol=1e-5, atol=1e-8)

        fd_x = np.zeros_like(g_x)
        for i in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            fd_x[i] = (probe_value(params, xp, u) - probe_value(params, xm, u)) / (2 * step)
        npt.assert_allclose(g_x, fd_x, rtol=1e-5, atol=1e-8)

    def test_tied_gradient_is_sum_of_untied_branch_gradients(self):
        untied_cfg = small_config(seed=7)
        untied = embedder.init(untied_cfg)
        # make every branch block identical to branch 0's
        for b in (1, 2):
            for src, dst in zip(untied.branch_block_names(0),
                                untied.branch_block_names(b)):
                untied.block(dst)[:] = untied.block(src)

        tied_cfg = small_config(seed=7, tied_branches=True)
        tied = embedder.init(tied_cfg)
        tied.block("branch.layer0.w")[:] = untied.block("branch0.layer0.w")
        tied.block("branch.layer0.b")[:] = untied.block("branch0.layer0.b")
        tied.block("joint.w")[:] = untied.block("joint.w")
        tied.block("joint.b")[:] = untied.block("joint.b")
        tied.block("out.w")[:] = untied.block("out.w")
        tied.block("out.b")[:] = untied.block("out.b")

        rng = np.random.default_rng(8)
        x = rng.normal(size=12)
        u = rng.normal(size=6)
        emb_u, tape_u = embedder.forward(untied, x)
        emb_t, tape_t = embedder.forward(tied, x)
        npt.assert_allclose(emb_u, emb_t, atol=1e-12)

        gu, _ = embedder.backward(untied, tape_u, u)
        gt, _ = embedder.backward(tied, tape_t, u)

        gu_params = embedder.EmbedderParams(untied_cfg, gu, untied.layout)
        gt_params = embedder.EmbedderParams(tied_cfg, gt, tied.layout)
        summed_w = sum(gu_params.block(f"branch{b}.layer0.w") for b in range(3))
        summed_b = sum(gu_params.block(f"branch{b}.layer0.b") for b in range(3))
        npt.assert_allclose(gt_params.block("branch.layer0.w"), summed_w, atol=1e-12)
        npt.assert_allclose(gt_params.block("branch.layer0.b"), summed_b, atol=1e-12)
        npt.assert_allclose(gt_params.block("joint.w"), gu_params.block("joint.w"),
                            atol=1e-12)

    def test_normalization_jacobian_directional_derivative(self):
        params = embedder.init(small_config(seed=9))
        rng = np.random.default_rng(10)
        x = rng.normal(size=12)
        v = rng.normal(size=12)
        _, tape = embedder.forward(params, x)

        jac_v = np.zeros(6)
        for i in range(6):
            basis = np.zeros(6)
            basis[i] = 1.0
            _, g_x = embedder.backward(params, tape, basis)
            jac_v[i] = g_x @ v

        h = 1e-6
        ep, _ = embedder.forward(params, x + h * v)
        em, _ = embedder.forward(params, x - h * v)
        npt.assert_allclose(jac_v, (ep - em) / (2 * h), atol=1e-6)


class TestParameterMatching:
    def test_tied_count_within_five_percent(self):
        cfg = small_config(input_dim=32, num_branches=2, overlap_fraction=0.0,
                           branch_hidden_dims=(16,), joint_hidden_dim=24,
                           output_dim=12)
        tied = embedder.parameter_matched_tied_config(cfg)
        assert tied.tied_branches
        untied_n = embedder.count_parameters(cfg)
        tied_n = embedder.count_parameters(tied)
        assert abs(tied_n - untied_n) / untied_n <= 0.05

    def test_rejects_tied_input(self):
        with pytest.raises(ConfigError):
            embedder.parameter_matched_tied_config(small_config(tied_branches=True))
