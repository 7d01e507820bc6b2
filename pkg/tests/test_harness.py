"""Tests for the experiment harness: loops, baselines, replication, patching."""

import warnings

import numpy as np
import pytest

from maxent_lowrank.harness import (
    ExperimentConfig,
    RecoveryTrace,
    default_init_method,
    estimate_signal_variance,
    normalized_error,
    patch_image,
    run_experiment,
    run_maxent,
    run_pca_oracle,
    run_random_baseline,
    summarize_traces,
    unpatch_image,
)
from maxent_lowrank.recovery import RecoveryOptions
from maxent_lowrank.smg import MeasurementRecord, measure, random_model, sample_smg

FAST = RecoveryOptions(max_iters=800, rel_tol=1e-7)


def small_config(**overrides):
    base = dict(
        m1=6,
        m2=6,
        rank=2,
        sigma2=1.0,
        eta2=1e-4,
        n_ini=6,
        n_seq=6,
        rank_ini=2,
        init_method="flip",
        trials=2,
        seed=11,
        recovery=FAST,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestExperimentConfig:
    def test_defaults_and_totals(self):
        cfg = small_config()
        assert cfg.n_total == 12
        assert cfg.gamma2 == pytest.approx(1e-4)
        assert cfg.eval_sizes() == tuple(range(6, 13))

    @pytest.mark.parametrize(
        "overrides",
        [
            {"rank": 6},
            {"rank": 0},
            {"sigma2": 0.0},
            {"eta2": -1.0},
            {"n_ini": 0},
            {"n_seq": -1},
            {"rank_ini": 0},
            {"init_method": "fancy"},
            {"trials": 0},
            {"batch_size": 0},
            {"batch_random_fraction": 1.0},
            {"batch_random_fraction": -0.1},
            {"eval_stride": (5, 12)},
            {"eval_stride": (6, 13)},
            {"eval_stride": (9, 7)},
        ],
    )
    def test_invalid_configs(self, overrides):
        with pytest.raises(ValueError):
            small_config(**overrides)

    def test_kk_requires_compatible_geometry(self):
        with pytest.raises(ValueError, match="kk"):
            small_config(init_method="kk")  # 6x6 is not rank_ini * power of 4
        cfg = small_config(m1=8, m2=8, n_ini=8, n_seq=2, init_method="kk", eval_stride=None)
        assert cfg.init_method == "kk"

    def test_eval_sizes_log_spaced_for_long_runs(self):
        cfg = small_config(m1=12, m2=12, rank=2, n_ini=10, n_seq=90, eval_stride=None)
        sizes = cfg.eval_sizes()
        assert sizes[0] == 10 and sizes[-1] == 100
        assert len(sizes) <= 32
        assert all(a < b for a, b in zip(sizes, sizes[1:]))

    def test_gamma2_floored_in_noiseless_limit(self):
        cfg = small_config(eta2=0.0)
        assert cfg.gamma2 > 0

    def test_default_init_method_dispatch(self):
        assert default_init_method(8, 8, 8, 2) == "kk"
        assert default_init_method(7, 7, 7, 2) == "flip"


class TestRecoveryTrace:
    def test_validation(self):
        with pytest.raises(ValueError, match="equal length"):
            RecoveryTrace((1, 2), (0.5,), "m", 0)
        with pytest.raises(ValueError, match="finite and nonnegative"):
            RecoveryTrace((1,), (-0.5,), "m", 0)
        trace = RecoveryTrace((1, 2), (0.5, 0.25), "m", 0)
        assert trace.final_error() == 0.25


class TestNormalizedError:
    def test_values(self):
        X = np.eye(3)
        assert normalized_error(X, X) == 0.0
        assert normalized_error(2 * X, X) == pytest.approx(1.0)
        with pytest.raises(ValueError, match="zero"):
            normalized_error(X, np.zeros((3, 3)))


class TestSignalVarianceEstimate:
    def test_moment_identity_on_aligned_masks(self):
        # Masks inside the signal subspaces make the moment identity exact:
        # E y^2 = sigma2 + eta2 for unit-power aligned masks.
        model = random_model(8, 8, 3, 2.5, 1e-3, seed=3)
        rng = np.random.default_rng(4)
        masks = []
        for _ in range(4000):
            C = rng.standard_normal((3, 3))
            A = model.U @ C @ model.V.T
            masks.append(A / np.linalg.norm(A))
        ys = []
        for k in range(40):
            X = sample_smg(model, seed=100 + k)
            ys.append(measure(X, masks[k * 100 : (k + 1) * 100], 1e-3, seed=200 + k))
        record = MeasurementRecord(tuple(masks), np.concatenate(ys))
        estimate = estimate_signal_variance(record, 1e-3)
        assert estimate == pytest.approx(2.5, rel=0.15)

    def test_rejects_empty_record(self):
        with pytest.raises(ValueError, match="empty"):
            estimate_signal_variance(MeasurementRecord((), np.zeros(0)), 1e-4)


class TestRunMaxent:
    def test_no_sequential_steps_is_initial_design_only(self):
        cfg = small_config(n_seq=0)
        trace = run_maxent(cfg, trial=0)
        assert trace.sample_sizes == (6,)
        assert trace.method == "maxent-flip"

    def test_deterministic_given_seed(self):
        cfg = small_config()
        t1 = run_maxent(cfg, trial=1)
        t2 = run_maxent(cfg, trial=1)
        assert t1.errors == t2.errors

    def test_noiseless_overdetermined_recovery_is_exact(self):
        # With zero noise and more samples than matrix entries the designed
        # record pins the matrix; exploration steps keep the masks spanning.
        cfg = small_config(
            m1=4,
            m2=4,
            rank=2,
            eta2=0.0,
            n_ini=6,
            n_seq=14,
            batch_random_fraction=0.5,
            seed=5,
            recovery=RecoveryOptions(max_iters=6000, rel_tol=1e-12),
            eval_stride=(20,),
        )
        trace = run_maxent(cfg, trial=0)
        assert trace.final_error() < 1e-6

    def test_fixed_truth_and_shape_validation(self):
        cfg = small_config(n_seq=2, eval_stride=(8,))
        truth = sample_smg(random_model(6, 6, 2, 1.0, 1e-4, seed=9), seed=10)
        trace = run_maxent(cfg, truth=truth, trial=0)
        assert len(trace.errors) == 1
        with pytest.raises(ValueError, match="shape"):
            run_maxent(cfg, truth=np.zeros((5, 6)), trial=0)

    def test_batch_size_designs_multiple_masks_per_step(self):
        cfg = small_config(batch_size=3)
        trace = run_maxent(cfg, trial=0)
        assert trace.sample_sizes[-1] == cfg.n_total


class TestBaselines:
    def test_random_masks_unit_power_and_pairing(self):
        cfg = small_config()
        maxent = run_maxent(cfg, trial=0)
        baseline = run_random_baseline(cfg, trial=0)
        assert baseline.method == "random"
        assert maxent.sample_sizes == baseline.sample_sizes

    def test_baseline_determinism(self):
        cfg = small_config()
        t1 = run_random_baseline(cfg, trial=3)
        t2 = run_random_baseline(cfg, trial=3)
        assert t1.errors == t2.errors

    def test_pca_oracle_saturates_after_rank_squared(self):
        cfg = small_config(
            m1=8,
            m2=8,
            rank=2,
            n_ini=2,
            n_seq=10,
            eval_stride=(4, 8, 12),
            recovery=RecoveryOptions(max_iters=4000, rel_tol=1e-10),
        )
        model = random_model(8, 8, 2, 1.0, 1e-4, seed=21)
        truth = sample_smg(model, seed=22)
        trace = run_pca_oracle(cfg, model, truth, trial=0)
        assert trace.errors[1] < 1e-2  # n = 4 = rank^2 measures every direction
        assert trace.errors[2] == pytest.approx(trace.errors[1], rel=1e-6)

    def test_pca_oracle_needs_model(self):
        cfg = small_config()
        with pytest.raises(ValueError, match="model"):
            run_pca_oracle(cfg, object(), np.zeros((6, 6)), trial=0)


class TestRunExperiment:
    def test_collects_all_arms_and_summary(self):
        cfg = small_config(eval_stride=(6, 12))
        result = run_experiment(cfg, include_pca=True)
        assert result.methods() == ("maxent-flip", "pca", "random")
        assert len(result.traces) == cfg.trials * 3
        assert len(result.summary) == 3 * 2

    def test_single_trial_quantiles_collapse_to_trace(self):
        cfg = small_config(trials=1, eval_stride=(6, 12))
        result = run_experiment(cfg)
        for row in result.summary:
            assert row.q25 == row.median == row.q75

    def test_summary_permutation_invariant(self):
        cfg = small_config(trials=3, eval_stride=(6, 12))
        result = run_experiment(cfg)
        shuffled = summarize_traces(tuple(reversed(result.traces)))
        assert shuffled == result.summary

    def test_methods_share_truth_within_trial(self):
        # A noiseless, fully-observed trial recovers the truth exactly for
        # both arms, so equal final estimates imply the shared ground truth.
        cfg = small_config(
            m1=4,
            m2=4,
            rank=2,
            eta2=0.0,
            n_ini=16,
            n_seq=6,
            batch_random_fraction=0.5,
            recovery=RecoveryOptions(max_iters=6000, rel_tol=1e-12),
            eval_stride=(22,),
            trials=1,
            init_method="random",
        )
        result = run_experiment(cfg)
        errors = [t.final_error() for t in result.traces]
        assert all(e < 1e-6 for e in errors)

    def test_fixed_truth_mode_and_pca_exclusion(self):
        cfg = small_config(trials=2, eval_stride=(12,))
        truth = sample_smg(random_model(6, 6, 2, 1.0, 1e-4, seed=31), seed=32)
        result = run_experiment(cfg, truth=truth)
        assert len(result.traces) == 4
        with pytest.raises(ValueError, match="oracle"):
            run_experiment(cfg, truth=truth, include_pca=True)

    def test_full_determinism(self):
        cfg = small_config(trials=2, eval_stride=(6, 9, 12))
        r1 = run_experiment(cfg, include_pca=True)
        r2 = run_experiment(cfg, include_pca=True)
        assert r1.summary == r2.summary
        for t1, t2 in zip(r1.traces, r2.traces):
            assert t1.errors == t2.errors


class TestPatching:
    def test_single_patch_is_vectorization(self):
        img = np.arange(64, dtype=float).reshape(8, 8)
        M = patch_image(img)
        assert M.shape == (64, 1)
        np.testing.assert_array_equal(M[:, 0], img.ravel())

    def test_roundtrip_on_random_grids(self):
        rng = np.random.default_rng(33)
        for shape in [(64, 64), (16, 24), (8, 8)]:
            img = rng.standard_normal(shape)
            M = patch_image(img)
            np.testing.assert_array_equal(unpatch_image(M, shape), img)

    def test_64x64_image_gives_64x64_matrix(self):
        img = np.zeros((64, 64))
        assert patch_image(img).shape == (64, 64)

    def test_patch_order_is_row_major_over_tiles(self):
        img = np.zeros((16, 16))
        img[0:8, 8:16] = 7.0  # second tile in the first tile row
        M = patch_image(img)
        assert np.all(M[:, 1] == 7.0)
        assert np.all(M[:, [0, 2, 3]] == 0.0)

    @pytest.mark.parametrize("shape", [(10, 16), (16, 10), (7, 7)])
    def test_non_divisible_shapes_rejected(self, shape):
        with pytest.raises(ValueError, match="divisible"):
            patch_image(np.zeros(shape))

    def test_unpatch_validates_shapes(self):
        with pytest.raises(ValueError, match="expected"):
            unpatch_image(np.zeros((64, 3)), (16, 16))
        with pytest.raises(ValueError, match="divisible"):
            unpatch_image(np.zeros((64, 4)), (15, 16))


@pytest.fixture(autouse=True)
def _silence_expected_runtime_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=RuntimeWarning)
        yield
