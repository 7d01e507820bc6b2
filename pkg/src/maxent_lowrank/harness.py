"""End-to-end experiment harness: initial design, adaptive sampling, baselines.

This module wires the pieces together into the full active-recovery loop:
design initial masks, observe, then repeatedly {recover -> estimate subspaces
-> design the next mask(s) -> observe}, recording normalized recovery error at
chosen sample sizes.  It also provides the random-mask baseline, the
known-subspace PCA oracle, multi-trial replication with quantile summaries,
and the 8x8 image patching used to turn pixel grids into low-rank matrices.

Everything is deterministic given the experiment seed: per-trial streams are
derived by hashing (master seed, trial, method label, purpose), and the
ground truth for a trial is derived without the method label so competing
designs within a trial see the same matrix.
"""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import GAMMA2_FLOOR
from .frames import ini_flip, ini_kk, kk_compatible
from .recovery import RecoveryOptions, estimate_subspaces, recover
from .sequential import next_mask, pca_masks
from .smg import MeasurementRecord, SMGModel, measure, random_model, sample_smg

logger = logging.getLogger(__name__)

INIT_METHODS = ("flip", "kk", "random")


def _derive_seed(master, trial, label, purpose):
    """Stable 63-bit stream seed from (master seed, trial, label, purpose)."""
    digest = hashlib.sha256(f"{master}|{trial}|{label}|{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def normalized_error(estimate, truth):
    """Squared relative recovery error ||Xhat - X||_F^2 / ||X||_F^2."""
    scale = np.linalg.norm(truth) ** 2
    if scale == 0:
        raise ValueError("ground truth is identically zero")
    return float(np.linalg.norm(np.asarray(estimate) - np.asarray(truth)) ** 2 / scale)


def default_init_method(m1, m2, n_ini, rank_ini):
    """Initial-design dispatch: the unbiased-bases construction when the
    geometry supports it, otherwise the flipped-frames construction."""
    return "kk" if kk_compatible(m1, m2, n_ini, rank_ini) else "flip"


def estimate_signal_variance(record, eta2):
    """Method-of-moments estimate of the entrywise signal variance.

    Solves mean(y^2) = sigma2 * mean(||A_i||_F^2) + eta2 for sigma2, floored
    at a tiny positive value so the noise-to-signal ratio stays finite.  The
    estimator treats each mask's full power as if it were aligned with the
    signal subspaces, so it understates the entrywise variance by the
    (unknown) alignment factor; that bias is uniform across candidate masks,
    which is what matters when the estimate only feeds the design ratio.
    Used when no known variance is supplied (e.g. measured data).
    """
    if len(record) == 0:
        raise ValueError("cannot estimate signal variance from an empty record")
    mask_power = float(np.mean([np.linalg.norm(A) ** 2 for A in record.masks]))
    if mask_power <= 0:
        raise ValueError("record masks carry no power")
    return max((float(np.mean(record.y**2)) - eta2) / mask_power, GAMMA2_FLOOR)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to replicate one simulated recovery experiment.

    Fields
    ------
    m1, m2 : matrix dimensions.
    rank : true rank of the simulated ground truth (flat config key "R").
    sigma2, eta2 : signal and noise variances.
    n_ini, n_seq : initial and sequential sample budget (total n_ini + n_seq).
    rank_ini : block width of the initial design (flat config key "R_ini").
    init_method : "flip", "kk", or "random" initial masks.
    trials : replication count.
    seed : master seed; all randomness is derived from it.
    batch_size : masks designed per sequential step.
    batch_random_fraction : probability that a sequential step uses fresh
        uniform random masks instead of designed ones (exploration safeguard
        against subspace-estimate lock-in; 0 reproduces the pure greedy loop).
    recovery : options for every recovery solve in the loop and evaluation.
    eval_stride : sample sizes at which error is recorded, or None for the
        automatic rule (every size when the total is small, log-spaced
        otherwise).
    """

    m1: int
    m2: int
    rank: int
    sigma2: float = 1.0
    eta2: float = 1e-4
    n_ini: int = 8
    n_seq: int = 0
    rank_ini: int = 2
    init_method: str = "flip"
    trials: int = 1
    seed: int = 0
    batch_size: int = 1
    batch_random_fraction: float = 0.0
    recovery: RecoveryOptions = field(default_factory=RecoveryOptions)
    eval_stride: tuple = None

    def __post_init__(self):
        for name in ("m1", "m2", "rank", "n_ini", "n_seq", "rank_ini", "trials", "seed", "batch_size"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("sigma2", "eta2", "batch_random_fraction"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.m1 < 2 or self.m2 < 2:
            raise ValueError("matrix dimensions must be at least 2")
        if not 1 <= self.rank < min(self.m1, self.m2):
            raise ValueError(f"rank must lie in [1, min(m1, m2)), got {self.rank}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.eta2 < 0:
            raise ValueError("eta2 must be nonnegative")
        if self.n_ini < 1:
            raise ValueError("n_ini must be at least 1")
        if self.n_seq < 0:
            raise ValueError("n_seq must be nonnegative")
        if not 1 <= self.rank_ini <= min(self.m1, self.m2):
            raise ValueError("rank_ini must lie in [1, min(m1, m2)]")
        if self.init_method not in INIT_METHODS:
            raise ValueError(f"init_method must be one of {INIT_METHODS}, got {self.init_method!r}")
        if self.init_method == "kk" and not kk_compatible(self.m1, self.m2, self.n_ini, self.rank_ini):
            raise ValueError(
                "init_method 'kk' needs both dimensions equal to rank_ini times a power of "
                f"4 and n_ini within capacity; ({self.m1}, {self.m2}, n_ini={self.n_ini}, "
                f"rank_ini={self.rank_ini}) does not qualify"
            )
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.batch_random_fraction < 1.0:
            raise ValueError("batch_random_fraction must lie in [0, 1)")
        if not isinstance(self.recovery, RecoveryOptions):
            raise ValueError("recovery must be a RecoveryOptions instance")
        if self.eval_stride is not None:
            sizes = tuple(int(s) for s in self.eval_stride)
            if not sizes:
                raise ValueError("eval_stride cannot be empty when given")
            if any(s < 1 for s in sizes) or list(sizes) != sorted(set(sizes)):
                raise ValueError("eval_stride must be strictly increasing positive integers")
            if sizes[0] < self.n_ini or sizes[-1] > self.n_total:
                raise ValueError(
                    f"eval_stride must lie within [n_ini, n_ini + n_seq] = "
                    f"[{self.n_ini}, {self.n_total}]"
                )
            object.__setattr__(self, "eval_stride", sizes)

    @property
    def n_total(self):
        return self.n_ini + self.n_seq

    @property
    def gamma2(self):
        """Noise-to-signal ratio used by the sequential design, floored so the
        design problem stays well posed even in the noiseless limit."""
        return max(self.eta2 / self.sigma2, GAMMA2_FLOOR)

    def eval_sizes(self):
        """Sample sizes at which traces record error (shared across methods)."""
        if self.eval_stride is not None:
            return self.eval_stride
        if self.n_total <= 64:
            return tuple(range(self.n_ini, self.n_total + 1))
        grid = np.unique(
            np.round(np.geomspace(self.n_ini, self.n_total, 32)).astype(int)
        )
        return tuple(int(s) for s in grid)


@dataclass(frozen=True)
class RecoveryTrace:
    """Normalized recovery error as a function of sample size, for one arm."""

    sample_sizes: tuple
    errors: tuple
    method: str
    trial: int

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sample_sizes)
        errs = tuple(float(e) for e in self.errors)
        if len(sizes) != len(errs):
            raise ValueError("sample_sizes and errors must have equal length")
        if any(e < 0 or not np.isfinite(e) for e in errs):
            raise ValueError("errors must be finite and nonnegative")
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "errors", errs)

    def final_error(self):
        return self.errors[-1]


@dataclass(frozen=True)
class SummaryRow:
    """Across-trial quantiles of normalized error at one sample size."""

    method: str
    sample_size: int
    q25: float
    median: float
    q75: float


@dataclass(frozen=True)
class ExperimentResult:
    """All traces of an experiment plus their quantile summary."""

    traces: tuple
    summary: tuple

    def methods(self):
        return tuple(sorted({t.method for t in self.traces}))


def _random_unit_masks(m1, m2, count, rng):
    masks = []
    for _ in range(count):
        A = rng.standard_normal((m1, m2))
        masks.append(A / np.linalg.norm(A))
    return masks


def _make_truth(config, trial):
    """Per-trial ground truth, shared across method arms within the trial."""
    model = random_model(
        config.m1,
        config.m2,
        config.rank,
        config.sigma2,
        config.eta2,
        seed=_derive_seed(config.seed, trial, "", "model"),
    )
    truth = sample_smg(model, seed=_derive_seed(config.seed, trial, "", "truth"))
    return model, truth


def _check_truth(config, truth):
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (config.m1, config.m2):
        raise ValueError(f"ground truth has shape {truth.shape}, expected {(config.m1, config.m2)}")
    return truth


def _quiet_recover(record, opts, eta2, context):
    """Recovery that logs (rather than raises or prints) non-convergence; the
    returned estimate is the best iterate found either way."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = recover(record, opts, eta2=eta2)
    for w in caught:
        logger.info("%s: %s", context, w.message)
    return result


def _trace_errors(config, masks, y, truth):
    """Errors at the shared evaluation sizes, recovering from prefixes."""
    errors = []
    for size in config.eval_sizes():
        prefix = MeasurementRecord(tuple(masks[:size]), y[:size])
        result = _quiet_recover(prefix, config.recovery, config.eta2, f"evaluation at n={size}")
        errors.append(normalized_error(result.estimate, truth))
    return errors


def run_maxent(config, truth=None, trial=0):
    """One adaptive-design trial: designed initial masks, then a sequential
    loop of {recover -> estimate subspaces -> design next masks -> observe}.

    If ``truth`` is omitted, the trial's ground truth is drawn from the
    generative model with a seed that does not depend on the method label, so
    baselines run with the same config see the same matrix.  Returns the
    trace of normalized errors at the configured evaluation sizes.
    """
    truth = _make_truth(config, trial)[1] if truth is None else _check_truth(config, truth)
    label = f"maxent-{config.init_method}"
    if config.init_method == "flip":
        masks = ini_flip(config.m1, config.m2, config.n_ini, config.rank_ini,
                         _derive_seed(config.seed, trial, label, "init"))
    elif config.init_method == "kk":
        masks = ini_kk(config.m1, config.m2, config.n_ini, config.rank_ini,
                       _derive_seed(config.seed, trial, label, "init"))
    else:
        init_rng = np.random.default_rng(_derive_seed(config.seed, trial, label, "init"))
        masks = _random_unit_masks(config.m1, config.m2, config.n_ini, init_rng)
    masks = list(masks)
    y = measure(truth, masks, config.eta2, seed=_derive_seed(config.seed, trial, label, "noise-init"))
    record = MeasurementRecord(tuple(masks), y)

    loop_rng = np.random.default_rng(_derive_seed(config.seed, trial, label, "loop"))
    while len(record) < config.n_total:
        budget = min(config.batch_size, config.n_total - len(record))
        if config.batch_random_fraction > 0 and loop_rng.random() < config.batch_random_fraction:
            new_masks = _random_unit_masks(config.m1, config.m2, budget, loop_rng)
        else:
            result = _quiet_recover(record, config.recovery, config.eta2, f"design at n={len(record)}")
            estimate = estimate_subspaces(result.estimate, config.recovery.rank_threshold)
            k = min(budget, estimate.rank**2)
            new_masks = next_mask(estimate, record.masks, config.gamma2, k=k)
        new_y = measure(truth, new_masks, config.eta2, seed=int(loop_rng.integers(2**62)))
        record = record.extended(new_masks, new_y)

    errors = _trace_errors(config, list(record.masks), record.y, truth)
    return RecoveryTrace(config.eval_sizes(), errors, label, trial)


def run_random_baseline(config, truth=None, trial=0):
    """Baseline trial: masks drawn i.i.d. uniformly on the unit-power sphere,
    evaluated through the same recovery pipeline at the same sample sizes."""
    truth = _make_truth(config, trial)[1] if truth is None else _check_truth(config, truth)
    rng = np.random.default_rng(_derive_seed(config.seed, trial, "random", "masks"))
    masks = _random_unit_masks(config.m1, config.m2, config.n_total, rng)
    y = measure(truth, masks, config.eta2, seed=_derive_seed(config.seed, trial, "random", "noise"))
    errors = _trace_errors(config, masks, y, truth)
    return RecoveryTrace(config.eval_sizes(), errors, "random", trial)


def run_pca_oracle(config, model, truth, trial=0):
    """Known-subspace oracle trial: the uncorrelated optimal masks built from
    the true subspaces.  Only rank^2 such masks exist, so the error curve
    saturates once every direction of the projected subspace is measured."""
    if not isinstance(model, SMGModel):
        raise ValueError("the oracle needs the generative model (true subspaces)")
    truth = _check_truth(config, truth)
    cap = min(config.n_total, model.rank**2)
    masks = pca_masks(model, cap)
    y = measure(truth, masks, config.eta2, seed=_derive_seed(config.seed, trial, "pca", "noise"))
    errors = []
    for size in config.eval_sizes():
        used = min(size, cap)
        prefix = MeasurementRecord(tuple(masks[:used]), y[:used])
        result = _quiet_recover(prefix, config.recovery, config.eta2, f"oracle at n={size}")
        errors.append(normalized_error(result.estimate, truth))
    return RecoveryTrace(config.eval_sizes(), errors, "pca", trial)


def summarize_traces(traces):
    """Across-trial q25/median/q75 per (method, sample size), sorted."""
    groups = {}
    for trace in traces:
        for size, err in zip(trace.sample_sizes, trace.errors):
            groups.setdefault((trace.method, size), []).append(err)
    rows = []
    for (method, size), errs in sorted(groups.items()):
        q25, med, q75 = np.percentile(errs, [25.0, 50.0, 75.0])
        rows.append(SummaryRow(method, size, float(q25), float(med), float(q75)))
    return tuple(rows)


def run_experiment(config, truth=None, include_pca=False):
    """Replicated comparison of the adaptive design against the random-mask
    baseline (and optionally the known-subspace oracle).

    Each trial draws its own ground truth (or reuses ``truth`` when given)
    and runs every arm against it; quantile curves across trials are
    returned alongside the raw traces.  The oracle needs the true subspaces,
    so it is only available for generated ground truth.
    """
    if include_pca and truth is not None:
        raise ValueError("the PCA oracle needs generated ground truth (known subspaces)")
    traces = []
    for trial in range(config.trials):
        if truth is None:
            model, trial_truth = _make_truth(config, trial)
        else:
            model, trial_truth = None, _check_truth(config, truth)
        traces.append(run_maxent(config, truth=trial_truth, trial=trial))
        traces.append(run_random_baseline(config, truth=trial_truth, trial=trial))
        if include_pca:
            traces.append(run_pca_oracle(config, model, trial_truth, trial=trial))
    traces = tuple(traces)
    return ExperimentResult(traces, summarize_traces(traces))


def patch_image(pixels, patch=8):
    """Rearrange an image into the patch matrix used for low-rank recovery.

    The image is split into non-overlapping patch x patch tiles; each tile is
    flattened row-major into one column, and columns are ordered row-major
    over the tile grid.  An h x w image becomes a patch^2 x (h*w/patch^2)
    matrix.  Inverse: unpatch_image.
    """
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {pixels.shape}")
    h, w = pixels.shape
    if patch < 1 or h % patch != 0 or w % patch != 0:
        raise ValueError(f"image dimensions {pixels.shape} are not divisible by patch={patch}")
    tiles = pixels.reshape(h // patch, patch, w // patch, patch).transpose(0, 2, 1, 3)
    return tiles.reshape(-1, patch * patch).T.copy()


def unpatch_image(matrix, shape, patch=8):
    """Inverse of patch_image: rebuild the pixel grid from its patch matrix."""
    matrix = np.asarray(matrix, dtype=float)
    h, w = (int(s) for s in shape)
    if patch < 1 or h % patch != 0 or w % patch != 0:
        raise ValueError(f"target shape {(h, w)} is not divisible by patch={patch}")
    expected = (patch * patch, (h * w) // (patch * patch))
    if matrix.shape != expected:
        raise ValueError(f"patch matrix has shape {matrix.shape}, expected {expected}")
    tiles = matrix.T.reshape(h // patch, w // patch, patch, patch).transpose(0, 2, 1, 3)
    return tiles.reshape(h, w).copy()
