"""Nuclear-norm / elastic-net matrix recovery and subspace estimation.

The estimator minimizes

    || y - A(X) ||_2^2 + lambda * ( alpha ||X||_* + (1 - alpha) ||X||_F^2 )

by proximal gradient descent whose proximal map is singular-value
soft-thresholding; alpha = 1 gives the pure nuclear-norm problem used
throughout the experiments.  The step size comes from a power iteration on
the measurement Gram operator, with a monotone backtracking guard so the
composite objective never increases.

`estimate_subspaces` turns a recovered matrix into orthonormal row/column
bases by thresholding its singular values at a fraction of the largest one.
`map_objective` evaluates (never optimizes) the exact posterior objective
with its nonconvex squared-rank penalty, for reporting.
"""

import warnings
from dataclasses import dataclass
from math import log, pi, sqrt

import numpy as np

from .constants import DEFAULT_RANK_THRESHOLD, EXACT_TOL
from .sequential import SubspaceEstimate

__all__ = [
    "RecoveryOptions",
    "RecoveryResult",
    "recover",
    "estimate_subspaces",
    "map_objective",
]

# lambda values below this are clamped up so the objective stays well posed
# while still behaving like exact interpolation.
_MIN_LAMBDA = 1e-12


@dataclass(frozen=True)
class RecoveryOptions:
    """Solver options.

    lam: regularization weight; None derives lam = lam_scale * sqrt(eta2 * n)
        from the noise level passed to `recover`.
    lam_scale: scale factor for the derived lam.
    alpha: elastic-net mix in (0, 1]; 1 means pure nuclear norm.
    max_iters / rel_tol: iteration cap and relative-change stopping rule.
    rank_threshold: singular-value cutoff fraction for subspace estimation.
    continuation: if set, re-solve with geometrically decreasing lam (warm
        starts) while the relative residual keeps improving.
    """

    lam: float | None = None
    lam_scale: float = 1.0
    alpha: float = 1.0
    max_iters: int = 2000
    rel_tol: float = 1e-9
    rank_threshold: float = DEFAULT_RANK_THRESHOLD
    continuation: bool = False

    def __post_init__(self):
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be positive when given")
        if self.lam_scale <= 0:
            raise ValueError("lam_scale must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if not 0.0 < self.rank_threshold < 1.0:
            raise ValueError("rank_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class RecoveryResult:
    """Solution plus solver diagnostics."""

    estimate: np.ndarray
    converged: bool
    iterations: int
    objectives: np.ndarray
    lam: float
    relative_residual: float


def _soft_threshold_svd(M, threshold):
    """Singular-value soft-thresholding; returns the matrix and its values."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s_thr = np.maximum(s - threshold, 0.0)
    return (U * s_thr) @ Vt, s_thr


def _gram_operator_norm(masks, max_iters=200, tol=1e-12):
    """Largest eigenvalue of X -> sum_i <A_i, X> A_i by power iteration."""
    n, m1, m2 = masks.shape
    # Deterministic start with a ramp so it is never orthogonal to the top
    # eigenspace of a structured mask set.
    v = 1.0 + np.arange(m1 * m2).reshape(m1, m2) / (m1 * m2)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iters):
        coeffs = np.einsum("nij,ij->n", masks, v)
        w = np.einsum("n,nij->ij", coeffs, masks)
        new_value = float(np.sum(v * w))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new_value - value) <= tol * max(1.0, new_value):
            return new_value
        value = new_value
    return value


def _solve_fixed_lambda(masks, y, lam, opts, x0):
    """Monotone proximal-gradient loop at a fixed regularization weight."""
    alpha = opts.alpha
    lipschitz = 2.0 * max(_gram_operator_norm(masks), _MIN_LAMBDA)
    lipschitz += 2.0 * lam * (1.0 - alpha)
    step = 1.0 / lipschitz

    def data_misfit(X):
        resid = np.einsum("nij,ij->n", masks, X) - y
        return resid, float(resid @ resid)

    X = x0.copy()
    _, nuclear = _soft_threshold_svd(X, 0.0)
    resid, misfit = data_misfit(X)
    objective = misfit + lam * (alpha * nuclear.sum() + (1 - alpha) * np.sum(X * X))
    objectives = [objective]
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        grad = 2.0 * np.einsum("n,nij->ij", resid, masks) + 2.0 * lam * (1 - alpha) * X
        while True:
            candidate, s_thr = _soft_threshold_svd(X - step * grad, step * lam * alpha)
            cand_resid, cand_misfit = data_misfit(candidate)
            cand_objective = cand_misfit + lam * (
                alpha * s_thr.sum() + (1 - alpha) * np.sum(candidate * candidate)
            )
            if cand_objective <= objective + EXACT_TOL * max(1.0, abs(objective)):
                break
            step *= 0.5  # power iteration underestimated the curvature
            if step < 1e-30:
                raise RuntimeError("backtracking failed to restore descent")
        change = np.linalg.norm(candidate - X) / max(1.0, np.linalg.norm(X))
        X, resid, objective = candidate, cand_resid, cand_objective
        objectives.append(objective)
        if change < opts.rel_tol:
            converged = True
            break
    return X, converged, iterations, np.array(objectives)


def recover(record, opts=None, *, eta2=None, dims=None):
    """Estimate the measured matrix from a measurement record.

    eta2 is only needed when opts.lam is None (to derive the default weight).
    dims, when given, is validated against the mask shapes.  If the iteration
    cap is hit before the relative-change tolerance, the best iterate is
    returned with converged=False and a warning.
    """
    opts = opts or RecoveryOptions()
    if len(record) == 0:
        raise ValueError("cannot recover from an empty measurement record")
    masks = np.stack(record.masks)
    if dims is not None and tuple(dims) != masks.shape[1:]:
        raise ValueError(f"dims {tuple(dims)} disagree with mask shape {masks.shape[1:]}")
    y = np.asarray(record.y, dtype=float)

    if opts.lam is not None:
        lam = opts.lam
    else:
        if eta2 is None:
            raise ValueError("need either opts.lam or eta2 to set the regularization weight")
        lam = opts.lam_scale * sqrt(eta2 * len(record))
    lam = max(lam, _MIN_LAMBDA)

    x0 = np.zeros(masks.shape[1:])
    X, converged, iterations, objectives = _solve_fixed_lambda(masks, y, lam, opts, x0)

    y_norm = max(np.linalg.norm(y), _MIN_LAMBDA)
    residual = np.linalg.norm(np.einsum("nij,ij->n", masks, X) - y) / y_norm
    if opts.continuation:
        for _ in range(30):
            trial_lam = lam / 2.0
            X2, conv2, iters2, obj2 = _solve_fixed_lambda(masks, y, trial_lam, opts, X)
            residual2 = np.linalg.norm(np.einsum("nij,ij->n", masks, X2) - y) / y_norm
            if residual2 >= residual * (1.0 - 1e-3):
                break
            X, converged, iterations, objectives = X2, conv2, iters2, obj2
            lam, residual = trial_lam, residual2
            if residual < 1e-12:
                break

    if not converged:
        warnings.warn(
            f"recovery stopped at the iteration cap ({opts.max_iters}) before reaching "
            f"rel_tol={opts.rel_tol}; returning the best iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    return RecoveryResult(
        estimate=X,
        converged=converged,
        iterations=iterations,
        objectives=objectives,
        lam=lam,
        relative_residual=residual,
    )


def estimate_subspaces(xhat, rank_threshold=DEFAULT_RANK_THRESHOLD):
    """Orthonormal bases for the dominant row/column spaces of an estimate.

    The estimated rank counts singular values at or above
    rank_threshold * (largest singular value); it is always at least 1.
    """
    xhat = np.asarray(xhat, dtype=float)
    U, s, Vt = np.linalg.svd(xhat, full_matrices=False)
    if s[0] <= 0.0:
        raise ValueError("cannot estimate subspaces of the zero matrix")
    rank = max(1, int(np.count_nonzero(s >= rank_threshold * s[0])))
    return SubspaceEstimate(u_hat=U[:, :rank], v_hat=Vt[:rank].T)


def map_objective(record, estimate, sigma2, eta2):
    """Exact posterior objective (reporting only; contains a rank^2 term)."""
    if eta2 <= 0 or sigma2 <= 0:
        raise ValueError("sigma2 and eta2 must be positive")
    masks = np.stack(record.masks)
    resid = np.einsum("nij,ij->n", masks, estimate) - np.asarray(record.y, dtype=float)
    rank = np.linalg.matrix_rank(estimate)
    return (
        float(resid @ resid) / eta2
        + log(2.0 * pi * sigma2) * rank**2
        + float(np.sum(estimate * estimate)) / sigma2
    )
