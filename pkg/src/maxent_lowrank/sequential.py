"""Information-greedy sequential mask construction and the PCA oracle baseline.

Given plug-in estimates (U, V) of the row/column spaces, the value of a new
unit-power mask A is measured by how much observation variance it retains
after conditioning on the masks already used:

    f(A) = ||P_U A P_V||_F^2 - r(A)^T [G + gamma2 I]^{-1} r(A),

where G is the Gram matrix of the projected prior masks and r(A) their inner
products with the projected candidate.  Writing d = vec(U^T A V) and D for
the matrix whose rows are the projected prior masks in the same coordinates,
f(A) = ||d||^2 - d^T M d with M = D^T [D D^T + gamma2 I]^{-1} D, so a unit
eigenvector of M with the smallest eigenvalue maximizes f over the unit ball,
attaining 1 - lambda_min.  `next_mask` returns the mask built from that
eigenvector (or the k smallest for batch sampling).
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .constants import ORTHONORMAL_TOL

__all__ = ["SubspaceEstimate", "seq_objective", "next_mask", "pca_masks"]


@dataclass(frozen=True)
class SubspaceEstimate:
    """Orthonormal row-space and column-space estimates of equal rank."""

    u_hat: np.ndarray
    v_hat: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_hat, dtype=float)
        v = np.asarray(self.v_hat, dtype=float)
        if u.ndim != 2 or v.ndim != 2:
            raise ValueError("subspace estimates must be 2-D matrices")
        if u.shape[1] != v.shape[1]:
            raise ValueError(
                f"row and column estimates disagree on rank: {u.shape[1]} vs {v.shape[1]}"
            )
        if u.shape[1] < 1:
            raise ValueError("estimated rank must be at least 1")
        for name, mat in (("row", u), ("column", v)):
            gram = mat.T @ mat
            if np.max(np.abs(gram - np.eye(mat.shape[1]))) > ORTHONORMAL_TOL:
                raise ValueError(f"{name}-space estimate does not have orthonormal columns")
        object.__setattr__(self, "u_hat", u)
        object.__setattr__(self, "v_hat", v)

    @property
    def rank(self):
        return self.u_hat.shape[1]


def _power_coords(est, masks):
    """Rows vec(U^T A_i V) of the prior masks; (0, rank^2) when empty."""
    r = est.rank
    if len(masks) == 0:
        return np.zeros((0, r * r))
    return np.stack([(est.u_hat.T @ A @ est.v_hat).ravel() for A in masks])


def seq_objective(est, masks, gamma2, A):
    """Retained conditional variance (in sigma^2 units, noise floor removed)."""
    if gamma2 <= 0:
        raise ValueError("gamma2 must be positive")
    d = (est.u_hat.T @ np.asarray(A, dtype=float) @ est.v_hat).ravel()
    base = float(d @ d)
    if len(masks) == 0:
        return base
    D = _power_coords(est, masks)
    K = D @ D.T + gamma2 * np.eye(D.shape[0])
    r = D @ d
    solved = cho_solve(cho_factor(K, lower=True), r)
    return base - float(r @ solved)


def next_mask(est, masks, gamma2, k=1):
    """The k unit-power masks maximizing the sequential objective.

    Masks are U Sigma V^T with vec(Sigma) the eigenvectors of
    M = D^T [D D^T + gamma2 I]^{-1} D for the k smallest eigenvalues; with no
    prior masks M = 0 and the first k standard-basis power matrices are
    returned deterministically.  A (near-)flat spectrum means every direction
    is equally good; that degenerate case is flagged with a warning.
    """
    if gamma2 <= 0:
        raise ValueError("gamma2 must be positive")
    r = est.rank
    if not 1 <= k <= r * r:
        raise ValueError(f"batch size {k} must lie in [1, rank^2 = {r * r}]")
    D = _power_coords(est, masks)
    if D.shape[0] == 0:
        vectors = np.eye(r * r)[:, :k]
    else:
        K = D @ D.T + gamma2 * np.eye(D.shape[0])
        M = D.T @ cho_solve(cho_factor(K, lower=True), D)
        M = (M + M.T) / 2.0
        eigenvalues, eigenvectors = np.linalg.eigh(M)
        spread = eigenvalues[-1] - eigenvalues[0]
        if r > 1 and spread <= 1e-12 * max(1.0, abs(eigenvalues[-1])):
            warnings.warn(
                "sequential eigenproblem is degenerate (flat spectrum); every "
                "direction in the estimated subspace is equally informative",
                RuntimeWarning,
                stacklevel=2,
            )
        vectors = eigenvectors[:, :k]
    out = []
    for idx in range(k):
        power = vectors[:, idx].reshape(r, r)
        out.append(est.u_hat @ power @ est.v_hat.T)
    return out


def pca_masks(model, n):
    """The oracle design u_k v_l^T built from the true subspaces, row-major.

    These n <= rank^2 masks are orthonormal, span the model's subspace-aligned
    matrices, and realize the maximal-variance/zero-covariance sequence; they
    need the true subspaces, so they serve only as a baseline.
    """
    r = model.rank
    if not 1 <= n <= r * r:
        raise ValueError(
            f"only rank^2 = {r * r} uncorrelated positive-variance masks exist; got n={n}"
        )
    masks = []
    for k in range(r):
        for l in range(r):
            masks.append(np.outer(model.U[:, k], model.V[:, l]))
            if len(masks) == n:
                return masks
    return masks
