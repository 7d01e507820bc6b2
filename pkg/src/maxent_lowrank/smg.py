"""Low-rank matrix-variate Gaussian model: sampling, measurement, and the
closed-form moment/entropy algebra used for measurement-mask design.

The generative model draws X = P_U Z P_V, where Z has i.i.d. N(0, sigma2)
entries and P_U = U U^T, P_V = V V^T project onto R-dimensional column and
row subspaces. Scalar measurements are Frobenius inner products with unit
power masks, plus i.i.d. Gaussian noise:

    y_i = <A_i, X>_F + eps_i,   eps_i ~ N(0, eta2),   ||A_i||_F <= 1.

Because X is Gaussian, every moment of the measurements is available in
closed form through the projected masks P_U A_i P_V; those identities drive
everything else in this package.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .constants import (
    GAMMA2_FLOOR,
    JITTER_SCALE,
    MASK_POWER_TOL,
    ORTHONORMAL_TOL,
)

# A measurement mask is a plain 2-D float array with ||A||_F <= 1 (+ tol).
Mask = np.ndarray


class IllConditionedSystemError(np.linalg.LinAlgError):
    """Raised when a mask correlation system is singular (e.g. gamma2 = 0
    with linearly dependent projected masks) and cannot be factorized."""


def _as_matrix(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    return A


def check_mask(A, m1=None, m2=None):
    """Validate a measurement mask: 2-D, finite, unit power ||A||_F <= 1.

    Returns the mask as a float array. Dimensions are checked when given.
    """
    A = _as_matrix(A, "mask")
    if m1 is not None and A.shape != (m1, m2):
        raise ValueError(f"mask has shape {A.shape}, expected {(m1, m2)}")
    if not np.all(np.isfinite(A)):
        raise ValueError("mask contains non-finite entries")
    power = np.linalg.norm(A)
    if power > 1.0 + MASK_POWER_TOL:
        raise ValueError(f"mask violates the unit power constraint: ||A||_F = {power}")
    return A


def random_orthonormal(m, r, rng):
    """Haar-uniform m x r matrix with orthonormal columns.

    Orthonormalizes an i.i.d. Gaussian matrix by QR and normalizes signs so
    the triangular factor has a positive diagonal, which makes the column
    distribution exactly Haar (and the output deterministic given the rng).
    """
    if r > m:
        raise ValueError(f"cannot build {r} orthonormal columns in dimension {m}")
    Z = rng.standard_normal((m, r))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True)
class SMGModel:
    """Generative model for a random rank-<=R matrix.

    Fields
    ------
    U : (m1, R) orthonormal basis of the column subspace.
    V : (m2, R) orthonormal basis of the row subspace.
    sigma2 : entrywise signal variance of the latent Gaussian matrix (> 0).
    eta2 : measurement noise variance (>= 0).
    """

    U: np.ndarray
    V: np.ndarray
    sigma2: float
    eta2: float

    def __post_init__(self):
        U = _as_matrix(self.U, "U")
        V = _as_matrix(self.V, "V")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        if U.shape[1] != V.shape[1]:
            raise ValueError("U and V must have the same number of columns")
        R = U.shape[1]
        if not (1 <= R < min(U.shape[0], V.shape[0])):
            raise ValueError(f"rank must satisfy 1 <= R < min(m1, m2), got R={R}")
        for name, B in (("U", U), ("V", V)):
            dev = np.max(np.abs(B.T @ B - np.eye(R)))
            if dev > ORTHONORMAL_TOL:
                raise ValueError(f"{name} columns are not orthonormal (max dev {dev:.3e})")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.eta2 < 0:
            raise ValueError("eta2 must be nonnegative")
        # Cache the projections; the dataclass is frozen so they never drift.
        object.__setattr__(self, "_proj_u", U @ U.T)
        object.__setattr__(self, "_proj_v", V @ V.T)

    @property
    def m1(self):
        return self.U.shape[0]

    @property
    def m2(self):
        return self.V.shape[0]

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def gamma2(self):
        """Noise-to-signal variance ratio eta2 / sigma2 (read-only)."""
        return self.eta2 / self.sigma2

    @property
    def proj_u(self):
        """Projection onto the column subspace, U U^T."""
        return self._proj_u

    @property
    def proj_v(self):
        """Projection onto the row subspace, V V^T."""
        return self._proj_v


def random_model(m1, m2, rank, sigma2, eta2, seed):
    """SMGModel with independent Haar-uniform column/row subspaces."""
    rng = np.random.default_rng(seed)
    U = random_orthonormal(m1, rank, rng)
    V = random_orthonormal(m2, rank, rng)
    return SMGModel(U=U, V=V, sigma2=sigma2, eta2=eta2)


@dataclass(frozen=True)
class MeasurementRecord:
    """Masks applied so far together with their noisy scalar observations."""

    masks: tuple
    y: np.ndarray

    def __post_init__(self):
        masks = tuple(_as_matrix(A, "mask") for A in self.masks)
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.ndim != 1:
            raise ValueError("y must be a vector")
        if len(masks) != y.shape[0]:
            raise ValueError(f"{len(masks)} masks but {y.shape[0]} observations")
        shapes = {A.shape for A in masks}
        if len(shapes) > 1:
            raise ValueError(f"masks have inconsistent shapes: {shapes}")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.masks)

    @property
    def shape(self):
        return self.masks[0].shape if self.masks else None

    def extended(self, new_masks, new_y):
        """New record with additional (mask, observation) pairs appended."""
        return MeasurementRecord(self.masks + tuple(new_masks), np.concatenate([self.y, np.atleast_1d(new_y)]))


def sample_smg(model, seed):
    """Draw one matrix X = P_U Z P_V with Z ~ i.i.d. N(0, sigma2).

    The output has rank <= R with column/row spaces inside span(U)/span(V);
    deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    Z = rng.normal(0.0, np.sqrt(model.sigma2), size=(model.m1, model.m2))
    return model.proj_u @ Z @ model.proj_v


def measure(X, masks, eta2, seed):
    """Noisy linear measurements y_i = <A_i, X>_F + eps_i, eps ~ N(0, eta2)."""
    X = _as_matrix(X, "X")
    ms = [check_mask(A, *X.shape) for A in masks]
    if eta2 < 0:
        raise ValueError("eta2 must be nonnegative")
    rng = np.random.default_rng(seed)
    clean = np.array([np.sum(A * X) for A in ms])
    return clean + rng.normal(0.0, np.sqrt(eta2), size=len(ms))


def project_mask(model, A):
    """Orthogonal projection of a mask onto the model's matrix subspace
    T = {P_U Z P_V}: returns P_U A P_V.

    The map is idempotent, self-adjoint under the Frobenius inner product,
    and never increases the Frobenius norm.
    """
    A = _as_matrix(A, "mask")
    if A.shape != (model.m1, model.m2):
        raise ValueError(f"mask has shape {A.shape}, expected {(model.m1, model.m2)}")
    return model.proj_u @ A @ model.proj_v


def _projected_stack(model, masks):
    """Stack of projected masks, shape (n, m1, m2)."""
    out = np.empty((len(masks), model.m1, model.m2))
    for i, A in enumerate(masks):
        out[i] = project_mask(model, A)
    return out


def _projected_gram(model, masks, others=None):
    """Gram matrix of projected masks under <.,.>_F.

    With `others` given, returns the (len(masks), len(others)) cross-Gram.
    """
    P = _projected_stack(model, masks)
    Q = P if others is None else _projected_stack(model, others)
    return np.einsum("iab,jab->ij", P, Q)


def unconditional_cov(model, A, B):
    """Closed-form covariance of two mask measurements before observing data:

        Cov(y_A, y_B) = sigma2 * <P_U A P_V, P_U B P_V>_F,

    plus eta2 when A and B are *the same* measurement (identical object),
    since each measurement carries its own independent noise. Two distinct
    measurements therefore share no noise term even if their masks are equal.
    """
    PA = project_mask(model, A)
    PB = PA if B is A else project_mask(model, B)
    value = model.sigma2 * float(np.sum(PA * PB))
    if B is A:
        value += model.eta2
    return value


def measurement_cov_matrix(model, masks):
    """Full covariance matrix of a measurement vector: sigma2*G + eta2*I,
    where G is the Gram matrix of the projected masks."""
    G = _projected_gram(model, masks)
    return model.sigma2 * G + model.eta2 * np.eye(len(masks))


def _regularized_corr_solve(G, gamma2, rhs):
    """Solve (G + gamma2*I) x = rhs via an SPD (Cholesky) factorization.

    When gamma2 is below GAMMA2_FLOOR the system may be singular, so a
    relative jitter JITTER_SCALE * trace(G)/n is added and reported via a
    warning. A failed factorization raises IllConditionedSystemError.
    """
    n = G.shape[0]
    K = G + gamma2 * np.eye(n)
    if gamma2 < GAMMA2_FLOOR:
        jitter = JITTER_SCALE * np.trace(G) / n
        K = K + jitter * np.eye(n)
        warnings.warn(
            f"noise-to-signal ratio gamma2={gamma2:.3e} is near zero; "
            f"added diagonal jitter {jitter:.3e} to keep the system invertible",
            RuntimeWarning,
            stacklevel=3,
        )
    try:
        factor = cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedSystemError(
            "mask correlation system is singular; the projected masks are "
            "linearly dependent and gamma2 provides no regularization"
        ) from exc
    return cho_solve(factor, rhs)


def conditional_moments(model, record, new_masks):
    """Mean and covariance of new measurements given observed ones.

    With G the projected-mask Gram of the observed masks, r the cross-Gram
    with the new masks, and gamma2 = eta2/sigma2:

        E[y_new | y]   = r^T (G + gamma2 I)^{-1} y
        Cov[y_new | y] = sigma2*(G_new + gamma2 I) - sigma2 * r^T (G + gamma2 I)^{-1} r

    Returns (mean vector, symmetric PSD covariance matrix).
    """
    if len(record) == 0:
        raise ValueError("record must contain at least one observation")
    new_masks = list(new_masks)
    G = _projected_gram(model, record.masks)
    r = _projected_gram(model, record.masks, new_masks)  # (n, k)
    rhs = np.column_stack([record.y, r])
    solved = _regularized_corr_solve(G, model.gamma2, rhs)
    mean = r.T @ solved[:, 0]
    reduction = model.sigma2 * (r.T @ solved[:, 1:])
    prior = measurement_cov_matrix(model, new_masks)
    cov = prior - reduction
    return mean, (cov + cov.T) / 2.0


def exp_entropy(model, masks):
    """Exponentiated entropy score of a mask set (up to a constant factor):

        det( sigma2 * G + eta2 * I ),

    where G is the Gram matrix of the projected masks. Larger values mean
    the measurement vector is more informative about the unknown matrix.
    """
    masks = list(masks)
    if len(masks) == 0:
        raise ValueError("need at least one mask")
    return float(np.linalg.det(measurement_cov_matrix(model, masks)))
