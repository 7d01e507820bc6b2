"""Numerical tolerance and regularization constants used across the package.

All values sit at the double-precision noise floor scale and are collected
here so callers can reference (and tests can pin) a single source of truth.
"""

# Orthonormality checks on basis/frame columns (max abs deviation of F^T F - I).
ORTHONORMAL_TOL = 1e-10

# Symmetry / positive-semidefiniteness slack on returned covariance matrices.
PSD_TOL = 1e-8

# Exactness tolerance for algebraic identities (projection idempotence,
# unit Frobenius norms of constructed masks, ...).
EXACT_TOL = 1e-12

# Unit-power constraint slack on measurement masks.
MASK_POWER_TOL = 1e-10

# When the noise-to-signal ratio gamma2 falls below this threshold, linear
# systems built from mask correlation matrices may be numerically singular.
GAMMA2_FLOOR = 1e-12

# Relative jitter added to the diagonal in that near-singular regime:
# jitter = JITTER_SCALE * trace(K) / n.
JITTER_SCALE = 1e-10

# Default singular-value cutoff (fraction of the largest singular value)
# used when estimating rank and subspaces from a recovered matrix.
DEFAULT_RANK_THRESHOLD = 0.05
