"""Low-block-coherence frame sets and the initial measurement masks built from them.

A frame set collects n matrices of shape (m, R), each with orthonormal
columns.  Two quality metrics drive the initial-design constructions:

* worst-case block coherence: max over pairs of the spectral norm of the
  cross-Gram matrix F_i^T F_j (requires m >= 2R to be meaningful), and
* average block coherence: the largest row-sum analogue
  (1/(n-1)) * max_i || sum_{j != i} F_i^T F_j ||_2.

Well-packed frames (low coherence on both counts) yield measurement masks
A_i = R^{-1/2} R_i S_i^T that maximize a lower bound on the exponentiated
entropy of the resulting observations; `entropy_lower_bound` evaluates that
bound for a given model.

Two constructions are provided: a sign-flipping post-process applied to
uniformly random frames (works for any geometry), and a deterministic
mutually-unbiased-bases system lifted by a Kronecker product (better
coherence, but only for dyadic geometries).
"""

from dataclasses import dataclass
from math import ceil, sqrt

import numpy as np
from scipy.linalg import hadamard

from .constants import EXACT_TOL, ORTHONORMAL_TOL
from .smg import Mask, SMGModel, random_orthonormal, unconditional_cov

__all__ = [
    "FrameSet",
    "random_frames",
    "worst_case_coherence",
    "avg_coherence",
    "flip",
    "kerdock_frames",
    "kk_frame_factors",
    "frames_to_masks",
    "ini_flip",
    "ini_kk",
    "entropy_lower_bound",
]


@dataclass(frozen=True)
class FrameSet:
    """An ordered set of n frames, stored as an (n, m, R) array.

    Every frame has orthonormal columns.  The coherence metrics additionally
    require m >= 2R; that requirement is checked by the metrics themselves
    so that tall-but-narrow geometries (m < 2R) can still be constructed
    and turned into masks.
    """

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        if blocks.ndim != 3:
            raise ValueError(f"blocks must be a 3-D (n, m, R) array, got shape {blocks.shape}")
        n, m, r = blocks.shape
        if n < 1:
            raise ValueError("a frame set needs at least one frame")
        if m < r:
            raise ValueError(f"frame height m={m} must be at least the block width R={r}")
        eye = np.eye(r)
        grams = np.einsum("nmr,nms->nrs", blocks, blocks)
        worst = np.max(np.abs(grams - eye))
        if worst > ORTHONORMAL_TOL:
            raise ValueError(f"frame columns are not orthonormal (max deviation {worst:.3e})")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self):
        return self.blocks.shape[0]

    @property
    def m(self):
        return self.blocks.shape[1]

    @property
    def block_rank(self):
        return self.blocks.shape[2]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.blocks[i]


def random_frames(m, rank, n, seed):
    """n independent uniformly (Haar) distributed rank-column frames in R^m."""
    if m < rank:
        raise ValueError(f"cannot fit {rank} orthonormal columns in dimension {m}")
    rng = np.random.default_rng(seed)
    return FrameSet(np.stack([random_orthonormal(m, rank, rng) for _ in range(n)]))


def _require_coherence_geometry(frames):
    if frames.n < 2:
        raise ValueError("coherence metrics need at least two frames")
    if frames.m < 2 * frames.block_rank:
        raise ValueError(
            f"coherence metrics require m >= 2R, got m={frames.m}, R={frames.block_rank}"
        )


def worst_case_coherence(frames):
    """max over i != j of the spectral norm of the cross-Gram F_i^T F_j."""
    _require_coherence_geometry(frames)
    blocks = frames.blocks
    worst = 0.0
    for i in range(frames.n):
        for j in range(i + 1, frames.n):
            worst = max(worst, np.linalg.norm(blocks[i].T @ blocks[j], 2))
    return worst


def avg_coherence(frames):
    """(1/(n-1)) * max over i of the spectral norm of sum_{j != i} F_i^T F_j."""
    _require_coherence_geometry(frames)
    blocks = frames.blocks
    total = blocks.sum(axis=0)
    eye = np.eye(frames.block_rank)
    worst = 0.0
    for i in range(frames.n):
        # sum_{j != i} F_i^T F_j = F_i^T (sum_j F_j) - I.
        worst = max(worst, np.linalg.norm(blocks[i].T @ total - eye, 2))
    return worst / (frames.n - 1)


def flip(frames):
    """Greedy sign-flipping pass that reduces average block coherence.

    Walks the frames in order keeping a running sum F; each frame keeps its
    sign if adding it does not grow the spectral norm of the running sum more
    than subtracting it would (ties keep the original sign), else the whole
    frame is negated.  Output frames equal the input frames up to sign, so
    worst-case coherence is unchanged.
    """
    blocks = frames.blocks
    kept = [blocks[0]]
    running = blocks[0].copy()
    for k in range(1, frames.n):
        cand = blocks[k]
        if np.linalg.norm(running + cand, 2) <= np.linalg.norm(running - cand, 2):
            chosen = cand
        else:
            chosen = -cand
        kept.append(chosen)
        running = running + chosen
    return FrameSet(np.stack(kept))


# ---------------------------------------------------------------------------
# Deterministic mutually-unbiased-bases system in dimensions m = 4^k.
#
# The system lives on the index set {0, ..., m-1} read as pairs (x, y) with
# x in GF(2^s), y in GF(2), where s = log2(m) - 1 is odd.  Each field element
# a defines a quadratic form
#
#     Q_a(x, y) = tr( sum_{j=1}^{(s-1)/2} (a x)^(2^j + 1) ) + y * tr(a x)
#
# over GF(2), and with it an orthonormal "phase basis" D_a H / sqrt(m), where
# H is the Sylvester-Hadamard matrix and D_a = diag((-1)^(Q_a(p))).  Distinct
# phase bases, and every phase basis against the standard basis, have all
# cross inner products of magnitude exactly 1/sqrt(m); this is verified
# numerically at construction time for the bases actually built.
# ---------------------------------------------------------------------------

# Irreducible polynomials over GF(2) of odd degree s, as bitmasks
# (bit i = coefficient of x^i).  Covers system dimensions 4 through 1024.
_GF2_MODULI = {
    1: 0b11,
    3: 0b1011,
    5: 0b100101,
    7: 0b10000011,
    9: 0b1000010001,
}


def _gf_mul(a, b, modulus, degree):
    """Product in GF(2^degree): carryless multiply, then reduce."""
    prod = 0
    while b:
        if b & 1:
            prod ^= a
        a <<= 1
        b >>= 1
    for shift in range(prod.bit_length() - 1, degree - 1, -1):
        if (prod >> shift) & 1:
            prod ^= modulus << (shift - degree)
    return prod


def _gf_trace(u, modulus, degree):
    """Field trace onto GF(2): sum of the degree Frobenius conjugates."""
    acc = u
    power = u
    for _ in range(degree - 1):
        power = _gf_mul(power, power, modulus, degree)
        acc ^= power
    if acc not in (0, 1):
        raise RuntimeError("field trace fell outside GF(2); bad modulus")
    return acc


def _phase_vector(a, m, modulus, degree):
    """(-1)^(Q_a(p)) for every point p = (x << 1) | y in {0, ..., m-1}."""
    signs = np.empty(m)
    for x in range(m // 2):
        w = _gf_mul(a, x, modulus, degree)
        q_common = 0
        power = w
        for _ in range((degree - 1) // 2):
            power = _gf_mul(power, power, modulus, degree)
            q_common ^= _gf_trace(_gf_mul(power, w, modulus, degree), modulus, degree)
        tr_w = _gf_trace(w, modulus, degree)
        for y in (0, 1):
            q = q_common ^ (y & tr_w)
            signs[(x << 1) | y] = 1.0 if q == 0 else -1.0
    return signs


def kerdock_frames(m, n):
    """n unit columns from the mutually-unbiased-bases system in dimension m.

    Requires m = 2^(k+1) for odd k (i.e. m a power of 4).  Columns are grouped
    into orthonormal bases: the phase bases come first, each complete basis
    carrying an alternating overall sign (so that pairs of complete bases have
    columns summing to zero, which makes the average block coherence of two
    full bases exactly 1/(n-1)), with the standard basis available last.  The
    system holds m/2 + 1 bases, so at most m*(m/2 + 1) columns exist; asking
    for more raises an unsupported-geometry error.
    """
    if m < 4 or (m & (m - 1)) != 0 or (m.bit_length() - 1) % 2 != 0:
        raise ValueError(
            f"unsupported geometry: dimension must be 2^(k+1) with k odd (a power of 4 "
            f">= 4), got {m}"
        )
    if n < 1:
        raise ValueError("need at least one frame")
    capacity = m * (m // 2 + 1)
    if n > capacity:
        raise ValueError(
            f"unsupported geometry: the dimension-{m} system holds m/2 + 1 = {m // 2 + 1} "
            f"bases of {m} columns, so n <= {capacity}; got n={n}"
        )
    degree = m.bit_length() - 2
    if degree not in _GF2_MODULI:
        raise ValueError(f"unsupported geometry: no field modulus stored for dimension {m}")
    modulus = _GF2_MODULI[degree]

    n_bases = ceil(n / m)
    root = sqrt(m)
    H = hadamard(m).astype(float)
    bases = []
    for b in range(n_bases):
        if b < m // 2:
            basis = (_phase_vector(b, m, modulus, degree)[:, None] * H) / root
        else:
            basis = np.eye(m)
        if b % 2 == 1:
            basis = -basis
        bases.append(basis)

    # Construction-time verification on the bases actually built: orthonormal
    # within each basis, cross inner products of magnitude exactly 1/sqrt(m).
    for b, basis in enumerate(bases):
        if np.max(np.abs(basis.T @ basis - np.eye(m))) > ORTHONORMAL_TOL:
            raise RuntimeError(f"constructed basis {b} is not orthonormal")
        for other in bases[:b]:
            cross = np.abs(other.T @ basis)
            if np.max(np.abs(cross - 1.0 / root)) > ORTHONORMAL_TOL:
                raise RuntimeError(
                    f"constructed bases are not mutually unbiased in dimension {m}"
                )

    columns = np.concatenate(bases, axis=1)[:, :n]
    return FrameSet(columns.T[:, :, None])


def frames_to_masks(row_frames, col_frames):
    """Masks A_i = R^{-1/2} R_i S_i^T from paired row/column frames."""
    if row_frames.n != col_frames.n:
        raise ValueError("row and column frame sets must have the same count")
    if row_frames.block_rank != col_frames.block_rank:
        raise ValueError("row and column frames must share the block width")
    scale = 1.0 / sqrt(row_frames.block_rank)
    masks = [scale * R @ S.T for R, S in zip(row_frames.blocks, col_frames.blocks)]
    for A in masks:
        power = np.linalg.norm(A)
        if abs(power - 1.0) > EXACT_TOL * 10:
            raise RuntimeError(f"constructed mask power {power} deviates from 1")
    return masks


def ini_flip(m1, m2, n, rank_ini, seed):
    """Initial masks from flipped uniformly random row/column frames."""
    if rank_ini < 1 or rank_ini > min(m1, m2):
        raise ValueError(f"initial rank {rank_ini} must lie in [1, min({m1}, {m2})]")
    row_seed, col_seed = np.random.SeedSequence(seed).spawn(2)
    rows = flip(random_frames(m1, rank_ini, n, row_seed))
    cols = flip(random_frames(m2, rank_ini, n, col_seed))
    return frames_to_masks(rows, cols)


def _kk_side_factors(m, rank_ini, n, rng):
    if rank_ini < 1 or m % rank_ini != 0:
        raise ValueError(
            f"unsupported geometry: dimension {m} is not a multiple of the initial rank "
            f"{rank_ini}"
        )
    dim = m // rank_ini
    vectors = kerdock_frames(dim, n)  # raises if dim is not 2^(k+1), k odd
    Q = random_orthonormal(rank_ini, rank_ini, rng)
    blocks = np.stack([np.kron(v, Q) for v in vectors.blocks])
    return FrameSet(blocks)


def kk_frame_factors(m1, m2, n, rank_ini, seed):
    """Kronecker-lifted unbiased-bases frame factors, before sign flipping.

    Each row frame is k_i (x) Q_R with k_i a unit column of the dimension
    m1/rank_ini system and Q_R a Haar-random rank_ini x rank_ini orthogonal
    matrix (likewise for columns).  Exposed separately so the pre-flip
    coherence of the factors can be inspected.
    """
    row_rng, col_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    rows = _kk_side_factors(m1, rank_ini, n, row_rng)
    cols = _kk_side_factors(m2, rank_ini, n, col_rng)
    return rows, cols


def ini_kk(m1, m2, n, rank_ini, seed):
    """Initial masks from flipped Kronecker-lifted unbiased-bases frames."""
    rows, cols = kk_frame_factors(m1, m2, n, rank_ini, seed)
    return frames_to_masks(flip(rows), flip(cols))


def kk_compatible(m1, m2, n, rank_ini):
    """Whether the Kronecker-lifted unbiased-bases construction exists here.

    True exactly when ini_kk(m1, m2, n, rank_ini, ...) would succeed: each
    side dimension must be rank_ini times a power of 4 (at least 4) with a
    stored field modulus, and n must not exceed the capacity of the smaller
    side's basis system.
    """
    if n < 1 or rank_ini < 1:
        return False
    for m in (m1, m2):
        if m % rank_ini != 0:
            return False
        dim = m // rank_ini
        if dim < 4 or (dim & (dim - 1)) != 0 or (dim.bit_length() - 1) % 2 != 0:
            return False
        if dim.bit_length() - 2 not in _GF2_MODULI:
            return False
        if n > dim * (dim // 2 + 1):
            return False
    return True


def entropy_lower_bound(model, row_frames, col_frames):
    """Lower bound on the n-th root of the exponentiated measurement entropy.

    For masks A_i = R^{-1/2} R_i S_i^T the bound is

        min_i [ Var(y_i) - sigma^2 (n-1)/2 * (xi_U(i) + xi_V(i)) ]

    with xi_U(i) = max_{j != i} ||(P_U R_i)^T (P_U R_j)||_2^2 and likewise
    xi_V on the column side.  The bound can be negative (vacuous).
    """
    if row_frames.n != col_frames.n:
        raise ValueError("row and column frame sets must have the same count")
    n = row_frames.n
    masks = frames_to_masks(row_frames, col_frames)
    variances = np.array([unconditional_cov(model, A, A) for A in masks])
    if n == 1:
        return float(variances[0])

    def max_cross(blocks, proj):
        projected = np.einsum("ab,nbr->nar", proj, blocks)
        xi = np.zeros(n)
        for i in range(n):
            for j in range(n):
                if j != i:
                    norm = np.linalg.norm(projected[i].T @ projected[j], 2)
                    xi[i] = max(xi[i], norm**2)
        return xi

    xi_row = max_cross(row_frames.blocks, model.proj_u)
    xi_col = max_cross(col_frames.blocks, model.proj_v)
    penalty = model.sigma2 * (n - 1) / 2.0 * (xi_row + xi_col)
    return float(np.min(variances - penalty))
