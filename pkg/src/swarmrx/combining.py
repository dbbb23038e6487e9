"""Diversity combining across receive branches: MRC, LMMSE, and selection.

Weight convention
-----------------
A weight vector u is stored ready to apply, i.e. the combined stream is
y[k] = sum_i u_i r_i[k]. Under that convention the SNR of the combined
output is the Rayleigh quotient

    snr(u) = p_g |sum_i u_i h_i|^2 / (sigma2 sum_i |u_i|^2)

and the max-SNR weights are u = conj(h) (Cauchy-Schwarz), which makes the
combined SNR the sum of the per-branch SNRs. The LMMSE weights whiten
interference plus noise: with C = p_g h h^H + p_j h_j h_j^H + sigma2 I they
are u = p_g conj(C^{-1} h), stored conjugated so that the same apply rule
holds for every algorithm. Selection combining is a one-hot u on the best
branch. All quality metrics are scale invariant in u.

The combined stream is equalized to unit signal gain (divided by
sum_i u_i sqrt(p_g) h_i) so QPSK hard decisions apply directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class CombiningError(Exception):
    """Base class for combiner failures."""


class SingularCovarianceError(CombiningError):
    """Interference-plus-noise covariance not invertible (sigma2 = 0, rank deficient)."""


class DegenerateCombinationError(CombiningError):
    """Weights orthogonal to the signal: zero equalization denominator."""


class Algorithm(enum.Enum):
    DMRC = 0
    DLMMSE = 1
    SC = 2


@dataclass(frozen=True)
class CombinerWeights:
    u: np.ndarray
    algorithm: Algorithm

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.complex128)
        object.__setattr__(self, "u", u)
        if not np.all(np.isfinite(u.view(np.float64))):
            raise ValueError("weights must be finite")
        if np.linalg.norm(u) == 0.0:
            raise ValueError("weight vector must be nonzero")


@dataclass(frozen=True)
class BranchSet:
    """Per-cycle combining input collected by the leader.

    R stacks the branches' aligned payload symbol vectors row-wise. h and
    h_j are the signal and jammer taps per branch (h_j zero where the branch
    has no interference estimate); dead branches carry an alive_mask of
    False and are ignored by every weight builder.
    """

    R: np.ndarray
    h: np.ndarray
    h_j: np.ndarray
    p_g: float
    p_j: float
    sigma2: float
    alive_mask: np.ndarray

    def __post_init__(self) -> None:
        R = np.atleast_2d(np.asarray(self.R, dtype=np.complex128))
        h = np.asarray(self.h, dtype=np.complex128)
        h_j = np.asarray(self.h_j, dtype=np.complex128)
        alive = np.asarray(self.alive_mask, dtype=bool)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "h_j", h_j)
        object.__setattr__(self, "alive_mask", alive)
        n = R.shape[0]
        if not (h.shape == (n,) and h_j.shape == (n,) and alive.shape == (n,)):
            raise ValueError("R rows, h, h_j and alive_mask must agree on the branch count")
        if n < 1 or not alive.any():
            raise ValueError("need at least one alive branch")

    @property
    def n_branches(self) -> int:
        return self.R.shape[0]


def mrc_weights(h: np.ndarray) -> CombinerWeights:
    """Max-SNR weights: conjugate of the channel vector."""
    h = np.asarray(h, dtype=np.complex128)
    if np.linalg.norm(h) == 0.0:
        raise CombiningError("all-zero channel vector has no MRC weighting")
    return CombinerWeights(u=np.conj(h), algorithm=Algorithm.DMRC)


def lmmse_weights(
    h: np.ndarray,
    h_j: np.ndarray,
    p_g: float,
    p_j: float,
    sigma2: float,
) -> CombinerWeights:
    """Max-SINR weights from the full signal+jammer+noise covariance.

    Solves [p_g h h^H + p_j h_j h_j^H + sigma2 I] w = h directly rather than
    forming the inverse, then stores u = p_g conj(w) so the bilinear apply
    rule matches the other algorithms.
    """
    h = np.asarray(h, dtype=np.complex128)
    h_j = np.asarray(h_j, dtype=np.complex128)
    cov = (
        p_g * np.outer(h, np.conj(h))
        + p_j * np.outer(h_j, np.conj(h_j))
        + sigma2 * np.eye(h.size)
    )
    try:
        w = np.linalg.solve(cov, h)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"covariance is singular (sigma2={sigma2}); need sigma2 > 0 or full-rank interference"
        ) from exc
    return CombinerWeights(u=p_g * np.conj(w), algorithm=Algorithm.DLMMSE)


def lmmse_weights_from_covariance(h: np.ndarray, p_g: float, q: np.ndarray) -> CombinerWeights:
    """LMMSE weights with a measured interference-plus-noise covariance q.

    Used when the jammer channel is not known in closed form: q replaces
    p_j h_j h_j^H + sigma2 I.
    """
    h = np.asarray(h, dtype=np.complex128)
    cov = p_g * np.outer(h, np.conj(h)) + np.asarray(q, dtype=np.complex128)
    try:
        w = np.linalg.solve(cov, h)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("measured covariance is singular") from exc
    return CombinerWeights(u=p_g * np.conj(w), algorithm=Algorithm.DLMMSE)


def sc_weights(branch_bers: np.ndarray, alive_mask: np.ndarray) -> CombinerWeights:
    """One-hot weight on the alive branch with minimum BER (lowest index on ties)."""
    bers = np.asarray(branch_bers, dtype=np.float64)
    alive = np.asarray(alive_mask, dtype=bool)
    if bers.shape != alive.shape:
        raise ValueError("branch_bers and alive_mask must have the same length")
    if not alive.any():
        raise CombiningError("selection combining needs at least one alive branch")
    masked = np.where(alive, bers, np.inf)
    best = int(np.argmin(masked))  # argmin takes the first index on ties
    u = np.zeros(bers.size, dtype=np.complex128)
    u[best] = 1.0
    return CombinerWeights(u=u, algorithm=Algorithm.SC)


def combine(bs: BranchSet, w: CombinerWeights) -> np.ndarray:
    """Weighted sum of branch streams, equalized to unit signal gain.

    y[k] = (sum_i u_i r_i[k]) / (sum_i u_i sqrt(p_g) h_i); the denominator
    restores the transmitted constellation so hard decisions need no further
    scaling. Dead branches must carry zero weight.
    """
    u = np.asarray(w.u, dtype=np.complex128)
    if u.shape != (bs.n_branches,):
        raise ValueError(f"weight dimension {u.shape} does not match {bs.n_branches} branches")
    if np.any(np.abs(u[~bs.alive_mask]) > 0):
        raise ValueError("dead branches must carry zero weight")
    gain = np.sum(u * np.sqrt(bs.p_g) * bs.h)
    scale = np.linalg.norm(u) * np.sqrt(bs.p_g) * max(np.linalg.norm(bs.h), 1.0)
    if np.abs(gain) <= 1e-12 * scale:
        raise DegenerateCombinationError("combined signal gain is zero; weights orthogonal to channel")
    return (u @ bs.R) / gain


def _weights_array(w) -> np.ndarray:
    u = np.asarray(getattr(w, "u", w), dtype=np.complex128)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValueError("weight vector must be nonzero")
    return u


def snr(w, h: np.ndarray, p_g: float, sigma2: float) -> float:
    """Combined-output SNR: p_g |u . h|^2 / (sigma2 ||u||^2). Scale invariant."""
    u = _weights_array(w)
    h = np.asarray(h, dtype=np.complex128)
    num = p_g * np.abs(np.sum(u * h)) ** 2
    den = sigma2 * float(np.sum(np.abs(u) ** 2))
    if den == 0.0:
        return float("inf") if num > 0 else 0.0
    return float(num / den)


def sinr(w, h: np.ndarray, h_j: np.ndarray, p_g: float, p_j: float, sigma2: float) -> float:
    """Combined-output SINR; reduces to :func:`snr` when p_j = 0."""
    u = _weights_array(w)
    h = np.asarray(h, dtype=np.complex128)
    h_j = np.asarray(h_j, dtype=np.complex128)
    num = p_g * np.abs(np.sum(u * h)) ** 2
    den = sigma2 * float(np.sum(np.abs(u) ** 2)) + p_j * np.abs(np.sum(u * h_j)) ** 2
    if den == 0.0:
        return float("inf") if num > 0 else 0.0
    return float(num / den)


def estimate_jammer_covariance(residuals: np.ndarray) -> np.ndarray:
    """Sample interference-plus-noise covariance from per-branch preamble residuals.

    `residuals` is (n_branches, n_samples): each row is a branch's received
    preamble after subtracting the re-synthesized signal part, so what is
    left is jammer plus noise in the same coordinates as the payload rows.
    """
    e = np.atleast_2d(np.asarray(residuals, dtype=np.complex128))
    return (e @ e.conj().T) / e.shape[1]


def estimate_jammer_taps(residuals: np.ndarray, sigma2: float) -> np.ndarray:
    """Rank-1 jammer tap estimate (with sqrt power folded in) from residuals.

    The dominant eigenvector of the residual covariance minus the noise
    floor approximates sqrt(p_j) h_j up to a common phase, which is all the
    covariance term p_j h_j h_j^H needs. Returns the zero vector when the
    residual energy does not rise above the noise floor.
    """
    q = estimate_jammer_covariance(residuals)
    vals, vecs = np.linalg.eigh(q)
    lam = float(vals[-1]) - sigma2
    if lam <= 0.0:
        return np.zeros(q.shape[0], dtype=np.complex128)
    return np.sqrt(lam) * vecs[:, -1]
