"""Per-cycle healing decision: count healthy branches, pick the combiner.

A branch is healthy when its BER against the known reference payload stays
at or below the configured threshold. With every branch healthy the leader
runs max-SNR combining; with exactly one healthy branch it selects that
branch outright; in between it runs the interference-whitening combiner.
When no branch qualifies the decision falls back to selecting the least-bad
branch so a result is always produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .combining import (
    Algorithm,
    BranchSet,
    CombinerWeights,
    combine,
    lmmse_weights,
    mrc_weights,
    sc_weights,
)
from .phy import demodulate_qpsk


@dataclass(frozen=True)
class ChannelEstimate:
    """One branch's channel knowledge: signal tap, optional jammer tap, noise power."""

    h: complex
    h_j: complex | None = None
    sigma2: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if not np.isfinite(self.h):
            raise ValueError("channel estimate must be finite")


@dataclass(frozen=True)
class BranchReport:
    """One receiver's contribution for a cycle.

    `payload_symbols` is the branch's aligned (timing and CFO corrected,
    carrier phase retained) payload vector, the row it contributes to the
    combining matrix. `preamble_residual` optionally carries the preamble
    after signal removal so the leader can measure interference statistics.
    """

    branch_id: int
    cycle: int
    estimate: ChannelEstimate
    payload_bits: np.ndarray
    ber: float
    payload_symbols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.complex128))
    preamble_residual: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.complex128))

    def __post_init__(self) -> None:
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"ber must lie in [0, 1], got {self.ber}")


@dataclass(frozen=True)
class HealConfig:
    ber_threshold: float = 0.05
    n_total: int = 3

    def __post_init__(self) -> None:
        if not 0.0 < self.ber_threshold < 0.5:
            raise ValueError(f"ber_threshold must lie in (0, 0.5), got {self.ber_threshold}")
        if self.n_total < 1:
            raise ValueError("n_total must be at least 1")


@dataclass(frozen=True)
class CombinerDecision:
    algorithm: Algorithm
    weights: CombinerWeights
    combined_bits: np.ndarray
    combined_ber: float
    data_rate: float
    n_s: int
    cycle: int
    branch_bers: dict[int, float]
    branch_rates: dict[int, float]

    @property
    def participants(self) -> tuple[int, ...]:
        return tuple(sorted(self.branch_bers))


def compute_ber(decoded: np.ndarray, reference: np.ndarray) -> float:
    """Hamming distance over length; streams must have equal (unpadded) length."""
    decoded = np.asarray(decoded, dtype=np.uint8)
    reference = np.asarray(reference, dtype=np.uint8)
    if decoded.shape != reference.shape:
        raise ValueError(f"bit stream length mismatch: {decoded.shape} vs {reference.shape}")
    if decoded.size == 0:
        raise ValueError("cannot compute BER on empty streams")
    return float(np.count_nonzero(decoded != reference)) / decoded.size


def count_good_branches(reports: list[BranchReport], cfg: HealConfig) -> int:
    """Number of branches whose BER does not exceed the threshold."""
    return sum(1 for r in reports if r.ber <= cfg.ber_threshold)


def select_algorithm(n_s: int, n_alive: int) -> Algorithm:
    """State machine over the healthy-branch count.

    All alive branches healthy -> max-SNR combining; a strict subset larger
    than one -> interference whitening; exactly one (or, as a fallback,
    zero) -> selection. A lone alive branch selects itself, which is the
    same combined output either way.
    """
    if n_alive < 1:
        raise ValueError("need at least one alive branch")
    if not 0 <= n_s <= n_alive:
        raise ValueError(f"n_s={n_s} outside [0, {n_alive}]")
    if n_s <= 1:
        return Algorithm.SC
    if n_s == n_alive:
        return Algorithm.DMRC
    return Algorithm.DLMMSE


def data_rate(ber: float, payload_bits_per_frame: int, frame_duration: float) -> float:
    """Goodput in bits/second: payload size scaled by (1 - BER) per frame."""
    if frame_duration <= 0:
        raise ValueError(f"frame duration must be positive, got {frame_duration}")
    return payload_bits_per_frame * (1.0 - ber) / frame_duration


def build_weights(algorithm: Algorithm, bs: BranchSet, branch_bers: np.ndarray) -> CombinerWeights:
    """Weight vector for the selected algorithm with dead branches zeroed."""
    alive = bs.alive_mask
    if algorithm is Algorithm.DMRC:
        return mrc_weights(np.where(alive, bs.h, 0.0))
    if algorithm is Algorithm.DLMMSE:
        w = lmmse_weights(
            np.where(alive, bs.h, 0.0),
            np.where(alive, bs.h_j, 0.0),
            bs.p_g,
            bs.p_j,
            bs.sigma2,
        )
        if not alive.all():
            u = w.u.copy()
            u[~alive] = 0.0
            w = CombinerWeights(u=u, algorithm=Algorithm.DLMMSE)
        return w
    return sc_weights(branch_bers, alive)


def heal_cycle(
    reports: list[BranchReport],
    branch_set: BranchSet,
    cfg: HealConfig,
    reference: np.ndarray,
    frame_duration: float,
) -> CombinerDecision:
    """Run one full healing step at the leader.

    Reports must come from alive branches only and line up with the rows of
    `branch_set` (report i describes row i). Combines, demodulates, and
    scores the result against the known reference payload.
    """
    if not reports:
        raise ValueError("heal_cycle needs at least one report")
    if len(reports) != branch_set.n_branches:
        raise ValueError(
            f"{len(reports)} reports do not match {branch_set.n_branches} branch rows"
        )
    reference = np.asarray(reference, dtype=np.uint8)
    cycle = reports[0].cycle

    bers = np.array([r.ber for r in reports])
    n_s = count_good_branches(reports, cfg)
    algorithm = select_algorithm(n_s, int(branch_set.alive_mask.sum()))
    weights = build_weights(algorithm, branch_set, bers)

    combined = combine(branch_set, weights)
    combined_bits = demodulate_qpsk(combined)[: reference.size]
    combined_ber = compute_ber(combined_bits, reference)

    rate = data_rate(combined_ber, reference.size, frame_duration)
    branch_bers = {r.branch_id: r.ber for r in reports}
    branch_rates = {
        r.branch_id: data_rate(r.ber, reference.size, frame_duration) for r in reports
    }
    return CombinerDecision(
        algorithm=algorithm,
        weights=weights,
        combined_bits=combined_bits,
        combined_ber=combined_ber,
        data_rate=rate,
        n_s=n_s,
        cycle=cycle,
        branch_bers=branch_bers,
        branch_rates=branch_rates,
    )
