"""Per-branch flat-fading channel with an optional jammer and AWGN.

Each receive branch sees the transmit stream through a single complex tap,
plus an independent jammer stream through its own tap, plus circularly
symmetric Gaussian noise. Powers are configured in dBm and converted to
linear milliwatts; the constellation carries unit average energy, so only
power ratios (SNR, INR) are physically meaningful here.

Every random draw is keyed by an explicit seed tuple so that independent
processes replay identical channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Stream ids that keep the RNG draws for different purposes disjoint.
STREAM_NOISE = 1
STREAM_FADING = 2
STREAM_JAMMER = 3
STREAM_PAYLOAD = 4
STREAM_PAD = 5


def dbm_to_linear(dbm: float) -> float:
    """dBm to linear milliwatts: 10^(dbm/10)."""
    if not np.isfinite(dbm):
        raise ValueError(f"power must be finite, got {dbm}")
    return float(10.0 ** (dbm / 10.0))


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator that is a pure function of (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def complex_awgn(rng: np.random.Generator, n: int, sigma2: float) -> np.ndarray:
    """n samples of CN(0, sigma2)."""
    if sigma2 < 0:
        raise ValueError(f"noise power must be nonnegative, got {sigma2}")
    if sigma2 == 0.0:
        return np.zeros(n, dtype=np.complex128)
    scale = np.sqrt(sigma2 / 2.0)
    return rng.normal(0.0, scale, n) + 1j * rng.normal(0.0, scale, n)


@dataclass(frozen=True)
class BranchChannel:
    """One branch's taps and noise floor: signal tap h, jammer tap h_j, sigma2."""

    h: complex
    h_j: complex = 0.0 + 0.0j
    sigma2: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if not (np.isfinite(self.h) and np.isfinite(self.h_j)):
            raise ValueError("channel taps must be finite")


def apply_channel(
    x: np.ndarray,
    x_j: np.ndarray,
    ch: BranchChannel,
    p_g_dbm: float,
    p_j_dbm: float | None,
    rng: np.random.Generator | int,
) -> np.ndarray:
    """r[k] = sqrt(p_g) h x[k] + sqrt(p_j) h_j x_j[k] + n[k].

    `p_j_dbm=None` means the jammer is off (the jammer term is dropped
    entirely). `rng` may be a Generator or a bare integer seed; a given seed
    always produces the same noise.
    """
    x = np.asarray(x)
    x_j = np.asarray(x_j)
    if x.shape != x_j.shape:
        raise ValueError(f"signal and jammer streams must match: {x.shape} vs {x_j.shape}")
    if isinstance(rng, (int, np.integer)):
        rng = keyed_rng(int(rng), STREAM_NOISE)
    r = np.sqrt(dbm_to_linear(p_g_dbm)) * ch.h * x
    if p_j_dbm is not None:
        r = r + np.sqrt(dbm_to_linear(p_j_dbm)) * ch.h_j * x_j
    return r + complex_awgn(rng, x.size, ch.sigma2)


@dataclass(frozen=True)
class FixedTaps:
    """Static channel: the configured taps are returned for every cycle."""

    taps: tuple[complex, ...]
    sigma2: float

    def branch_channel(self, seed: int, cycle: int, branch: int) -> BranchChannel:
        return BranchChannel(h=self.taps[branch], sigma2=self.sigma2)


@dataclass(frozen=True)
class RayleighFading:
    """Taps drawn CN(0, gain^2) independently per (seed, cycle, branch)."""

    gains: tuple[float, ...]
    sigma2: float

    def branch_channel(self, seed: int, cycle: int, branch: int) -> BranchChannel:
        rng = keyed_rng(seed, STREAM_FADING, cycle, branch)
        h = (rng.normal() + 1j * rng.normal()) / np.sqrt(2.0)
        return BranchChannel(h=self.gains[branch] * h, sigma2=self.sigma2)


@dataclass(frozen=True)
class GainTrajectory:
    """Deterministic slowly moving tap magnitudes, one sinusoid per branch.

    Models receivers whose link gain changes along a flight path:
    |h_b(cycle)| = base + amp sin(2 pi cycle / period + phase).
    """

    base: tuple[float, ...]
    amplitude: tuple[float, ...]
    period_cycles: tuple[float, ...]
    phase_rad: tuple[float, ...]
    sigma2: float

    def branch_channel(self, seed: int, cycle: int, branch: int) -> BranchChannel:
        mag = self.base[branch] + self.amplitude[branch] * np.sin(
            2.0 * np.pi * cycle / self.period_cycles[branch] + self.phase_rad[branch]
        )
        return BranchChannel(h=complex(max(mag, 0.0)), sigma2=self.sigma2)


ChannelModel = FixedTaps | RayleighFading | GainTrajectory


def sample_branch_channel(model: ChannelModel, seed: int, cycle: int, branch: int) -> BranchChannel:
    """Draw (or look up) the tap for one branch at one cycle."""
    return model.branch_channel(seed, cycle, branch)


@dataclass(frozen=True)
class JammerSegment:
    """One phase of the interference schedule.

    `power_dbm=None` means the jammer is silent. `branch_gains` maps branch
    index to the jammer tap magnitude at that branch (unlisted branches are
    not coupled to the jammer).
    """

    start_cycle: int
    power_dbm: float | None
    branch_gains: dict[int, float]


@dataclass(frozen=True)
class JammerSchedule:
    segments: tuple[JammerSegment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("jammer schedule needs at least one segment")
        if self.segments[0].start_cycle != 0:
            raise ValueError("first jammer segment must start at cycle 0")
        starts = [s.start_cycle for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError(f"segment start cycles must be strictly increasing, got {starts}")

    def segment_at(self, cycle: int) -> JammerSegment:
        active = self.segments[0]
        for seg in self.segments:
            if seg.start_cycle <= cycle:
                active = seg
            else:
                break
        return active

    def segment_index(self, cycle: int) -> int:
        idx = 0
        for i, seg in enumerate(self.segments):
            if seg.start_cycle <= cycle:
                idx = i
        return idx

    def jammer_tap(self, cycle: int, branch: int) -> complex:
        seg = self.segment_at(cycle)
        if seg.power_dbm is None:
            return 0.0 + 0.0j
        return complex(seg.branch_gains.get(branch, 0.0))
