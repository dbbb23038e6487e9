"""Deterministic signal generation and per-branch reception.

Every quantity here is a pure function of (config, cycle, branch): payload
bits, jammer waveform, channel taps, noise, timing pad, and frequency
offset are all drawn from generators keyed by the scenario seed plus a
stream id. That lets independent node processes (the TCP deployment)
synthesize identical observations without exchanging waveforms, and makes
in-process runs replay byte for byte.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np

from ..channel import (
    STREAM_JAMMER,
    STREAM_NOISE,
    STREAM_PAD,
    STREAM_PAYLOAD,
    BranchChannel,
    ChannelModel,
    FixedTaps,
    GainTrajectory,
    RayleighFading,
    apply_channel,
    complex_awgn,
    dbm_to_linear,
    keyed_rng,
    sample_branch_channel,
)
from ..phy import generate_zadoff_chu, modulate_qpsk, pad_bits, receive_frame
from ..selfheal import BranchReport, ChannelEstimate, compute_ber
from ..swarm.node import CycleContext
from .config import ScenarioConfig
from .image import image_to_bitstream, read_pgm


def channel_model(cfg: ScenarioConfig) -> ChannelModel:
    if cfg.channel_model == "fixed":
        return FixedTaps(taps=cfg.channel_taps, sigma2=cfg.noise_sigma2)
    if cfg.channel_model == "fading":
        gains = cfg.fading_gains or tuple(1.0 for _ in range(cfg.n_receivers))
        return RayleighFading(gains=gains, sigma2=cfg.noise_sigma2)
    return GainTrajectory(
        base=tuple(r.base for r in cfg.trajectory),
        amplitude=tuple(r.amplitude for r in cfg.trajectory),
        period_cycles=tuple(r.period_cycles for r in cfg.trajectory),
        phase_rad=tuple(np.radians(r.phase_deg) for r in cfg.trajectory),
        sigma2=cfg.noise_sigma2,
    )


@lru_cache(maxsize=8)
def _image_chunks(path: str, payload_bits: int) -> tuple[np.ndarray, ...]:
    return tuple(image_to_bitstream(read_pgm(Path(path)), payload_bits))


def image_chunk_count(cfg: ScenarioConfig) -> int:
    if cfg.payload_source != "image":
        raise ValueError("scenario does not carry an image payload")
    return len(_image_chunks(str(cfg.image_path), cfg.payload_bits))


def reference_bits(cfg: ScenarioConfig, cycle: int) -> np.ndarray:
    """The transmitted payload for a cycle, known to every node."""
    if cfg.payload_source == "image":
        chunks = _image_chunks(str(cfg.image_path), cfg.payload_bits)
        return chunks[cycle % len(chunks)]
    rng = keyed_rng(cfg.seed, STREAM_PAYLOAD, cycle)
    return rng.integers(0, 2, cfg.payload_bits, dtype=np.uint8)


def tx_frame_samples(cfg: ScenarioConfig, cycle: int) -> np.ndarray:
    bits, _ = pad_bits(reference_bits(cfg, cycle))
    preamble = generate_zadoff_chu(cfg.zc_root, cfg.zc_length)
    return np.concatenate([preamble, modulate_qpsk(bits)])


def jammer_samples(cfg: ScenarioConfig, cycle: int, n: int) -> np.ndarray:
    """Independent QPSK stream standing in for the interference waveform."""
    rng = keyed_rng(cfg.seed, STREAM_JAMMER, cycle)
    return modulate_qpsk(rng.integers(0, 2, 2 * n, dtype=np.uint8))


def branch_channel(cfg: ScenarioConfig, cycle: int, branch: int) -> BranchChannel:
    ch = sample_branch_channel(channel_model(cfg), cfg.seed, cycle, branch)
    return BranchChannel(h=ch.h, h_j=cfg.jammer.jammer_tap(cycle, branch), sigma2=ch.sigma2)


def branch_received(cfg: ScenarioConfig, cycle: int, branch: int) -> np.ndarray:
    """The raw capture one branch sees for a cycle: pad, frame, impairments."""
    x = tx_frame_samples(cfg, cycle)
    seg = cfg.jammer.segment_at(cycle)
    x_j = jammer_samples(cfg, cycle, x.size) if seg.power_dbm is not None else np.zeros_like(x)
    ch = branch_channel(cfg, cycle, branch)

    pad_rng = keyed_rng(cfg.seed, STREAM_PAD, cycle, branch)
    pad = int(pad_rng.integers(0, cfg.timing_pad_max + 1))
    cfo = float(pad_rng.uniform(-cfg.cfo_max, cfg.cfo_max)) if cfg.cfo_max > 0 else 0.0

    noise_rng = keyed_rng(cfg.seed, STREAM_NOISE, cycle, branch)
    lead_in = complex_awgn(noise_rng, pad, ch.sigma2)
    body = apply_channel(x, x_j, ch, cfg.tx_power_dbm, seg.power_dbm, noise_rng)
    rx = np.concatenate([lead_in, body])
    if cfo:
        rx = rx * np.exp(1j * cfo * np.arange(rx.size))
    return rx


def observe_branch(cfg: ScenarioConfig, cycle: int, branch: int) -> BranchReport:
    """Full per-branch receive chain producing the report sent to the leader."""
    rx = branch_received(cfg, cycle, branch)
    zc = generate_zadoff_chu(cfg.zc_root, cfg.zc_length)
    ref = reference_bits(cfg, cycle)
    out = receive_frame(
        rx,
        zc,
        payload_len_bits=cfg.frame_payload_bits,
        tx_amplitude=float(np.sqrt(dbm_to_linear(cfg.tx_power_dbm))),
        detection_ratio=cfg.sync_detection_ratio,
        correct_cfo=cfg.correct_cfo,
    )
    ber = compute_ber(out.bits, ref)
    h_j = cfg.jammer.jammer_tap(cycle, branch) if cfg.jammer_csi == "genie" else None
    estimate = ChannelEstimate(h=out.h_hat, h_j=h_j, sigma2=cfg.noise_sigma2)
    return BranchReport(
        branch_id=branch,
        cycle=cycle,
        estimate=estimate,
        payload_bits=out.bits,
        ber=ber,
        payload_symbols=out.payload_region,
        preamble_residual=out.preamble_residual,
    )


def cycle_context(cfg: ScenarioConfig, cycle: int) -> CycleContext:
    """Leader-side healing inputs for a cycle, derivable by any node."""
    seg = cfg.jammer.segment_at(cycle)
    p_j = dbm_to_linear(seg.power_dbm) if seg.power_dbm is not None else 0.0
    return CycleContext(
        reference=reference_bits(cfg, cycle),
        p_g=dbm_to_linear(cfg.tx_power_dbm),
        p_j=p_j,
        sigma2=cfg.noise_sigma2,
        frame_duration=cfg.frame_duration_s,
        use_residual_csi=cfg.jammer_csi == "residual",
    )
