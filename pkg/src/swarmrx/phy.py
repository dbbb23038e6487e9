"""Baseband QPSK modem with Zadoff-Chu preambles.

Implements the per-branch receive chain used by every node in the swarm:
frame construction (constant-modulus preamble + QPSK payload), frame
detection by cross-correlation, carrier frequency / phase recovery off the
preamble, and least-squares channel estimation.

Bit streams are plain uint8 arrays of 0/1. All functions are pure; frame-id
assignment is the only stateful piece and lives in :class:`FrameBuilder`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_SQRT2 = math.sqrt(2.0)

# Gray map, quadrant per bit pair: 00 -> (+1+1j), 01 -> (-1+1j),
# 11 -> (-1-1j), 10 -> (+1-1j), all scaled to unit energy.
# First bit selects the imaginary sign, second bit the real sign.


class PhyError(Exception):
    """Base class for modem errors."""


class FrameNotFoundError(PhyError):
    """Correlation peak below the detection threshold; no frame in the capture."""


def generate_zadoff_chu(root: int, length: int) -> np.ndarray:
    """Constant-modulus preamble sequence with zero periodic autocorrelation.

    Odd lengths use the exponent n(n+1), even lengths n^2. `root` and
    `length` must be coprime or the sequence loses its flat correlation
    property, so non-coprime pairs are rejected.
    """
    if length <= 0:
        raise ValueError(f"preamble length must be positive, got {length}")
    if root <= 0 or root >= length:
        raise ValueError(f"root must satisfy 0 < root < length, got root={root}, length={length}")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} and length {length} must be coprime")
    n = np.arange(length)
    if length % 2:
        phase = np.pi * root * n * (n + 1) / length
    else:
        phase = np.pi * root * n * n / length
    return np.exp(-1j * phase)


def modulate_qpsk(bits: np.ndarray) -> np.ndarray:
    """Map a bit stream (even length) to unit-energy QPSK symbols."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size % 2:
        raise ValueError(f"bit stream must be 1-D with even length, got shape {bits.shape}")
    if bits.size and bits.max() > 1:
        raise ValueError("bit stream must contain only 0/1 values")
    b0 = bits[0::2].astype(np.float64)
    b1 = bits[1::2].astype(np.float64)
    return ((1.0 - 2.0 * b1) + 1j * (1.0 - 2.0 * b0)) / _SQRT2


def demodulate_qpsk(symbols: np.ndarray) -> np.ndarray:
    """Hard-decision inverse of :func:`modulate_qpsk` (sign per quadrature)."""
    symbols = np.asarray(symbols)
    bits = np.empty(2 * symbols.size, dtype=np.uint8)
    bits[0::2] = symbols.imag < 0
    bits[1::2] = symbols.real < 0
    return bits


def pad_bits(bits: np.ndarray) -> tuple[np.ndarray, int]:
    """Pad an odd-length stream with one trailing 0; returns (padded, true length)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 2:
        return np.append(bits, np.uint8(0)), bits.size
    return bits, bits.size


@dataclass(frozen=True)
class PreambleConfig:
    root: int = 5
    length: int = 63


@dataclass(frozen=True)
class IqFrame:
    """One transmitted frame: preamble followed by QPSK payload symbols.

    `payload_len` is the number of real payload bits before the even-length
    padding rule, so receivers can strip pad bits before computing BER.
    """

    preamble: np.ndarray
    payload_symbols: np.ndarray
    sample_rate: float
    frame_id: int
    payload_len: int

    @property
    def samples(self) -> np.ndarray:
        return np.concatenate([self.preamble, self.payload_symbols])

    def __len__(self) -> int:
        return self.preamble.size + self.payload_symbols.size


@dataclass
class FrameBuilder:
    """Assigns strictly increasing frame ids across builds."""

    preamble_cfg: PreambleConfig = field(default_factory=PreambleConfig)
    sample_rate: float = 1e6
    max_payload_bits: int = 65536
    _next_id: int = 0

    def build(self, payload: np.ndarray) -> IqFrame:
        payload = np.asarray(payload, dtype=np.uint8)
        if payload.size == 0:
            raise ValueError("payload must be nonempty")
        if payload.size > self.max_payload_bits:
            raise ValueError(
                f"payload of {payload.size} bits exceeds max frame size {self.max_payload_bits}"
            )
        padded, true_len = pad_bits(payload)
        preamble = generate_zadoff_chu(self.preamble_cfg.root, self.preamble_cfg.length)
        frame = IqFrame(
            preamble=preamble,
            payload_symbols=modulate_qpsk(padded),
            sample_rate=self.sample_rate,
            frame_id=self._next_id,
            payload_len=true_len,
        )
        self._next_id += 1
        return frame


@dataclass(frozen=True)
class SyncResult:
    """Frame alignment recovered from the preamble.

    `aligned_symbols` is the payload region after timing alignment and
    de-rotation by both the per-sample frequency offset and the residual
    carrier phase, i.e. ready for hard decisions up to a positive real gain.
    """

    timing_offset: int
    cfo_hat: float
    phase_hat: float
    aligned_symbols: np.ndarray


def synchronize(
    received: np.ndarray,
    known_preamble: np.ndarray,
    payload_len: int | None = None,
    detection_ratio: float = 4.0,
    estimate_cfo: bool = True,
) -> SyncResult:
    """Locate and de-rotate one frame inside a received capture.

    Timing is the argmax of the cross-correlation magnitude against the
    known preamble. The frequency offset comes from the phase slope between
    the two preamble halves (each half is matched against the preamble, and
    the inter-half phase advance divided by the half length gives rad/sample,
    unambiguous for offsets below pi/(length/2)). The residual phase is the
    rotation of the CFO-corrected preamble against the reference.

    The estimator noise floor is roughly 1/(L*sqrt(SNR)) rad/sample, which
    integrates into a real rotation across a long payload, so receivers in
    deployments with locked oscillators should pass `estimate_cfo=False`
    rather than apply a pure-noise correction.

    Raises FrameNotFoundError when the correlation peak is below
    `detection_ratio` times the mean off-peak magnitude (skipped when the
    capture allows only a single alignment).
    """
    received = np.asarray(received)
    zc = np.asarray(known_preamble)
    lp = zc.size
    frame_len = lp + (payload_len if payload_len is not None else 0)
    if received.size < frame_len:
        raise ValueError(
            f"received capture of {received.size} samples is shorter than the frame ({frame_len})"
        )

    span = received.size - frame_len + 1
    # np.correlate conjugates its second argument, giving sum r[d+n] zc*[n].
    corr = np.abs(np.correlate(received[: span + lp - 1], zc, mode="valid"))
    offset = int(np.argmax(corr))
    if corr.size > 1:
        off_peak = np.delete(corr, offset)
        floor = float(off_peak.mean())
        if corr[offset] < detection_ratio * floor:
            raise FrameNotFoundError(
                f"correlation peak {corr[offset]:.3g} below {detection_ratio}x off-peak mean {floor:.3g}"
            )

    pre_rx = received[offset : offset + lp]
    cfo = 0.0
    if estimate_cfo:
        half = lp // 2
        p1 = np.vdot(zc[:half], pre_rx[:half])
        p2 = np.vdot(zc[half : 2 * half], pre_rx[half : 2 * half])
        cfo = float(np.angle(p2 * np.conj(p1)) / half) if half else 0.0

    n_pre = np.arange(lp)
    phase = float(np.angle(np.vdot(zc, pre_rx * np.exp(-1j * cfo * n_pre))))

    payload_start = offset + lp
    payload_stop = payload_start + (payload_len if payload_len is not None else received.size - payload_start)
    n_pay = np.arange(lp, lp + (payload_stop - payload_start))
    aligned = received[payload_start:payload_stop] * np.exp(-1j * (cfo * n_pay + phase))
    return SyncResult(timing_offset=offset, cfo_hat=cfo, phase_hat=phase, aligned_symbols=aligned)


def estimate_channel(received_preamble: np.ndarray, known_preamble: np.ndarray) -> complex:
    """Least-squares single-tap estimate <known, received> / ||known||^2."""
    rx = np.asarray(received_preamble)
    ref = np.asarray(known_preamble)
    if rx.shape != ref.shape:
        raise ValueError(f"preamble length mismatch: {rx.shape} vs {ref.shape}")
    energy = np.vdot(ref, ref).real
    if energy == 0.0:
        raise ValueError("known preamble has zero energy")
    return complex(np.vdot(ref, rx) / energy)


@dataclass(frozen=True)
class BranchReceive:
    """Everything one branch extracts from a capture for its report.

    `payload_region` keeps the carrier phase (only timing and CFO are
    removed) so the leader can combine branches against the complex channel
    estimates; `bits` are the branch's own hard decisions off the fully
    de-rotated payload. `preamble_residual` is the CFO-corrected preamble
    minus the re-synthesized signal part, the raw material for leader-side
    interference estimation.
    """

    sync: SyncResult | None
    h_hat: complex
    bits: np.ndarray
    payload_region: np.ndarray
    preamble_residual: np.ndarray
    sync_ok: bool


def receive_frame(
    received: np.ndarray,
    known_preamble: np.ndarray,
    payload_len_bits: int,
    tx_amplitude: float,
    detection_ratio: float = 4.0,
    correct_cfo: bool = True,
) -> BranchReceive:
    """Run the full per-branch chain: detect, de-rotate, estimate, decide.

    `tx_amplitude` is the known sqrt of the transmit power in linear units;
    the raw least-squares tap (which absorbs it) is divided out so `h_hat`
    is the channel tap alone. When frame detection fails the branch falls
    back to offset 0 with no de-rotation, which yields garbage bits and a
    near-0.5 BER; the caller decides what to do with such a branch.
    """
    zc = np.asarray(known_preamble)
    n_payload_bits = payload_len_bits + (payload_len_bits % 2)
    n_symbols = n_payload_bits // 2
    try:
        sync = synchronize(
            received,
            zc,
            payload_len=n_symbols,
            detection_ratio=detection_ratio,
            estimate_cfo=correct_cfo,
        )
        sync_ok = True
    except FrameNotFoundError:
        sync = None
        sync_ok = False

    if sync_ok:
        offset, cfo = sync.timing_offset, sync.cfo_hat
        aligned = sync.aligned_symbols
    else:
        offset, cfo = 0, 0.0
        aligned = received[zc.size : zc.size + n_symbols]

    n_pre = np.arange(zc.size)
    pre_cfo = received[offset : offset + zc.size] * np.exp(-1j * cfo * n_pre)
    g_hat = estimate_channel(pre_cfo, zc)
    residual = pre_cfo - g_hat * zc

    if sync_ok:
        payload_region = aligned * np.exp(1j * sync.phase_hat)
    else:
        payload_region = np.asarray(aligned)

    bits = demodulate_qpsk(aligned)[:payload_len_bits]
    return BranchReceive(
        sync=sync,
        h_hat=g_hat / tx_amplitude if tx_amplitude > 0 else g_hat,
        bits=bits,
        payload_region=payload_region,
        preamble_residual=residual,
        sync_ok=sync_ok,
    )
