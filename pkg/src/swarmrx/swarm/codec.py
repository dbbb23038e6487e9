"""Length-prefixed binary wire format for inter-device messages.

Frame layout (header fields big-endian):

    4 bytes  total length of everything after this prefix
    1 byte   version (currently 1)
    1 byte   message type
    2 bytes  sender index
    8 bytes  cycle number
    ...      type-dependent payload

Payload integers are big-endian like the header; floating point values and
complex numbers travel as IEEE-754 little-endian doubles, complex as a
(real, imag) pair. Bit streams are packed MSB-first with an explicit bit
count. Decoding validates every declared count against the bytes actually
present before allocating, and raises a structured error naming the bad
field rather than crashing on malformed input.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..combining import Algorithm, CombinerWeights
from ..selfheal import BranchReport, ChannelEstimate, CombinerDecision

WIRE_VERSION = 1
HEADER_BODY_LEN = 12  # version + type + sender + cycle
MAX_MESSAGE_SIZE = 1 << 20


class MsgType(enum.IntEnum):
    HELLO = 0
    REPORT = 1
    DECISION = 2
    HEARTBEAT = 3
    GOODBYE = 4


class SwarmDecodeError(Exception):
    """Malformed wire data; `field` names the offending part of the frame."""

    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


class TruncatedFrameError(SwarmDecodeError):
    pass


class VersionError(SwarmDecodeError):
    pass


class UnknownTypeError(SwarmDecodeError):
    pass


class LengthMismatchError(SwarmDecodeError):
    pass


class PayloadDecodeError(SwarmDecodeError):
    pass


@dataclass(frozen=True)
class SwarmMessage:
    msg_type: MsgType
    sender: int
    cycle: int
    payload: BranchReport | CombinerDecision | None = None
    version: int = WIRE_VERSION


class _Reader:
    """Cursor over a byte buffer with bounds-checked reads."""

    def __init__(self, data: bytes, context: str):
        self.data = data
        self.pos = 0
        self.context = context

    def take(self, n: int, field: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise PayloadDecodeError(
                f"{self.context}: field '{field}' needs {n} bytes, "
                f"{len(self.data) - self.pos} remain",
                field,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self, field: str) -> int:
        return self.take(1, field)[0]

    def u16(self, field: str) -> int:
        return struct.unpack(">H", self.take(2, field))[0]

    def u32(self, field: str) -> int:
        return struct.unpack(">I", self.take(4, field))[0]

    def u64(self, field: str) -> int:
        return struct.unpack(">Q", self.take(8, field))[0]

    def f64(self, field: str) -> float:
        return struct.unpack("<d", self.take(8, field))[0]

    def c128(self, field: str) -> complex:
        re, im = struct.unpack("<dd", self.take(16, field))
        return complex(re, im)

    def complex_array(self, count: int, field: str) -> np.ndarray:
        raw = self.take(16 * count, field)
        flat = np.frombuffer(raw, dtype="<f8").reshape(count, 2)
        return (flat[:, 0] + 1j * flat[:, 1]).astype(np.complex128)

    def bits(self, count: int, field: str) -> np.ndarray:
        nbytes = (count + 7) // 8
        raw = self.take(nbytes, field)
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=count)

    def done(self, field: str) -> None:
        if self.pos != len(self.data):
            raise PayloadDecodeError(
                f"{self.context}: {len(self.data) - self.pos} trailing bytes after '{field}'",
                field,
            )


def _pack_bits(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return struct.pack(">I", bits.size) + np.packbits(bits).tobytes()


def _pack_complex_array(values: np.ndarray, count_fmt: str = ">I") -> bytes:
    values = np.asarray(values, dtype=np.complex128)
    flat = np.empty((values.size, 2), dtype="<f8")
    flat[:, 0] = values.real
    flat[:, 1] = values.imag
    return struct.pack(count_fmt, values.size) + flat.tobytes()


def _pack_c128(value: complex) -> bytes:
    return struct.pack("<dd", value.real, value.imag)


def _encode_report(r: BranchReport) -> bytes:
    parts = [
        struct.pack(">H", r.branch_id),
        struct.pack(">Q", r.cycle),
        struct.pack("<d", r.ber),
        _pack_c128(r.estimate.h),
        struct.pack("<d", r.estimate.sigma2),
    ]
    if r.estimate.h_j is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + _pack_c128(r.estimate.h_j))
    parts.append(_pack_bits(r.payload_bits))
    parts.append(_pack_complex_array(r.payload_symbols))
    parts.append(_pack_complex_array(r.preamble_residual))
    return b"".join(parts)


def _decode_report(data: bytes) -> BranchReport:
    rd = _Reader(data, "REPORT")
    branch_id = rd.u16("branch_id")
    cycle = rd.u64("cycle")
    ber = rd.f64("ber")
    if not 0.0 <= ber <= 1.0:
        raise PayloadDecodeError(f"REPORT: ber {ber} outside [0, 1]", "ber")
    h = rd.c128("h")
    sigma2 = rd.f64("sigma2")
    if not (sigma2 >= 0.0 and np.isfinite(sigma2)):
        raise PayloadDecodeError(f"REPORT: sigma2 {sigma2} invalid", "sigma2")
    if not np.isfinite(h):
        raise PayloadDecodeError("REPORT: non-finite channel estimate", "h")
    h_j = rd.c128("h_j") if rd.u8("has_h_j") else None
    bits = rd.bits(rd.u32("n_bits"), "payload_bits")
    symbols = rd.complex_array(rd.u32("n_symbols"), "payload_symbols")
    residual = rd.complex_array(rd.u32("n_residual"), "preamble_residual")
    rd.done("preamble_residual")
    return BranchReport(
        branch_id=branch_id,
        cycle=cycle,
        estimate=ChannelEstimate(h=h, h_j=h_j, sigma2=sigma2),
        payload_bits=bits,
        ber=ber,
        payload_symbols=symbols,
        preamble_residual=residual,
    )


def _encode_decision(d: CombinerDecision) -> bytes:
    parts = [
        struct.pack(">B", d.algorithm.value),
        struct.pack(">Q", d.cycle),
        struct.pack(">H", d.n_s),
        struct.pack("<d", d.combined_ber),
        struct.pack("<d", d.data_rate),
        _pack_complex_array(d.weights.u, count_fmt=">H"),
        _pack_bits(d.combined_bits),
        struct.pack(">H", len(d.branch_bers)),
    ]
    for branch_id in sorted(d.branch_bers):
        parts.append(
            struct.pack(">H", branch_id)
            + struct.pack("<d", d.branch_bers[branch_id])
            + struct.pack("<d", d.branch_rates[branch_id])
        )
    return b"".join(parts)


def _decode_decision(data: bytes) -> CombinerDecision:
    rd = _Reader(data, "DECISION")
    algo_code = rd.u8("algorithm")
    try:
        algorithm = Algorithm(algo_code)
    except ValueError:
        raise PayloadDecodeError(f"DECISION: unknown algorithm code {algo_code}", "algorithm")
    cycle = rd.u64("cycle")
    n_s = rd.u16("n_s")
    ber = rd.f64("combined_ber")
    if not 0.0 <= ber <= 1.0:
        raise PayloadDecodeError(f"DECISION: combined_ber {ber} outside [0, 1]", "combined_ber")
    rate = rd.f64("data_rate")
    u = rd.complex_array(rd.u16("n_weights"), "weights")
    if u.size == 0 or not np.all(np.isfinite(u.view(np.float64))) or np.linalg.norm(u) == 0.0:
        raise PayloadDecodeError("DECISION: invalid weight vector", "weights")
    bits = rd.bits(rd.u32("n_bits"), "combined_bits")
    n_part = rd.u16("n_participants")
    branch_bers: dict[int, float] = {}
    branch_rates: dict[int, float] = {}
    for _ in range(n_part):
        bid = rd.u16("participant_id")
        branch_bers[bid] = rd.f64("participant_ber")
        branch_rates[bid] = rd.f64("participant_rate")
    rd.done("participants")
    return CombinerDecision(
        algorithm=algorithm,
        weights=CombinerWeights(u=u, algorithm=algorithm),
        combined_bits=bits,
        combined_ber=ber,
        data_rate=rate,
        n_s=n_s,
        cycle=cycle,
        branch_bers=branch_bers,
        branch_rates=branch_rates,
    )


def encode_message(m: SwarmMessage, max_size: int = MAX_MESSAGE_SIZE) -> bytes:
    """Serialize one message into a length-prefixed frame."""
    if m.msg_type is MsgType.REPORT:
        if not isinstance(m.payload, BranchReport):
            raise TypeError("REPORT messages carry a BranchReport payload")
        body = _encode_report(m.payload)
    elif m.msg_type is MsgType.DECISION:
        if not isinstance(m.payload, CombinerDecision):
            raise TypeError("DECISION messages carry a CombinerDecision payload")
        body = _encode_decision(m.payload)
    else:
        if m.payload is not None:
            raise TypeError(f"{m.msg_type.name} messages carry no payload")
        body = b""
    total = HEADER_BODY_LEN + len(body)
    if total + 4 > max_size:
        raise ValueError(f"message of {total + 4} bytes exceeds the {max_size} byte cap")
    header = struct.pack(">IBBHQ", total, m.version, m.msg_type.value, m.sender, m.cycle)
    return header + body


def decode_message(data: bytes, max_size: int = MAX_MESSAGE_SIZE) -> SwarmMessage:
    """Inverse of :func:`encode_message` with strict validation."""
    if len(data) < 4:
        raise TruncatedFrameError(f"frame of {len(data)} bytes has no length prefix", "length")
    (declared,) = struct.unpack(">I", data[:4])
    if declared < HEADER_BODY_LEN:
        raise LengthMismatchError(
            f"declared length {declared} below the {HEADER_BODY_LEN} byte header", "length"
        )
    if declared + 4 > max_size:
        raise LengthMismatchError(f"declared length {declared} exceeds the size cap", "length")
    if len(data) != declared + 4:
        raise LengthMismatchError(
            f"frame is {len(data)} bytes but declares {declared + 4}", "length"
        )
    version, type_code = data[4], data[5]
    if version != WIRE_VERSION:
        raise VersionError(f"unsupported wire version {version}", "version")
    try:
        msg_type = MsgType(type_code)
    except ValueError:
        raise UnknownTypeError(f"unknown message type {type_code}", "msg_type")
    sender, cycle = struct.unpack(">HQ", data[6:16])
    body = data[16 : 4 + declared]
    if msg_type is MsgType.REPORT:
        payload: BranchReport | CombinerDecision | None = _decode_report(body)
    elif msg_type is MsgType.DECISION:
        payload = _decode_decision(body)
    else:
        if body:
            raise PayloadDecodeError(
                f"{msg_type.name}: expected empty payload, got {len(body)} bytes", "payload"
            )
        payload = None
    return SwarmMessage(msg_type=msg_type, sender=sender, cycle=cycle, payload=payload, version=version)
