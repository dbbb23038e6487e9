"""Grayscale image payloads: PGM in/out, chunked bitstream conversion.

Images travel as row-major 8-bit pixels, MSB-first, split into fixed-size
chunks. Each chunk is prefixed by a 16-bit big-endian sequence number so a
receiver can reassemble out-of-order or partially corrupted traffic;
chunks whose sequence number decodes out of range are dropped, missing
spans are rendered mid-gray. Storage format is binary PGM (P5), which is
lossless and trivially diffable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHUNK_HEADER_BITS = 16
FILL_BYTE = 0x80


@dataclass(frozen=True)
class ImagePayload:
    width: int
    height: int
    pixels: np.ndarray  # shape (height, width), uint8

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixel array {px.shape} does not match {self.height}x{self.width}")
        object.__setattr__(self, "pixels", px)


def read_pgm(path: str | Path) -> ImagePayload:
    """Binary (P5) PGM reader, 8-bit maxval only."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header tokens: magic, width, height, maxval; comments start with '#'
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return ImagePayload(width=width, height=height, pixels=pixels)


def write_pgm(img: ImagePayload, path: str | Path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode()
    Path(path).write_bytes(header + img.pixels.tobytes())


def n_chunks(img: ImagePayload, payload_bits: int) -> int:
    total = img.width * img.height * 8
    return (total + payload_bits - 1) // payload_bits


def image_to_bitstream(img: ImagePayload, payload_bits: int) -> list[np.ndarray]:
    """Chunked bit representation; every chunk is header + payload_bits long.

    The final chunk is zero-padded to full size so all frames carry the
    same bit count.
    """
    if payload_bits < 1:
        raise ValueError("payload_bits must be positive")
    bits = np.unpackbits(img.pixels.reshape(-1))
    chunks = []
    for k in range(n_chunks(img, payload_bits)):
        header = np.unpackbits(np.array([k >> 8, k & 0xFF], dtype=np.uint8))
        data = bits[k * payload_bits : (k + 1) * payload_bits]
        if data.size < payload_bits:
            data = np.concatenate([data, np.zeros(payload_bits - data.size, dtype=np.uint8)])
        chunks.append(np.concatenate([header, data]))
    return chunks


def bitstream_to_image(chunks: list[np.ndarray], width: int, height: int) -> ImagePayload:
    """Reassemble chunks by their decoded sequence numbers.

    Corrupted payload bits pass straight through; chunks whose sequence
    header decodes outside the valid range are discarded; spans no valid
    chunk claimed are filled mid-gray. Later duplicates overwrite earlier
    ones.
    """
    if width < 1 or height < 1:
        raise ValueError(f"bad image dimensions {width}x{height}")
    total_bits = width * height * 8
    if not chunks:
        raise ValueError("no chunks to reassemble")
    payload_bits = chunks[0].size - CHUNK_HEADER_BITS
    if payload_bits < 1:
        raise ValueError("chunks shorter than their header")
    expected = (total_bits + payload_bits - 1) // payload_bits

    canvas = np.zeros(expected * payload_bits, dtype=np.uint8)
    seen = np.zeros(expected, dtype=bool)
    for chunk in chunks:
        chunk = np.asarray(chunk, dtype=np.uint8)
        if chunk.size != CHUNK_HEADER_BITS + payload_bits:
            raise ValueError("all chunks must have identical length")
        header = np.packbits(chunk[:CHUNK_HEADER_BITS])
        seq = int(header[0]) << 8 | int(header[1])
        if seq >= expected:
            continue
        canvas[seq * payload_bits : (seq + 1) * payload_bits] = chunk[CHUNK_HEADER_BITS:]
        seen[seq] = True

    pixel_bytes = np.packbits(canvas[:total_bits])
    for seq in np.flatnonzero(~seen):
        lo = seq * payload_bits // 8
        hi = min(((seq + 1) * payload_bits + 7) // 8, total_bits // 8)
        pixel_bytes[lo:hi] = FILL_BYTE
    return ImagePayload(width=width, height=height, pixels=pixel_bytes.reshape(height, width))


def psnr(a: ImagePayload, b: ImagePayload) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("image dimensions differ")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)


def make_test_pattern(width: int = 64, height: int = 64) -> ImagePayload:
    """Deterministic synthetic test image: gradient background with shapes."""
    y, x = np.mgrid[0:height, 0:width]
    img = (x * 255 / max(width - 1, 1) * 0.5 + y * 255 / max(height - 1, 1) * 0.5).astype(np.uint8)
    img[height // 4 : height // 2, width // 8 : width // 2] = 230
    cy, cx, r = height * 2 // 3, width * 2 // 3, min(width, height) // 5
    disk = (y - cy) ** 2 + (x - cx) ** 2 <= r * r
    img[disk] = 25
    img[height // 8 :: 8, :] //= 2
    return ImagePayload(width=width, height=height, pixels=img)
