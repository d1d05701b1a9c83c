"""Lossy frame-buffer codec: 5-bit truncation plus 4x4 block binarization.

Every 4x4 block is stored in exactly 26 bits: a 16-bit bitmap, a 5-bit
threshold and a 5-bit minimum. Decoding maps bit 0 to the block minimum and
bit 1 to ``2*threshold - min`` (clamped to 5 bits), then shifts back to 8 bits.

Binary layout (big-endian bit order)::

    u16 width | u16 height | block 0 | block 1 | ... | zero pad to a byte

Blocks are row-major over the block grid. Inside a block the 16 bitmap bits come
first (pixels row-major, first pixel in the most significant position), then
the threshold, then the minimum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

MAX_WIDTH = 752
MAX_HEIGHT = 480
BLOCK = 4
KEEP_BITS = 5
SHIFT = 8 - KEEP_BITS
BITS_PER_BLOCK = BLOCK * BLOCK + 2 * KEEP_BITS  # 26


@dataclass(frozen=True)
class Frame:
    """8-bit grayscale image, row-major ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise InvalidArgument("frame must be a non-empty 2-D array")
        h, w = px.shape
        if w > MAX_WIDTH or h > MAX_HEIGHT:
            raise InvalidArgument(f"frame {w}x{h} exceeds {MAX_WIDTH}x{MAX_HEIGHT}")
        if px.dtype != np.uint8:
            if np.any((px < 0) | (px > 255)):
                raise InvalidArgument("pixel values must fit in 8 bits")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


@dataclass(frozen=True)
class CompressedFrame:
    """Grid of 26-bit blocks. Arrays have shape ``(ceil(h/4), ceil(w/4))``."""

    width: int
    height: int
    bitmap: np.ndarray     # uint16, bit 15 = top-left pixel
    threshold: np.ndarray  # uint8, 5-bit
    minimum: np.ndarray    # uint8, 5-bit

    @property
    def block_count(self):
        return self.bitmap.size

    @property
    def size_bits(self):
        return BITS_PER_BLOCK * self.block_count

    @property
    def payload_bytes(self):
        return (self.size_bits + 7) // 8


def _pad_to_blocks(px):
    h, w = px.shape
    ph, pw = -h % BLOCK, -w % BLOCK
    if ph or pw:
        px = np.pad(px, ((0, ph), (0, pw)), mode="edge")
    return px


def _blocks(px):
    """View a padded image as (rows, cols, 16) blocks."""
    h, w = px.shape
    return (px.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
              .transpose(0, 2, 1, 3)
              .reshape(h // BLOCK, w // BLOCK, BLOCK * BLOCK))


_BIT_WEIGHTS = (1 << np.arange(15, -1, -1)).astype(np.uint32)


def encode_frame(frame) -> CompressedFrame:
    if not isinstance(frame, Frame):
        frame = Frame(np.asarray(frame))
    px = _pad_to_blocks(frame.pixels)
    t = _blocks(px >> SHIFT)
    lo = t.min(axis=2)
    hi = t.max(axis=2)
    thr = ((lo.astype(np.uint16) + hi) // 2).astype(np.uint8)
    bits = t > thr[..., None]
    bitmap = (bits.astype(np.uint32) * _BIT_WEIGHTS).sum(axis=2).astype(np.uint16)
    return CompressedFrame(frame.width, frame.height, bitmap, thr, lo.astype(np.uint8))


def _block_levels(cf):
    lo = cf.minimum.astype(np.int16)
    hi = np.clip(2 * cf.threshold.astype(np.int16) - lo, 0, (1 << KEEP_BITS) - 1)
    return lo, hi


def decode_frame(cf: CompressedFrame) -> np.ndarray:
    """Reconstruct the full 8-bit image."""
    lo, hi = _block_levels(cf)
    bits = ((cf.bitmap[..., None].astype(np.uint32) & _BIT_WEIGHTS) != 0)
    vals = np.where(bits, hi[..., None], lo[..., None]).astype(np.uint8) << SHIFT
    rows, cols = cf.bitmap.shape
    img = (vals.reshape(rows, cols, BLOCK, BLOCK)
               .transpose(0, 2, 1, 3)
               .reshape(rows * BLOCK, cols * BLOCK))
    return np.ascontiguousarray(img[: cf.height, : cf.width])


def decode_pixel(cf: CompressedFrame, x: int, y: int) -> int:
    if not (0 <= x < cf.width and 0 <= y < cf.height):
        raise IndexError(f"pixel ({x}, {y}) outside {cf.width}x{cf.height} frame")
    by, bx = y // BLOCK, x // BLOCK
    k = (y % BLOCK) * BLOCK + (x % BLOCK)
    bit = (int(cf.bitmap[by, bx]) >> (15 - k)) & 1
    lo = int(cf.minimum[by, bx])
    if bit:
        return min(max(2 * int(cf.threshold[by, bx]) - lo, 0), 31) << SHIFT
    return lo << SHIFT


def roundtrip(pixels) -> np.ndarray:
    """Encode then decode; what frame-buffer consumers actually see."""
    return decode_frame(encode_frame(pixels))


def serialize(cf: CompressedFrame) -> bytes:
    n = cf.block_count
    fields = np.zeros((n, BITS_PER_BLOCK), dtype=np.uint8)
    bm = cf.bitmap.reshape(-1).astype(np.uint32)
    fields[:, :16] = (bm[:, None] >> np.arange(15, -1, -1)) & 1
    th = cf.threshold.reshape(-1)
    mn = cf.minimum.reshape(-1)
    fields[:, 16:21] = (th[:, None] >> np.arange(4, -1, -1)) & 1
    fields[:, 21:26] = (mn[:, None] >> np.arange(4, -1, -1)) & 1
    return struct.pack(">HH", cf.width, cf.height) + np.packbits(fields.reshape(-1)).tobytes()


def deserialize(data: bytes) -> CompressedFrame:
    if len(data) < 4:
        raise InvalidArgument("truncated compressed-frame header")
    width, height = struct.unpack(">HH", data[:4])
    if width == 0 or height == 0:
        raise InvalidArgument("empty frame")
    rows, cols = -(-height // BLOCK), -(-width // BLOCK)
    n = rows * cols
    need = (n * BITS_PER_BLOCK + 7) // 8
    if len(data) - 4 != need:
        raise InvalidArgument(f"payload is {len(data) - 4} bytes, expected {need}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=4))[: n * BITS_PER_BLOCK]
    fields = bits.reshape(n, BITS_PER_BLOCK).astype(np.uint32)
    bitmap = (fields[:, :16] << np.arange(15, -1, -1)).sum(axis=1).astype(np.uint16)
    thr = (fields[:, 16:21] << np.arange(4, -1, -1)).sum(axis=1).astype(np.uint8)
    mn = (fields[:, 21:26] << np.arange(4, -1, -1)).sum(axis=1).astype(np.uint8)
    return CompressedFrame(width, height, bitmap.reshape(rows, cols),
                           thr.reshape(rows, cols), mn.reshape(rows, cols))


def compression_ratio():
    """Raw-to-compressed bit ratio of one block: 128 / 26."""
    return BLOCK * BLOCK * 8 / BITS_PER_BLOCK
