import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kfvio.errors import InvalidArgument
from kfvio.framecodec import (
    BITS_PER_BLOCK, CompressedFrame, Frame, compression_ratio, decode_frame, decode_pixel,
    deserialize, encode_frame, serialize,
)


def blocks_to_frame(blocks, cols):
    """Tile (n, 16) truncated-value blocks into an 8-bit image, `cols` blocks per row."""
    n = len(blocks)
    rows = -(-n // cols)
    pad = np.zeros((rows * cols - n, 16), dtype=blocks.dtype)
    b = np.vstack([blocks, pad]).reshape(rows, cols, 4, 4).transpose(0, 2, 1, 3)
    return (b.reshape(rows * 4, cols * 4) << 3).astype(np.uint8)


def test_uniform_frame():
    cf = encode_frame(np.full((480, 752), 80, np.uint8))
    assert np.all(cf.minimum == 10) and np.all(cf.threshold == 10)
    assert np.all(cf.bitmap == 0)
    assert np.all(decode_frame(cf) == 80)
    assert decode_pixel(cf, 751, 479) == 80


def test_midpoint_example():
    block = np.array([2, 12, 7, 8, 9, 10, 11, 12, 3, 4, 5, 6, 7, 2, 0 + 2, 12])
    cf = encode_frame(blocks_to_frame(block[None], 1))
    assert cf.minimum[0, 0] == 2 and cf.threshold[0, 0] == 7
    bits = [(int(cf.bitmap[0, 0]) >> (15 - k)) & 1 for k in range(16)]
    assert bits == [int(v >= 8) for v in block]


def test_midpoint_rule_all_ranges():
    """Every (min, max, value) triple in the 5-bit domain against the stated rule."""
    blocks, expected = [], []
    for lo in range(32):
        for hi in range(lo, 32):
            vals = np.arange(lo, hi + 1)
            for start in range(0, len(vals), 14):
                chunk = vals[start:start + 14]
                blk = np.full(16, lo)
                blk[1] = hi
                blk[2:2 + len(chunk)] = chunk
                blocks.append(blk)
                thr = (lo + hi) // 2
                expected.append((thr, [int(v > thr) for v in blk]))
    blocks = np.array(blocks)
    for s in range(0, len(blocks), 22000):
        part = blocks[s:s + 22000]
        cf = encode_frame(blocks_to_frame(part, 188))
        flat_bm = cf.bitmap.reshape(-1)[: len(part)]
        flat_th = cf.threshold.reshape(-1)[: len(part)]
        for i, (bm, th) in enumerate(zip(flat_bm, flat_th)):
            thr, bits = expected[s + i]
            assert th == thr
            assert [(int(bm) >> (15 - k)) & 1 for k in range(16)] == bits


def test_all_bitmaps_reproduced():
    """All 2**16 bitmaps for min=2, max=12 (threshold 7) survive encoding."""
    codes = np.arange(1, 2**16 - 1, dtype=np.uint32)  # need both levels present
    bits = (codes[:, None] >> np.arange(15, -1, -1)) & 1
    blocks = np.where(bits == 1, 12, 2)
    for s in range(0, len(codes), 22000):
        part = blocks[s:s + 22000]
        cf = encode_frame(blocks_to_frame(part, 188))
        got = cf.bitmap.reshape(-1)[: len(part)]
        np.testing.assert_array_equal(got, codes[s:s + 22000])
        assert np.all(cf.threshold.reshape(-1)[: len(part)] == 7)


def test_decode_levels_example():
    cf = CompressedFrame(4, 4, np.array([[0x8000]], np.uint16), np.array([[7]], np.uint8),
                         np.array([[2]], np.uint8))
    assert decode_pixel(cf, 0, 0) == 96
    assert decode_pixel(cf, 1, 0) == 16
    img = decode_frame(cf)
    assert img[0, 0] == 96 and img[3, 3] == 16


def test_full_resolution_payload_size():
    cf = encode_frame(np.zeros((480, 752), np.uint8))
    assert cf.block_count == 22560
    assert cf.size_bits == 22560 * 26
    assert cf.payload_bytes == 73320
    assert len(serialize(cf)) == 4 + 73320


def test_compression_ratio():
    assert compression_ratio() == pytest.approx(128 / 26)


def test_invalid_inputs():
    with pytest.raises(InvalidArgument):
        encode_frame(np.zeros((0, 0), np.uint8))
    with pytest.raises(InvalidArgument):
        Frame(np.zeros((481, 10), np.uint8))
    cf = encode_frame(np.zeros((8, 8), np.uint8))
    with pytest.raises(IndexError):
        decode_pixel(cf, 8, 0)
    with pytest.raises(IndexError):
        decode_pixel(cf, 0, -1)


def test_edge_replication_padding():
    img = np.arange(30, dtype=np.uint8).reshape(5, 6) * 8
    cf = encode_frame(img)
    assert cf.bitmap.shape == (2, 2)
    assert decode_frame(cf).shape == (5, 6)


frames = hnp.arrays(np.uint8, st.tuples(st.integers(1, 40), st.integers(1, 40)))


@settings(max_examples=150, deadline=None)
@given(frames)
def test_decode_error_bounded_by_block_range(img):
    cf = encode_frame(img)
    dec = decode_frame(cf).astype(int)
    h, w = img.shape
    padded = np.pad(img, ((0, -h % 4), (0, -w % 4)), mode="edge").astype(int)
    for by in range(cf.bitmap.shape[0]):
        for bx in range(cf.bitmap.shape[1]):
            src = padded[4 * by:4 * by + 4, 4 * bx:4 * bx + 4]
            out = dec[4 * by:4 * by + 4, 4 * bx:4 * bx + 4]
            src_c = src[: out.shape[0], : out.shape[1]]
            t = src >> 3
            lo, hi = t.min(), t.max()
            # decoded values stay within the truncated block range
            assert out.min() >= lo << 3 and out.max() <= hi << 3
            # error bounded by the block range plus the 3 truncated LSBs
            assert np.abs(src_c - out).max() <= (src.max() - src.min()) + 7
            # order preservation: bit-1 pixels above threshold, bit-0 at or below
            thr = int(cf.threshold[by, bx])
            bm = int(cf.bitmap[by, bx])
            for k in range(16):
                bit = (bm >> (15 - k)) & 1
                v = t[k // 4, k % 4]
                assert (v > thr) if bit else (v <= thr)
                assert cf.minimum[by, bx] <= thr


@settings(max_examples=100, deadline=None)
@given(frames)
def test_serialize_roundtrip_and_bit_cost(img):
    cf = encode_frame(img)
    data = serialize(cf)
    assert (len(data) - 4) * 8 - cf.block_count * BITS_PER_BLOCK in range(8)
    back = deserialize(data)
    assert (back.width, back.height) == (cf.width, cf.height)
    np.testing.assert_array_equal(back.bitmap, cf.bitmap)
    np.testing.assert_array_equal(back.threshold, cf.threshold)
    np.testing.assert_array_equal(back.minimum, cf.minimum)
    np.testing.assert_array_equal(decode_frame(back), decode_frame(cf))


def test_serialized_bit_layout():
    """Hand-packed single block: bitmap 0xA5F0, threshold 0b10101, min 0b00011."""
    cf = CompressedFrame(4, 4, np.array([[0xA5F0]], np.uint16), np.array([[21]], np.uint8),
                         np.array([[3]], np.uint8))
    bits = "1010010111110000" + "10101" + "00011" + "000000"
    expected = bytes([4 >> 8, 4, 0, 4]) + int(bits, 2).to_bytes(4, "big")
    assert serialize(cf) == expected


def test_encode_is_deterministic():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(64, 96), dtype=np.uint8)
    a, b = encode_frame(img), encode_frame(img.copy())
    assert serialize(a) == serialize(b)
