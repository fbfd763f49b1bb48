import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fmdkit.image import (
    Format,
    Image,
    ImageFormatError,
    Rect,
    crop,
    decode_image,
    encode_image,
    read_image,
    split_patches,
    write_image,
)


def fmdf_bytes(w, h, c, values, magic=b"FMDF", version=1):
    return struct.pack("<4sIIII", magic, version, w, h, c) + np.asarray(values, "<f8").tobytes()


def test_read_p5_8bit(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    im = read_image(p)
    assert (im.width, im.height, im.channels, im.peak) == (2, 2, 1, 255.0)
    assert im.pixels.tolist() == [0, 128, 255, 64]


def test_read_p5_16bit_big_endian(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5 2 1 65535\n" + struct.pack(">HH", 258, 65535))
    im = read_image(p)
    assert im.peak == 65535.0
    assert im.pixels.tolist() == [258, 65535]


def test_read_p6_interleaved(tmp_path):
    p = tmp_path / "a.ppm"
    p.write_bytes(b"P6\n# comment\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6]))
    im = read_image(p)
    assert im.channels == 3
    assert im.data[0, 1].tolist() == [4, 5, 6]
    assert im.pixels.tolist() == [1, 2, 3, 4, 5, 6]


def test_read_fmdf(tmp_path):
    p = tmp_path / "a.fmdf"
    p.write_bytes(fmdf_bytes(3, 1, 1, [0.5, 1.5, 2.5]))
    im = read_image(p)
    assert (im.width, im.height, im.channels) == (3, 1, 1)
    assert im.pixels.tolist() == [0.5, 1.5, 2.5]


def test_truncated_p5_reports_offset(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2, 3]))
    with pytest.raises(ImageFormatError, match="truncated pixel payload") as exc:
        read_image(p)
    assert exc.value.offset is not None


def test_truncated_fmdf(tmp_path):
    p = tmp_path / "a.fmdf"
    p.write_bytes(fmdf_bytes(2, 2, 1, [1.0, 2.0, 3.0]))
    with pytest.raises(ImageFormatError, match="truncated"):
        read_image(p)


def test_unreadable_file(tmp_path):
    with pytest.raises(ImageFormatError, match="unreadable"):
        read_image(tmp_path / "missing.fmdf")


@pytest.mark.parametrize(
    "payload",
    [
        b"P5\n2 x\n255\n\0\0",
        b"P5\n2 2\n1000\n" + bytes(8),
        b"P5\n2 2",
        fmdf_bytes(1, 1, 1, [0.0], version=2),
        fmdf_bytes(1, 1, 2, [0.0, 0.0]),
        b"FMD",
    ],
)
def test_malformed_headers(payload):
    with pytest.raises(ImageFormatError):
        decode_image(payload)


def test_fmdf_rejects_every_magic_mutation():
    good = fmdf_bytes(2, 1, 1, [1.0, 2.0])
    decode_image(good)
    for i in range(4):
        for bit in range(8):
            bad = bytearray(good)
            bad[i] ^= 1 << bit
            with pytest.raises(ImageFormatError):
                decode_image(bytes(bad))


def test_pnm_rejects_every_magic_mutation():
    good = b"P5\n1 1\n255\n\x07"
    decode_image(good)
    for i in range(2):
        for bit in range(8):
            bad = bytearray(good)
            bad[i] ^= 1 << bit
            if bytes(bad[:2]) == b"P6":
                # flipping 5 -> 6 gives a valid colour magic; payload is then short
                with pytest.raises(ImageFormatError, match="truncated"):
                    decode_image(bytes(bad))
                continue
            with pytest.raises(ImageFormatError):
                decode_image(bytes(bad))


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7), st.sampled_from([1, 3])),
           elements=finite)
)
def test_fmdf_round_trip_bit_exact(data):
    im = Image(data, 1.0)
    back = decode_image(encode_image(im, Format.FMDF), peak=1.0)
    assert back.data.tobytes() == im.data.tobytes()


def test_fmdf_file_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    im = Image(rng.normal(size=(5, 4, 3)) * 1e3, 65535.0)
    write_image(im, tmp_path / "x.fmdf")
    back = read_image(tmp_path / "x.fmdf", peak=65535.0)
    assert back == im


def test_pgm16_rounds_half_away_from_zero(tmp_path):
    im = Image(np.array([[100.6, 100.5, 0.49, 70000.0]]), 65535.0)
    write_image(im, tmp_path / "x.pgm", Format.PGM16)
    back = read_image(tmp_path / "x.pgm")
    assert back.pixels.tolist() == [101, 101, 0, 65535]


def test_pgm8_round_trip_up_to_quantization(tmp_path):
    rng = np.random.default_rng(2)
    data = rng.uniform(0, 255, size=(6, 9))
    write_image(Image(data, 255.0), tmp_path / "x.pgm", Format.PGM8)
    back = read_image(tmp_path / "x.pgm")
    assert np.max(np.abs(back.data[:, :, 0] - data)) <= 0.5


def test_pgm_refuses_colour(tmp_path):
    im = Image(np.zeros((2, 2, 3)), 255.0)
    with pytest.raises(ValueError):
        write_image(im, tmp_path / "x.pgm", Format.PGM8)


def test_write_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_image(Image(np.zeros((2, 2))), tmp_path / "no" / "such" / "dir.fmdf")


def test_image_invariants():
    with pytest.raises(ValueError):
        Image(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        Image(np.zeros((2, 2)), peak=0)
    with pytest.raises(ValueError):
        Image(np.zeros((2, 2, 2)))
    im = Image(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        im.data[0, 0] = 1.0


def test_crop_quadrants_tile_512():
    data = np.arange(512 * 512, dtype=float).reshape(512, 512)
    im = Image(data, 65535.0 * 8)
    rects = [Rect(0, 0, 256, 256), Rect(256, 0, 256, 256), Rect(0, 256, 256, 256),
             Rect(256, 256, 256, 256)]
    quads = [crop(im, r) for r in rects]
    assert all(q.shape == (256, 256, 1) for q in quads)
    top = np.hstack([quads[0].data, quads[1].data])
    bottom = np.hstack([quads[2].data, quads[3].data])
    assert np.array_equal(np.vstack([top, bottom]), im.data)
    assert quads[1].data[3, 5, 0] == data[3, 256 + 5]
    assert all(q.peak == im.peak for q in quads)


def test_crop_identity_and_bounds():
    im = Image(np.arange(4.0).reshape(2, 2))
    assert crop(im, Rect(0, 0, 2, 2)) == im
    with pytest.raises(ValueError):
        crop(im, Rect(1, 1, 2, 2))


def test_split_patches_counts():
    im = Image(np.zeros((512, 512)))
    assert len(split_patches(im, 256)) == 4
    one = Image(np.random.default_rng(0).random((256, 256)))
    assert split_patches(one, 256) == [one]
    with pytest.raises(ValueError):
        split_patches(Image(np.zeros((100, 100))), 256)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.sampled_from([1, 3]))
def test_split_patches_partition(nx, ny, patch, channels):
    H, W = ny * patch, nx * patch
    data = np.arange(H * W * channels, dtype=float).reshape(H, W, channels)
    patches = split_patches(Image(data), patch)
    assert len(patches) == nx * ny
    seen = np.zeros((H, W), dtype=int)
    for k, p in enumerate(patches):
        y0, x0 = (k // nx) * patch, (k % nx) * patch
        assert np.array_equal(p.data, data[y0 : y0 + patch, x0 : x0 + patch])
        seen[y0 : y0 + patch, x0 : x0 + patch] += 1
    assert np.all(seen == 1)
