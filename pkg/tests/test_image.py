import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sphinpaint.image import (FormatError, GrayImage, encode_pgm, mse, mse_clamped, parse_pgm,
                              quantize, read_pgm, write_pgm)


def test_smallest_ascii_file():
    img = parse_pgm(b"P2\n2 1\n255\n0 255\n")
    assert img.dims == (2, 1)
    assert img.data.tolist() == [[0.0, 255.0]]


def test_binary_constant():
    img = parse_pgm(b"P5\n256 256\n255\n" + bytes([128]) * 65536)
    assert img.dims == (256, 256)
    assert np.all(img.data == 128)


def test_comments_and_small_maxval():
    img = parse_pgm(b"P2 # magic\n# a comment line\n3 1 # dims\n15\n0 7 15\n")
    assert img.data.tolist() == [[0.0, 7.0, 15.0]]


@pytest.mark.parametrize("buf, offset", [
    (b"P6\n1 1\n255\n\x00", 0),
    (b"P5\n2 2\n255\n\x00\x00", 13),
    (b"P5\n1 1\n65535\n\x00\x00", None),
    (b"P2\n2 1\n255\n0\n", None),
    (b"P5\n-1 1\n255\n", None),
])
def test_malformed_files_report_offsets(buf, offset):
    with pytest.raises(FormatError) as info:
        parse_pgm(buf)
    assert "byte offset" in str(info.value)
    if offset is not None:
        assert info.value.offset == offset


def test_ascii_value_above_maxval():
    with pytest.raises(FormatError):
        parse_pgm(b"P2\n1 1\n10\n11\n")


def test_roundtrip_byte_identical(tmp_path, rng):
    raw = rng.integers(0, 256, (32, 32)).astype(np.uint8)
    p1 = tmp_path / "a.pgm"
    p1.write_bytes(b"P5\n32 32\n255\n" + raw.tobytes())
    img = read_pgm(p1)
    p2 = tmp_path / "b.pgm"
    write_pgm(img, p2)
    assert p2.read_bytes() == p1.read_bytes()


def test_write_rounding_and_clamping(tmp_path):
    img = GrayImage(np.array([[0.0, 254.6, -3.2, 300.0, 0.5, 1.49]]))
    payload = encode_pgm(img).split(b"\n", 3)[3]
    assert list(payload) == [0, 255, 0, 255, 1, 1]


def test_constant_zero_payload():
    payload = encode_pgm(GrayImage.constant(4, 3, 0.0)).split(b"\n", 3)[3]
    assert payload == bytes(12)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_quantize_half_away_from_zero(v):
    q = int(quantize(np.array([v]))[0])
    expected = np.sign(v) * np.floor(abs(v) + 0.5)
    assert q == int(min(max(expected, 0), 255))


def test_mse_examples():
    a = GrayImage(np.array([[0.0, 255.0]]))
    b = GrayImage(np.array([[255.0, 0.0]]))
    assert mse(a, b) == 65025.0
    assert mse(a, a) == 0.0
    assert mse(GrayImage.constant(7, 5, 0.0), GrayImage.constant(7, 5, 1.0)) == 1.0


def test_mse_unclamped_vs_clamped():
    a = GrayImage(np.array([[0.0, 255.0]]))
    b = GrayImage(np.array([[-10.0, 265.0]]))
    assert mse(a, b) == 100.0
    assert mse_clamped(a, b) == 0.0


def test_mse_dimension_mismatch():
    with pytest.raises(ValueError):
        mse(GrayImage.constant(2, 2, 0), GrayImage.constant(2, 3, 0))


def test_image_is_read_only():
    img = GrayImage.constant(2, 2, 1.0)
    with pytest.raises(ValueError):
        img.data[0, 0] = 5


@settings(max_examples=30)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_p5_roundtrip_property(raw):
    h, w = raw.shape
    img = parse_pgm(f"P5\n{w} {h}\n255\n".encode() + raw.tobytes())
    assert np.array_equal(img.quantized(), raw)
    assert np.array_equal(parse_pgm(encode_pgm(img)).data, img.data)
