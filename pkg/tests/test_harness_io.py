import numpy as np
import pytest

from drdam.errors import FormatError, ShapeError
from drdam.harness.io import (decode_pixmap, encode_pixmap, load_patterns, read_pixmap,
                              save_patterns, to_uint8, write_pixmap)


def test_patterns_round_trip(tmp_path, rng):
    P = rng.normal(size=(5, 7))
    save_patterns(tmp_path / "p.csv", P)
    np.testing.assert_array_equal(load_patterns(tmp_path / "p.csv"), P)


def test_patterns_errors(tmp_path):
    (tmp_path / "a.csv").write_text("1,2\n3\n")
    with pytest.raises(ShapeError):
        load_patterns(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("1,x\n")
    with pytest.raises(ValueError, match=":1:"):
        load_patterns(tmp_path / "b.csv")


@pytest.mark.parametrize("shape", [(4, 5), (4, 5, 3)])
def test_pixmap_round_trip(tmp_path, rng, shape):
    img = rng.integers(0, 256, size=shape, dtype=np.uint8)
    write_pixmap(tmp_path / "x.pnm", img)
    np.testing.assert_array_equal(read_pixmap(tmp_path / "x.pnm"), img)


def test_pixmap_comments_and_to_uint8():
    data = b"P5\n# c\n2 1\n255\n\x00\xff"
    np.testing.assert_array_equal(decode_pixmap(data), [[0, 255]])
    np.testing.assert_array_equal(to_uint8(np.array([0.0, 0.5, 1.2])), [0, 128, 255])


@pytest.mark.parametrize("data,offset", [
    (b"P3\n1 1\n255\n\x00", 0),
    (b"P5\nx 1\n255\n\x00", 3),
    (b"P5\n0 1\n255\n", 3),
    (b"P5\n1 1\n65535\n\x00\x00", 7),
    (b"P5\n2 2\n255\n\x00", 11),
])
def test_pixmap_malformed_offsets(data, offset):
    with pytest.raises(FormatError) as ei:
        decode_pixmap(data)
    assert ei.value.offset == offset


def test_pixmap_rejects_bad_input():
    with pytest.raises(ValueError):
        encode_pixmap(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        encode_pixmap(np.zeros((2, 2, 2), np.uint8))
