import numpy as np
import pytest

from acoustopt import outputs


def test_fmt_is_full_precision():
    assert outputs.fmt(0.1 + 0.2) == "0.30000000000000004"
    assert outputs.fmt(np.float64(1e-5)) == "1e-05"
    assert outputs.fmt(np.int64(7)) == "7"
    assert outputs.fmt(True) == "1"
    assert outputs.fmt("x") == "x"


def test_csv_round_trip(tmp_path):
    p = outputs.write_csv(tmp_path / "t.csv", ("a", "b"), [[1, 2.5], [3, float("inf")]])
    header, rows = outputs.read_csv(p)
    assert header == ["a", "b"]
    assert rows == [["1", "2.5"], ["3", "inf"]]


def test_pgm_round_trip_and_header(tmp_path):
    pix = np.arange(12, dtype=np.uint8).reshape(3, 4)
    p = outputs.write_pgm(tmp_path / "a.pgm", pix)
    raw = open(p, "rb").read()
    assert raw.startswith(b"P5\n4 3\n255\n")
    assert len(raw) == len(b"P5\n4 3\n255\n") + 12
    np.testing.assert_array_equal(outputs.read_pgm(p), pix)


def test_read_pgm_skips_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(outputs.read_pgm(p), [[0, 255]])


def test_pgm_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        outputs.write_pgm(tmp_path / "f.pgm", np.zeros((2, 2)))
    p = tmp_path / "p2.pgm"
    p.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(ValueError):
        outputs.read_pgm(p)


def test_design_pixels_orientation_and_inverse():
    design = np.zeros((2, 3))
    design[1, 0] = 1.0  # top ceiling row, left
    pix = outputs.design_pixels(design)
    assert pix[0, 0] == 0 and pix[1, 0] == 255
    assert pix.dtype == np.uint8
    np.testing.assert_array_equal(outputs.pixels_to_design(pix), design)
    assert outputs.design_pixels(np.full((1, 1), 0.5))[0, 0] == 128


def test_field_pixels_scaling():
    v = np.array([[0.0, 5.0], [10.0, 10.0]])
    pix = outputs.field_pixels(v)
    np.testing.assert_array_equal(pix, [[255, 255], [0, 128]])
    assert np.all(outputs.field_pixels(np.ones((2, 2))) == 0)
