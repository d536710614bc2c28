import numpy as np
import pytest

from tvlevel import fieldio
from tvlevel.fieldio import FieldIOError
from tvlevel.grid import BOUNDARY, OUTSIDE, BinarySet, ScalarField, rectangle_mask


def test_pgm_round_trip_ascii_and_binary(tmp_path, rng):
    v = rng.integers(0, 256, (5, 7)) / 255.0 * 2.0 - 1.0
    u = ScalarField(v)
    for binary in (False, True):
        for maxval in (255, 65535):
            p = tmp_path / f"u{binary}{maxval}.pgm"
            fieldio.write_pgm(p, u, -1.0, 1.0, maxval, binary)
            back = fieldio.read_pgm(p, -1.0, 1.0)
            np.testing.assert_allclose(back.values, v, atol=1.0 / maxval)


def test_pgm_rejects_bad_range_and_maxval():
    u = ScalarField(np.zeros((2, 2)))
    with pytest.raises(FieldIOError):
        fieldio.pgm_bytes(u, 1.0, 1.0)
    with pytest.raises(FieldIOError):
        fieldio.pgm_bytes(u, 0.0, 1.0, maxval=1000)


def test_pgm_comments_and_whitespace(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P2\n# a comment\n2 1 # trailing\n255\n0   255\n")
    np.testing.assert_allclose(fieldio.read_pgm(p).values, [[0.0, 1.0]])


def test_pgm_rejects_unusual_maxval(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P2\n1 1\n4\n0\n")
    with pytest.raises(FieldIOError, match="maxval"):
        fieldio.read_pgm(p)


def test_truncated_pgm(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P2\n3 3\n255\n1 2 3\n")
    with pytest.raises(FieldIOError):
        fieldio.read_pgm(p)


def test_mask_round_trip(tmp_path):
    m = rectangle_mask(4, 6)
    m[2, 3] = OUTSIDE
    p = tmp_path / "m.pgm"
    fieldio.write_mask(p, m)
    np.testing.assert_array_equal(fieldio.read_mask(p), m)
    assert b"128" in p.read_bytes()


def test_mask_rejects_unknown_codes(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P2\n2 1\n255\n0 7\n")
    with pytest.raises(FieldIOError):
        fieldio.read_mask(p)


def test_pbm_round_trip(tmp_path, rng):
    e = BinarySet(rng.random((3, 5)) < 0.5)
    p = tmp_path / "e.pbm"
    fieldio.write_pbm(p, e)
    assert fieldio.read_pbm(p) == e


def test_csv_round_trip_is_exact(tmp_path, rng):
    u = ScalarField(rng.normal(size=(4, 3)), 0.125)
    p = tmp_path / "u.csv"
    fieldio.write_csv(p, u, -5.0, 5.0)
    back, lo, hi = fieldio.read_csv(p)
    np.testing.assert_array_equal(back.values, u.values)
    assert (back.delta, lo, hi) == (0.125, -5.0, 5.0)
    assert p.read_text().splitlines()[0] == "width,height,delta,lo,hi"


def test_csv_with_mask_keeps_nan_outside(tmp_path):
    m = rectangle_mask(3, 3)
    m[0, 0] = OUTSIDE
    v = np.ones((3, 3))
    v[0, 0] = np.nan
    p = tmp_path / "u.csv"
    fieldio.write_csv(p, ScalarField(v, 1.0, m))
    back, _, _ = fieldio.read_csv(p, m)
    assert np.isnan(back.values[0, 0]) and back.mask[1, 0] == BOUNDARY


def test_csv_shape_mismatch(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("width,height,delta,lo,hi\n3,2,1.0,0,1\n1,2,3\n")
    with pytest.raises(FieldIOError):
        fieldio.read_csv(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "x.bin"
    fieldio.atomic_write(p, b"abc")
    fieldio.atomic_write(p, b"def")
    assert p.read_bytes() == b"def"
    assert [q.name for q in tmp_path.iterdir()] == ["x.bin"]
