from __future__ import annotations

import logging

import numpy as np
import pytest

from mringlab.errors import DomainError, FieldMismatchError, ResourceLimitError, SingularMatrixError
from mringlab.field import gf
from mringlab.matrix import (
    Mat2,
    _build_table,
    cache_path,
    decode,
    encode,
    enumerate_tables,
    mat_op,
    rank1_profile,
    read_table_cache,
    ring,
    scale_to_sl2,
    write_table_cache,
)


def test_encode_decode_roundtrip():
    idx = np.arange(3**4)
    assert np.array_equal(encode(3, *decode(3, idx)), idx)
    assert encode(3, 1, 0, 0, 1) == 27 + 1


@pytest.mark.parametrize("q", [2, 3, 4])
def test_ring_tables_agree_with_mat2(q):
    R = ring(q)
    rng = np.random.default_rng(q)
    for x, y in rng.integers(0, q**4, size=(200, 2)):
        X, Y = Mat2.from_index(q, x), Mat2.from_index(q, y)
        assert R.add(x, y) == (X + Y).index
        assert R.sub(x, y) == (X - Y).index
        assert R.mul(x, y) == (X * Y).index
        assert R.det_of[x] == X.det().rep
        assert R.rank_of[x] == X.rank()


def test_entrywise_path_matches_tables():
    R = ring(5)
    x = np.arange(625)
    y = (x * 7 + 3) % 625
    assert np.array_equal(R.mul(x, y), R._entrywise_mul(x, y))
    assert np.array_equal(R.add(x, y), R._entrywise_add(x, y))


def test_inverse_and_singular():
    f = gf(5)
    m = Mat2.of(f, [[1, 2], [3, 4]])
    assert m * m.inverse() == Mat2.identity(f)
    with pytest.raises(SingularMatrixError):
        Mat2.of(f, [[1, 2], [2, 4]]).inverse()
    with pytest.raises(FieldMismatchError):
        _ = m + Mat2.identity(3)
    with pytest.raises(DomainError):
        mat_op(m, m, "div")


def test_scale_to_sl2_both_sides():
    f = gf(7)
    m = Mat2.of(f, [[2, 1], [3, 4]])
    for side in ("row", "column"):
        assert scale_to_sl2(m, side).det().rep == 1
    with pytest.raises(DomainError):
        scale_to_sl2(m, "diagonal")


def test_rank1_profile():
    f = gf(3)
    p = rank1_profile(Mat2.of(f, [[1, 2], [2, 1]]))  # row2 = 2 * row1
    assert p.factor == 2 and p.orientation == "row-form"
    assert rank1_profile(Mat2.of(f, [[0, 0], [1, 2]])).factor is None
    with pytest.raises(DomainError):
        rank1_profile(Mat2.identity(f))
    # every nonzero singular matrix gets a profile code
    R = ring(3)
    r1 = np.nonzero(R.rank_of == 1)[0]
    assert len(r1) == 3**3 + 3**2 - 3 - 1
    assert (R.profile_of[r1] >= -2).all() and (R.profile_of[R.rank_of != 1] == -1).all()


@pytest.mark.parametrize("q", [2, 3, 4, 5, 7, 8, 9])
def test_group_cardinalities(q):
    T = enumerate_tables(q)
    assert len(T.sl2) == q**3 - q
    assert len(T.gl2) == (q * q - 1) * (q * q - q)
    assert len(T.slice(0)) == q**3 + q * q - q
    assert all(len(T.slice(a)) == q**3 - q for a in range(1, q))
    assert T.is_sl2(T.sl2).all() and not T.is_sl2(0)
    assert np.array_equal(T.sl2_position(T.sl2), np.arange(len(T.sl2)))


def test_too_large_field():
    with pytest.raises(ResourceLimitError):
        enumerate_tables(31)


def test_cache_roundtrip_and_corruption(tmp_path, caplog):
    f = gf(3)
    table = _build_table(f)
    path = cache_path(tmp_path, f)
    write_table_cache(table, path)
    back = read_table_cache(path, f)
    assert np.array_equal(back.sl2, table.sl2) and np.array_equal(back.slice(2), table.slice(2))
    # wrong field, truncation, trailing bytes and a version bump are all rejected
    assert read_table_cache(path, gf(5)) is None
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    assert read_table_cache(path, f) is None
    path.write_bytes(raw + b"\0")
    assert read_table_cache(path, f) is None
    path.write_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    assert read_table_cache(path, f) is None
    path.write_bytes(raw[:-3])
    with caplog.at_level(logging.INFO, logger="mringlab.matrix"):
        again = enumerate_tables(3, cache_dir=tmp_path)
        assert "recomputing" in caplog.text
        enumerate_tables(3, cache_dir=tmp_path)
        assert "cache hit" in caplog.text
    assert np.array_equal(again.gl2, table.gl2)
