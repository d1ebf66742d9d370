"""The ring M_2(F_q): scalar matrices, vectorised index arithmetic, group tables.

A matrix [[a, b], [c, d]] is identified with the integer
``((a*q + b)*q + c)*q + d`` in ``[0, q**4)``; every graph in the package uses
these indices as vertex labels.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DomainError, FieldMismatchError, ResourceLimitError, SingularMatrixError
from .field import FieldElement, FieldSpec, gf

log = logging.getLogger(__name__)

MAX_Q = 27
# full q^4 x q^4 add/mul tables are kept when they hold at most this many entries
PAIR_TABLE_LIMIT = 6_000_000
INFINITY = -2  # rank-1 profile code for a zero first row
NOT_RANK1 = -1

CACHE_MAGIC = b"MRXL"
CACHE_VERSION = 1


def encode(q: int, a, b, c, d):
    return ((np.asarray(a) * q + b) * q + c) * q + d


def decode(q: int, idx):
    idx = np.asarray(idx)
    return idx // q**3, (idx // q**2) % q, (idx // q) % q, idx % q


class MatrixRing:
    """Vectorised arithmetic on matrix indices for one field.

    ``add``, ``sub`` and ``mul`` take broadcastable integer arrays of indices
    and return indices.  Per-index invariants (determinant, rank, rank-1
    profile) are precomputed over all q^4 matrices.
    """

    def __init__(self, field: FieldSpec):
        q = field.order
        if q > MAX_Q:
            raise ResourceLimitError(f"q={q} exceeds the enumeration limit {MAX_Q}")
        self.field = field
        self.q = q
        self.size = q**4
        idx = np.arange(self.size, dtype=np.int64)
        self.entries = np.stack(decode(q, idx), axis=1)
        a, b, c, d = self.entries.T
        self.det_of = field.sub(field.mul(a, d), field.mul(b, c))
        nonzero = idx != 0
        self.rank_of = np.where(self.det_of != 0, 2, np.where(nonzero, 1, 0)).astype(np.int8)
        self.profile_of = self._profiles(a, b, c, d)
        self.zero = 0
        self.identity = int(encode(q, 1, 0, 0, 1))
        self._add_table = self._mul_table = None
        if self.size**2 <= PAIR_TABLE_LIMIT:
            dtype = np.int16 if self.size < 2**15 else np.int32
            self._add_table = self._entrywise_add(idx[:, None], idx[None, :]).astype(dtype)
            self._mul_table = self._entrywise_mul(idx[:, None], idx[None, :]).astype(dtype)
        self._neg = self._entrywise_neg(idx)

    def _profiles(self, a, b, c, d) -> np.ndarray:
        f = self.field
        out = np.full(self.size, NOT_RANK1, dtype=np.int64)
        rank1 = self.rank_of == 1
        row1 = (a != 0) | (b != 0)
        # row2 = alpha * row1; alpha read off whichever entry of row1 is nonzero
        a_safe = np.where(a != 0, a, 1)
        b_safe = np.where(b != 0, b, 1)
        alpha = np.where(a != 0, f.mul(c, f.inv(a_safe)), f.mul(d, f.inv(b_safe)))
        out[rank1 & row1] = alpha[rank1 & row1]
        out[rank1 & ~row1] = INFINITY
        return out

    def _split(self, x):
        x = np.asarray(x)
        return self.entries[x, 0], self.entries[x, 1], self.entries[x, 2], self.entries[x, 3]

    def _entrywise_add(self, x, y):
        f = self.field
        a, b, c, d = self._split(x)
        e, g, h, k = self._split(y)
        return encode(self.q, f.add(a, e), f.add(b, g), f.add(c, h), f.add(d, k))

    def _entrywise_neg(self, x):
        f = self.field
        a, b, c, d = self._split(x)
        return encode(self.q, f.neg(a), f.neg(b), f.neg(c), f.neg(d))

    def _entrywise_mul(self, x, y):
        f = self.field
        a, b, c, d = self._split(x)
        e, g, h, k = self._split(y)
        return encode(
            self.q,
            f.add(f.mul(a, e), f.mul(b, h)),
            f.add(f.mul(a, g), f.mul(b, k)),
            f.add(f.mul(c, e), f.mul(d, h)),
            f.add(f.mul(c, g), f.mul(d, k)),
        )

    def add(self, x, y):
        if self._add_table is not None:
            return self._add_table[x, y].astype(np.int64)
        return self._entrywise_add(x, y)

    def neg(self, x):
        return self._neg[x]

    def sub(self, x, y):
        return self.add(x, self._neg[y])

    def mul(self, x, y):
        if self._mul_table is not None:
            return self._mul_table[x, y].astype(np.int64)
        return self._entrywise_mul(x, y)

    def det(self, x):
        return self.det_of[x]

    def rank(self, x):
        return self.rank_of[x]

    def profile(self, x):
        return self.profile_of[x]

    def scale(self, x, s, side: str = "row"):
        """Multiply the first row (or column) of each matrix by the scalar ``s``."""
        f = self.field
        a, b, c, d = self._split(x)
        if side == "row":
            return encode(self.q, f.mul(s, a), f.mul(s, b), c, d)
        if side == "column":
            return encode(self.q, f.mul(s, a), b, f.mul(s, c), d)
        raise DomainError(f"side must be 'row' or 'column', not {side!r}")


@lru_cache(maxsize=None)
def ring(q: int | FieldSpec) -> MatrixRing:
    return MatrixRing(q if isinstance(q, FieldSpec) else gf(q))


@dataclass(frozen=True)
class Mat2:
    """A single 2x2 matrix over ``field`` with entries stored as representatives."""

    field: FieldSpec
    a: int
    b: int
    c: int
    d: int

    @classmethod
    def of(cls, field: FieldSpec | int, rows) -> Mat2:
        field = gf(field) if isinstance(field, int) else field
        (a, b), (c, d) = rows
        q = field.order
        return cls(field, int(a) % q, int(b) % q, int(c) % q, int(d) % q)

    @classmethod
    def from_index(cls, field: FieldSpec | int, idx: int) -> Mat2:
        field = gf(field) if isinstance(field, int) else field
        return cls(field, *(int(v) for v in decode(field.order, int(idx))))

    @classmethod
    def identity(cls, field: FieldSpec | int) -> Mat2:
        return cls.of(field, [[1, 0], [0, 1]])

    @property
    def index(self) -> int:
        return int(encode(self.field.order, self.a, self.b, self.c, self.d))

    def rows(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]

    def _check(self, other: Mat2) -> None:
        if not isinstance(other, Mat2):
            raise TypeError(f"expected Mat2, got {type(other).__name__}")
        if other.field != self.field:
            raise FieldMismatchError(f"{self.field!r} vs {other.field!r}")

    def __add__(self, other: Mat2) -> Mat2:
        self._check(other)
        f = self.field
        return Mat2(f, *(int(f.add(x, y)) for x, y in zip(self._t(), other._t())))

    def __sub__(self, other: Mat2) -> Mat2:
        self._check(other)
        f = self.field
        return Mat2(f, *(int(f.sub(x, y)) for x, y in zip(self._t(), other._t())))

    def __neg__(self) -> Mat2:
        f = self.field
        return Mat2(f, *(int(f.neg(x)) for x in self._t()))

    def __mul__(self, other: Mat2) -> Mat2:
        self._check(other)
        f = self.field
        a, b, c, d = self._t()
        e, g, h, k = other._t()

        def dot(x, y, z, w):
            return int(f.add(f.mul(x, y), f.mul(z, w)))

        return Mat2(f, dot(a, e, b, h), dot(a, g, b, k), dot(c, e, d, h), dot(c, g, d, k))

    def _t(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    def det(self) -> FieldElement:
        f = self.field
        return FieldElement(f, int(f.sub(f.mul(self.a, self.d), f.mul(self.b, self.c))))

    def rank(self) -> int:
        if self.det().rep:
            return 2
        return 1 if any(self._t()) else 0

    def inverse(self) -> Mat2:
        det = self.det()
        if not det.rep:
            raise SingularMatrixError(f"{self.rows()} is singular")
        f = self.field
        s = int(f.inv(det.rep))
        return Mat2(
            f,
            int(f.mul(s, self.d)),
            int(f.mul(s, f.neg(self.b))),
            int(f.mul(s, f.neg(self.c))),
            int(f.mul(s, self.a)),
        )

    def __repr__(self) -> str:
        return f"Mat2({self.rows()} over {self.field!r})"


def mat_op(x: Mat2, y: Mat2, kind: str) -> Mat2:
    if kind == "add":
        return x + y
    if kind == "sub":
        return x - y
    if kind == "mul":
        return x * y
    raise DomainError(f"unknown matrix operation {kind!r}")


def mat_det(x: Mat2) -> FieldElement:
    return x.det()


def mat_rank(x: Mat2) -> int:
    return x.rank()


def mat_inv(x: Mat2) -> Mat2:
    return x.inverse()


def scale_to_sl2(x: Mat2, side: str = "row") -> Mat2:
    """Divide the first row (``side='row'``) or first column by det(x)."""
    det = x.det()
    if not det.rep:
        raise SingularMatrixError(f"{x.rows()} is singular")
    f = x.field
    s = int(f.inv(det.rep))
    if side == "row":
        return Mat2(f, int(f.mul(s, x.a)), int(f.mul(s, x.b)), x.c, x.d)
    if side == "column":
        return Mat2(f, int(f.mul(s, x.a)), x.b, int(f.mul(s, x.c)), x.d)
    raise DomainError(f"side must be 'row' or 'column', not {side!r}")


@dataclass(frozen=True)
class Rank1Profile:
    factor: int | None  # None encodes the infinite factor
    orientation: str  # "row-form" or "swapped-row-form"

    @property
    def code(self) -> int:
        return INFINITY if self.factor is None else self.factor


def rank1_profile(x: Mat2) -> Rank1Profile:
    """For rank-1 x, the alpha with row2 = alpha * row1, or the swapped marker when row1 = 0."""
    if x.rank() != 1:
        raise DomainError(f"rank1_profile needs a rank-1 matrix, got rank {x.rank()}")
    code = int(ring(x.field).profile_of[x.index])
    if code == INFINITY:
        return Rank1Profile(None, "swapped-row-form")
    return Rank1Profile(code, "row-form")


@dataclass(frozen=True, eq=False)
class GroupTable:
    """Index lists of M_2, SL_2, GL_2 and the determinant slices D_alpha."""

    field: FieldSpec
    all: np.ndarray
    sl2: np.ndarray
    gl2: np.ndarray
    det_slices: dict[int, np.ndarray]

    @property
    def q(self) -> int:
        return self.field.order

    def slice(self, alpha: int) -> np.ndarray:
        return self.det_slices[int(alpha)]

    def is_sl2(self, idx) -> np.ndarray:
        return self._sl2_pos[np.asarray(idx)] >= 0

    def sl2_position(self, idx):
        """Position of each index in the sorted SL_2 list, -1 when not in SL_2."""
        return self._sl2_pos[np.asarray(idx)]

    def __post_init__(self):
        pos = np.full(self.field.order**4, -1, dtype=np.int64)
        pos[self.sl2] = np.arange(len(self.sl2))
        object.__setattr__(self, "_sl2_pos", pos)

    def domain(self, name: str) -> np.ndarray:
        name = name.upper()
        if name == "M2":
            return self.all
        if name == "SL2":
            return self.sl2
        if name == "GL2":
            return self.gl2
        if name == "D0":
            return self.det_slices[0]
        raise DomainError(f"unknown domain {name!r}")


def _build_table(field: FieldSpec) -> GroupTable:
    R = ring(field)
    det = R.det_of
    all_idx = np.arange(R.size, dtype=np.int64)
    slices = {alpha: np.nonzero(det == alpha)[0].astype(np.int64) for alpha in range(field.order)}
    return GroupTable(
        field=field,
        all=all_idx,
        sl2=slices[1],
        gl2=np.nonzero(det != 0)[0].astype(np.int64),
        det_slices=slices,
    )


def write_table_cache(table: GroupTable, path: Path) -> None:
    """Serialise ``table`` in the little-endian MRXL format, atomically."""
    path = Path(path)
    parts = [CACHE_MAGIC, struct.pack("<III", CACHE_VERSION, table.q, len(table.field.modulus))]
    parts.append(struct.pack(f"<{len(table.field.modulus)}I", *table.field.modulus))
    arrays = [table.sl2, table.gl2] + [table.det_slices[a] for a in range(table.q)]
    for arr in arrays:
        parts.append(struct.pack("<I", len(arr)))
        parts.append(np.asarray(arr, dtype="<u4").tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_table_cache(path: Path, field: FieldSpec) -> GroupTable | None:
    """Load a cache file; returns None for foreign, stale or truncated files."""
    try:
        blob = Path(path).read_bytes()
    except OSError:
        return None
    try:
        if blob[:4] != CACHE_MAGIC:
            return None
        version, q, ncoef = struct.unpack_from("<III", blob, 4)
        if version != CACHE_VERSION or q != field.order:
            return None
        off = 16
        modulus = struct.unpack_from(f"<{ncoef}I", blob, off)
        off += 4 * ncoef
        if tuple(modulus) != field.modulus:
            return None
        arrays = []
        for _ in range(2 + q):
            (n,) = struct.unpack_from("<I", blob, off)
            off += 4
            if off + 4 * n > len(blob):
                return None
            arrays.append(np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int64))
            off += 4 * n
        if off != len(blob):
            return None
    except struct.error:
        return None
    sl2, gl2, *slices = arrays
    if sum(len(s) for s in slices) != q**4:
        return None
    return GroupTable(field, np.arange(q**4, dtype=np.int64), sl2, gl2, dict(enumerate(slices)))


def cache_path(cache_dir: Path, field: FieldSpec) -> Path:
    mod = "-".join(map(str, field.modulus)) or "prime"
    return Path(cache_dir) / f"groups_q{field.order}_{mod}.mrxl"


_TABLES: dict[FieldSpec, GroupTable] = {}


def enumerate_tables(field: FieldSpec | int, cache_dir: Path | None = None) -> GroupTable:
    """Enumerate M_2, SL_2, GL_2 and all D_alpha; memoised, optionally disk-cached."""
    if isinstance(field, int):
        if field > MAX_Q:
            raise ResourceLimitError(f"q={field} exceeds the enumeration limit {MAX_Q}")
        field = gf(field)
    if field.order > MAX_Q:
        raise ResourceLimitError(f"q={field.order} exceeds the enumeration limit {MAX_Q}")
    if cache_dir is None and field in _TABLES:
        return _TABLES[field]
    if cache_dir is not None:
        path = cache_path(cache_dir, field)
        if path.exists():
            table = read_table_cache(path, field)
            if table is not None:
                log.info("group table cache hit: %s", path)
                _TABLES[field] = table
                return table
            log.warning("ignoring unusable cache file %s; recomputing", path)
        table = _TABLES.get(field) or _build_table(field)
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        write_table_cache(table, path)
        log.info("group table cache written: %s", path)
    else:
        table = _build_table(field)
    _TABLES[field] = table
    return table
