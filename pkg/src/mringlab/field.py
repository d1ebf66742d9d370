"""Finite fields F_q for prime and small prime-power q.

Elements are encoded as integers in ``[0, q)``: the coefficient vector
``(c_0, ..., c_{k-1})`` of a polynomial in ``F_p[x] / (modulus)`` maps to
``sum(c_i * p**i)``.  For prime ``q`` this is the usual residue.

All arithmetic entry points accept python ints or numpy integer arrays and
broadcast like numpy ufuncs, which is what the graph and image loops use.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, FieldDivisionByZero, FieldMismatchError, UnsupportedError

# low-to-high coefficients, leading 1 included
MODULUS_TABLE: dict[int, tuple[int, ...]] = {
    4: (1, 1, 1),  # x^2 + x + 1
    8: (1, 1, 0, 1),  # x^3 + x + 1
    9: (1, 0, 1),  # x^2 + 1
    16: (1, 1, 0, 0, 1),  # x^4 + x + 1
    25: (2, 0, 1),  # x^2 + 2
    27: (1, 2, 0, 1),  # x^3 + 2x + 1
}

TABLE_LIMIT = 32


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    r = math.isqrt(n)
    return all(n % f for f in range(3, r + 1, 2))


def _poly_mod(num: list[int], den: tuple[int, ...], p: int) -> list[int]:
    num = list(num)
    lead_inv = pow(den[-1], -1, p)
    dd = len(den) - 1
    for i in range(len(num) - 1, dd - 1, -1):
        coef = num[i] * lead_inv % p
        if coef:
            for j, dc in enumerate(den):
                num[i - dd + j] = (num[i - dd + j] - coef * dc) % p
    return num[:dd] if dd else []


def is_irreducible(modulus: tuple[int, ...], p: int) -> bool:
    """Trial division by every monic polynomial of degree 1..k//2."""
    k = len(modulus) - 1
    for deg in range(1, k // 2 + 1):
        for low in itertools.product(range(p), repeat=deg):
            divisor = tuple(low) + (1,)
            if not any(_poly_mod(list(modulus), divisor, p)):
                return False
    return True


class FieldSpec:
    """The field F_q with q = p**k, together with its lookup tables.

    Instances are immutable after construction. Use :func:`gf` to obtain a
    shared instance for a given order.
    """

    def __init__(self, characteristic: int, degree: int = 1, modulus: tuple[int, ...] = ()):
        if not is_prime(characteristic):
            raise DomainError(f"characteristic {characteristic} is not prime")
        if degree < 1:
            raise DomainError("degree must be >= 1")
        modulus = tuple(int(c) % characteristic for c in modulus)
        if degree == 1:
            modulus = ()
        else:
            if len(modulus) != degree + 1 or modulus[-1] != 1:
                raise DomainError("modulus must be a monic polynomial of the field degree")
            if not is_irreducible(modulus, characteristic):
                raise DomainError(f"modulus {modulus} is reducible over F_{characteristic}")
        self.characteristic = characteristic
        self.degree = degree
        self.modulus = modulus
        self.order = characteristic**degree
        self._tables = self.order <= TABLE_LIMIT or degree > 1
        if self._tables:
            self._build_tables()

    # -- construction -------------------------------------------------
    def _digits(self, x: int) -> list[int]:
        p = self.characteristic
        return [(x // p**i) % p for i in range(self.degree)]

    def _undigits(self, coeffs) -> int:
        p = self.characteristic
        return sum(int(c) * p**i for i, c in enumerate(coeffs))

    def _build_tables(self) -> None:
        q, p = self.order, self.characteristic
        if self.degree == 1:
            r = np.arange(q, dtype=np.int64)
            add = (r[:, None] + r[None, :]) % q
            mul = (r[:, None] * r[None, :]) % q
        else:
            digits = [self._digits(x) for x in range(q)]
            add = np.empty((q, q), dtype=np.int64)
            mul = np.empty((q, q), dtype=np.int64)
            for x in range(q):
                for y in range(q):
                    add[x, y] = self._undigits([(u + v) % p for u, v in zip(digits[x], digits[y])])
                    prod = [0] * (2 * self.degree - 1)
                    for i, u in enumerate(digits[x]):
                        for j, v in enumerate(digits[y]):
                            prod[i + j] = (prod[i + j] + u * v) % p
                    mul[x, y] = self._undigits(_poly_mod(prod, self.modulus, p))
        neg = np.argmin(add, axis=1)  # add[x, neg[x]] == 0
        inv = np.zeros(q, dtype=np.int64)
        for x in range(1, q):
            inv[x] = int(np.nonzero(mul[x] == 1)[0][0])
        self.add_table = add
        self.mul_table = mul
        self.neg_table = neg
        self.inv_table = inv
        self.sub_table = add[np.arange(q)[:, None], neg[None, :]]

    # -- identity -----------------------------------------------------
    def key(self) -> tuple:
        return (self.characteristic, self.degree, self.modulus)

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldSpec) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        if self.degree == 1:
            return f"GF({self.order})"
        return f"GF({self.characteristic}^{self.degree}, modulus={self.modulus})"

    @property
    def is_prime_field(self) -> bool:
        return self.degree == 1

    # -- vectorised arithmetic -----------------------------------------
    def add(self, x, y):
        if self._tables:
            return self.add_table[x, y]
        return (np.asarray(x) + y) % self.order

    def sub(self, x, y):
        if self._tables:
            return self.sub_table[x, y]
        return (np.asarray(x) - y) % self.order

    def mul(self, x, y):
        if self._tables:
            return self.mul_table[x, y]
        return (np.asarray(x, dtype=np.int64) * y) % self.order

    def neg(self, x):
        if self._tables:
            return self.neg_table[x]
        return (-np.asarray(x)) % self.order

    def inv(self, x):
        xs = np.asarray(x)
        if np.any(xs == 0):
            raise FieldDivisionByZero("inverse of zero")
        if self._tables:
            return self.inv_table[xs]
        out = np.vectorize(lambda v: pow(int(v), -1, self.order))(xs)
        return out if out.ndim else int(out)

    def power(self, x: int, e: int) -> int:
        result, base = 1, int(x)
        while e:
            if e & 1:
                result = int(self.mul(result, base))
            base = int(self.mul(base, base))
            e >>= 1
        return result

    def trace(self, x: int) -> int:
        """Absolute trace F_q -> F_p, returned as an integer in [0, p)."""
        total, y = 0, int(x)
        for _ in range(self.degree):
            total = int(self.add(total, y))
            y = self.power(y, self.characteristic)
        return total

    def elements(self) -> np.ndarray:
        return np.arange(self.order, dtype=np.int64)

    def element(self, rep: int) -> FieldElement:
        return FieldElement(self, rep)


@lru_cache(maxsize=None)
def gf(q: int) -> FieldSpec:
    """Shared FieldSpec for order ``q`` (prime, or one of the tabulated prime powers)."""
    if is_prime(q):
        return FieldSpec(q)
    if q in MODULUS_TABLE:
        for p in range(2, q + 1):
            if q % p == 0:
                break
        k = round(math.log(q, p))
        return FieldSpec(p, k, MODULUS_TABLE[q])
    raise UnsupportedError(f"unsupported field order {q}; prime powers limited to {sorted(MODULUS_TABLE)}")


@dataclass(frozen=True)
class FieldElement:
    field: FieldSpec
    rep: int

    def __post_init__(self):
        if not 0 <= self.rep < self.field.order:
            raise DomainError(f"representative {self.rep} outside [0, {self.field.order})")
        object.__setattr__(self, "rep", int(self.rep))

    def _other(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise FieldMismatchError(f"{self.field!r} vs {other.field!r}")
            return other.rep
        raise TypeError(f"cannot combine FieldElement with {type(other).__name__}")

    def __add__(self, other):
        return FieldElement(self.field, int(self.field.add(self.rep, self._other(other))))

    def __sub__(self, other):
        return FieldElement(self.field, int(self.field.sub(self.rep, self._other(other))))

    def __mul__(self, other):
        return FieldElement(self.field, int(self.field.mul(self.rep, self._other(other))))

    def __neg__(self):
        return FieldElement(self.field, int(self.field.neg(self.rep)))

    def inverse(self) -> FieldElement:
        return FieldElement(self.field, int(self.field.inv(self.rep)))

    def __truediv__(self, other):
        return self * FieldElement(self.field, self._other(other)).inverse()

    def __bool__(self) -> bool:
        return self.rep != 0

    def __int__(self) -> int:
        return self.rep

    def __repr__(self) -> str:
        return f"{self.rep}@{self.field!r}"


def ff_arith(a: FieldElement, b: FieldElement, kind: str) -> FieldElement:
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    raise DomainError(f"unknown field operation {kind!r}")


def ff_inv(a: FieldElement) -> FieldElement:
    return a.inverse()


def kloosterman_complex(field: FieldSpec, a: int, b: int) -> complex:
    """Raw sum over x != 0 of exp(2*pi*i*Tr(a*x + b/x)/p)."""
    p = field.characteristic
    total = 0j
    for x in range(1, field.order):
        arg = field.add(field.mul(a, x), field.mul(b, field.inv(x)))
        total += cmath.exp(2j * math.pi * field.trace(int(arg)) / p)
    return total


def kloosterman(a: FieldElement | int, b: FieldElement | int, field: FieldSpec | None = None) -> float:
    """Kloosterman sum K(a, b); real because the summands come in conjugate pairs."""
    if isinstance(a, FieldElement):
        field = a.field
        b_rep = a._other(b) if isinstance(b, FieldElement) else int(b)
        a_rep = a.rep
    else:
        if field is None:
            raise DomainError("field required for integer arguments")
        a_rep, b_rep = int(a), int(b.rep if isinstance(b, FieldElement) else b)
    z = kloosterman_complex(field, a_rep, b_rep)
    assert abs(z.imag) < 1e-9, f"Kloosterman sum has imaginary residue {z.imag}"
    return z.real
