"""Exact linear algebra over prime fields GF(p).

Every rank oracle, decodability check and decoding step in this package sits
on top of this module.  Matrices are small and dense at the scale we target,
so the implementation favors clarity and reproducibility over asymptotics:
plain Gaussian elimination with a deterministic pivot rule (first nonzero
entry, lowest row index).  Matrices are immutable after construction and all
operations are pure, so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# The int64 matmul/elimination paths need (p - 1)^2 * cols < 2^63.  Capping
# the modulus at 2^20 leaves room for around 2^22 columns, far beyond the
# desk-scale instances this package is built for.
MAX_MODULUS = 1 << 20


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class DivisionByZero(ZeroDivisionError):
    """Multiplicative inverse of zero was requested."""


class SingularSystem(ValueError):
    """Linear system does not have a unique solution."""


def is_prime(n: int) -> bool:
    """Trial-division primality test; fine for moduli below MAX_MODULUS."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


@dataclass(frozen=True)
class FieldSpec:
    """A prime field GF(p).  Elements are canonical ints in ``[0, p)``."""

    p: int

    def __post_init__(self):
        if not is_prime(self.p):
            raise ValueError(f"field order {self.p} is not prime")
        if self.p > MAX_MODULUS:
            raise ValueError(f"field order {self.p} exceeds the supported maximum {MAX_MODULUS}")

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def neg(self, a: int) -> int:
        return (-a) % self.p

    def inv(self, a: int) -> int:
        """Multiplicative inverse by Fermat's little theorem."""
        if a % self.p == 0:
            raise DivisionByZero(f"0 has no inverse in GF({self.p})")
        return pow(a, self.p - 2, self.p)


class FMatrix:
    """An immutable matrix over a prime field.

    Entries are held as a read-only int64 array of canonical field elements.
    ``cols`` disambiguates the shape of empty matrices (zero rows).
    """

    __slots__ = ("field", "_a")

    def __init__(self, field: FieldSpec, entries, cols: int | None = None):
        a = np.array(entries, dtype=np.int64)
        if a.ndim == 1 and a.size == 0:
            a = a.reshape(0, 0 if cols is None else cols)
        if a.ndim != 2:
            raise ShapeError("matrix entries must form a 2-D array")
        if cols is not None and a.shape[1] != cols:
            raise ShapeError(f"expected {cols} columns, got {a.shape[1]}")
        if a.size and (a.min() < 0 or a.max() >= field.p):
            raise ValueError(f"entries must be canonical elements of GF({field.p})")
        a.setflags(write=False)
        self.field = field
        self._a = a

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._a

    def row(self, i: int) -> np.ndarray:
        return self._a[i]

    def mat_vec(self, vec) -> np.ndarray:
        """Return ``M @ vec`` over the field."""
        v = np.asarray(vec, dtype=np.int64)
        if v.shape != (self.cols,):
            raise ShapeError(f"vector of length {self.cols} required, got shape {v.shape}")
        return (self._a @ v) % self.field.p

    def combine_rows(self, coeffs) -> np.ndarray:
        """Return ``coeffs @ M`` over the field, a single row of width cols."""
        c = np.asarray(coeffs, dtype=np.int64)
        if c.shape != (self.rows,):
            raise ShapeError(f"coefficient vector of length {self.rows} required")
        if self.rows == 0:
            return np.zeros(self.cols, dtype=np.int64)
        return (c @ self._a) % self.field.p

    @classmethod
    def identity(cls, field: FieldSpec, n: int) -> "FMatrix":
        return cls(field, np.eye(n, dtype=np.int64))

    @classmethod
    def zeros(cls, field: FieldSpec, rows: int, cols: int) -> "FMatrix":
        return cls(field, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def vstack(cls, field: FieldSpec, mats, cols: int | None = None) -> "FMatrix":
        arrays = [m.array for m in mats]
        if not arrays:
            if cols is None:
                raise ShapeError("cols required to stack an empty list of matrices")
            return cls.zeros(field, 0, cols)
        widths = {a.shape[1] for a in arrays}
        if len(widths) != 1:
            raise ShapeError(f"cannot stack matrices of widths {sorted(widths)}")
        return cls(field, np.concatenate(arrays, axis=0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FMatrix):
            return NotImplemented
        return self.field == other.field and self._a.shape == other._a.shape and bool(
            np.array_equal(self._a, other._a)
        )

    def __repr__(self) -> str:
        return f"FMatrix(GF({self.field.p}), {self.rows}x{self.cols})"


def _forward_eliminate(a: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    """Row echelon form of ``a`` modulo p.  Returns (matrix, pivot columns).

    Pivot selection is deterministic: scan columns left to right, take the
    first nonzero entry at or below the current row.
    """
    a = a.copy()
    rows, cols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(a[r:, c])[0]
        if nz.size == 0:
            continue
        pr = r + int(nz[0])
        if pr != r:
            a[[r, pr]] = a[[pr, r]]
        inv = pow(int(a[r, c]), p - 2, p)
        a[r] = (a[r] * inv) % p
        below = a[r + 1 :, c]
        if below.size:
            a[r + 1 :] = (a[r + 1 :] - np.outer(below, a[r])) % p
        pivots.append(c)
        r += 1
    return a, pivots


def rank(m: FMatrix) -> int:
    """Rank of ``m`` over its field.  Empty matrices have rank 0."""
    if m.rows == 0 or m.cols == 0:
        return 0
    _, pivots = _forward_eliminate(m.array, m.field.p)
    return len(pivots)


def solve_full_rank(m: FMatrix, rhs) -> np.ndarray:
    """Solve ``M @ w = rhs`` for a matrix of full column rank.

    The system may be overdetermined; extra rows must be consistent.  Raises
    SingularSystem when the rank is deficient or the right-hand side is
    inconsistent, ShapeError on dimension mismatch.
    """
    b = np.asarray(rhs, dtype=np.int64)
    if b.shape != (m.rows,):
        raise ShapeError(f"right-hand side of length {m.rows} required, got shape {b.shape}")
    p = m.field.p
    aug = np.concatenate([m.array, (b % p).reshape(-1, 1)], axis=1)
    red, pivots = _forward_eliminate(aug, p)
    if pivots and pivots[-1] == m.cols:  # pivot in the rhs column
        raise SingularSystem("inconsistent right-hand side")
    if len(pivots) < m.cols:
        raise SingularSystem(f"matrix rank {len(pivots)} is below column count {m.cols}")
    # Back-substitute; pivot rows are already normalized to leading 1.
    w = np.zeros(m.cols, dtype=np.int64)
    for r in range(len(pivots) - 1, -1, -1):
        c = pivots[r]
        w[c] = (red[r, -1] - red[r, c + 1 : m.cols] @ w[c + 1 :]) % p
    return w


class RowBasis:
    """Incremental basis of a row space over GF(p).

    Supports appending one row at a time while tracking the rank, which is
    how the randomized allocator maintains each user's observation span as
    coded rows accumulate.
    """

    def __init__(self, field: FieldSpec, cols: int, rows=()):
        self.field = field
        self.cols = cols
        self._pivot_rows: dict[int, np.ndarray] = {}
        for row in rows:
            self.add(row)

    @property
    def rank(self) -> int:
        return len(self._pivot_rows)

    def add(self, row) -> bool:
        """Reduce ``row`` against the basis; returns True if the rank grew."""
        p = self.field.p
        v = np.asarray(row, dtype=np.int64) % p
        if v.shape != (self.cols,):
            raise ShapeError(f"row of length {self.cols} required")
        v = v.copy()
        for c in sorted(self._pivot_rows):
            if v[c]:
                v = (v - v[c] * self._pivot_rows[c]) % p
        nz = np.nonzero(v)[0]
        if nz.size == 0:
            return False
        c = int(nz[0])
        v = (v * pow(int(v[c]), p - 2, p)) % p
        v.setflags(write=False)
        self._pivot_rows[c] = v
        return True

    def contains(self, row) -> bool:
        """True if ``row`` already lies in the spanned row space."""
        p = self.field.p
        v = np.asarray(row, dtype=np.int64).copy() % p
        for c in sorted(self._pivot_rows):
            if v[c]:
                v = (v - v[c] * self._pivot_rows[c]) % p
        return not np.any(v)

    def copy(self) -> "RowBasis":
        dup = RowBasis(self.field, self.cols)
        dup._pivot_rows = dict(self._pivot_rows)
        return dup
