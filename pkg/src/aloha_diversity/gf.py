"""Arithmetic over GF(2^L) and dense elimination used by the coded downlink.

Multiplication goes through eagerly-built log/antilog tables; the tables are
immutable after construction, so a field instance can be shared freely.
Supported symbol widths are L = 8 and L = 16.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


DEFAULT_POLY = {8: 0x11D, 16: 0x1100B}

_DTYPE = {8: np.uint8, 16: np.uint16}


class NotPrimitiveError(ValueError):
    """The reduction polynomial does not generate the full multiplicative group."""


class GaloisField:
    """GF(2^L) with log/antilog tables keyed to a primitive polynomial.

    The generator element 2 must have multiplicative order 2^L - 1; this is
    checked while the tables are built, so an invalid polynomial fails fast.
    """

    def __init__(self, l_bits: int = 8, primitive_poly: int | None = None):
        if l_bits not in (8, 16):
            raise ValueError(f"unsupported symbol width L={l_bits}")
        self.l_bits = l_bits
        self.order = 1 << l_bits
        self.primitive_poly = DEFAULT_POLY[l_bits] if primitive_poly is None else primitive_poly
        self.dtype = _DTYPE[l_bits]
        self._build_tables()

    def _build_tables(self) -> None:
        q = self.order
        exp = np.zeros(2 * (q - 1), dtype=np.int64)
        log = np.zeros(q, dtype=np.int64)
        x = 1
        for i in range(q - 1):
            if x == 1 and i > 0:
                raise NotPrimitiveError(
                    f"poly {self.primitive_poly:#x}: generator order divides {i} < {q - 1}"
                )
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & q:
                x ^= self.primitive_poly
        if x != 1:
            raise NotPrimitiveError(f"poly {self.primitive_poly:#x} is not of degree {self.l_bits}")
        # doubled antilog span: a log-sum of two elements never needs a modulo
        exp[q - 1 : 2 * (q - 1)] = exp[: q - 1]
        exp.setflags(write=False)
        log.setflags(write=False)
        self._exp = exp
        self._log = log

    # -- scalar ops ---------------------------------------------------------

    @staticmethod
    def add(a: int, b: int) -> int:
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return int(self._exp[self._log[a] + self._log[b]])

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return int(self._exp[(self.order - 1) - self._log[a]])

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    # -- vectorized ops -----------------------------------------------------

    def mul_arrays(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise product; shapes must broadcast."""
        a = np.asarray(a)
        b = np.asarray(b)
        out = self._exp[self._log[a] + self._log[b]]
        out = np.where((a == 0) | (b == 0), 0, out)
        return out.astype(self.dtype)

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix product over the field; a is (n, k), b is (k, m)."""
        a = np.asarray(a)
        b = np.asarray(b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"shape mismatch {a.shape} x {b.shape}")
        out = np.zeros((a.shape[0], b.shape[1]), dtype=self.dtype)
        log_b = self._log[b]
        zero_b = b == 0
        for i in range(a.shape[0]):
            row = a[i]
            cols = np.nonzero(row)[0]
            if cols.size == 0:
                continue
            terms = self._exp[self._log[row[cols], None] + log_b[cols]]
            terms[zero_b[cols]] = 0
            out[i] = np.bitwise_xor.reduce(terms.astype(self.dtype), axis=0)
        return out

    def __repr__(self) -> str:
        return f"GaloisField(l_bits={self.l_bits}, primitive_poly={self.primitive_poly:#x})"


GF256 = GaloisField(8)


def field_for_name(name: str) -> GaloisField:
    if name == "gf256":
        return GF256
    if name == "gf65536":
        return GaloisField(16)
    raise ValueError(f"unknown field {name!r}")


# -- elimination -----------------------------------------------------------


@njit(cache=True)
def _forward_eliminate(aug, n_cols, exp, log, qm1):  # pragma: no cover - jitted
    """In-place row echelon form of [a | rhs]; returns pivot columns (-1 padded)."""
    n_rows, width = aug.shape
    pivots = np.full(n_cols, -1, dtype=np.int64)
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        p = -1
        for i in range(r, n_rows):
            if aug[i, c] != 0:
                p = i
                break
        if p < 0:
            continue
        if p != r:
            for j in range(c, width):
                tmp = aug[r, j]
                aug[r, j] = aug[p, j]
                aug[p, j] = tmp
        pv = aug[r, c]
        if pv != 1:
            shift = qm1 - log[pv]
            for j in range(c, width):
                v = aug[r, j]
                if v != 0:
                    aug[r, j] = exp[log[v] + shift]
        for i in range(r + 1, n_rows):
            f = aug[i, c]
            if f != 0:
                lf = log[f]
                for j in range(c, width):
                    v = aug[r, j]
                    if v != 0:
                        aug[i, j] ^= exp[lf + log[v]]
        pivots[r] = c
        r += 1
    return pivots[:r]


def _forward_eliminate_numpy(aug, n_cols, exp, log, qm1):
    """Vectorized fallback for environments without numba."""
    n_rows, width = aug.shape
    pivots = []
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        nz = np.nonzero(aug[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            aug[[r, p]] = aug[[p, r]]
        pv = int(aug[r, c])
        row = aug[r, c:]
        if pv != 1:
            shift = qm1 - log[pv]
            scaled = exp[log[row] + shift]
            scaled[row == 0] = 0
            aug[r, c:] = scaled
            row = aug[r, c:]
        below = aug[r + 1 :, c]
        targets = np.nonzero(below)[0]
        if targets.size:
            terms = exp[log[below[targets], None] + log[row]]
            terms[:, row == 0] = 0
            aug[r + 1 + targets, c:] ^= terms
        pivots.append(c)
        r += 1
    return np.array(pivots, dtype=np.int64)


@dataclass
class EliminationResult:
    """Outcome of reducing [a | rhs] to reduced row-echelon form."""

    rank: int
    pivot_cols: list[int]
    free_cols: list[int]
    solution: np.ndarray | None  # populated only when rank == n_cols
    solved_cols: list[int] = field(default_factory=list)
    solved_values: np.ndarray | None = None  # rhs rows for solved_cols, same order
    inconsistent: bool = False


def gauss_jordan(fld: GaloisField, a: np.ndarray, rhs: np.ndarray) -> tuple[int, EliminationResult]:
    """Row-reduce the augmented system [a | rhs] over the field.

    Pivoting takes the first nonzero entry in each column (there is no
    magnitude to compare in a finite field). Returns the rank together with
    the unique solution when the coefficient matrix has full column rank, or
    the pivot/free column split otherwise. Individual columns whose reduced
    row touches no free column are still reported as solved.
    """
    a = np.asarray(a)
    rhs = np.asarray(rhs)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    if a.ndim != 2 or a.shape[0] != rhs.shape[0]:
        raise ValueError(f"shape mismatch {a.shape} vs rhs {rhs.shape}")
    n_rows, n_cols = a.shape
    aug = np.concatenate([a, rhs], axis=1).astype(np.int64)
    exp, log = fld._exp, fld._log
    qm1 = fld.order - 1

    eliminate = _forward_eliminate if _HAVE_NUMBA else _forward_eliminate_numpy
    pivot_cols = [int(c) for c in eliminate(aug, n_cols, exp, log, qm1)]
    rank_ = len(pivot_cols)
    free_cols = sorted(set(range(n_cols)) - set(pivot_cols))
    inconsistent = bool(np.any(aug[rank_:, n_cols:]))

    solution = None
    solved_cols: list[int] = []
    solved_values = None
    if rank_ == n_cols and not inconsistent:
        solution = _back_substitute(fld, aug, n_cols)
        solved_cols = list(pivot_cols)
        solved_values = solution
    elif rank_ > 0:
        _reduce_above(fld, aug, pivot_cols)
        free = np.array(free_cols, dtype=np.intp)
        rows_of_solved = [
            i for i, c in enumerate(pivot_cols) if free.size == 0 or not np.any(aug[i, free])
        ]
        solved_cols = [pivot_cols[i] for i in rows_of_solved]
        if rows_of_solved:
            solved_values = aug[np.array(rows_of_solved), n_cols:].copy()
    return rank_, EliminationResult(
        rank=rank_,
        pivot_cols=pivot_cols,
        free_cols=free_cols,
        solution=solution,
        solved_cols=solved_cols,
        solved_values=solved_values,
        inconsistent=inconsistent,
    )


def _back_substitute(fld: GaloisField, aug: np.ndarray, n_cols: int) -> np.ndarray:
    """Solve the full-column-rank triangular system left by forward elimination."""
    exp, log = fld._exp, fld._log
    m = aug.shape[1] - n_cols
    x = np.zeros((n_cols, m), dtype=np.int64)
    for r in range(n_cols - 1, -1, -1):
        acc = aug[r, n_cols:].copy()
        coef = aug[r, r + 1 : n_cols]
        nz = np.nonzero(coef)[0]
        if nz.size:
            terms = exp[log[coef[nz], None] + log[x[r + 1 + nz]]]
            terms[x[r + 1 + nz] == 0] = 0
            acc ^= np.bitwise_xor.reduce(terms, axis=0)
        x[r] = acc
    return x.astype(fld.dtype)


def _reduce_above(fld: GaloisField, aug: np.ndarray, pivot_cols: list[int]) -> None:
    """Finish the reduction to RREF by clearing entries above each pivot."""
    exp, log = fld._exp, fld._log
    for r in range(len(pivot_cols) - 1, 0, -1):
        c = pivot_cols[r]
        above = aug[:r, c]
        targets = np.nonzero(above)[0]
        if targets.size:
            row = aug[r, c:]
            terms = exp[log[above[targets], None] + log[row]]
            terms[:, row == 0] = 0
            aug[targets, c:] ^= terms


def rank(fld: GaloisField, a: np.ndarray) -> int:
    a = np.asarray(a)
    return gauss_jordan(fld, a, np.zeros((a.shape[0], 1), dtype=fld.dtype))[0]
