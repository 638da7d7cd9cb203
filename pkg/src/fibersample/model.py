"""Configuration matrices, odds vectors and sufficient statistics.

Tables and sufficient statistics are plain tuples of ints throughout the
package; cells follow the column order of the configuration matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyMatrix,
    NonIntegralDegree,
    OnesNotInRowspan,
    ValidationError,
    ZeroRowOrColumn,
)

CountVector = tuple  # tuple[int, ...], length m
SufficientStatistics = tuple  # tuple[int, ...], length d
OddsLike = Union[int, float, str, Fraction]


def _solve_rational(rows: list[list[Fraction]], rhs: list[Fraction]) -> Optional[list[Fraction]]:
    """Particular solution of ``rows @ y = rhs`` by Gauss-Jordan elimination.

    Free variables are set to zero. Returns ``None`` if the system is
    inconsistent.
    """
    n_eq = len(rows)
    n_var = len(rows[0]) if rows else 0
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivots = []
    r = 0
    for col in range(n_var):
        piv = next((i for i in range(r, n_eq) if aug[i][col] != 0), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        inv = 1 / aug[r][col]
        aug[r] = [v * inv for v in aug[r]]
        for i in range(n_eq):
            if i != r and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[r])]
        pivots.append(col)
        r += 1
        if r == n_eq:
            break
    for i in range(r, n_eq):
        if aug[i][n_var] != 0:
            return None
    y = [Fraction(0)] * n_var
    for i, col in enumerate(pivots):
        y[col] = aug[i][n_var]
    return y


@dataclass(frozen=True)
class ConfigurationMatrix:
    """Integer d x m matrix with its degree functional.

    ``degree_functional`` is the minimum-norm rational vector c with
    ``c @ A == (1, ..., 1)``. Use :func:`validate_matrix` to build one.
    """

    entries: tuple
    degree_functional: tuple

    @property
    def d(self) -> int:
        return len(self.entries)

    @property
    def m(self) -> int:
        return len(self.entries[0])

    @cached_property
    def array(self) -> np.ndarray:
        arr = np.array(self.entries, dtype=np.int64)
        arr.setflags(write=False)
        return arr

    def column(self, j: int) -> tuple:
        return tuple(row[j] for row in self.entries)

    @cached_property
    def columns(self) -> tuple:
        return tuple(self.column(j) for j in range(self.m))

    @cached_property
    def column_sums(self) -> tuple:
        return tuple(sum(col) for col in self.columns)

    def __repr__(self) -> str:
        return f"ConfigurationMatrix(d={self.d}, m={self.m})"


def validate_matrix(entries) -> ConfigurationMatrix:
    """Validate an integer matrix and attach its exact degree functional."""
    rows = [list(r) for r in entries] if entries is not None else []
    if not rows or not rows[0]:
        raise EmptyMatrix("configuration matrix must have at least one row and column")
    m = len(rows[0])
    if any(len(r) != m for r in rows):
        raise DimensionMismatch("configuration matrix rows have unequal lengths")
    ints = []
    for r in rows:
        out = []
        for v in r:
            if isinstance(v, bool) or int(v) != v:
                raise ValidationError(f"matrix entry {v!r} is not an integer")
            out.append(int(v))
        ints.append(tuple(out))
    for i, r in enumerate(ints):
        if not any(r):
            raise ZeroRowOrColumn(f"row {i} is the zero vector")
    for j in range(m):
        if not any(r[j] for r in ints):
            raise ZeroRowOrColumn(f"column {j} is the zero vector")

    # min-norm c lies in range(A): c = A w with (A^T A) w = 1
    d = len(ints)
    ata = [[Fraction(sum(ints[i][j] * ints[i][k] for i in range(d))) for k in range(m)]
           for j in range(m)]
    w = _solve_rational(ata, [Fraction(1)] * m)
    if w is None:
        raise OnesNotInRowspan("(1, ..., 1) is not in the row span of A")
    c = tuple(sum((ints[i][j] * w[j] for j in range(m)), Fraction(0)) for i in range(d))
    for j in range(m):
        if sum(c[i] * ints[i][j] for i in range(d)) != 1:
            raise OnesNotInRowspan("(1, ..., 1) is not in the row span of A")
    return ConfigurationMatrix(entries=tuple(ints), degree_functional=c)


def as_fraction(value: OddsLike) -> Fraction:
    """Exact rational from an int, Fraction, ``"p/q"`` string or float.

    Floats are read through their shortest decimal repr, so ``0.1`` becomes
    1/10 rather than the binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError("odds must be numeric")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValidationError(f"odds entry {value!r} is not finite")
        return Fraction(repr(value))
    if isinstance(value, (np.integer,)):
        return Fraction(int(value))
    if isinstance(value, (np.floating,)):
        return as_fraction(float(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class ModelSpec:
    """Configuration matrix plus a strictly positive odds vector."""

    matrix: ConfigurationMatrix
    odds: tuple = field(default=())

    def __post_init__(self):
        odds = self.odds if self.odds else (1,) * self.matrix.m
        odds = tuple(as_fraction(x) for x in odds)
        if len(odds) != self.matrix.m:
            raise DimensionMismatch(f"odds has length {len(odds)}, expected {self.matrix.m}")
        if any(x <= 0 for x in odds):
            raise ValidationError("odds entries must be strictly positive")
        object.__setattr__(self, "odds", odds)

    @cached_property
    def odds_array(self) -> np.ndarray:
        arr = np.array([float(x) for x in self.odds])
        arr.setflags(write=False)
        return arr

    @property
    def is_log_linear(self) -> bool:
        return all(x == 1 for x in self.odds)


def make_model(entries, odds=None) -> ModelSpec:
    return ModelSpec(validate_matrix(entries), tuple(odds) if odds is not None else ())


def _check_length(vec, n, what):
    if len(vec) != n:
        raise DimensionMismatch(f"{what} has length {len(vec)}, expected {n}")


def as_counts(u: Sequence[int]) -> CountVector:
    out = []
    for v in u:
        iv = int(v)
        if iv != v or iv < 0:
            raise ValidationError(f"count {v!r} is not a nonnegative integer")
        out.append(iv)
    return tuple(out)


def sufficient_statistics(A: ConfigurationMatrix, u: Sequence[int]) -> SufficientStatistics:
    """``A @ u`` in exact integer arithmetic."""
    _check_length(u, A.m, "count vector")
    u = as_counts(u)
    return tuple(sum(a * v for a, v in zip(row, u)) for row in A.entries)


def degree(A: ConfigurationMatrix, beta: Sequence[int]) -> int:
    """Total count implied by sufficient statistics ``beta``.

    Raises :class:`NonIntegralDegree` if the value is not a nonnegative
    integer, which certifies ``beta`` cannot come from any table.
    """
    _check_length(beta, A.d, "sufficient statistics")
    n = sum((c * int(b) for c, b in zip(A.degree_functional, beta)), Fraction(0))
    if n.denominator != 1 or n < 0:
        raise NonIntegralDegree(f"degree {n} of {tuple(beta)} is not a nonnegative integer")
    return int(n)


# preset matrices --------------------------------------------------------------

def two_way_entries(rows: int, cols: int) -> np.ndarray:
    """Row-sum block stacked on column-sum block, cells in row-major order."""
    return np.vstack([np.kron(np.eye(rows, dtype=int), np.ones((1, cols), dtype=int)),
                      np.kron(np.ones((1, rows), dtype=int), np.eye(cols, dtype=int))])


def two_way_matrix(rows: int, cols: int) -> ConfigurationMatrix:
    return validate_matrix(two_way_entries(rows, cols).tolist())


def quasi_independence_entries() -> np.ndarray:
    """3 x 3 quasi-independence with the (3, 3) cell a structural zero.

    Cells: 11 12 13 21 22 23 31 32; rows: three row sums then three column sums.
    """
    full = two_way_entries(3, 3)
    return np.delete(full, 8, axis=1)


def no_three_way_entries() -> np.ndarray:
    """2 x 3 x 3 no-three-way interaction model.

    Cells ``u[i1, i2, i3]`` in lexicographic order. Rows: the six (i1, i2)
    margins, the six (i1, i3) margins, then the nine (i2, i3) margins.
    """
    e = lambda k: np.eye(k, dtype=int)
    one = lambda k: np.ones((1, k), dtype=int)
    return np.vstack([
        np.kron(e(6), one(3)),
        np.kron(np.kron(e(2), one(3)), e(3)),
        np.kron(one(2), e(9)),
    ])


def cell_labels(shape: Sequence[int]) -> list[str]:
    """1-based labels like ``u_1_2`` for cells of a table in row-major order."""
    return ["u_" + "_".join(str(i + 1) for i in idx)
            for idx in itertools.product(*(range(k) for k in shape))]
