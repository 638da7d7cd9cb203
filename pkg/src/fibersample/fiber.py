"""Brute-force fiber enumeration and the exact A-hypergeometric polynomial.

Everything here is exact: the polynomial is accumulated as an integer over a
common denominator and returned as a :class:`~fractions.Fraction`. This is the
kernel source for exact sampling and the reference every approximate
estimator is tested against.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .errors import (
    DimensionMismatch,
    EmptyFiber,
    FiberTooLarge,
    NonIntegralDegree,
    NotInFiber,
)
from .model import ConfigurationMatrix, ModelSpec, as_counts, degree, sufficient_statistics

DEFAULT_FIBER_CAP = 10**7


@dataclass(frozen=True)
class PolynomialValue:
    value: Fraction
    term_count: int

    def __float__(self) -> float:
        return float(self.value)


class _Search:
    """Lexicographic DFS over cells with residual pruning."""

    def __init__(self, A: ConfigurationMatrix):
        self.A = A
        m, d = A.m, A.d
        self.touch = [[(i, A.entries[i][j]) for i in range(d) if A.entries[i][j] != 0]
                      for j in range(m)]
        nonneg_row = [all(v >= 0 for v in A.entries[i]) for i in range(d)]
        self.bounding = [[(i, a) for i, a in self.touch[j] if nonneg_row[i] and a > 0]
                         for j in range(m)]
        last = {}
        for j in range(m):
            for i, _ in self.touch[j]:
                last[i] = j
        # rows whose final contributing cell is j: that cell's value is forced
        self.closing = [[(i, A.entries[i][j]) for i, jj in last.items() if jj == j]
                        for j in range(m)]
        self.nonneg_rows = [i for i in range(d) if nonneg_row[i]]

    def run(self, beta: Sequence[int], limit: Optional[int], cap: int, visit=None):
        """Collect fiber elements, or pass each to ``visit`` and return the count."""
        A = self.A
        empty = [] if visit is None else 0
        try:
            n = degree(A, beta)
        except NonIntegralDegree:
            return empty
        res = [int(b) for b in beta]
        if any(res[i] < 0 for i in self.nonneg_rows):
            return empty
        m = A.m
        out: list = []
        found = [0]
        collect = visit is None
        if collect:
            visit = out.append
        cur = [0] * m
        touch, bounding, closing = self.touch, self.bounding, self.closing

        def rec(j: int, left: int) -> bool:
            # returns True to stop early
            if j == m:
                if left == 0 and not any(res):
                    found[0] += 1
                    if found[0] > cap:
                        raise FiberTooLarge(f"fiber exceeds {cap} elements")
                    visit(tuple(cur))
                    if limit is not None and found[0] >= limit:
                        return True
                return False
            hi = left
            for i, a in bounding[j]:
                q = res[i] // a
                if q < hi:
                    hi = q
            lo = 0
            forced = None
            for i, a in closing[j]:
                if res[i] % a:
                    return False
                f = res[i] // a
                if f < 0 or (forced is not None and f != forced):
                    return False
                forced = f
            if forced is not None:
                if forced > hi:
                    return False
                lo = hi = forced
            if hi < lo:
                return False
            for v in range(lo, hi + 1):
                cur[j] = v
                for i, a in touch[j]:
                    res[i] -= a * v
                stop = rec(j + 1, left - v)
                for i, a in touch[j]:
                    res[i] += a * v
                if stop:
                    cur[j] = 0
                    return True
            cur[j] = 0
            return False

        rec(0, n)
        return out if collect else found[0]


class FiberOracle:
    """Exact fiber computations for one model, memoized by ``beta``.

    The memo is guarded by a lock so concurrent readers only ever see
    completed entries.
    """

    def __init__(self, model: ModelSpec, cap: int = DEFAULT_FIBER_CAP):
        self.model = model
        self.cap = cap
        self._search = _Search(model.matrix)
        self._z: dict = {}
        self._member: dict = {}
        self._lock = threading.Lock()
        num_den = [(x.numerator, x.denominator) for x in model.odds]
        self._p = [p for p, _ in num_den]
        self._q = [q for _, q in num_den]

    def _check(self, beta) -> tuple:
        if len(beta) != self.model.matrix.d:
            raise DimensionMismatch(
                f"sufficient statistics have length {len(beta)}, expected {self.model.matrix.d}")
        return tuple(int(b) for b in beta)

    def fiber(self, beta: Sequence[int]) -> list:
        return self._search.run(self._check(beta), None, self.cap)

    def in_semigroup(self, beta: Sequence[int]) -> bool:
        beta = self._check(beta)
        hit = self._member.get(beta)
        if hit is None:
            if beta in self._z:
                hit = self._z[beta].term_count > 0
            else:
                hit = bool(self._search.run(beta, 1, self.cap))
            with self._lock:
                self._member[beta] = hit
        return hit

    def z(self, beta: Sequence[int]) -> PolynomialValue:
        beta = self._check(beta)
        hit = self._z.get(beta)
        if hit is not None:
            return hit
        try:
            n = degree(self.model.matrix, beta)
        except NonIntegralDegree:
            n = -1
        if n < 0:
            val = PolynomialValue(Fraction(0), 0)
        else:
            fact = [math.factorial(k) for k in range(n + 1)]
            # common denominator n! * prod q_j^n keeps every term integral
            pq = [[p**k * q ** (n - k) for k in range(n + 1)] for p, q in zip(self._p, self._q)]
            total = [0]

            def add(v):
                vf = 1
                w = 1
                for j, k in enumerate(v):
                    if k:
                        vf *= fact[k]
                    w *= pq[j][k]
                total[0] += (fact[n] // vf) * w

            count = self._search.run(beta, None, self.cap, add)
            denom = fact[n]
            for q in self._q:
                denom *= q**n
            val = PolynomialValue(Fraction(total[0], denom), count)
        with self._lock:
            self._z[beta] = val
            self._member[beta] = val.term_count > 0
        return val

    def umvue(self, beta: Sequence[int]) -> tuple:
        """Conditional expectation of every cell count given ``beta``."""
        beta = self._check(beta)
        zb = self.z(beta).value
        if zb == 0:
            raise EmptyFiber(f"{beta} is not in the semigroup NA")
        out = []
        for j, col in enumerate(self.model.matrix.columns):
            sub = tuple(b - a for b, a in zip(beta, col))
            zs = self.z(sub).value
            out.append(self.model.odds[j] * zs / zb)
        return tuple(out)

    def conditional_probability(self, beta: Sequence[int], u: Sequence[int]) -> Fraction:
        beta = self._check(beta)
        u = as_counts(u)
        if sufficient_statistics(self.model.matrix, u) != beta:
            raise NotInFiber(f"table {u} does not have sufficient statistics {beta}")
        zb = self.z(beta).value
        if zb == 0:
            raise EmptyFiber(f"{beta} is not in the semigroup NA")
        return monomial_weight(self.model.odds, u) / zb


def monomial_weight(odds: Sequence[Fraction], u: Sequence[int]) -> Fraction:
    """``x**u / u!`` exactly."""
    w = Fraction(1)
    for x, k in zip(odds, u):
        if k:
            w *= x**k / math.factorial(k)
    return w


def enumerate_fiber(A: ConfigurationMatrix, beta: Sequence[int],
                    cap: int = DEFAULT_FIBER_CAP) -> list:
    """All ``v >= 0`` with ``A v = beta``, in lexicographic order."""
    if len(beta) != A.d:
        raise DimensionMismatch(f"sufficient statistics have length {len(beta)}, expected {A.d}")
    return _Search(A).run(tuple(int(b) for b in beta), None, cap)


def in_semigroup(A: ConfigurationMatrix, beta: Sequence[int], cap: int = DEFAULT_FIBER_CAP) -> bool:
    if len(beta) != A.d:
        raise DimensionMismatch(f"sufficient statistics have length {len(beta)}, expected {A.d}")
    return bool(_Search(A).run(tuple(int(b) for b in beta), 1, cap))


def z_value(model: ModelSpec, beta: Sequence[int], cap: int = DEFAULT_FIBER_CAP) -> PolynomialValue:
    return FiberOracle(model, cap).z(beta)


def conditional_probability(model: ModelSpec, beta: Sequence[int], u: Sequence[int]) -> Fraction:
    return FiberOracle(model).conditional_probability(beta, u)


def umvue(model: ModelSpec, beta: Sequence[int], cap: int = DEFAULT_FIBER_CAP) -> tuple:
    return FiberOracle(model, cap).umvue(beta)
