"""Chi-square summaries, total variation and effective sample size."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConstantSequence, DimensionMismatch, EmptyInput, NonPositiveExpected, ValidationError

DECIMALS = 9
CENSOR = 0.01


def chi_square(u: Sequence[float], expected: Sequence[float]) -> float:
    """Pearson statistic ``sum((u - e)**2 / e)``."""
    u = np.asarray(u, dtype=float)
    e = np.asarray(expected, dtype=float)
    if u.shape != e.shape:
        raise DimensionMismatch(f"table has shape {u.shape}, expected values {e.shape}")
    if (e <= 0).any():
        raise NonPositiveExpected("expected values must be positive")
    return float(((u - e) ** 2 / e).sum())


def chi_squares(tables, expected: Sequence[float]) -> np.ndarray:
    """Row-wise chi-square of a ``(k, m)`` array of tables."""
    t = np.asarray(tables, dtype=float)
    e = np.asarray(expected, dtype=float)
    if t.ndim != 2 or t.shape[1] != e.shape[0]:
        raise DimensionMismatch(f"tables have shape {t.shape}, expected values {e.shape}")
    if (e <= 0).any():
        raise NonPositiveExpected("expected values must be positive")
    return ((t - e) ** 2 / e).sum(axis=1)


@dataclass(frozen=True)
class EmpiricalDistribution:
    support: tuple
    masses: tuple

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.masses))

    def to_json(self) -> dict:
        return {"support": list(self.support), "masses": list(self.masses)}

    @classmethod
    def from_mapping(cls, mapping: Mapping[float, float]) -> "EmpiricalDistribution":
        items = sorted((_canon(k), float(v)) for k, v in mapping.items())
        merged: dict = {}
        for k, v in items:
            merged[k] = merged.get(k, 0.0) + v
        total = sum(merged.values())
        if total <= 0:
            raise EmptyInput("distribution has no mass")
        return cls(tuple(merged), tuple(v / total for v in merged.values()))

    def __getitem__(self, z: float) -> float:
        return self.as_dict().get(_canon(z), 0.0)


def _canon(v: float) -> float:
    return round(float(v), DECIMALS) + 0.0


def empirical_distribution(values: Sequence[float]) -> EmpiricalDistribution:
    """Relative frequencies of ``values`` after rounding to 9 decimals."""
    vals = np.round(np.asarray(values, dtype=float).ravel(), DECIMALS) + 0.0
    if vals.size == 0:
        raise EmptyInput("cannot build a distribution from no values")
    support, counts = np.unique(vals, return_counts=True)
    return EmpiricalDistribution(tuple(support.tolist()), tuple((counts / vals.size).tolist()))


def _aligned(p: EmpiricalDistribution, q: EmpiricalDistribution):
    pd, qd = p.as_dict(), q.as_dict()
    keys = sorted(set(pd) | set(qd))
    return (np.array([pd.get(k, 0.0) for k in keys]),
            np.array([qd.get(k, 0.0) for k in keys]))


def total_variation(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """``0.5 * sum |p(z) - q(z)|`` over the union of supports."""
    a, b = _aligned(p, q)
    return float(0.5 * np.abs(a - b).sum())


def tv_squared(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """``0.5 * sum |p(z) - q(z)|**2``; the squared variant, kept for comparison."""
    a, b = _aligned(p, q)
    return float(0.5 * ((a - b) ** 2).sum())


@dataclass(frozen=True)
class EssReport:
    n: int
    autocorrelations: tuple
    ess: float

    def to_json(self) -> dict:
        return {"n": self.n, "ess": self.ess, "autocorrelations": list(self.autocorrelations)}


def autocorrelation(values: Sequence[float]) -> np.ndarray:
    """Biased sample autocorrelation ``c_t / c_0`` for every lag ``0..N-1``."""
    x = np.asarray(values, dtype=float)
    x = x - x.mean()
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        raise ConstantSequence("sequence is constant")
    return acov / acov[0]


def effective_sample_size(values: Sequence[float], censor: float = CENSOR) -> EssReport:
    """``N / (1 + 2 * sum rho_t)``, summing lags until the first ``rho_t < censor``."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise ValidationError("need at least two values")
    if np.all(x == x[0]):
        raise ConstantSequence("sequence is constant")
    rho = autocorrelation(x)
    kept = []
    for r in rho[1:]:
        if r < censor:
            break
        kept.append(float(r))
    return EssReport(int(x.size), tuple(kept), float(x.size / (1.0 + 2.0 * sum(kept))))


def frequency_table(tables) -> Counter:
    return Counter(tuple(int(v) for v in t) for t in tables)
