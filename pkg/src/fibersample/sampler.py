"""Sequential direct sampler on the Markov lattice.

A table with sufficient statistics ``b`` and total ``n`` is drawn one count
at a time: from the current state ``beta`` the next cell ``j`` is picked with
probability ``mu_j(beta) / deg(beta)`` and ``beta`` drops by column ``a_j``.
With the exact conditional expectation (UMVUE) for ``mu`` the output follows
the conditional distribution exactly; with an MLE it is approximate.

Every draw owns a random stream derived from ``(seed, draw_index)`` and each
attempt consumes exactly ``n`` uniforms, so results do not depend on how a
batch is chunked or scheduled.
"""

from __future__ import annotations

import itertools
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateState,
    DimensionMismatch,
    EstimatorFailed,
    IncompatibleEstimator,
    InconsistentPath,
    InvalidB,
    NonIntegralDegree,
    RetriesExhausted,
    ValidationError,
)
from .fiber import DEFAULT_FIBER_CAP, FiberOracle
from .mle import DecomposableStructure, IpsConfig, IpsSolver, MleResult, decomposable_mle, two_way_independence_mle
from .model import ModelSpec, degree, two_way_entries

DEFAULT_MAX_RETRIES = 100


# estimators -------------------------------------------------------------------

class Estimator:
    """Source of expected counts for the transition probabilities."""

    name = "estimator"
    exact = False

    def bind(self, model: ModelSpec):
        """Validate compatibility and return a callable ``(beta, n) -> mu``.

        The callable may also return an :class:`MleResult` carrying ``mu``.
        """
        raise NotImplementedError

    def zero_threshold(self, m: int) -> float:
        return 0.0


@dataclass(frozen=True)
class ExactUmvue(Estimator):
    cap: int = DEFAULT_FIBER_CAP
    name = "exact"
    exact = True

    def bind(self, model):
        oracle = FiberOracle(model, self.cap)
        return lambda beta, n: oracle.umvue(beta)


@dataclass(frozen=True)
class TwoWayRational(Estimator):
    rows: int
    cols: int
    name = "rational"
    exact = True

    def bind(self, model):
        if not model.is_log_linear:
            raise IncompatibleEstimator("the rational MLE needs unit odds")
        if model.matrix.array.shape != (self.rows + self.cols, self.rows * self.cols) or \
                not np.array_equal(model.matrix.array, two_way_entries(self.rows, self.cols)):
            raise IncompatibleEstimator(f"model is not the {self.rows}x{self.cols} independence model")
        r = self.rows

        def mu(beta, n):
            return two_way_independence_mle(beta[:r], beta[r:], n)
        return mu

    def bind_weights(self, model):
        """Integer weights ``row_i * col_j``, proportional to the expected counts."""
        r = self.rows
        return lambda beta, n: [ri * cj for ri in beta[:r] for cj in beta[r:]]


@dataclass(frozen=True)
class Decomposable(Estimator):
    structure: DecomposableStructure
    name = "decomposable"
    exact = True

    def bind(self, model):
        if not model.is_log_linear:
            raise IncompatibleEstimator("the decomposable closed form needs unit odds")
        A = self.structure.configuration_matrix().array
        if model.matrix.array.shape != A.shape or not np.array_equal(model.matrix.array, A):
            raise IncompatibleEstimator("model matrix does not match the decomposable structure")
        st = self.structure
        return lambda beta, n: decomposable_mle(st, st.split(beta))


@dataclass(frozen=True)
class Ips(Estimator):
    config: IpsConfig = field(default_factory=IpsConfig)
    name = "ips"

    def bind(self, model):
        solver = IpsSolver(model, self.config)

        def mu(beta, n):
            res = _checked(solver.solve(beta, n), beta)
            if isinstance(res, Exception):
                raise res
            return res
        return mu

    def bind_many(self, model):
        """Callable ``(betas, ns) -> [MleResult | EstimatorFailed]``."""
        solver = IpsSolver(model, self.config)

        def many(betas, ns):
            res = solver.solve_many(betas, ns)
            return [_checked(res[i], betas[i]) for i in range(len(betas))]
        return many

    def zero_threshold(self, m):
        return self.config.epsilon / m


def _checked(res, beta):
    if not res.converged:
        return EstimatorFailed(f"IPS did not converge within {res.iterations} iterations at {tuple(beta)}")
    return res


def estimator_from_name(name: str, model: ModelSpec, *, epsilon: float = 0.1,
                        max_iterations: int = 1000, structure: Optional[DecomposableStructure] = None,
                        shape: Optional[tuple] = None) -> Estimator:
    if name == "exact":
        return ExactUmvue()
    if name == "ips":
        return Ips(IpsConfig(epsilon, max_iterations))
    if name == "rational":
        if shape is None or len(shape) != 2:
            raise IncompatibleEstimator("the rational estimator needs a two-way table shape")
        return TwoWayRational(*shape)
    if name == "decomposable":
        if structure is None:
            if shape is not None and len(shape) == 2:
                structure = DecomposableStructure.two_way(*shape)
            else:
                raise IncompatibleEstimator("the decomposable estimator needs a structure")
        return Decomposable(structure)
    raise ValidationError(f"unknown estimator {name!r}")


# kernel ---------------------------------------------------------------------------

class Kernel:
    """Transition probabilities of one model/estimator pair, memoized by state.

    Exact estimators are stored as integer weights over a common
    denominator; approximate ones as float probabilities. A state whose
    estimator failed stores the exception instead.
    """

    def __init__(self, model: ModelSpec, estimator: Estimator):
        self.model = model
        self.estimator = estimator
        self._mu = estimator.bind(model)
        weights = getattr(estimator, "bind_weights", None)
        self._weights = weights(model) if weights is not None else None
        many = getattr(estimator, "bind_many", None)
        self._many = many(model) if many is not None else None
        self.threshold = estimator.zero_threshold(model.matrix.m)
        self._memo: dict = {}
        self._cum: dict = {}
        self.iterations: Counter = Counter()
        self._lock = threading.Lock()

    def _entry(self, beta, remaining):
        hit = self._memo.get(beta)
        if hit is None:
            hit = self._compute(beta, remaining)
            with self._lock:
                self._memo[beta] = hit
        return hit

    def prefetch(self, states: list, remaining: int) -> None:
        """Fill the memo for ``states`` (tuples sharing one total) in one batch."""
        if self._many is None:
            return
        todo = [b for b in states if b not in self._memo]
        if not todo:
            return
        results = self._many(todo, [remaining] * len(todo))
        with self._lock:
            for beta, res in zip(todo, results):
                self._memo[beta] = self._finish(beta, res)

    def probabilities(self, beta: tuple, remaining: int) -> tuple:
        hit = self._entry(beta, remaining)
        if isinstance(hit, Exception):
            raise hit
        if self.estimator.exact:
            w, total = hit
            return tuple(Fraction(v, total) for v in w)
        return hit

    def _compute(self, beta, remaining):
        try:
            if self._weights is not None:
                res = list(self._weights(beta, remaining))
            else:
                res = self._mu(beta, remaining)
        except EstimatorFailed as exc:
            return exc
        return self._finish(beta, res)

    def _finish(self, beta, res):
        if isinstance(res, Exception):
            return res
        if isinstance(res, MleResult):
            self.iterations[res.iterations] += 1
            res = res.mu_hat
        if self.estimator.exact:
            if self._weights is not None:
                w = res
            else:
                mu = [max(Fraction(v), Fraction(0)) for v in res]
                den = math.lcm(*(v.denominator for v in mu))
                w = [v.numerator * (den // v.denominator) for v in mu]
            total = sum(w)
            if total == 0:
                return DegenerateState(f"all transition probabilities vanish at {beta}")
            return tuple(w), total
        p = np.asarray(res, dtype=float).copy()
        p[~(p >= self.threshold)] = 0.0
        total = p.sum()
        if total == 0:
            return DegenerateState(f"all transition probabilities vanish at {beta}")
        return tuple((p / total).tolist())

    def cumulative(self, beta: tuple, remaining: int) -> np.ndarray:
        """Float cumulative probabilities with exact 1.0 from the last positive cell on."""
        hit = self._cum.get(beta)
        if hit is None:
            entry = self._entry(beta, remaining)
            if isinstance(entry, Exception):
                hit = entry
            else:
                if self.estimator.exact:
                    w, total = entry
                    cum = np.array([c / total for c in itertools.accumulate(w)])
                    probs = w
                else:
                    probs = entry
                    cum = np.cumsum(probs)
                last = max(j for j, v in enumerate(probs) if v > 0)
                cum[last:] = 1.0
                hit = cum
            with self._lock:
                self._cum[beta] = hit
        return hit


def _check_state(model: ModelSpec, beta) -> tuple:
    if len(beta) != model.matrix.d:
        raise DimensionMismatch(f"state has length {len(beta)}, expected {model.matrix.d}")
    return tuple(int(v) for v in beta)


def step_probabilities(model: ModelSpec, beta: Sequence[int], remaining: int,
                       estimator: Estimator, kernel: Optional[Kernel] = None) -> tuple:
    """Probability of moving from ``beta`` to ``beta - a_j`` for every cell ``j``.

    Exact estimators return :class:`Fraction` values summing to exactly 1.
    """
    beta = _check_state(model, beta)
    if degree(model.matrix, beta) != remaining or remaining < 1:
        raise InvalidB(f"remaining count {remaining} does not match the state {beta}")
    kernel = kernel or Kernel(model, estimator)
    return kernel.probabilities(beta, remaining)


# draws ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplePath:
    picks: tuple
    states: Optional[tuple] = None


@dataclass(frozen=True)
class DrawResult:
    table: tuple
    path: SamplePath
    retries: int = 0


def draw_stream(seed, index: int = 0) -> np.random.Generator:
    """Random stream of draw ``index`` under the master ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(np.random.SeedSequence(seed.entropy, spawn_key=(index,)))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _prepare(model: ModelSpec, b) -> tuple:
    b = _check_state(model, b)
    try:
        n = degree(model.matrix, b)
    except NonIntegralDegree as exc:
        raise InvalidB(str(exc)) from exc
    return b, n


def _walk(kernel: Kernel, b: tuple, n: int, uniforms: np.ndarray, record: bool):
    cols = kernel.model.matrix.columns
    beta = b
    picks = []
    states = [b] if record else None
    for t in range(n):
        cum = kernel.cumulative(beta, n - t)
        if isinstance(cum, Exception):
            return None
        j = int(np.searchsorted(cum, uniforms[t], side="right"))
        picks.append(j)
        beta = tuple(x - a for x, a in zip(beta, cols[j]))
        if record:
            states.append(beta)
    if any(beta):
        return None
    return picks, states


def _table(picks, m) -> tuple:
    counts = [0] * m
    for j in picks:
        counts[j] += 1
    return tuple(counts)


def draw_table(model: ModelSpec, b: Sequence[int], estimator: Estimator, rng_seed=0, *,
               draw_index: int = 0, max_retries: int = DEFAULT_MAX_RETRIES,
               record_states: bool = False, kernel: Optional[Kernel] = None) -> DrawResult:
    """Draw one table with sufficient statistics ``b``.

    A path that hits an estimator failure, a state with no admissible move, or
    ends away from zero is discarded and redrawn, up to ``max_retries`` times.
    """
    b, n = _prepare(model, b)
    kernel = kernel or Kernel(model, estimator)
    rng = draw_stream(rng_seed, draw_index)
    for attempt in range(max_retries + 1):
        walked = _walk(kernel, b, n, rng.random(n), record_states)
        if walked is not None:
            picks, states = walked
            path = SamplePath(tuple(picks), tuple(states) if states is not None else None)
            return DrawResult(_table(picks, model.matrix.m), path, attempt)
    raise RetriesExhausted(f"no valid path after {max_retries} retries")


@dataclass
class BatchResult:
    """Tables from :func:`draw_tables` as arrays; row ``i`` is draw ``i``."""

    tables: np.ndarray
    picks: np.ndarray
    retries: np.ndarray
    kernel: Kernel

    def __len__(self):
        return len(self.tables)


def _state_keys(states: np.ndarray, b: tuple):
    radix = np.array([v + 1 for v in b], dtype=object)
    span = 1
    for r in radix:
        span *= int(r)
    if span < 2**62 and states.min() >= 0:
        weights = np.ones(len(b), dtype=np.int64)
        for i in range(len(b) - 2, -1, -1):
            weights[i] = weights[i + 1] * (b[i + 1] + 1)
        keys = states @ weights
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        return states[first], inverse
    uniq, inverse = np.unique(states, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def draw_tables(model: ModelSpec, b: Sequence[int], estimator: Estimator, count: int,
                rng_seed=0, *, max_retries: int = DEFAULT_MAX_RETRIES, chunk: int = 50_000,
                kernel: Optional[Kernel] = None, start: int = 0) -> BatchResult:
    """Draw ``count`` tables, advancing many paths in lockstep.

    Produces exactly the tables :func:`draw_table` would give for draw
    indices ``start .. start + count - 1``.
    """
    if count < 0:
        raise ValidationError("count must be nonnegative")
    b, n = _prepare(model, b)
    kernel = kernel or Kernel(model, estimator)
    A = model.matrix.array
    m = A.shape[1]
    picks = np.zeros((count, n), dtype=np.int64)
    retries = np.zeros(count, dtype=np.int64)
    for lo in range(0, count, chunk):
        hi = min(count, lo + chunk)
        k = hi - lo
        U = np.empty((k, n))
        for i in range(k):
            U[i] = draw_stream(rng_seed, start + lo + i).random(n)
        states = np.tile(np.array(b, dtype=np.int64), (k, 1))
        ok = np.ones(k, dtype=bool)
        for t in range(n):
            live = np.flatnonzero(ok)
            if live.size == 0:
                break
            uniq, inverse = _state_keys(states[live], b)
            cums = np.empty((len(uniq), m))
            bad = np.zeros(len(uniq), dtype=bool)
            rows = list(map(tuple, uniq.tolist()))
            kernel.prefetch(rows, n - t)
            for r, row in enumerate(rows):
                c = kernel.cumulative(row, n - t)
                if isinstance(c, Exception):
                    bad[r] = True
                    cums[r] = 1.0
                else:
                    cums[r] = c
            j = (cums[inverse] <= U[live, t][:, None]).sum(axis=1)
            j = np.minimum(j, m - 1)
            picks[lo + live, t] = j
            states[live] -= A[:, j].T
            ok[live[bad[inverse]]] = False
        ok &= ~states.any(axis=1)
        for i in np.flatnonzero(~ok):
            res = draw_table(model, b, estimator, rng_seed, draw_index=start + lo + i,
                             max_retries=max_retries, kernel=kernel)
            picks[lo + i] = res.path.picks
            retries[lo + i] = res.retries
    tables = np.zeros((count, m), dtype=np.int64)
    if n:
        rows = np.repeat(np.arange(count), n)
        np.add.at(tables, (rows, picks.reshape(-1)), 1)
    return BatchResult(tables, picks, retries, kernel)


def draw_batch(model: ModelSpec, b: Sequence[int], estimator: Estimator, count: int,
               rng_seed=0, **kwargs) -> list:
    """``count`` independent draws as :class:`DrawResult` objects."""
    if count < 1:
        raise ValidationError("count must be at least 1")
    res = draw_tables(model, b, estimator, count, rng_seed, **kwargs)
    return [DrawResult(tuple(int(v) for v in t), SamplePath(tuple(int(v) for v in p)), int(r))
            for t, p, r in zip(res.tables, res.picks, res.retries)]


def path_probability(model: ModelSpec, b: Sequence[int], path, estimator: Estimator,
                     kernel: Optional[Kernel] = None):
    """Product of the transition probabilities along ``path``.

    Exact estimators give a :class:`Fraction`. A path through a state with no
    admissible move has probability 0.
    """
    b, n = _prepare(model, b)
    picks = path.picks if isinstance(path, SamplePath) else tuple(path)
    cols = model.matrix.columns
    m = model.matrix.m
    if len(picks) != n or any(not 0 <= j < m for j in picks):
        raise InconsistentPath(f"path of length {len(picks)} does not fit total {n}")
    end = tuple(x - sum(cols[j][i] for j in picks) for i, x in enumerate(b))
    if any(end):
        raise InconsistentPath("path does not end at the zero state")
    kernel = kernel or Kernel(model, estimator)
    prob = Fraction(1) if estimator.exact else 1.0
    beta = b
    for t, j in enumerate(picks):
        try:
            p = kernel.probabilities(beta, n - t)
        except (EstimatorFailed, DegenerateState):
            return prob * 0
        if p[j] == 0:
            return prob * 0
        prob *= p[j]
        beta = tuple(x - a for x, a in zip(beta, cols[j]))
    return prob
