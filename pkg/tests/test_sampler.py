import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fibersample.errors import IncompatibleEstimator, InconsistentPath, InvalidB
from fibersample.fiber import FiberOracle, monomial_weight
from fibersample.mle import DecomposableStructure, IpsConfig
from fibersample.model import (
    make_model,
    no_three_way_entries,
    quasi_independence_entries,
    sufficient_statistics,
    two_way_entries,
)
from fibersample.sampler import (
    Decomposable,
    ExactUmvue,
    Ips,
    Kernel,
    TwoWayRational,
    draw_batch,
    draw_table,
    draw_tables,
    estimator_from_name,
    path_probability,
    step_probabilities,
)

F = Fraction
M22 = make_model(two_way_entries(2, 2).tolist())
B22 = (1, 2, 2, 1)


def test_step_probabilities_example():
    assert step_probabilities(M22, B22, 3, ExactUmvue()) == (F(2, 9), F(1, 9), F(4, 9), F(2, 9))
    assert step_probabilities(M22, B22, 3, TwoWayRational(2, 2)) == (F(2, 9), F(1, 9), F(4, 9), F(2, 9))
    assert step_probabilities(M22, B22, 3, Decomposable(DecomposableStructure.two_way(2, 2))) == \
        (F(2, 9), F(1, 9), F(4, 9), F(2, 9))


def test_forced_last_step():
    assert step_probabilities(M22, (0, 1, 1, 0), 1, ExactUmvue()) == (0, 0, 1, 0)


def test_step_probabilities_rejects_bad_remaining():
    with pytest.raises(InvalidB):
        step_probabilities(M22, B22, 2, ExactUmvue())


def test_ips_step_probabilities_sum_to_one():
    p = step_probabilities(M22, B22, 3, Ips(IpsConfig(1e-6)))
    assert abs(sum(p) - 1) < 1e-9
    assert np.allclose(p, [2 / 9, 1 / 9, 4 / 9, 2 / 9], atol=1e-5)


def test_zero_b_gives_empty_path():
    r = draw_table(M22, (0, 0, 0, 0), ExactUmvue(), 5)
    assert r.table == (0, 0, 0, 0) and r.path.picks == () and r.retries == 0


def test_invalid_b():
    with pytest.raises(InvalidB):
        draw_table(M22, (1, 2, 2, 2), ExactUmvue(), 0)


def test_incompatible_estimators():
    with pytest.raises(IncompatibleEstimator):
        Kernel(make_model(two_way_entries(2, 2).tolist(), [2, 1, 1, 1]), TwoWayRational(2, 2))
    with pytest.raises(IncompatibleEstimator):
        Kernel(M22, TwoWayRational(2, 3))
    with pytest.raises(IncompatibleEstimator):
        estimator_from_name("rational", M22)


def test_determinism_and_batch_consistency():
    a = draw_batch(M22, B22, ExactUmvue(), 50, rng_seed=9)
    b = draw_batch(M22, B22, ExactUmvue(), 50, rng_seed=9)
    assert a == b
    assert draw_batch(M22, B22, ExactUmvue(), 1, rng_seed=9)[0].table == \
        draw_table(M22, B22, ExactUmvue(), 9).table
    for i in (0, 17, 49):
        assert a[i].table == draw_table(M22, B22, ExactUmvue(), 9, draw_index=i).table


def test_batch_equals_scalar_no_three_way():
    model = make_model(no_three_way_entries().tolist())
    b = sufficient_statistics(model.matrix, [1] * 18)
    est = Ips(IpsConfig(0.005))
    batch = draw_tables(model, b, est, 30, rng_seed=4)
    chunked = draw_tables(model, b, est, 30, rng_seed=4, chunk=7)
    assert np.array_equal(batch.tables, chunked.tables)
    kernel = Kernel(model, est)
    for i in range(30):
        r = draw_table(model, b, est, 4, draw_index=i, kernel=kernel)
        assert r.path.picks == tuple(batch.picks[i])


def test_start_offset():
    full = draw_tables(M22, B22, ExactUmvue(), 20, rng_seed=2)
    tail = draw_tables(M22, B22, ExactUmvue(), 10, rng_seed=2, start=10)
    assert np.array_equal(full.tables[10:], tail.tables)


def test_exact_frequencies_2x2():
    res = draw_tables(M22, B22, ExactUmvue(), 100_000, rng_seed=1)
    c = Counter(map(tuple, res.tables.tolist()))
    assert abs(c[(1, 0, 1, 1)] / 1e5 - 2 / 3) < 0.01
    assert abs(c[(0, 1, 2, 0)] / 1e5 - 1 / 3) < 0.01


def _orderings(u):
    cells = [j for j, k in enumerate(u) for _ in range(k)]
    return set(itertools.permutations(cells))


def test_path_probability_telescopes():
    model = make_model(two_way_entries(2, 3).tolist(), [2, 1, F(1, 2), 1, 3, 1])
    b = sufficient_statistics(model.matrix, [1, 1, 0, 0, 1, 1])
    orc = FiberOracle(model)
    z = orc.z(b).value
    n = 4
    kernel = Kernel(model, ExactUmvue())
    for u in orc.fiber(b):
        xu = math.prod(x**k for x, k in zip(model.odds, u))
        total = 0
        for path in _orderings(u):
            pp = path_probability(model, b, path, ExactUmvue(), kernel)
            assert pp == xu / (z * math.factorial(n))
            total += pp
        assert total == orc.conditional_probability(b, u) == monomial_weight(model.odds, u) / z


def test_path_probability_small_cases():
    assert path_probability(M22, (1, 1, 1, 1), (0, 3), ExactUmvue()) == F(1, 4)
    assert path_probability(M22, B22, (0, 2, 3), ExactUmvue()) == F(1, 9)
    # table (1,1,1,0) is not in the fiber of (1,2,2,1)
    with pytest.raises(InconsistentPath):
        path_probability(M22, B22, (0, 1, 2), ExactUmvue())
    with pytest.raises(InconsistentPath):
        path_probability(M22, B22, (0, 1), ExactUmvue())


def test_single_step_path():
    assert path_probability(M22, (1, 0, 1, 0), (0,), ExactUmvue()) == 1


QUASI = make_model(quasi_independence_entries().tolist())


@given(st.lists(st.integers(0, 2), min_size=8, max_size=8), st.integers(0, 2**31))
def test_support_agreement(u, seed):
    b = sufficient_statistics(QUASI.matrix, u)
    orc = FiberOracle(QUASI)
    for est in (ExactUmvue(), Ips(IpsConfig(0.1))):
        r = draw_table(QUASI, b, est, seed, record_states=True)
        assert sufficient_statistics(QUASI.matrix, r.table) == b
        assert sum(r.table) == sum(u)
        assert all(orc.in_semigroup(s) for s in r.path.states)
        assert r.path.states[-1] == (0,) * 6


@given(st.lists(st.integers(0, 3), min_size=12, max_size=12))
def test_exact_step_probabilities_sum_to_one(u):
    model = make_model(two_way_entries(3, 4).tolist(), [F(100, 101)] * 6 + [1] * 6)
    b = sufficient_statistics(model.matrix, u)
    n = sum(u)
    if n == 0:
        return
    p = step_probabilities(model, b, n, ExactUmvue())
    assert sum(p) == 1 and all(isinstance(v, F) for v in p)
