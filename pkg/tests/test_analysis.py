import numpy as np
import pytest
from hypothesis import given, strategies as st

from fibersample.analysis import (
    EmpiricalDistribution,
    chi_square,
    chi_squares,
    effective_sample_size,
    empirical_distribution,
    total_variation,
    tv_squared,
)
from fibersample.errors import ConstantSequence, DimensionMismatch, EmptyInput, NonPositiveExpected
from fibersample.fiber import enumerate_fiber
from fibersample.model import no_three_way_entries, sufficient_statistics, validate_matrix


def test_chi_square_examples():
    assert chi_square((1, 2), (1, 2)) == 0
    assert chi_square((2, 0), (1, 1)) == 2
    with pytest.raises(NonPositiveExpected):
        chi_square((1, 1), (1, 0))
    with pytest.raises(DimensionMismatch):
        chi_square((1, 1), (1, 1, 1))
    assert list(chi_squares([[2, 0], [1, 1]], (1, 1))) == [2, 0]


def test_no_three_way_support():
    A = validate_matrix(no_three_way_entries().tolist())
    beta = sufficient_statistics(A, [1] * 18)
    vals = {round(chi_square(u, [1] * 18), 9) for u in enumerate_fiber(A, beta)}
    assert vals == {0, 8, 12}


def test_empirical_distribution_examples():
    d = empirical_distribution([0, 0, 8])
    assert d.as_dict() == {0: 2 / 3, 8: 1 / 3}
    assert empirical_distribution([3.5] * 4).as_dict() == {3.5: 1.0}
    # floating noise does not split atoms
    assert empirical_distribution([0.1 + 0.2, 0.3]).support == (0.3,)
    with pytest.raises(EmptyInput):
        empirical_distribution([])


def test_total_variation_examples():
    p = empirical_distribution([0])
    q = empirical_distribution([0, 8])
    assert total_variation(p, p) == 0
    assert total_variation(p, q) == 0.5
    assert total_variation(p, empirical_distribution([1])) == 1
    assert tv_squared(p, q) == 0.5 * (0.25 + 0.25)


def test_from_mapping_and_json():
    d = EmpiricalDistribution.from_mapping({0: 2, 8: 1})
    assert d[0] == 2 / 3 and d[12] == 0
    assert d.to_json() == {"support": [0.0, 8.0], "masses": [2 / 3, 1 / 3]}


values = st.lists(st.integers(0, 5).map(float), min_size=1, max_size=30)


@given(values, values, values)
def test_tv_is_a_metric(a, b, c):
    p, q, r = map(empirical_distribution, (a, b, c))
    assert total_variation(p, q) == pytest.approx(total_variation(q, p))
    assert 0 <= total_variation(p, q) <= 1 + 1e-12
    assert total_variation(p, r) <= total_variation(p, q) + total_variation(q, r) + 1e-12


@given(values)
def test_masses_sum_to_one(a):
    assert abs(sum(empirical_distribution(a).masses) - 1) < 1e-12


@given(values, values)
def test_concatenation_is_mixture(a, b):
    whole = empirical_distribution(a + b).as_dict()
    pa, pb = empirical_distribution(a), empirical_distribution(b)
    wa = len(a) / (len(a) + len(b))
    for z, mass in whole.items():
        assert mass == pytest.approx(wa * pa[z] + (1 - wa) * pb[z])


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.lists(st.floats(0.1, 10), min_size=8, max_size=8))
def test_chi_square_nonnegative(u, e):
    e = e[:len(u)]
    assert chi_square(u, e) >= 0
    assert chi_square(e, e) == 0


def test_ess_iid_and_alternating():
    x = np.random.default_rng(0).random(10_000)
    r = effective_sample_size(x)
    assert 0.9 * len(x) <= r.ess <= 1.1 * len(x)
    alt = [1.0, -1.0] * 500
    rep = effective_sample_size(alt)
    assert rep.ess == 1000 and rep.autocorrelations == ()
    assert effective_sample_size(x) == r


def test_ess_of_correlated_chain_is_smaller():
    rng = np.random.default_rng(1)
    x = np.zeros(5000)
    for t in range(1, len(x)):
        x[t] = 0.9 * x[t - 1] + rng.normal()
    r = effective_sample_size(x)
    # AR(1) with phi=0.9 has integrated time (1+phi)/(1-phi) = 19
    assert 5000 / 40 < r.ess < 5000 / 10
    assert r.autocorrelations[0] > 0.8


def test_ess_constant_rejected():
    with pytest.raises(ConstantSequence):
        effective_sample_size([2.0] * 10)
