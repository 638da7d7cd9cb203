from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fibersample.errors import (
    InconsistentMarginals,
    MarginalMismatch,
    ValidationError,
    ZeroDenominator,
    ZeroTotal,
)
from fibersample.fiber import FiberOracle
from fibersample.mle import (
    DecomposableStructure,
    FaceFinder,
    IpsConfig,
    IpsSolver,
    decomposable_mle,
    face_support_lp,
    ips_solve,
    quasi_independence_mu13,
    two_way_independence_mle,
)
from fibersample.model import (
    make_model,
    no_three_way_entries,
    quasi_independence_entries,
    sufficient_statistics,
    two_way_entries,
)

F = Fraction
CHAIN = DecomposableStructure((2, 2, 2), ((0, 1), (1, 2)), (((1,), 1),))


def test_two_way_examples():
    assert two_way_independence_mle((1, 2), (2, 1), 3) == (F(2, 3), F(1, 3), F(4, 3), F(2, 3))
    mu = two_way_independence_mle((0, 4), (1, 3), 4)
    assert mu[:2] == (0, 0)
    s = 3
    assert set(two_way_independence_mle([5 * s] * 4, [4 * s] * 5, 20 * s)) == {s}
    with pytest.raises(MarginalMismatch):
        two_way_independence_mle((1, 2), (1, 1), 3)
    with pytest.raises(ZeroTotal):
        two_way_independence_mle((0, 0), (0, 0), 0)


def test_decomposable_two_way_matches_rational():
    st2 = DecomposableStructure.two_way(2, 2)
    assert decomposable_mle(st2, [[1, 2], [2, 1]]) == two_way_independence_mle((1, 2), (2, 1), 3)


def test_decomposable_chain_example():
    assert decomposable_mle(CHAIN, [[1] * 4, [1] * 4]) == (F(1, 2),) * 8


def test_decomposable_zero_and_inconsistent():
    mu = decomposable_mle(CHAIN, [[0, 2, 1, 1], [1, 0, 1, 2]])
    assert mu[0] == mu[1] == 0
    with pytest.raises(InconsistentMarginals):
        decomposable_mle(CHAIN, [[1, 1, 1, 1], [3, 0, 0, 1]])


def test_structure_json_roundtrip_and_validation():
    assert DecomposableStructure.from_dict(CHAIN.to_dict()) == CHAIN
    with pytest.raises(ValidationError):
        DecomposableStructure((2, 2), ((0,),), ())
    with pytest.raises(ValidationError):
        DecomposableStructure((2, 2), ((0,), (1,)), (((), 0),))


@given(st.lists(st.integers(0, 2), min_size=8, max_size=8))
def test_decomposable_equals_umvue_on_chain(u):
    if sum(u) == 0:
        return
    model = make_model(CHAIN.configuration_matrix().entries)
    beta = sufficient_statistics(model.matrix, u)
    assert decomposable_mle(CHAIN, CHAIN.split(beta)) == FiberOracle(model).umvue(beta)


@given(st.lists(st.integers(0, 3), min_size=6, max_size=6))
def test_decomposable_equals_umvue_on_2x3(u):
    if sum(u) == 0:
        return
    stx = DecomposableStructure.two_way(2, 3)
    model = make_model(two_way_entries(2, 3).tolist())
    beta = sufficient_statistics(model.matrix, u)
    assert decomposable_mle(stx, stx.split(beta)) == FiberOracle(model).umvue(beta)


def test_quasi_mu13_examples():
    assert quasi_independence_mu13((2, 2, 1, 1, 1, 2)) == 1
    assert quasi_independence_mu13((2, 2, 1, 1, 1, 0)) == 0
    with pytest.raises(ZeroDenominator):
        quasi_independence_mu13((0, 0, 1, 1, 0, 0))


QUASI = make_model(quasi_independence_entries().tolist())


@given(st.lists(st.integers(0, 2), min_size=8, max_size=8))
def test_quasi_mu13_matches_umvue(u):
    beta = sufficient_statistics(QUASI.matrix, u)
    if beta[0] + beta[1] == 0:
        return
    assert FiberOracle(QUASI).umvue(beta)[2] == quasi_independence_mu13(beta)


@given(st.lists(st.integers(0, 3), min_size=8, max_size=8))
def test_quasi_ips_near_closed_form(u):
    beta = sufficient_statistics(QUASI.matrix, u)
    if beta[0] + beta[1] == 0:
        return
    eps = 0.01
    res = ips_solve(QUASI, beta, config=IpsConfig(eps))
    assert res.converged
    assert abs(res.mu_hat[2] - float(quasi_independence_mu13(beta))) < 10 * eps


@pytest.mark.parametrize("s", [1, 2, 5, 10])
def test_ips_4x5_symmetric(s):
    model = make_model(two_way_entries(4, 5).tolist())
    res = ips_solve(model, [5 * s] * 4 + [4 * s] * 5, config=IpsConfig(0.1))
    assert res.converged and res.iterations <= 20
    assert np.allclose(res.mu_hat, s)


def test_converged_results_meet_tolerance():
    model = make_model(two_way_entries(3, 4).tolist(), [F(100, 101)] * 6 + [1] * 6)
    rng = np.random.default_rng(1)
    for _ in range(30):
        u = rng.integers(0, 4, 12)
        beta = sufficient_statistics(model.matrix, u.tolist())
        res = ips_solve(model, beta, config=IpsConfig(0.01))
        if res.converged:
            assert np.abs(model.matrix.array @ res.mu_hat - beta).sum() < 0.01 * model.matrix.d


def test_not_converged_is_reported():
    model = make_model(two_way_entries(3, 4).tolist(), [F(1, 7)] * 6 + [5] * 6)
    beta = sufficient_statistics(model.matrix, [3, 0, 1, 2, 0, 4, 2, 1, 1, 1, 0, 5])
    res = ips_solve(model, beta, config=IpsConfig(1e-12, max_iterations=2))
    assert not res.converged and res.iterations == 2


def test_invalid_config():
    with pytest.raises(ValidationError):
        IpsConfig(0.0)
    with pytest.raises(ValidationError):
        IpsConfig(0.1, 0)


NO3 = make_model(no_three_way_entries().tolist())


def test_boundary_agreement_no_three_way():
    """umvue_j = 0 iff beta - a_j leaves the semigroup, and then IPS is below threshold."""
    orc = FiberOracle(NO3)
    solver = IpsSolver(NO3, IpsConfig(0.005))
    rng = np.random.default_rng(7)
    cols = NO3.matrix.columns
    hits = 0
    for _ in range(25):
        u = np.zeros(18, dtype=int)
        u[rng.choice(18, 4, replace=False)] = 1
        beta = sufficient_statistics(NO3.matrix, u.tolist())
        mu = orc.umvue(beta)
        res = solver.solve(beta)
        assert res.converged
        for j in range(18):
            sub = tuple(b - a for b, a in zip(beta, cols[j]))
            assert (mu[j] == 0) == (not orc.in_semigroup(sub))
            if mu[j] == 0:
                hits += 1
                assert res.mu_hat[j] < 0.005 / 18
    assert hits > 0


def test_face_finder_matches_lp():
    A = NO3.matrix.array
    finder = FaceFinder(NO3.matrix)
    rng = np.random.default_rng(3)
    for _ in range(150):
        u = np.zeros(18, dtype=int)
        u[rng.choice(18, rng.integers(1, 6), replace=False)] = rng.integers(1, 3)
        beta = A @ u
        assert np.array_equal(finder(beta), face_support_lp(A, beta))


def test_batch_matches_scalar():
    solver = IpsSolver(NO3, IpsConfig(0.005))
    rng = np.random.default_rng(11)
    betas = [NO3.matrix.array @ rng.integers(0, 3, 18) for _ in range(40)]
    ns = [None] * len(betas)
    batch = solver.solve_many(betas, ns)
    for i, beta in enumerate(betas):
        one = solver.solve(beta)
        assert np.array_equal(batch[i].mu_hat, one.mu_hat)
        assert batch[i].iterations == one.iterations
