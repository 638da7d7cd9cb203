from collections import Counter

import numpy as np
import pytest

from fibersample.errors import InvalidMove, ValidationError
from fibersample.metropolis import (
    ChainConfig,
    Move,
    basis_no_three_way,
    basis_two_way,
    check_moves,
    metropolis_step,
    run_chain,
)
from fibersample.model import make_model, no_three_way_entries, sufficient_statistics, two_way_entries

M22 = make_model(two_way_entries(2, 2).tolist())
NO3 = no_three_way_entries()


def _cell(a, b, c):
    # 1-based (level of variable 1, 2, 3) to row-major index
    return 9 * (a - 1) + 3 * (b - 1) + (c - 1)


def test_two_way_counts_and_kernel():
    assert len(basis_two_way(2, 2)) == 1
    moves = basis_two_way(4, 5)
    assert len(moves) == 60
    A = two_way_entries(4, 5)
    assert all(not (A @ np.array(mv.delta)).any() for mv in moves)
    with pytest.raises(ValidationError):
        basis_two_way(1, 3)


def test_no_three_way_basis():
    moves = basis_no_three_way()
    assert len(moves) == 15
    assert [sum(map(abs, mv.delta)) for mv in moves] == [8] * 9 + [12] * 6
    assert all(not (NO3 @ np.array(mv.delta)).any() for mv in moves)


def test_example_degree_six_move_present():
    i, j = (1, 3, 2), (2, 1, 3)
    delta = [0] * 18
    for r in range(3):
        delta[_cell(1, r + 1, i[r])] += 1
        delta[_cell(2, r + 1, j[r])] += 1
        delta[_cell(1, r + 1, j[r])] -= 1
        delta[_cell(2, r + 1, i[r])] -= 1
    assert not (NO3 @ np.array(delta)).any()
    keys = {mv.delta for mv in basis_no_three_way()}
    assert tuple(delta) in keys or tuple(-v for v in delta) in keys


def test_check_moves_rejects():
    with pytest.raises(InvalidMove):
        check_moves(M22.matrix, [Move((1, 0, 0, -1))])
    with pytest.raises(InvalidMove):
        check_moves(M22.matrix, [Move((0, 0, 0, 0))])
    with pytest.raises(InvalidMove):
        check_moves(M22.matrix, [Move((1, -1))])


class _Fixed:
    """Stands in for a generator with scripted outputs."""

    def __init__(self, ints, uniform):
        self.ints = list(ints)
        self.uniform = uniform

    def integers(self, k):
        return self.ints.pop(0)

    def random(self):
        return self.uniform


def test_negative_proposal_stays():
    mv = basis_two_way(2, 2)
    # +(1,-1,-1,1) from (0,1,2,0) is negative in cells 1 and 2... use the minus sign on (1,0,1,1)
    assert metropolis_step(M22, (1, 0, 1, 1), mv, _Fixed([0, 1], 0.0)) == (1, 0, 1, 1)
    assert metropolis_step(M22, (1, 0, 1, 1), mv, _Fixed([0, 0], 0.0)) == (0, 1, 2, 0)


def test_acceptance_ratio_is_factorial_ratio():
    mv = basis_two_way(2, 2)
    # (1,0,1,1) -> (0,1,2,0) has ratio u!/u'! = 1/2
    assert metropolis_step(M22, (1, 0, 1, 1), mv, _Fixed([0, 0], 0.49)) == (0, 1, 2, 0)
    assert metropolis_step(M22, (1, 0, 1, 1), mv, _Fixed([0, 0], 0.51)) == (1, 0, 1, 1)
    # the reverse move has ratio 2 and is always accepted
    assert metropolis_step(M22, (0, 1, 2, 0), mv, _Fixed([0, 1], 0.99)) == (1, 0, 1, 1)


def test_stationary_2x2():
    res = run_chain(M22, ChainConfig((1, 0, 1, 1), 100, 200_000, seed=3), basis_two_way(2, 2))
    c = Counter(res.states)
    assert abs(c[(1, 0, 1, 1)] / len(res) - 2 / 3) < 0.01
    assert res.proposals == 200_000 and 0 < res.acceptance_rate < 1


def test_chain_stays_in_fiber_and_is_deterministic():
    model = make_model(NO3.tolist())
    u0 = tuple([1] * 18)
    cfg = ChainConfig(u0, 50, 500, seed=8)
    a = run_chain(model, cfg, basis_no_three_way())
    b = run_chain(model, cfg, basis_no_three_way(), block=37)
    assert a.states == b.states
    beta = sufficient_statistics(model.matrix, u0)
    assert all(sufficient_statistics(model.matrix, s) == beta for s in a.states)


def test_length_zero_and_thinning():
    cfg = ChainConfig((1, 0, 1, 1), 10, 0, seed=1)
    assert len(run_chain(M22, cfg, basis_two_way(2, 2))) == 0
    thin = run_chain(M22, ChainConfig((1, 0, 1, 1), 0, 10, seed=1), basis_two_way(2, 2), thinning=3)
    full = run_chain(M22, ChainConfig((1, 0, 1, 1), 0, 10, seed=1), basis_two_way(2, 2))
    assert thin.states == [full.states[2], full.states[5], full.states[8]]
    with pytest.raises(ValidationError):
        ChainConfig((1, 0, 1, 1), -1, 5)
