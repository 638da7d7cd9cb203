"""Metropolis chains on a fiber driven by a Markov basis."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidMove, NotInFiber, ValidationError
from .model import ConfigurationMatrix, ModelSpec, as_counts, no_three_way_entries, sufficient_statistics


@dataclass(frozen=True)
class Move:
    delta: tuple

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(int(v) for v in self.delta))

    @property
    def support(self) -> tuple:
        return tuple((j, v) for j, v in enumerate(self.delta) if v)

    def __neg__(self) -> "Move":
        return Move(tuple(-v for v in self.delta))


def check_moves(A: ConfigurationMatrix, moves: Sequence[Move]) -> list:
    """Return ``moves`` as a list after confirming each lies in ker A."""
    out = []
    for mv in moves:
        mv = mv if isinstance(mv, Move) else Move(tuple(mv))
        if len(mv.delta) != A.m:
            raise InvalidMove(f"move has length {len(mv.delta)}, expected {A.m}")
        if not any(mv.delta):
            raise InvalidMove("the zero vector is not a move")
        if any(sum(a * v for a, v in zip(row, mv.delta)) for row in A.entries):
            raise InvalidMove(f"move {mv.delta} is not in the kernel of A")
        out.append(mv)
    return out


def basis_two_way(rows: int, cols: int) -> list:
    """Basic 2 x 2 swaps of an ``rows x cols`` table (row-major cells)."""
    if rows < 2 or cols < 2:
        raise ValidationError("a two-way basis needs at least two rows and two columns")
    moves = []
    for i1, i2 in itertools.combinations(range(rows), 2):
        for j1, j2 in itertools.combinations(range(cols), 2):
            delta = [0] * (rows * cols)
            delta[i1 * cols + j1] = delta[i2 * cols + j2] = 1
            delta[i1 * cols + j2] = delta[i2 * cols + j1] = -1
            moves.append(Move(tuple(delta)))
    return moves


def _cell(i1: int, i2: int, i3: int) -> int:
    return 9 * i1 + 3 * i2 + i3


def basis_no_three_way() -> list:
    """Markov basis of the 2 x 3 x 3 no-three-way interaction model.

    Nine degree-4 moves, then six degree-6 moves. For the latter the partner
    permutation ``j`` of each permutation ``i`` is found by searching for a
    kernel element with all twelve entries nonzero; moves equal up to sign
    are kept once.
    """
    ent = no_three_way_entries()
    moves = []
    for i2, j2 in itertools.combinations(range(3), 2):
        for i3, j3 in itertools.combinations(range(3), 2):
            delta = [0] * 18
            for c in (_cell(0, i2, i3), _cell(0, j2, j3), _cell(1, i2, j3), _cell(1, j2, i3)):
                delta[c] += 1
            for c in (_cell(0, i2, j3), _cell(0, j2, i3), _cell(1, i2, i3), _cell(1, j2, j3)):
                delta[c] -= 1
            moves.append(Move(tuple(delta)))
    seen = set()
    perms = list(itertools.permutations(range(3)))
    for i in perms:
        for j in perms:
            delta = [0] * 18
            for r in range(3):
                delta[_cell(0, r, i[r])] += 1
                delta[_cell(1, r, j[r])] += 1
                delta[_cell(0, r, j[r])] -= 1
                delta[_cell(1, r, i[r])] -= 1
            if sum(1 for v in delta if v) != 12 or (ent @ np.array(delta)).any():
                continue
            key = tuple(delta)
            if key in seen or tuple(-v for v in delta) in seen:
                continue
            seen.add(key)
            moves.append(Move(key))
            break
    bad = [mv for mv in moves if (ent @ np.array(mv.delta)).any()]
    if bad or len(moves) != 15:
        raise InvalidMove("no-three-way basis construction failed")
    return moves


# chain ----------------------------------------------------------------------------

class _LogFactorial:
    def __init__(self, size: int = 64):
        self.table = [math.lgamma(k + 1) for k in range(size)]

    def __getitem__(self, k: int) -> float:
        t = self.table
        if k >= len(t):
            t.extend(math.lgamma(i + 1) for i in range(len(t), 2 * k + 1))
        return t[k]


class _Stepper:
    """Shared proposal/acceptance logic for one model and basis."""

    def __init__(self, model: ModelSpec, basis: Sequence[Move]):
        self.basis = check_moves(model.matrix, basis)
        if not self.basis:
            raise InvalidMove("empty Markov basis")
        self.supports = [mv.support for mv in self.basis]
        self.logx = [math.log(x) for x in model.odds_array]
        self.logfact = _LogFactorial()

    def step(self, u: list, k: int, sign: int, uniform: float) -> bool:
        """Try ``u + sign * basis[k]`` in place; return whether it was accepted."""
        lf = self.logfact
        logr = 0.0
        for j, v in self.supports[k]:
            new = u[j] + sign * v
            if new < 0:
                return False
            logr += sign * v * self.logx[j] + lf[u[j]] - lf[new]
        if logr < 0.0 and uniform >= math.exp(logr):
            return False
        for j, v in self.supports[k]:
            u[j] += sign * v
        return True


def metropolis_step(model: ModelSpec, current: Sequence[int], basis: Sequence[Move],
                    rng: np.random.Generator) -> tuple:
    """One Metropolis step: uniform move, uniform sign, monomial-ratio acceptance."""
    stepper = basis if isinstance(basis, _Stepper) else _Stepper(model, basis)
    u = list(as_counts(current))
    if len(u) != model.matrix.m:
        raise DimensionMismatch(f"table has length {len(u)}, expected {model.matrix.m}")
    k = int(rng.integers(len(stepper.basis)))
    sign = 1 if rng.integers(2) else -1
    stepper.step(u, k, sign, float(rng.random()))
    return tuple(u)


@dataclass(frozen=True)
class ChainConfig:
    initial_table: tuple
    burn_in: int = 0
    length: int = 0
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.burn_in < 0 or self.length < 0:
            raise ValidationError("burn-in and length must be nonnegative")
        object.__setattr__(self, "initial_table", as_counts(self.initial_table))


@dataclass
class ChainResult:
    """Recorded states of a chain plus per-state acceptance flags."""

    states: list
    accepted: list
    proposals: int
    acceptances: int

    @property
    def acceptance_rate(self) -> float:
        return self.acceptances / self.proposals if self.proposals else float("nan")

    @property
    def tables(self) -> np.ndarray:
        return np.array(self.states, dtype=np.int64).reshape(len(self.states), -1)

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i):
        return self.states[i]


def run_chain(model: ModelSpec, config: ChainConfig, basis: Sequence[Move],
              thinning: int = 1, block: int = 65536) -> ChainResult:
    """Run ``burn_in`` unrecorded steps, then ``length`` steps keeping every ``thinning``-th.

    Rejected and out-of-range proposals count as steps.
    """
    if thinning < 1:
        raise ValidationError("thinning must be at least 1")
    A = model.matrix
    u = list(config.initial_table)
    if len(u) != A.m:
        raise DimensionMismatch(f"initial table has length {len(u)}, expected {A.m}")
    stepper = _Stepper(model, basis)
    b = sufficient_statistics(A, u)
    rng = np.random.default_rng(config.seed)
    K = len(stepper.basis)
    states, flags = [], []
    acceptances = 0
    total = config.burn_in + config.length
    done = 0
    while done < total:
        size = min(block, total - done)
        # three doubles per step from one stream, so blocking never changes the chain
        r = rng.random((size, 3))
        ks = np.minimum((r[:, 0] * K).astype(np.int64), K - 1).tolist()
        signs = (r[:, 1] < 0.5).tolist()
        for k, sg, un in zip(ks, signs, r[:, 2].tolist()):
            acc = stepper.step(u, k, 1 if sg else -1, un)
            done += 1
            if done > config.burn_in:
                acceptances += acc
                if (done - config.burn_in) % thinning == 0:
                    states.append(tuple(u))
                    flags.append(acc)
    if sufficient_statistics(A, u) != b:
        raise NotInFiber("chain left the fiber")
    return ChainResult(states, flags, config.length, acceptances)
