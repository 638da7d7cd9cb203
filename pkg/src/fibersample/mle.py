"""Maximum-likelihood expected counts.

Closed forms for two-way independence, decomposable graphical models and the
3 x 3 quasi-independence model, plus generalized iterative proportional
scaling (Darroch-Ratcliff) for any log-affine model with a nonnegative
configuration matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    DimensionMismatch,
    InconsistentMarginals,
    MarginalMismatch,
    NegativeEntryInA,
    ValidationError,
    ZeroDenominator,
    ZeroSeparatorWithPositiveClique,
    ZeroTotal,
)
from .model import ConfigurationMatrix, ModelSpec, degree, validate_matrix


def _exact(v):
    if isinstance(v, (int, Fraction, np.integer)):
        return Fraction(int(v)) if isinstance(v, np.integer) else Fraction(v)
    return v


def two_way_independence_mle(row_sums: Sequence, col_sums: Sequence, total) -> tuple:
    """Expected counts ``row_i * col_j / total`` in row-major cell order.

    Integer inputs give exact :class:`Fraction` output.
    """
    if total == 0:
        raise ZeroTotal("total count must be positive")
    if sum(row_sums) != total or sum(col_sums) != total:
        raise MarginalMismatch(
            f"row sums {sum(row_sums)} and column sums {sum(col_sums)} must both equal {total}")
    total = _exact(total)
    return tuple(_exact(r) * _exact(c) / total for r in row_sums for c in col_sums)


# decomposable models ---------------------------------------------------------

@dataclass(frozen=True)
class DecomposableStructure:
    """Perfect clique sequence of a decomposable graphical model.

    ``levels[k]`` is the number of states of variable ``k``. Cells are the
    joint states in lexicographic order (first variable slowest). Each clique
    marginal is laid out the same way over the clique's variables, and the
    sufficient statistics are the clique marginals concatenated in clique
    order. ``separators`` holds ``(variables, multiplicity)`` pairs; the empty
    separator stands for the grand total.
    """

    levels: tuple
    cliques: tuple
    separators: tuple

    def __post_init__(self):
        levels = tuple(int(k) for k in self.levels)
        cliques = tuple(tuple(sorted(int(v) for v in c)) for c in self.cliques)
        seps = tuple((tuple(sorted(int(v) for v in s)), int(nu)) for s, nu in self.separators)
        if not levels or any(k < 1 for k in levels):
            raise ValidationError("every variable needs at least one level")
        nvar = len(levels)
        for c in cliques:
            if not c or any(v < 0 or v >= nvar for v in c):
                raise ValidationError(f"clique {c} references unknown variables")
        covered = set(itertools.chain.from_iterable(cliques))
        if covered != set(range(nvar)):
            raise ValidationError("cliques must cover every variable")
        for s, nu in seps:
            if nu < 1:
                raise ValidationError(f"separator {s} needs multiplicity >= 1, got {nu}")
            if not any(set(s) <= set(c) for c in cliques):
                raise ValidationError(f"separator {s} is not contained in any clique")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "cliques", cliques)
        object.__setattr__(self, "separators", seps)

    @classmethod
    def two_way(cls, rows: int, cols: int) -> "DecomposableStructure":
        return cls((rows, cols), ((0,), (1,)), (((), 1),))

    @classmethod
    def from_dict(cls, spec: dict) -> "DecomposableStructure":
        seps = [(s["variables"], s.get("nu", 1)) if isinstance(s, dict) else (s[0], s[1])
                for s in spec.get("separators", [])]
        return cls(tuple(spec["levels"]), tuple(tuple(c) for c in spec["cliques"]), tuple(seps))

    def to_dict(self) -> dict:
        return {"levels": list(self.levels),
                "cliques": [list(c) for c in self.cliques],
                "separators": [{"variables": list(s), "nu": nu} for s, nu in self.separators]}

    @property
    def n_cells(self) -> int:
        return math.prod(self.levels)

    def _marginal_index(self, variables: tuple) -> np.ndarray:
        states = np.array(list(itertools.product(*(range(k) for k in self.levels))),
                          dtype=np.int64).reshape(self.n_cells, len(self.levels))
        idx = np.zeros(self.n_cells, dtype=np.int64)
        for v in variables:
            idx = idx * self.levels[v] + states[:, v]
        return idx

    @cached_property
    def clique_index(self) -> tuple:
        """Per clique, the marginal index of every cell."""
        return tuple(self._marginal_index(c) for c in self.cliques)

    @cached_property
    def separator_index(self) -> tuple:
        return tuple(self._marginal_index(s) for s, _ in self.separators)

    def marginal_size(self, variables: tuple) -> int:
        return math.prod(self.levels[v] for v in variables)

    @cached_property
    def block_sizes(self) -> tuple:
        return tuple(self.marginal_size(c) for c in self.cliques)

    def configuration_matrix(self) -> ConfigurationMatrix:
        blocks = []
        for c, idx in zip(self.cliques, self.clique_index):
            block = np.zeros((self.marginal_size(c), self.n_cells), dtype=int)
            block[idx, np.arange(self.n_cells)] = 1
            blocks.append(block)
        return validate_matrix(np.vstack(blocks).tolist())

    def split(self, beta: Sequence) -> list:
        """Cut concatenated sufficient statistics into clique marginals."""
        if len(beta) != sum(self.block_sizes):
            raise DimensionMismatch(
                f"sufficient statistics have length {len(beta)}, expected {sum(self.block_sizes)}")
        out, pos = [], 0
        for size in self.block_sizes:
            out.append(list(beta[pos:pos + size]))
            pos += size
        return out


def _separator_marginals(structure: DecomposableStructure, marginals: list) -> list:
    """Separator marginals, read off every clique containing the separator.

    Raises :class:`InconsistentMarginals` when two cliques disagree.
    """
    totals = {sum(mg) for mg in marginals}
    if len(totals) != 1:
        raise InconsistentMarginals(f"clique marginals have different totals {sorted(totals)}")
    out = []
    for s, _ in structure.separators:
        found = None
        for c, mg in zip(structure.cliques, marginals):
            if not set(s) <= set(c):
                continue
            size = structure.marginal_size(s)
            proj = [0] * size
            # project clique states onto the separator variables
            for state, val in zip(itertools.product(*(range(structure.levels[v]) for v in c)), mg):
                key = 0
                for v in s:
                    key = key * structure.levels[v] + state[c.index(v)]
                proj[key] += val
            if found is None:
                found = proj
            elif proj != found:
                raise InconsistentMarginals(f"cliques disagree on the marginal of separator {s}")
        out.append(found)
    return out


def decomposable_mle(structure: DecomposableStructure, clique_marginals: Sequence) -> tuple:
    """Closed-form MLE ``prod_C u(j_C) / prod_S u(j_S)**nu(S)`` for every cell.

    Cells whose clique marginals include a zero get 0 (the 0/0 case included).
    Integer marginals give exact :class:`Fraction` output.
    """
    marginals = [[_exact(v) for v in mg] for mg in clique_marginals]
    if len(marginals) != len(structure.cliques):
        raise DimensionMismatch(
            f"got {len(marginals)} clique marginals for {len(structure.cliques)} cliques")
    for mg, size in zip(marginals, structure.block_sizes):
        if len(mg) != size:
            raise DimensionMismatch(f"clique marginal has length {len(mg)}, expected {size}")
    sep = _separator_marginals(structure, marginals)
    out = []
    for cell in range(structure.n_cells):
        num = Fraction(1) if not isinstance(marginals[0][0], float) else 1.0
        for mg, idx in zip(marginals, structure.clique_index):
            num *= mg[idx[cell]]
        if num == 0:
            out.append(num * 0)
            continue
        den = 1
        for (s, nu), mg, idx in zip(structure.separators, sep, structure.separator_index):
            den *= mg[idx[cell]] ** nu
        if den == 0:
            raise ZeroSeparatorWithPositiveClique(f"cell {cell} has a zero separator marginal")
        out.append(num / den)
    return tuple(out)


def quasi_independence_mu13(b: Sequence) -> Fraction:
    """Closed-form expected count of cell (1, 3) in the 3 x 3 quasi-independence model.

    ``b`` is (u1., u2., u31+u32, u.1, u.2, u13+u23).
    """
    if len(b) != 6:
        raise DimensionMismatch(f"expected 6 sufficient statistics, got {len(b)}")
    den = _exact(b[0]) + _exact(b[1])
    if den == 0:
        raise ZeroDenominator("u1. + u2. must be positive")
    return _exact(b[0]) * _exact(b[5]) / den


# generalized IPS --------------------------------------------------------------

@dataclass(frozen=True)
class IpsConfig:
    epsilon: float = 0.1
    max_iterations: int = 1000
    restrict_to_face: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValidationError(f"max_iterations must be a positive integer, got {self.max_iterations}")


@dataclass(frozen=True)
class MleResult:
    mu_hat: np.ndarray
    iterations: int
    converged: bool

    def zero_threshold(self, epsilon: float) -> float:
        return epsilon / len(self.mu_hat)


def face_support_lp(A: np.ndarray, beta: Sequence) -> Optional[np.ndarray]:
    """Cells ``j`` with ``v_j > 0`` for some real ``v >= 0`` with ``A v = beta``.

    These are the columns of the smallest face of ``cone(A)`` holding ``beta``.
    Solved as one LP: maximize ``sum y`` subject to ``A v = lam * beta``,
    ``0 <= y_j <= min(1, v_j)``, ``lam >= 1``. Every face column reaches
    ``y_j = 1`` at the optimum. Returns None when ``beta`` is outside the cone.
    """
    A = np.asarray(A, dtype=float)
    d, m = A.shape
    beta = np.asarray(beta, dtype=float)
    cost = np.r_[np.zeros(m), -np.ones(m), 0.0]
    a_eq = np.c_[A, np.zeros((d, m)), -beta]
    a_ub = np.c_[-np.eye(m), np.eye(m), np.zeros((m, 1))]
    bounds = [(0, None)] * m + [(0, 1)] * m + [(1, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(m), A_eq=a_eq, b_eq=np.zeros(d),
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return res.x[m:2 * m] > 0.5


class FaceFinder:
    """Smallest face of ``cone(A)`` containing a point, via precomputed facets.

    Every column satisfies ``c . a_j = 1``, so the cone is determined by the
    polytope ``conv(a_j)``. Its facets are computed once with Qhull in affine
    coordinates; a face query is then a matrix product. Falls back to
    :func:`face_support_lp` when the hull cannot be built.
    """

    TOL = 1e-9

    def __init__(self, matrix: ConfigurationMatrix):
        self.A = matrix.array.astype(float)
        self.c = np.array([float(v) for v in matrix.degree_functional])
        pts = self.A.T
        self.origin = pts[0]
        _, sv, vt = np.linalg.svd(pts - self.origin)
        rank = int((sv > 1e-9 * max(1.0, sv[0] if sv.size else 1.0)).sum())
        self.basis = vt[:rank]
        self.facets = None
        if rank == 0:
            self.facets = np.zeros((0, 1))
        elif rank == 1:
            y = (pts - self.origin) @ self.basis.T
            lo, hi = y.min(), y.max()
            self.facets = np.array([[1.0, -lo], [-1.0, hi]])
        else:
            try:
                hull = ConvexHull((pts - self.origin) @ self.basis.T)
            except QhullError:
                pass
            else:
                # outward normals: inside means eq . [y, 1] <= 0; flip to >= 0
                self.facets = np.unique(np.round(-hull.equations, 12), axis=0)
        if self.facets is not None:
            self.column_slack = self._slack((pts - self.origin) @ self.basis.T)

    def _slack(self, y: np.ndarray) -> np.ndarray:
        return _rowdot(y, self.facets[:, :-1]) + self.facets[:, -1]

    def many(self, betas: np.ndarray) -> tuple:
        """Face masks ``(k, m)`` and a flag per row, False when outside the cone."""
        betas = np.asarray(betas, dtype=float)
        k = len(betas)
        if self.facets is None:
            masks = [face_support_lp(self.A, b) for b in betas]
            ok = np.array([f is not None for f in masks], dtype=bool)
            out = np.zeros((k, self.A.shape[1]), dtype=bool)
            for i, f in enumerate(masks):
                if f is not None:
                    out[i] = f
            return out, ok
        n = _rowdot(betas, self.c[None, :])[:, 0]
        ok = n > 0
        point = betas / np.where(ok, n, 1.0)[:, None]
        y = _rowdot(point - self.origin, self.basis)
        back = self.origin + _rowdot(y, self.basis.T)
        ok &= np.abs(back - point).max(axis=1) <= 1e-7
        slack = self._slack(y)
        ok &= ~(slack < -self.TOL).any(axis=1)
        tight = slack <= self.TOL
        off = np.abs(self.column_slack) > self.TOL
        masks = ~(tight[:, None, :] & off[None, :, :]).any(axis=2)
        return masks, ok

    def __call__(self, beta: Sequence) -> Optional[np.ndarray]:
        masks, ok = self.many(np.asarray([beta], dtype=float))
        return masks[0] if ok[0] else None


def _rowdot(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w.T`` computed row by row, so a row's result never depends on its batch."""
    return (x[:, None, :] * w[None, :, :]).sum(axis=2)


@dataclass(frozen=True)
class BatchMle:
    mu_hat: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray

    def __getitem__(self, i) -> MleResult:
        return MleResult(self.mu_hat[i], int(self.iterations[i]), bool(self.converged[i]))


class IpsSolver:
    """Generalized IPS for a fixed model; reusable across many ``beta``.

    Non-uniform column sums are homogenized with one slack row so every
    column sums to the largest column sum. Cells outside the smallest face of
    the cone of ``A`` containing ``beta`` have a vanishing MLE; they are frozen
    at zero before iterating (rows with a zero statistic are the simplest such
    case). Without this the iteration approaches those zeros only at a rate
    of ``1/t`` and a loose tolerance leaves visible mass on them.

    :meth:`solve_many` runs independent problems side by side; every row
    gets exactly the arithmetic :meth:`solve` would give it.
    """

    BLOCK = 2048

    def __init__(self, model: ModelSpec, config: IpsConfig = IpsConfig()):
        A = model.matrix.array
        if (A < 0).any():
            raise NegativeEntryInA("generalized IPS needs a nonnegative configuration matrix")
        self.model = model
        self.config = config
        self.d = A.shape[0]
        col = A.sum(axis=0)
        self.s = int(col.max())
        self.slack = bool((col != self.s).any())
        self.A = np.vstack([A, self.s - col]) if self.slack else A.copy()
        self.Af = self.A.astype(float)
        self.expo = self.Af.T / self.s
        self.x = model.odds_array
        self.faces = FaceFinder(model.matrix) if config.restrict_to_face else None

    def solve(self, beta: Sequence, n: Optional[int] = None) -> MleResult:
        if len(beta) != self.d:
            raise DimensionMismatch(f"sufficient statistics have length {len(beta)}, expected {self.d}")
        if n is None:
            n = degree(self.model.matrix, beta)
        return self.solve_many([beta], [n])[0]

    def solve_many(self, betas, ns=None) -> BatchMle:
        """Solve every row of ``betas``; a missing total is taken from the degree."""
        if ns is None:
            ns = [None] * len(betas)
        if len(ns) != len(betas):
            raise DimensionMismatch("need one total per row")
        ns = [degree(self.model.matrix, bt) if nv is None else nv for bt, nv in zip(betas, ns)]
        betas = np.asarray(betas, dtype=float).reshape(-1, self.d)
        ns = np.asarray(ns, dtype=float).reshape(-1)
        if (ns <= 0).any():
            raise ValidationError("generalized IPS needs a positive total count")
        k, m = len(betas), self.A.shape[1]
        mu = np.zeros((k, m))
        its = np.zeros(k, dtype=np.int64)
        conv = np.zeros(k, dtype=bool)
        for lo in range(0, k, self.BLOCK):
            hi = min(k, lo + self.BLOCK)
            mu[lo:hi], its[lo:hi], conv[lo:hi] = self._block(betas[lo:hi], ns[lo:hi])
        return BatchMle(mu, its, conv)

    def _block(self, beta, n):
        A, Af, d = self.A, self.Af, self.d
        k = len(beta)
        b = beta
        if self.slack:
            b = np.c_[b, self.s * n - b.sum(axis=1)]
        ok = ~(b < 0).any(axis=1)
        pos = b > 0
        # cells touched by a zero statistic vanish
        live = ~((~pos)[:, :, None] & (A > 0)[None, :, :]).any(axis=1)
        if self.faces is not None:
            face, inside = self.faces.many(beta)
            live &= face
            ok &= inside
        # every positive statistic needs a live cell
        reach = (pos[:, :, None] & (A > 0)[None, :, :] & live[:, None, :]).any(axis=2)
        ok &= ~(pos & ~reach).any(axis=1)
        with np.errstate(divide="ignore"):
            target = np.where(pos, np.log(np.where(pos, b, 1.0) / n[:, None]), 0.0)
        x = np.where(live, self.x[None, :], 0.0)
        tot = x.sum(axis=1)
        p = x / np.where(tot > 0, tot, 1.0)[:, None]
        bc = beta
        tol = self.config.epsilon * d
        its = np.zeros(k, dtype=np.int64)
        conv = np.zeros(k, dtype=bool)
        act = np.flatnonzero(ok)
        for t in range(1, self.config.max_iterations + 1):
            if act.size == 0:
                break
            pa = p[act]
            q = _rowdot(pa, Af)
            pa_pos = pos[act]
            with np.errstate(divide="ignore", invalid="ignore"):
                diff = np.where(pa_pos, target[act] - np.log(np.where(pa_pos, q, 1.0)), 0.0)
            step = (diff[:, :, None] * self.expo.T[None, :, :]).sum(axis=1)
            pa = pa * np.exp(step)
            pa /= pa.sum(axis=1)[:, None]
            p[act] = pa
            its[act] = t
            err = np.abs(n[act, None] * _rowdot(pa, Af[:d]) - bc[act]).sum(axis=1)
            done = err < tol
            conv[act[done]] = True
            act = act[~done]
        mu = n[:, None] * p
        mu[~ok] = 0.0
        return mu, its, conv


def ips_solve(model: ModelSpec, beta: Sequence, n: Optional[int] = None,
              config: IpsConfig = IpsConfig()) -> MleResult:
    return IpsSolver(model, config).solve(beta, n)
