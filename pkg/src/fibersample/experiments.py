"""Model presets, reference distributions and the TV-grid experiments."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import (
    EmpiricalDistribution,
    chi_squares,
    effective_sample_size,
    empirical_distribution,
    total_variation,
    tv_squared,
)
from .errors import NoBasisAvailable, UnknownPreset, ValidationError
from .fiber import FiberOracle, monomial_weight
from .metropolis import ChainConfig, basis_no_three_way, basis_two_way, check_moves, run_chain
from .mle import DecomposableStructure, two_way_independence_mle
from .model import (
    ModelSpec,
    cell_labels,
    make_model,
    no_three_way_entries,
    quasi_independence_entries,
    sufficient_statistics,
    two_way_entries,
)
from .sampler import Estimator, draw_tables, estimator_from_name

PRESET_NAMES = ("indep-4x5", "nonindep-4x5", "nonindep-3x4", "no3way-2x3x3", "indep-2x2", "quasi-3x3")

NONINDEP_4X5_ODDS = (
    (3, 2, 1, 1, 1),
    (2, 2, 1, 1, 1),
    (1, 1, 1, 1, 1),
    (1, 1, 1, 1, 1),
)
NONINDEP_3X4_ODDS = (
    ("3", "2", "100/101", "1"),
    ("200/104", "200/103", "100/102", "1"),
    ("1", "1", "1", "1"),
)


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    s: int
    model: ModelSpec
    b: tuple
    expected: tuple
    labels: tuple
    estimator: str
    epsilon: float
    initial_table: tuple
    shape: Optional[tuple] = None
    basis_kind: Optional[str] = None
    max_iterations: int = 1000

    @property
    def n(self) -> int:
        return int(sum(self.initial_table))

    def make_estimator(self, name: Optional[str] = None, epsilon: Optional[float] = None,
                       max_iterations: Optional[int] = None) -> Estimator:
        return estimator_from_name(
            name or self.estimator, self.model,
            epsilon=self.epsilon if epsilon is None else epsilon,
            max_iterations=self.max_iterations if max_iterations is None else max_iterations,
            shape=self.shape,
            structure=DecomposableStructure.two_way(*self.shape) if self.shape and len(self.shape) == 2 else None,
        )

    def basis(self) -> list:
        if self.basis_kind == "two-way":
            return basis_two_way(*self.shape)
        if self.basis_kind == "no-three-way":
            return basis_no_three_way()
        raise NoBasisAvailable(f"preset {self.name} has no built-in Markov basis; supply a move file")

    def chi_squares(self, tables) -> np.ndarray:
        return chi_squares(tables, self.expected)


def _two_way(name, rows, cols, s, odds, estimator, epsilon):
    model = make_model(two_way_entries(rows, cols).tolist(),
                       None if odds is None else [v for row in odds for v in row])
    table = (s,) * (rows * cols)
    return ExperimentPreset(
        name=name, s=s, model=model, b=sufficient_statistics(model.matrix, table),
        expected=(float(s),) * (rows * cols), labels=tuple(cell_labels((rows, cols))),
        estimator=estimator, epsilon=epsilon, initial_table=table,
        shape=(rows, cols), basis_kind="two-way")


def preset(name: str, s: int = 1) -> ExperimentPreset:
    """Build a named preset at scale ``s``."""
    if name not in PRESET_NAMES:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    if int(s) != s or s < 1:
        raise ValidationError(f"scale s must be a positive integer, got {s}")
    s = int(s)
    if name == "indep-4x5":
        return _two_way(name, 4, 5, s, None, "rational", 0.1)
    if name == "nonindep-4x5":
        return _two_way(name, 4, 5, s, NONINDEP_4X5_ODDS, "ips", 0.1)
    if name == "nonindep-3x4":
        return _two_way(name, 3, 4, s, NONINDEP_3X4_ODDS, "ips", 0.1)
    if name == "no3way-2x3x3":
        model = make_model(no_three_way_entries().tolist())
        table = (s,) * 18
        return ExperimentPreset(
            name=name, s=s, model=model, b=sufficient_statistics(model.matrix, table),
            expected=(float(s),) * 18, labels=tuple(cell_labels((2, 3, 3))),
            estimator="ips", epsilon=0.005, initial_table=table, shape=(2, 3, 3),
            basis_kind="no-three-way")
    if name == "indep-2x2":
        model = make_model(two_way_entries(2, 2).tolist())
        table = (s, 0, s, s)
        b = sufficient_statistics(model.matrix, table)
        expected = tuple(float(v) for v in two_way_independence_mle(b[:2], b[2:], sum(b[:2])))
        return ExperimentPreset(
            name=name, s=s, model=model, b=b, expected=expected, labels=tuple(cell_labels((2, 2))),
            estimator="exact", epsilon=0.1, initial_table=table, shape=(2, 2), basis_kind="two-way")
    model = make_model(quasi_independence_entries().tolist())
    table = (s,) * 8
    labels = tuple(cell_labels((3, 3))[:8])
    return ExperimentPreset(
        name=name, s=s, model=model, b=sufficient_statistics(model.matrix, table),
        expected=(float(s),) * 8, labels=labels, estimator="ips", epsilon=0.1, initial_table=table)


# reference distributions ---------------------------------------------------------

def exact_chi_square_law(p: ExperimentPreset, cap: int = 10**6) -> EmpiricalDistribution:
    """Chi-square law under the exact conditional distribution, by fiber enumeration."""
    oracle = FiberOracle(p.model, cap)
    tables = oracle.fiber(p.b)
    z = oracle.z(p.b).value
    law: dict = {}
    values = p.chi_squares(np.array(tables))
    for t, v in zip(tables, values):
        w = monomial_weight(p.model.odds, t) / z
        key = round(float(v), 9)
        law[key] = law.get(key, Fraction(0)) + w
    return EmpiricalDistribution.from_mapping({k: float(v) for k, v in law.items()})


def cache_dir(path: Optional[os.PathLike] = None) -> Path:
    if path is not None:
        return Path(path)
    env = os.environ.get("FIBERSAMPLE_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fibersample"


def _cache_key(**parts) -> str:
    raw = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(raw.encode()).hexdigest()[:20]


@dataclass
class Reference:
    distribution: EmpiricalDistribution
    count: int
    source: str
    retries: int = 0
    seconds: float = 0.0


def direct_reference(p: ExperimentPreset, count: int, seed: int = 0, *,
                     estimator: Optional[str] = None, epsilon: Optional[float] = None,
                     cache: Optional[os.PathLike] = None, use_cache: bool = True) -> Reference:
    """Chi-square distribution of ``count`` direct draws, cached on disk."""
    est = p.make_estimator(estimator, epsilon)
    key = _cache_key(preset=p.name, s=p.s, estimator=repr(est), count=count, seed=seed, v=1)
    path = cache_dir(cache) / f"reference-{p.name}-s{p.s}-{key}.json"
    if use_cache and path.exists():
        data = json.loads(path.read_text())
        dist = EmpiricalDistribution(tuple(data["support"]), tuple(data["masses"]))
        return Reference(dist, data["count"], "cache", data.get("retries", 0), data.get("seconds", 0.0))
    start = time.perf_counter()
    res = draw_tables(p.model, p.b, est, count, seed)
    seconds = time.perf_counter() - start
    dist = empirical_distribution(p.chi_squares(res.tables))
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"support": list(dist.support), "masses": list(dist.masses),
                                   "count": count, "retries": int(res.retries.sum()),
                                   "seconds": seconds}))
        tmp.replace(path)
    return Reference(dist, count, "direct", int(res.retries.sum()), seconds)


def chain_distribution(p: ExperimentPreset, burn_in: int, length: int, seed,
                       basis: Optional[Sequence] = None) -> EmpiricalDistribution:
    res = run_chain(p.model, ChainConfig(p.initial_table, burn_in, length, seed),
                    basis if basis is not None else p.basis())
    return empirical_distribution(p.chi_squares(res.tables))


def sub_seed(seed: int, *path: int) -> int:
    """Independent integer seed for the experiment cell addressed by ``path``."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, np.uint64)[0])


# grids -----------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    table_id: int
    models: tuple
    scales: tuple
    pairs: tuple
    reference_count: int
    exact_reference_scales: tuple = ()


TABLE_GRIDS = {
    1: GridSpec(1, ("indep-4x5", "nonindep-4x5"), (1, 2, 5, 10),
                ((0, 10**3), (10**3, 10**4), (10**4, 10**4), (10**4, 10**5)), 10**6),
    4: GridSpec(4, ("no3way-2x3x3",), (1, 2, 5, 10),
                ((10**3, 10**4), (10**4, 10**4), (10**5, 10**4), (10**5, 10**5)), 5 * 10**5,
                exact_reference_scales=(1,)),
}


@dataclass
class GridCell:
    model: str
    s: int
    burn_in: int
    length: int
    tv: list
    tv_sq: list
    chain_seconds: list

    @property
    def mean_tv(self) -> float:
        return float(np.mean(self.tv))

    def to_json(self) -> dict:
        return {"model": self.model, "s": self.s, "burn_in": self.burn_in, "length": self.length,
                "mean_tv": self.mean_tv, "mean_tv_squared": float(np.mean(self.tv_sq)),
                "tv": self.tv}


@dataclass
class GridReport:
    table_id: int
    repetitions: int
    seed: int
    cells: list = field(default_factory=list)
    references: dict = field(default_factory=dict)

    @property
    def noisy(self) -> bool:
        return self.repetitions < 2

    def tv(self, model: str, s: int, pair: tuple) -> float:
        for c in self.cells:
            if (c.model, c.s, (c.burn_in, c.length)) == (model, s, tuple(pair)):
                return c.mean_tv
        raise KeyError((model, s, pair))

    def to_json(self, timings: bool = False) -> dict:
        out = {
            "table": self.table_id, "repetitions": self.repetitions, "seed": self.seed,
            "single_run_noise_warning": self.noisy,
            "references": {k: {kk: vv for kk, vv in v.items() if timings or kk != "seconds"}
                           for k, v in self.references.items()},
            "cells": [c.to_json() for c in self.cells],
        }
        if timings:
            out["chain_seconds"] = [{"model": c.model, "s": c.s, "burn_in": c.burn_in,
                                     "length": c.length, "mean": float(np.mean(c.chain_seconds))}
                                    for c in self.cells]
        return out

    def matrix_text(self) -> str:
        pairs = sorted({(c.burn_in, c.length) for c in self.cells}, key=lambda x: (x[0] + x[1], x))
        head = "model s " + " ".join(f"({b},{n})" for b, n in pairs)
        lines = [head]
        rows = {}
        for c in self.cells:
            rows.setdefault((c.model, c.s), {})[(c.burn_in, c.length)] = c.mean_tv
        for (model, s), vals in rows.items():
            lines.append(f"{model} {s} " + " ".join(
                f"{vals[p]:.3f}" if p in vals else "-" for p in pairs))
        if self.noisy:
            lines.append("note: single repetition, expect wide Monte Carlo noise")
        return "\n".join(lines)


def reproduce(table_id: int, *, repetitions: int = 10, seed: int = 0,
              reference_count: Optional[int] = None, scales: Optional[Sequence[int]] = None,
              models: Optional[Sequence[str]] = None, pairs: Optional[Sequence[tuple]] = None,
              cache: Optional[os.PathLike] = None, use_cache: bool = True,
              progress=None) -> GridReport:
    """Rerun a TV grid: Metropolis chains against a direct-sampling reference."""
    if table_id not in TABLE_GRIDS:
        raise ValidationError(f"no grid for table {table_id}; choose 1 or 4")
    if repetitions < 1:
        raise ValidationError("repetitions must be at least 1")
    grid = TABLE_GRIDS[table_id]
    count = grid.reference_count if reference_count is None else reference_count
    report = GridReport(table_id, repetitions, seed)
    mi_list = list(models or grid.models)
    for mi, name in enumerate(mi_list):
        for s in scales or grid.scales:
            p = preset(name, s)
            if s in grid.exact_reference_scales:
                ref = Reference(exact_chi_square_law(p), 0, "exact")
            else:
                ref = direct_reference(p, count, sub_seed(seed, table_id, mi, s), cache=cache,
                                       use_cache=use_cache)
            report.references[f"{name}/s={s}"] = {"source": ref.source, "count": ref.count,
                                                  "retries": ref.retries, "seconds": ref.seconds}
            basis = p.basis()
            for pi, (burn, length) in enumerate(pairs or grid.pairs):
                cell = GridCell(name, s, burn, length, [], [], [])
                for r in range(repetitions):
                    start = time.perf_counter()
                    dist = chain_distribution(p, burn, length, sub_seed(seed, table_id, mi, s, pi, r), basis)
                    cell.chain_seconds.append(time.perf_counter() - start)
                    cell.tv.append(total_variation(dist, ref.distribution))
                    cell.tv_sq.append(tv_squared(dist, ref.distribution))
                report.cells.append(cell)
                if progress is not None:
                    progress(cell)
    return report


def chain_ess(p: ExperimentPreset, burn_in: int, length: int, seed) -> tuple:
    """Run a chain and return ``(ChainResult, EssReport of its chi-square values)``."""
    res = run_chain(p.model, ChainConfig(p.initial_table, burn_in, length, seed), p.basis())
    return res, effective_sample_size(p.chi_squares(res.tables))


def moves_for(p: Optional[ExperimentPreset], model: ModelSpec, moves: Optional[Sequence]) -> list:
    if moves is not None:
        try:
            return check_moves(model.matrix, moves)
        except ValidationError as exc:
            raise NoBasisAvailable(f"invalid move list: {exc}") from exc
    if p is None:
        raise NoBasisAvailable("no built-in Markov basis for a custom model; supply a move file")
    return p.basis()

