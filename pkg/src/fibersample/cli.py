"""Command-line interface: ``fibersample {sample,chain,compare,reproduce}``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import (
    EmpiricalDistribution,
    chi_squares,
    effective_sample_size,
    empirical_distribution,
    total_variation,
    tv_squared,
)
from .errors import ModelMismatch, NumericalError, ValidationError
from .experiments import (
    PRESET_NAMES,
    ExperimentPreset,
    exact_chi_square_law,
    moves_for,
    preset,
    reproduce,
    sub_seed,
)
from .files import FORMATS, default_labels, load_model, load_moves, read_tables, write_tables
from .metropolis import ChainConfig, run_chain
from .model import ModelSpec
from .sampler import draw_tables, estimator_from_name

ESTIMATORS = ("exact", "rational", "decomposable", "ips")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class Target:
    """What a command works on: a preset or a model file."""

    model: ModelSpec
    b: Optional[tuple]
    expected: Optional[tuple]
    labels: tuple
    name: str
    preset: Optional[ExperimentPreset] = None
    moves: Optional[list] = None
    structure: object = None
    initial: Optional[tuple] = None
    shape: Optional[tuple] = None

    def estimator(self, name, epsilon, max_iter):
        if self.preset is not None:
            return self.preset.make_estimator(name, epsilon, max_iter)
        return estimator_from_name(name or "ips", self.model, epsilon=0.1 if epsilon is None else epsilon,
                                   max_iterations=1000 if max_iter is None else max_iter,
                                   structure=self.structure, shape=self.shape)

    def chi_squares(self, tables) -> Optional[np.ndarray]:
        if self.expected is None:
            return None
        return chi_squares(np.asarray(tables).reshape(-1, self.model.matrix.m), self.expected)


def _target(args) -> Target:
    if args.preset and args.model_file:
        raise ValidationError("give either --preset or --model-file, not both")
    if args.preset:
        p = preset(args.preset, args.s)
        return Target(p.model, p.b, p.expected, p.labels, p.name, preset=p,
                      initial=p.initial_table, shape=p.shape)
    if not args.model_file:
        raise ValidationError("one of --preset or --model-file is required")
    mf = load_model(args.model_file)
    if mf.preset:
        p = preset(mf.preset, args.s)
        if p.model.matrix.entries != mf.model.matrix.entries:
            raise ModelMismatch(f"model file matrix does not match preset {mf.preset}")
    return Target(mf.model, mf.b, mf.expected, mf.labels or default_labels(mf.model.matrix.m),
                  str(args.model_file), moves=mf.moves, structure=mf.structure, initial=mf.initial)


def _dist_json(values) -> dict:
    if values is None or len(values) == 0:
        return {"support": [], "masses": []}
    return empirical_distribution(values).to_json()


def _emit(obj: dict, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_sample(args) -> int:
    t = _target(args)
    if t.b is None:
        raise ValidationError("the model file gives no sufficient statistics 'b'")
    if args.count < 0:
        raise ValidationError("--count must be nonnegative")
    est = t.estimator(args.estimator, args.epsilon, args.max_iter)
    start = time.perf_counter()
    res = draw_tables(t.model, t.b, est, args.count, args.seed, max_retries=args.max_retries)
    seconds = time.perf_counter() - start
    chi = t.chi_squares(res.tables)
    meta = {"target": t.name, "s": args.s if t.preset else None, "seed": args.seed,
            "estimator": repr(est), "count": args.count, "b": list(t.b)}
    if args.out:
        write_tables(args.out, res.tables, labels=t.labels, fmt=args.format, meta=meta,
                     chi_square=chi, retries=res.retries)
    summary = dict(meta)
    summary["chi_square_distribution"] = _dist_json(chi)
    summary["retries"] = {"total": int(res.retries.sum()),
                          "max": int(res.retries.max()) if args.count else 0,
                          "histogram": {str(k): v for k, v in sorted(Counter(res.retries.tolist()).items())}}
    summary["ips_iterations"] = {str(k): v for k, v in sorted(res.kernel.iterations.items())}
    _emit(summary, args.summary)
    print(f"drew {args.count} tables in {seconds:.2f} s", file=sys.stderr)
    return 0


def cmd_chain(args) -> int:
    t = _target(args)
    moves = load_moves(args.moves) if args.moves else t.moves
    basis = moves_for(t.preset, t.model, moves)
    if t.initial is None:
        raise ValidationError("the model file gives no initial table")
    start = time.perf_counter()
    res = run_chain(t.model, ChainConfig(t.initial, args.burn_in, args.length, args.seed), basis,
                    thinning=args.thinning)
    seconds = time.perf_counter() - start
    tables = res.tables if len(res) else np.zeros((0, t.model.matrix.m), dtype=np.int64)
    chi = t.chi_squares(tables)
    meta = {"target": t.name, "s": args.s if t.preset else None, "seed": args.seed,
            "burn_in": args.burn_in, "length": args.length, "thinning": args.thinning}
    if args.out:
        write_tables(args.out, tables, labels=t.labels, fmt=args.format, meta=meta,
                     chi_square=chi, accepted=res.accepted)
    summary = dict(meta)
    summary["acceptance_rate"] = res.acceptance_rate if res.proposals else None
    summary["chi_square_distribution"] = _dist_json(chi)
    series = chi if chi is not None else (tables[:, 0] if len(tables) else None)
    try:
        summary["ess"] = effective_sample_size(series).to_json() if series is not None else None
    except ValidationError as exc:
        summary["ess"] = {"error": str(exc)}
    _emit(summary, args.summary)
    print(f"ran {args.burn_in + args.length} steps in {seconds:.2f} s", file=sys.stderr)
    return 0


def _source_distribution(t: Target, source: str, args, slot: int) -> EmpiricalDistribution:
    kind, _, est = source.partition(":")
    if t.expected is None and kind != "exact-law":
        raise ValidationError("the model file gives no expected values for the chi-square")
    if kind == "exact-law":
        if t.preset is None:
            raise ValidationError("exact-law needs a preset")
        return exact_chi_square_law(t.preset)
    if kind == "direct":
        estimator = t.estimator(est or args.estimator, args.epsilon, args.max_iter)
        res = draw_tables(t.model, t.b, estimator, args.count, sub_seed(args.seed, slot),
                          max_retries=args.max_retries)
        return empirical_distribution(t.chi_squares(res.tables))
    if kind == "chain":
        basis = moves_for(t.preset, t.model, load_moves(args.moves) if args.moves else t.moves)
        res = run_chain(t.model, ChainConfig(t.initial, args.burn_in, args.length, sub_seed(args.seed, slot)),
                        basis)
        return empirical_distribution(t.chi_squares(res.tables))
    raise ValidationError(f"unknown source {source!r}; use direct[:estimator], chain or exact-law")


def _file_distribution(path, t: Optional[Target]) -> tuple:
    f = read_tables(path, t.model if t else None, t.b if t else None)
    if t is not None and t.expected is not None:
        values = t.chi_squares(f.tables)
    elif f.chi_square is not None:
        values = f.chi_square
    else:
        raise ValidationError(f"{path} has no chi-square column; give --preset or --model-file")
    return f, empirical_distribution(values)


def cmd_compare(args) -> int:
    t = _target(args) if (args.preset or args.model_file) else None
    if args.files:
        if len(args.files) != 2:
            raise ValidationError("compare takes exactly two table files")
        fa, pa = _file_distribution(args.files[0], t)
        fb, pb = _file_distribution(args.files[1], t)
        if fa.tables.shape[1] != fb.tables.shape[1] or fa.labels != fb.labels:
            raise ModelMismatch("the two files describe different models")
        names = list(args.files)
    else:
        if t is None:
            raise ValidationError("compare needs two files or a preset recipe")
        pa = _source_distribution(t, args.a, args, 0)
        pb = _source_distribution(t, args.b, args, 1)
        names = [args.a, args.b]
    _emit({"a": {"source": names[0], **pa.to_json()}, "b": {"source": names[1], **pb.to_json()},
           "tv": total_variation(pa, pb), "tv_squared": tv_squared(pa, pb)}, args.summary)
    return 0


def cmd_reproduce(args) -> int:
    def progress(cell):
        print(f"{cell.model} s={cell.s} ({cell.burn_in},{cell.length}) tv={cell.mean_tv:.4f}",
              file=sys.stderr)

    report = reproduce(args.table, repetitions=args.repetitions, seed=args.seed,
                       reference_count=args.count, scales=args.s_list or None,
                       cache=args.cache_dir, use_cache=not args.no_cache, progress=progress)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    print(report.matrix_text())
    timing = report.to_json(timings=True)
    for ref, info in timing["references"].items():
        print(f"reference {ref}: {info['source']} {info['count']} draws, {info.get('seconds', 0):.1f} s",
              file=sys.stderr)
    return 0


def _common(p, *, sampling=False, chain=False):
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--model-file")
    p.add_argument("--s", type=int, default=1, help="scale parameter of the preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--summary", help="also write the JSON summary here")
    if sampling:
        p.add_argument("--count", type=int, default=1000)
        p.add_argument("--estimator", choices=ESTIMATORS)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--max-retries", type=int, default=100)
    if chain:
        p.add_argument("--burn-in", type=int, default=10**4)
        p.add_argument("--length", type=int, default=10**4)
        p.add_argument("--moves", help="JSON or CSV move file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fibersample", description="Sampling contingency tables with fixed sufficient statistics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="direct sampling")
    _common(p, sampling=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("chain", help="Metropolis chain")
    _common(p, chain=True)
    p.add_argument("--thinning", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("compare", help="TV distance between chi-square distributions")
    _common(p, sampling=True, chain=True)
    p.add_argument("files", nargs="*")
    p.add_argument("--a", default="direct", help="direct[:estimator], chain or exact-law")
    p.add_argument("--b", default="chain")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce", help="rerun a TV grid")
    p.add_argument("--table", type=int, choices=(1, 4), required=True)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, help="reference draws per model and scale")
    p.add_argument("--s", dest="s_list", type=int, action="append", help="restrict to this scale (repeatable)")
    p.add_argument("--cache-dir")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
