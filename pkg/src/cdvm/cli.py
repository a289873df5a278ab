"""Command-line entry point.

Subcommands wire generation, attribution, optimization and benchmarking
into reproducible runs: ``gen`` writes a dataset CSV, ``attribute`` writes
an attribution matrix file, ``prune`` writes one solution JSON per budget,
``bench`` writes report/overlap/spectrum CSVs plus figures, and
``analyze`` recomputes overlap and spectrum from saved solutions.

Every command is a pure function of its config and input files: re-running
produces byte-identical outputs. The only nondeterministic output is one
timestamped log line on stderr. Exit codes: 0 success, 2 config error,
3 I/O error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import bench as bench_mod
from . import plots
from .attribution import MsrConfig, load_T, msr_estimate, save_T
from .dataset import (
    LabeledDataset,
    LearnerSpec,
    gen_clustered,
    load_dataset,
    preset_dataset,
    save_dataset,
)
from .pruning import (
    SolverError,
    build_problem,
    candidate_kappas,
    default_kappa,
    grid_search,
    load_solution_dict,
    save_solution,
    solve_lp,
    verify_cluster_coverage,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    """A config or argument combination the CLI cannot act on."""


def _log(message: str) -> None:
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    print(f"[{stamp}] cdvm: {message}", file=sys.stderr)


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_centers(text: str) -> list[list[float]]:
    centers = []
    for group in text.split(";"):
        group = group.strip()
        if group:
            centers.append([float(tok) for tok in group.split(",")])
    return centers


def _threads_default() -> int:
    env = os.environ.get("CDVM_THREADS", "").strip()
    return int(env) if env else 1


def _learner_spec(args: argparse.Namespace) -> LearnerSpec:
    return LearnerSpec(kind=args.learner)


def _load_data(path: str) -> LabeledDataset:
    return load_dataset(path)


def _budget(value: float, n_train: int) -> int:
    if value <= 0:
        raise ConfigError(f"budget must be positive, got {value}")
    if value <= 1.0:
        return bench_mod.budget_for_level(value, n_train)
    budget = int(round(value))
    if budget > n_train:
        raise ConfigError(f"budget {budget} exceeds the {n_train} train instances")
    return budget


# -- subcommands ------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    if args.preset:
        data = preset_dataset(args.preset, seed=args.seed)
    else:
        if not (args.centers and args.sizes and args.labels and args.test_sizes):
            raise ConfigError("gen needs --preset or --centers/--sizes/--labels/--test-sizes")
        data = gen_clustered(
            _parse_centers(args.centers),
            _int_list(args.sizes),
            _int_list(args.labels),
            args.sigma,
            _int_list(args.test_sizes),
            seed=args.seed,
            val_sizes=_int_list(args.val_sizes) if args.val_sizes else None,
        )
    save_dataset(data, args.out)
    _log(
        f"gen wrote {args.out}: n={data.n_train} train, {data.n_val} val, "
        f"{data.n_test} test, K={data.num_clusters} clusters"
    )
    return EXIT_OK


def cmd_attribute(args: argparse.Namespace) -> int:
    data = _load_data(args.data)
    cfg = MsrConfig(
        p=args.p, num_models=args.models, seed=args.seed, learner=_learner_spec(args)
    )
    matrix = msr_estimate(data, cfg, threads=args.threads)
    save_T(matrix, args.out)
    undefined = int(matrix.undefined.sum())
    _log(
        f"attribute wrote {args.out}: num_models={matrix.num_models} p={matrix.p} "
        f"undefined_rows={undefined}"
    )
    return EXIT_OK


def cmd_prune(args: argparse.Namespace) -> int:
    matrix = load_T(args.t_file)
    data = _load_data(args.data) if args.data else None
    budgets = [_budget(b, matrix.n_train) for b in _float_list(args.budgets)]
    os.makedirs(args.out_dir, exist_ok=True)
    alphas = _float_list(args.grid_alphas) if args.grid_alphas else None
    kappas = _float_list(args.grid_kappas) if args.grid_kappas else None
    use_grid = args.grid or alphas is not None or kappas is not None
    if use_grid and data is None:
        raise ConfigError("grid search needs --data for validation scoring")
    written = []
    for budget in budgets:
        if use_grid:
            assert data is not None
            spec = _learner_spec(args)

            def evaluate(selected: np.ndarray) -> float:
                from .dataset import accuracy, train_learner

                return accuracy(train_learner(data, selected, spec), data, "val")

            grid_a = alphas if alphas is not None else list(bench_mod.DEFAULT_ALPHAS)
            grid_k = kappas if kappas is not None else candidate_kappas(matrix, budget)
            _, _, solution = grid_search(matrix, budget, grid_a, grid_k, evaluate)
        else:
            alpha = 0.5 if args.alpha == "default" else float(args.alpha)
            kappa = (
                default_kappa(matrix, budget)
                if args.kappa == "default"
                else float(args.kappa)
            )
            solution = solve_lp(build_problem(matrix, budget, alpha, kappa))
        path = os.path.join(args.out_dir, f"solution_S{budget}.json")
        save_solution(solution, path)
        written.append(path)
        if data is not None and data.cluster_of is not None:
            coverage = verify_cluster_coverage(solution.selected, data.cluster_of)
            counts = ",".join(str(int(c)) for c in coverage.counts)
            _log(
                f"prune S={budget}: objective={solution.objective:.6g} "
                f"fractional={solution.fractional_count} cluster_counts=[{counts}] "
                f"all_covered={coverage.all_covered}"
            )
        else:
            _log(
                f"prune S={budget}: objective={solution.objective:.6g} "
                f"fractional={solution.fractional_count}"
            )
    _log(f"prune wrote {len(written)} solution files to {args.out_dir}")
    return EXIT_OK


def _build_roster(args: argparse.Namespace, data: LabeledDataset) -> list:
    spec = _learner_spec(args)
    matrix = load_T(args.t_file) if args.t_file else None
    cdvm = bench_mod.CdvmStrategy(
        msr=MsrConfig(p=args.p, num_models=args.models, seed=args.seed, learner=spec),
        learner=spec,
        fixed_matrix=matrix,
        threads=args.threads,
    )
    available = {
        "random": lambda: bench_mod.RandomStrategy(base_seed=args.seed),
        "loo": lambda: bench_mod.loo_strategy(spec),
        "shapley": lambda: bench_mod.shapley_strategy(spec),
        "banzhaf": lambda: bench_mod.banzhaf_strategy(cdvm),
        "dataoob": lambda: bench_mod.dataoob_strategy(
            spec, num_bootstraps=args.bootstraps, base_seed=args.seed
        ),
        "cdvm": lambda: cdvm,
    }
    names = [tok.strip() for tok in args.methods.split(",") if tok.strip()]
    roster = []
    for name in names:
        if name not in available:
            raise ConfigError(f"unknown method {name!r}")
        if name == "shapley" and data.n_train > 20:
            raise ConfigError(
                f"shapley enumeration is infeasible for n={data.n_train} (> 20)"
            )
        roster.append(available[name]())
    return roster


def _default_methods(data: LabeledDataset) -> str:
    names = ["random", "loo"]
    if data.n_train <= 20:
        names.append("shapley")
    names += ["banzhaf", "dataoob", "cdvm"]
    return ",".join(names)


def cmd_bench(args: argparse.Namespace) -> int:
    data = _load_data(args.data)
    if args.methods == "auto":
        args.methods = _default_methods(data)
    roster = _build_roster(args, data)
    levels = tuple(_float_list(args.levels))
    report = bench_mod.retention_eval(
        data, _learner_spec(args), roster, levels=levels, seeds=args.seeds
    )
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = os.path.join(args.out_dir, "report.csv")
    bench_mod.save_report_csv(report, report_path)

    spectrum_method = "cdvm" if "cdvm" in report.methods else report.methods[-1]
    sets_by_level = {
        lv: [
            report.retained[(spectrum_method, lv, seed)]
            for seed in sorted({s for (_, _, s) in report.retained})
        ]
        for lv in report.levels
    }
    levels_list, matrix = bench_mod.overlap_matrix(sets_by_level)
    overlap_path = os.path.join(args.out_dir, "overlap.csv")
    bench_mod.save_overlap_csv(levels_list, matrix, overlap_path)

    freqs = bench_mod.selection_frequencies(report, spectrum_method, data.n_train)
    entries = bench_mod.frequency_spectrum(freqs)
    spectrum_path = os.path.join(args.out_dir, "spectrum.csv")
    bench_mod.save_spectrum_csv(entries, spectrum_path)

    if not args.no_figures:
        plots.save_retention_plot(report, os.path.join(args.out_dir, "retention.png"))
        plots.save_overlap_heatmap(
            levels_list, matrix, os.path.join(args.out_dir, "overlap.png")
        )
        plots.save_spectrum_plot(entries, os.path.join(args.out_dir, "spectrum.png"))
    _log(
        f"bench wrote {report_path}, {overlap_path}, {spectrum_path} "
        f"({len(report.rows)} cells, spectrum method {spectrum_method!r})"
    )
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    paths = sorted(args.solutions)
    if not paths:
        raise ConfigError("analyze needs at least one solution file")
    by_budget: dict[int, list[list[int]]] = {}
    n_train = 0
    for path in paths:
        payload = load_solution_dict(path)
        by_budget.setdefault(int(payload["S"]), []).append(payload["selected"])
        n_train = max(n_train, max(payload["selected"], default=0) + 1)
    if args.n_train:
        n_train = args.n_train
    counts = {len(sets) for sets in by_budget.values()}
    if len(counts) != 1:
        raise ConfigError("every budget needs the same number of solution files")
    os.makedirs(args.out_dir, exist_ok=True)
    sets_by_level = {float(budget): sets for budget, sets in by_budget.items()}
    levels_list, matrix = bench_mod.overlap_matrix(sets_by_level)
    bench_mod.save_overlap_csv(levels_list, matrix, os.path.join(args.out_dir, "overlap.csv"))

    num_runs = counts.pop()
    budgets = sorted(by_budget, reverse=True)
    freq = np.zeros((n_train, len(budgets)))
    for col, budget in enumerate(budgets):
        for selected in by_budget[budget]:
            freq[np.asarray(selected, dtype=np.int64), col] += 1.0
    freq /= num_runs
    entries = bench_mod.frequency_spectrum(freq)
    bench_mod.save_spectrum_csv(entries, os.path.join(args.out_dir, "spectrum.csv"))

    if not args.no_figures:
        plots.save_overlap_heatmap(
            levels_list, matrix, os.path.join(args.out_dir, "overlap.png")
        )
        plots.save_spectrum_plot(entries, os.path.join(args.out_dir, "spectrum.png"))
    _log(f"analyze wrote overlap and spectrum for {len(paths)} solutions to {args.out_dir}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file of defaults; explicit flags win")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: CDVM_THREADS or 1); results are identical "
        "for any thread count",
    )
    parser.add_argument(
        "--learner",
        default="nearest-centroid",
        choices=("nearest-centroid", "multinomial-logistic"),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdvm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a clustered dataset CSV")
    _add_common(gen)
    gen.add_argument("--preset", choices=("fig1",), help="named preset dataset")
    gen.add_argument("--centers", help="semicolon-separated points, e.g. '-2,0.5;2.5,0'")
    gen.add_argument("--sizes", help="comma-separated train cluster sizes")
    gen.add_argument("--labels", help="comma-separated class id per cluster")
    gen.add_argument("--test-sizes", help="comma-separated test cluster sizes")
    gen.add_argument("--val-sizes", help="comma-separated val cluster sizes")
    gen.add_argument("--sigma", type=float, default=0.1)
    gen.add_argument("--out", default="dataset.csv")

    attribute = sub.add_parser("attribute", help="estimate an attribution matrix")
    _add_common(attribute)
    attribute.add_argument("--data", required=True, help="dataset CSV path")
    attribute.add_argument("--p", type=float, default=0.03, help="inclusion probability")
    attribute.add_argument("--models", type=int, default=5000, help="subset models to train")
    attribute.add_argument("--out", default="attribution.txt")

    prune = sub.add_parser("prune", help="solve the selection program per budget")
    _add_common(prune)
    prune.add_argument("--t-file", required=True, help="attribution matrix file")
    prune.add_argument("--data", help="dataset CSV (enables coverage summary and grids)")
    prune.add_argument("--budgets", default="0.3,0.25,0.2,0.15,0.1,0.05",
                       help="retention fractions (<= 1) or absolute counts")
    prune.add_argument("--alpha", default="default", help="trade-off weight or 'default'")
    prune.add_argument("--kappa", default="default", help="influence cap or 'default'")
    prune.add_argument("--grid", action="store_true", help="grid-search alpha and kappa")
    prune.add_argument("--grid-alphas", help="comma-separated alpha grid")
    prune.add_argument("--grid-kappas", help="comma-separated kappa grid")
    prune.add_argument("--out-dir", default="solutions")

    bench = sub.add_parser("bench", help="retention benchmark over a method roster")
    _add_common(bench)
    bench.add_argument("--data", required=True, help="dataset CSV path")
    bench.add_argument("--t-file", help="reuse a saved attribution matrix for all seeds")
    bench.add_argument("--methods", default="auto",
                       help="comma-separated roster (default: all feasible)")
    bench.add_argument("--levels", default="0.3,0.25,0.2,0.15,0.1,0.05")
    bench.add_argument("--seeds", type=int, default=25, help="number of repetitions")
    bench.add_argument("--p", type=float, default=0.03)
    bench.add_argument("--models", type=int, default=5000)
    bench.add_argument("--bootstraps", type=int, default=1000)
    bench.add_argument("--no-figures", action="store_true")
    bench.add_argument("--out-dir", default="bench-out")

    analyze = sub.add_parser("analyze", help="overlap/spectrum from saved solutions")
    _add_common(analyze)
    analyze.add_argument("solutions", nargs="*", help="solution JSON files")
    analyze.add_argument("--n-train", type=int, default=0,
                         help="train size (default: inferred from selections)")
    analyze.add_argument("--no-figures", action="store_true")
    analyze.add_argument("--out-dir", default="analysis")

    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "attribute": cmd_attribute,
    "prune": cmd_prune,
    "bench": cmd_bench,
    "analyze": cmd_analyze,
}


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    # Two-pass parse so JSON config supplies defaults and explicit flags win.
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config) as fh:
                payload = json.load(fh)
        except OSError:
            raise
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {known.config!r} is not valid JSON: {exc}")
        if not isinstance(payload, dict):
            raise ConfigError("config file must hold a JSON object")
        defaults = {key.replace("-", "_"): value for key, value in payload.items()}
        for action in parser._subparsers._group_actions:  # type: ignore[union-attr]
            for sub in action.choices.values():  # type: ignore[union-attr]
                sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # argparse reports usage errors itself
            return int(exc.code or 0)
        if getattr(args, "threads", None) is None:
            args.threads = _threads_default()
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"cdvm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"cdvm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cdvm: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"cdvm: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
