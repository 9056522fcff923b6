"""Command-line entry point: ``hpss <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 backend or storage
failure (the run is left suspended and can be resumed), 4 corrupt journal or
manifest, 5 brute-force refused because the space exceeds the cap.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from pathlib import Path
from typing import Sequence

import yaml

from . import __version__, plots
from .dataset import load_dataset
from .errors import BackendError, ConfigError, IntegrityError, StorageError, StructuralError
from .fitness import LiveBackend, ReplayBackend, SyntheticBackend
from .judge import ChatClient, Decode, Judge, ResponseCache
from .landscape import SyntheticLandscape, interacting_landscape, separable_landscape
from .prompts import load_pack, render_evaluation_prompt, required_aux, select_icl_examples
from .report import write_report
from .search import ALGORITHMS, SearchConfig, run_search
from .space import FactorSpace, enumerate_strategies, load_space
from .store import RunDir, RunManifest, create_run, execute, read_journal, resume, write_atomic

log = logging.getLogger("hpss")

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_INTEGRITY, EXIT_REFUSED = 0, 2, 3, 4, 5
DEFAULT_CAP = 10_000


class Refused(Exception):
    pass


# ---------------------------------------------------------------- shared helpers


def _space(args) -> FactorSpace:
    overrides = {}
    for item in args.baseline or ():
        fid, _, vid = item.partition("=")
        if not vid:
            raise ConfigError(f"--baseline expects FACTOR=VALUE, got {item!r}")
        overrides[fid] = vid
    return load_space(args.space, **overrides)


def _read_mapping(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping of factor id to value id")
    return {str(k): str(v) for k, v in data.items()}


def backend_spec(args, space: FactorSpace) -> dict:
    """JSON-serializable description of the backend; stored in the run manifest."""
    if args.backend == "synth":
        if args.landscape_file:
            land = SyntheticLandscape.from_dict(json.loads(Path(args.landscape_file).read_text()))
        elif args.landscape == "separable":
            land = separable_landscape(space, args.landscape_seed, sigma=args.sigma)
        else:
            land = interacting_landscape(space, args.landscape_seed, sigma=args.sigma)
        return {"kind": "synth", "landscape": land.to_dict(), "noise_seed": args.landscape_seed}
    if args.backend == "replay":
        if not args.replay_journal:
            raise ConfigError("--backend replay needs --replay-journal")
        return {"kind": "replay", "journal": str(Path(args.replay_journal).resolve())}
    if not args.dataset:
        raise ConfigError("--backend live needs --dataset")
    if not args.model:
        raise ConfigError("--backend live needs --model")
    Decode.parse(args.decode)
    return {
        "kind": "live",
        "dataset": str(Path(args.dataset).resolve()),
        "pack": args.pack,
        "model": args.model,
        "decode": args.decode,
        "parallelism": args.parallelism,
        "icl_seed": args.icl_seed,
    }


def build_backend(spec: dict, space: FactorSpace, cache_dir: Path | None):
    kind = spec.get("kind")
    if kind == "synth":
        return SyntheticBackend(space, SyntheticLandscape.from_dict(spec["landscape"]), spec.get("noise_seed", 0))
    if kind == "replay":
        return ReplayBackend(space, read_journal(spec["journal"], space))
    if kind == "live":
        dataset = load_dataset(spec["dataset"])
        pack = load_pack(spec.get("pack") or dataset.task_family)
        judge = Judge(ChatClient(spec["model"]), ResponseCache(cache_dir))
        return LiveBackend(space, dataset, pack, judge, Decode.parse(spec.get("decode", "greedy")),
                           parallelism=spec.get("parallelism", 8), icl_seed=spec.get("icl_seed", 0))
    raise ConfigError(f"unknown backend kind {kind!r}")


def _dataset_space(space: FactorSpace, spec: dict) -> tuple[FactorSpace, str | None]:
    """Apply a live dataset's baseline scale to the space, if both define one."""
    if spec["kind"] != "live":
        return space, None
    dataset = load_dataset(spec["dataset"])
    if dataset.baseline_scale is not None and "scale" in {f.id for f in space.factors}:
        space = space.with_baseline(scale=dataset.baseline_scale)
    return space, dataset.id


def _config(args) -> SearchConfig:
    return SearchConfig(k=args.k, g=args.g, rho=args.rho, tau=args.tau, lam=args.lam,
                        budget=args.budget, seed=args.seed)


def _print_result(space_or_strategy: dict, score: float, n: int, report: Path | None):
    print(f"best score: {score!r}")
    print("best strategy: " + json.dumps(space_or_strategy, sort_keys=False))
    print(f"evaluations: {n}")
    if report is not None:
        print(f"report: {report}")


# ---------------------------------------------------------------- commands


def cmd_search(args) -> int:
    if args.resume:
        run = RunDir(args.resume)
        m = run.manifest()
        if m.status == "complete":
            print(f"run {m.run_id} is already complete")
            return EXIT_OK
        space = m.factor_space()
    else:
        space = _space(args)
        spec = backend_spec(args, space)
        space, dataset_id = _dataset_space(space, spec)
        config = _config(args)
        if args.algo == "hpss" and config.budget < space.init_cost:
            raise ConfigError(f"budget {config.budget} is below the initialization cost {space.init_cost}")
        root = Path(args.run_dir or f"runs/{args.algo}-{space.id}-seed{args.seed}")
        m = RunManifest(root.name, space.to_config(), args.algo, config.to_dict(), spec, dataset_id)
        run = create_run(root, m)
    backend = build_backend(m.backend, space, run.cache_dir)
    try:
        result = execute(run, backend)
    except (BackendError, StorageError) as e:
        state = resume(run)
        print(f"run suspended after {state.cost} evaluations: {e}", file=sys.stderr)
        print(f"continue with: hpss search --resume {run.root}", file=sys.stderr)
        return EXIT_BACKEND
    report = write_report(run, figures=not args.no_figures)
    _print_result(space.to_dict(result.best), result.score, result.evaluations, report)
    return EXIT_OK


def cmd_bruteforce(args) -> int:
    space = _space(args)
    if space.size > args.cap:
        raise Refused(f"space {space.id!r} has {space.size:,} strategies, above the cap of {args.cap:,}; "
                      f"raise --cap to evaluate it exhaustively")
    spec = backend_spec(args, space)
    space, _ = _dataset_space(space, spec)
    backend = build_backend(spec, space, Path(args.cache_dir) if args.cache_dir else None)
    rows = [(backend.evaluate(s).score, s) for s in enumerate_strategies(space)]
    ranked = sorted(rows, key=lambda r: -r[0])  # stable: ties keep enumeration order
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "score", *(f.id for f in space.factors)])
        for rank, (score, s) in enumerate(ranked, 1):
            w.writerow([rank, repr(score), *space.to_dict(s).values()])
    best_score, best = ranked[0]
    _print_result(space.to_dict(best), best_score, len(rows), out)
    return EXIT_OK


def cmd_bench(args) -> int:
    space = _space(args)
    kinds = ["separable", "interacting"] if args.kind == "both" else [args.kind]
    algos = args.algos.split(",")
    for a in algos:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}")
    if space.size > args.cap:
        raise Refused(f"optimum needs {space.size:,} evaluations per landscape, above the cap of {args.cap:,}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for kind in kinds:
        make = separable_landscape if kind == "separable" else interacting_landscape
        for seed in range(args.landscapes):
            land = make(space, seed, sigma=args.sigma)
            backend = SyntheticBackend(space, land, seed)
            optimum = max(land.fitness(s, seed) for s in enumerate_strategies(space))
            for algo in algos:
                cfg = SearchConfig(budget=args.budget, seed=seed)
                res = run_search(algo, space, backend, cfg)
                rows.append({"landscape": kind, "seed": seed, "algorithm": algo, "best": res.score,
                             "optimum": optimum, "gap": optimum - res.score,
                             "hit": res.score == optimum, "evaluations": res.evaluations})
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = {}
    for kind in kinds:
        for algo in algos:
            sel = [r for r in rows if r["landscape"] == kind and r["algorithm"] == algo]
            summary[f"{kind}/{algo}"] = {
                "median_best": statistics.median(r["best"] for r in sel),
                "median_gap": statistics.median(r["gap"] for r in sel),
                "hit_rate": sum(r["hit"] for r in sel) / len(sel),
                "max_evaluations": max(r["evaluations"] for r in sel),
            }
    write_atomic(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    if not args.no_figures:
        for kind in kinds:
            plots.bench_boxplot(out / f"bench_{kind}.png", {
                a: [r["gap"] for r in rows if r["landscape"] == kind and r["algorithm"] == a] for a in algos
            })
    print(f"{'setting':<28} {'median best':>12} {'median gap':>11} {'hit rate':>9}")
    for name, s in summary.items():
        print(f"{name:<28} {s['median_best']:>12.4f} {s['median_gap']:>11.4f} {s['hit_rate']:>9.2f}")
    print(f"results: {out / 'bench.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    space = _space(args)
    spec = backend_spec(args, space)
    space, _ = _dataset_space(space, spec)
    s = space.from_dict(_read_mapping(args.strategy))
    backend = build_backend(spec, space, Path(args.cache_dir) if args.cache_dir else None)
    fit = backend.evaluate(s)
    print(f"score: {fit.score!r}")
    if fit.detail.get("flag"):
        print(f"flagged: {fit.detail['flag']} ({fit.detail.get('failures', 0)} failed samples)")
    if args.trace:
        Path(args.trace).write_text(json.dumps({"strategy": space.to_dict(s), "score": fit.score, **fit.detail},
                                               indent=2) + "\n")
    return EXIT_OK


def cmd_render(args) -> int:
    dataset = load_dataset(args.dataset)
    space = load_space(args.space)
    if dataset.baseline_scale is not None and "scale" in {f.id for f in space.factors}:
        space = space.with_baseline(scale=dataset.baseline_scale)
    choice = space.baseline if args.strategy is None else space.from_dict(_read_mapping(args.strategy))
    choice = space.to_dict(choice)
    pack = load_pack(args.pack or dataset.task_family)
    pack.check_space(space)
    sample = dataset.get(args.sample) if args.sample else dataset.samples[0]
    aux = {}
    for item in args.aux or ():
        kind, _, path = item.partition("=")
        aux[kind] = Path(path).read_text()
    for kind in sorted(required_aux(choice) - set(aux)):
        aux[kind] = f"<{kind} generated by the judge at evaluation time>"
        print(f"note: no --aux {kind}=FILE given; a marker stands in for it", file=sys.stderr)
    icl = select_icl_examples(dataset, int(choice["examples"]), sample.id, args.icl_seed)
    prompt = render_evaluation_prompt(choice, sample, pack, aux, icl, aspect=dataset.aspect, criteria=dataset.criteria)
    sys.stdout.write(prompt.text + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    run = RunDir(args.run_dir)
    if not run.exists():
        raise ConfigError(f"{run.root} is not a run directory")
    path = write_report(run, Path(args.out) if args.out else None, figures=not args.no_figures)
    rep = json.loads(path.read_text())
    _print_result(rep["best_strategy"], rep["best_score"], rep["evaluations"], path)
    if "zero_mean" in rep:
        print(f"advantages zero-mean per factor: {rep['zero_mean']}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_space(p):
    p.add_argument("--space", default="pointwise_v1", help="preset name or space file (default: pointwise_v1)")
    p.add_argument("--baseline", action="append", metavar="FACTOR=VALUE", help="override a baseline value")


def _add_backend(p, default="synth"):
    g = p.add_argument_group("fitness backend")
    g.add_argument("--backend", choices=("synth", "replay", "live"), default=default)
    g.add_argument("--landscape", choices=("separable", "interacting"), default="interacting")
    g.add_argument("--landscape-seed", type=int, default=0)
    g.add_argument("--landscape-file", help="landscape JSON (weights, interactions, sigma)")
    g.add_argument("--sigma", type=float, default=0.0, help="synthetic noise level")
    g.add_argument("--replay-journal", help="journal whose scores the replay backend serves")
    g.add_argument("--dataset", help="dataset descriptor (YAML) for the live backend")
    g.add_argument("--pack", help="template pack name or file (default: dataset task family)")
    g.add_argument("--model", help="judge model name")
    g.add_argument("--decode", default="greedy", help="greedy or sc:<n>")
    g.add_argument("--parallelism", type=int, default=8)
    g.add_argument("--icl-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpss", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hpss {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = SearchConfig()
    p = sub.add_parser("search", help="run a search and write journal + report")
    _add_space(p)
    _add_backend(p)
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default="hpss")
    p.add_argument("--budget", type=int, default=d.budget)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--k", type=int, default=d.k)
    p.add_argument("--g", type=int, default=d.g)
    p.add_argument("--rho", type=float, default=d.rho, help="exploitation probability")
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--run-dir", help="run directory (default: runs/<algo>-<space>-seed<seed>)")
    p.add_argument("--resume", metavar="RUN_DIR", help="continue a suspended or interrupted run")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("brute-force", help="evaluate every strategy and rank them")
    _add_space(p)
    _add_backend(p)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", default="bruteforce.csv")
    p.add_argument("--cache-dir")
    p.set_defaults(func=cmd_bruteforce)

    p = sub.add_parser("bench-synth", help="compare algorithms on seeded synthetic landscapes")
    _add_space(p)
    p.add_argument("--kind", choices=("separable", "interacting", "both"), default="both")
    p.add_argument("--landscapes", type=int, default=20)
    p.add_argument("--algos", default="hpss,greedy,stepwise,random")
    p.add_argument("--budget", type=int, default=d.budget)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--cap", type=int, default=100_000)
    p.add_argument("--out", default="bench")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval-strategy", help="score one strategy file")
    _add_space(p)
    _add_backend(p, default="live")
    p.add_argument("--strategy", required=True, help="YAML/JSON mapping factor id -> value id")
    p.add_argument("--cache-dir")
    p.add_argument("--trace", help="write the per-sample trace to this JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="print the evaluation prompt for a strategy and sample")
    p.add_argument("--space", default="pointwise_v1")
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", help="strategy file (default: the baseline)")
    p.add_argument("--sample", help="sample id (default: first sample)")
    p.add_argument("--pack")
    p.add_argument("--aux", action="append", metavar="KIND=FILE")
    p.add_argument("--icl-seed", type=int, default=0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("report", help="write curve, advantage table and figures for a run")
    p.add_argument("run_dir")
    p.add_argument("--out", help="output directory (default: RUN_DIR/report)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Refused as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_REFUSED
    except IntegrityError as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ConfigError, StructuralError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, StorageError) as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
