"""Command-line entry point ``mpir``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure during training.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, cli_io, discovery, evaluation, report, synth
from .errors import ConfigError, DataError, NumericalError, TrainingError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_CANDIDATES = "0.001,0.002,0.005,0.01,0.02,0.05"


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_training_flags(p):
    g = p.add_argument_group("training (defaults: config file, then built-in values)")
    g.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
    g.add_argument("--k", type=int, dest="horizon", help="window length K (default 3)")
    g.add_argument("--lambda", type=float, dest="lam", help="information penalty weight (default 0.002)")
    g.add_argument("--epochs", type=int, help="training epochs (default 30000)")
    g.add_argument("--warmup", type=int, help="epochs without the information term (default 400)")
    g.add_argument("--eta0", type=float, help="initial relative noise amplitude (default 0.01)")
    g.add_argument("--lr", type=float, dest="learning_rate", help="Adam learning rate (default 1e-4)")
    g.add_argument("--batch-size", type=int, help="minibatch size (default 256)")
    g.add_argument("--hidden", type=_ints, help="hidden widths, e.g. 8,8")
    g.add_argument("--n-fake", type=int, help="number of fake series (default max(2, ceil(N/2)))")
    g.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--per-entry-noise", action="store_const", const=True, help="one amplitude per window entry")
    g.add_argument("--no-augment", dest="augment", action="store_const", const=False, help="skip fake series")


RUN_FIELDS = ("horizon", "lam", "epochs", "warmup", "eta0", "learning_rate", "batch_size", "hidden", "n_fake",
              "alpha", "seed", "per_entry_noise", "augment")


def _run_config(args):
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc.msg})") from None
        if not isinstance(base, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    for name in RUN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    return discovery.RunConfig.from_dict(base)


def _load(args):
    bundle = cli_io.load_csv(args.data)
    if getattr(args, "normalize", False):
        bundle = cli_io.normalize(bundle)
    return bundle


def _emit(doc, out):
    if out is None:
        sys.stdout.write(doc.to_json())
    else:
        doc.write(out)


def cmd_generate(args):
    start = time.perf_counter()
    if args.probe:
        bundle = synth.make_probe_system(args.probe, args.length or 2000, np.random.default_rng(args.seed), args.k)
    else:
        if args.n is None:
            raise ConfigError("generate needs --n or --probe")
        cfg = evaluation.BenchmarkConfig(n_rollouts=args.rollouts, length=args.length or 22, horizon=args.k)
        _, bundle = evaluation.graph_and_bundle(args.n, args.seed, cfg)
    cli_io.write_csv(bundle, args.out)
    truth = args.truth or Path(str(args.out) + ".truth.json")
    body = {"names": bundle.names, "graph": cli_io.graph_to_tree(bundle.graph), "metadata": bundle.metadata}
    config = {"n": args.n, "k": args.k, "probe": args.probe, "rollouts": args.rollouts, "length": args.length}
    manifest = cli_io.make_manifest(config, cli_io.fingerprint(bundle), args.seed,
                                    {"total_seconds": time.perf_counter() - start}, "generate")
    cli_io.ResultsDocument("ground_truth", body, manifest).write(truth)
    return EXIT_OK


def cmd_discover(args):
    config = _run_config(args)
    bundle = _load(args)
    start = time.perf_counter()
    W = discovery.infer_matrix(bundle, config)
    if W.n_fake and not args.no_threshold:
        W = discovery.significance_threshold(W, config.alpha)
    manifest = cli_io.make_manifest(config.to_dict(), cli_io.fingerprint(bundle), config.seed,
                                    {"total_seconds": time.perf_counter() - start}, "discover")
    _emit(cli_io.ResultsDocument("strength_matrix", cli_io.strength_body(W, config), manifest), args.out)
    return EXIT_OK


def cmd_select_lambda(args):
    config = _run_config(args)
    bundle = _load(args)
    start = time.perf_counter()
    sel = discovery.select_lambda(bundle, args.candidates, config)
    manifest = cli_io.make_manifest(dict(config.to_dict(), candidates=args.candidates), cli_io.fingerprint(bundle),
                                    config.seed, {"total_seconds": time.perf_counter() - start}, "select-lambda")
    _emit(cli_io.ResultsDocument("lambda_selection", cli_io.lambda_body(sel), manifest), args.out)
    return EXIT_OK


def cmd_baseline(args):
    config = _run_config(args)
    bundle = _load(args)
    start = time.perf_counter()
    if args.method == "gaussian_random":
        scores = baselines.gaussian_random_score(bundle.n_series, args.count, np.random.default_rng(config.seed),
                                                 bundle.names)
    else:
        dataset = discovery.windowize(bundle, config.horizon, config.test_fraction)
        if args.method in baselines.NEEDS_CONFIG:
            scores = [baselines.NEEDS_CONFIG[args.method](dataset, config)]
        else:
            scores = [baselines.SCORERS[args.method](dataset)]
    cfg = dict(config.to_dict(), method=args.method, count=args.count)
    manifest = cli_io.make_manifest(cfg, cli_io.fingerprint(bundle), config.seed,
                                    {"total_seconds": time.perf_counter() - start}, "baseline")
    _emit(cli_io.ResultsDocument("score_matrix", cli_io.score_body(scores), manifest), args.out)
    return EXIT_OK


def cmd_benchmark(args):
    run = _run_config(args)
    cfg = evaluation.BenchmarkConfig(n_rollouts=args.rollouts, length=args.length, horizon=run.horizon,
                                     mpir=run, random_count=args.random_count)
    start = time.perf_counter()
    result = evaluation.run_benchmark(args.methods, args.n_list, args.seeds, cfg)
    timings = {"total_seconds": time.perf_counter() - start, "cells": result.timings}
    config = dict(cfg.to_dict(), methods=args.methods, n_list=args.n_list, seeds=args.seeds)
    manifest = cli_io.make_manifest(config, None, None, timings, "benchmark")
    _emit(cli_io.ResultsDocument("benchmark", cli_io.benchmark_body(result), manifest), args.out)
    return EXIT_OK


def cmd_report(args):
    docs = [cli_io.ResultsDocument.read(p) for p in args.results]
    if args.format == "table":
        text = "\n\n".join(report.document_table(d) for d in docs) + "\n"
        if args.out is None:
            sys.stdout.write(text)
        else:
            Path(args.out).write_text(text, encoding="utf-8")
        return EXIT_OK
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for stem, svg in report.render_svgs(docs).items():
        path = out_dir / f"{stem}.svg"
        path.write_text(svg, encoding="utf-8")
        print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mpir", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic system and write CSV plus ground truth")
    p.add_argument("--n", type=int, help="number of series")
    p.add_argument("--k", type=int, default=3, help="window length of the generator (default 3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="CSV path")
    p.add_argument("--truth", type=Path, help="ground-truth document path (default OUT.truth.json)")
    p.add_argument("--rollouts", type=int, default=500, help="independent trajectories (default 500)")
    p.add_argument("--length", type=int, help="steps per trajectory (default 22, probes 2000)")
    p.add_argument("--probe", choices=synth.PROBE_KINDS, help="emit a small probe system instead")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discover", help="infer the predictive-strength matrix W")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--normalize", action="store_true", help="z-score every series first")
    p.add_argument("--no-threshold", action="store_true", help="keep raw W only")
    _add_training_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("select-lambda", help="choose lambda with planted causal and null relations")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--candidates", type=_floats, default=_floats(DEFAULT_CANDIDATES))
    p.add_argument("--out", type=Path)
    p.add_argument("--normalize", action="store_true")
    _add_training_flags(p)
    p.set_defaults(func=cmd_select_lambda)

    p = sub.add_parser("baseline", help="run one comparison scorer")
    p.add_argument("--method", required=True, choices=baselines.BASELINE_METHODS)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--count", type=int, default=10000, help="matrices for gaussian_random")
    _add_training_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("benchmark", help="score methods on sampled systems against ground truth")
    p.add_argument("--methods", type=lambda s: [m.strip() for m in s.split(",") if m.strip()], required=True)
    p.add_argument("--n-list", type=_ints, required=True)
    p.add_argument("--seeds", type=_ints, default=list(evaluation.PAPER_SEEDS))
    p.add_argument("--out", type=Path)
    p.add_argument("--rollouts", type=int, default=500)
    p.add_argument("--length", type=int, default=22)
    p.add_argument("--random-count", type=int, default=10000)
    _add_training_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="render tables or SVG figures from results documents")
    p.add_argument("--results", type=Path, nargs="+", required=True)
    p.add_argument("--format", choices=("table", "svg"), default="table")
    p.add_argument("--out", type=Path, help="table file or SVG directory (default stdout / .)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        for attr in ("data", "config"):
            path = getattr(args, attr, None)
            if path is not None and not Path(path).is_file():
                parser.error(f"--{attr}: no such file: {path}")
        for path in getattr(args, "results", None) or []:
            if not Path(path).is_file():
                parser.error(f"--results: no such file: {path}")
        return args.func(args)
    except ConfigError as exc:
        print(f"mpir: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"mpir: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, NumericalError) as exc:
        print(f"mpir: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
