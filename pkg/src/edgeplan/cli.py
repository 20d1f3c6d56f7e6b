"""Command-line surface: plan, compare, verify, gen-traces, train.

Exit codes: 0 success, 1 input/validation error, 2 planner error,
3 verification mismatch.  Diagnostics go to stderr; data goes to files and
stdout only, and every command is byte-deterministic given its flags.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import compare as compare_mod
from .errors import EdgeplanError, ParseError, PlannerError, ValidationError
from .estimator import (
    LearnedEstimator,
    OracleEstimator,
    evaluate_model,
    gen_traces,
    split_train_holdout,
    traces_from_csv,
    traces_to_csv,
)
from .gbdt import Hyperparams, load_model, save_model, train_gbdt
from .models import ModelGraph, parse_model
from .planner import plan_dpp
from .simulator import parse_testbed
from .verify import verify_instances
from .zoo import BUILTIN_NAMES, builtin_model

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PLANNER = 2
EXIT_MISMATCH = 3


def _load_graph(spec: str) -> ModelGraph:
    """A --model argument is a builtin name (optionally name@scale) or a path."""
    name, _, scale_text = spec.partition("@")
    if name in BUILTIN_NAMES:
        scale = float(scale_text) if scale_text else 1.0
        return builtin_model(name, scale)
    return parse_model(Path(spec).read_text())


def _load_estimator(args) -> OracleEstimator | LearnedEstimator:
    if args.estimator == "oracle":
        return OracleEstimator()
    if not args.i_model:
        raise ValidationError("learned estimator requires --i-model")
    if not args.s_model:
        raise ValidationError("learned estimator requires --s-model")
    return LearnedEstimator(
        i_model=load_model(Path(args.i_model).read_text()),
        s_model=load_model(Path(args.s_model).read_text()),
    )


def _add_estimator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--estimator", choices=("oracle", "learned"),
                        default="oracle", help="cost source for the planner")
    parser.add_argument("--i-model", help="inference-time model file (learned mode)")
    parser.add_argument("--s-model", help="sync-time model file (learned mode)")


def cmd_plan(args) -> int:
    graph = _load_graph(args.model)
    testbed = parse_testbed(Path(args.testbed).read_text())
    estimator = _load_estimator(args)
    result = plan_dpp(graph, testbed, estimator, prune=not args.no_prune)
    doc = {
        "estimator": estimator.kind,
        "predicted_seconds": result.predicted_seconds,
        "simulated_seconds": result.simulated_seconds,
        "evaluations": result.evaluations,
        "entries": compare_mod.plan_to_entries(result.plan),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"predicted_seconds={result.predicted_seconds!r} "
          f"simulated_seconds={result.simulated_seconds!r} "
          f"evaluations={result.evaluations}")
    return EXIT_OK


def cmd_compare(args) -> int:
    graph = _load_graph(args.model)
    matrix = (compare_mod.parse_matrix(Path(args.testbed_matrix).read_text())
              if args.testbed_matrix else compare_mod.DEFAULT_MATRIX)
    estimator = _load_estimator(args)
    report = compare_mod.run_comparison(graph, matrix, estimator,
                                        model_name=args.model)
    text = compare_mod.report_to_json(report)
    Path(args.out).write_text(text)
    for cell in report["cells"]:
        dpp = next(s for s in cell["strategies"] if s["name"] == "dpp")
        print(f"{cell['topology']} bw={cell['bandwidth_bps']:g} "
              f"nodes={cell['node_count']} dpp={dpp['simulated_seconds']!r} "
              f"speedup_vs_best_fixed={cell['dpp_speedup_vs_best_fixed']!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.max_layers > 8:
        raise ValidationError("--max-layers is capped at 8 (brute-force budget)")
    started = time.monotonic()
    summary = verify_instances(args.max_layers, args.instances, args.seed)
    elapsed = time.monotonic() - started
    print(f"instances={args.instances} max_layers={args.max_layers} seed={args.seed}")
    print(f"evaluations: dp_pruned={summary.total_pruned} "
          f"dp_unpruned={summary.total_unpruned} "
          f"bruteforce={summary.total_bruteforce}")
    print(f"mean_evaluation_reduction={summary.mean_evaluation_reduction:.4f}")
    print(f"elapsed_seconds={elapsed:.2f}")
    if not summary.passed:
        for index in summary.failures:
            out = summary.outcomes[index]
            print(f"MISMATCH instance={index} seed=({args.seed},{index}) "
                  f"dp={out.dp_cost!r} bf={out.bf_cost!r} "
                  f"optimal={out.optimal} pruning_sound={out.pruning_sound}",
                  file=sys.stderr)
        print("FAIL")
        return EXIT_MISMATCH
    print("PASS")
    return EXIT_OK


def cmd_gen_traces(args) -> int:
    traces = gen_traces(args.samples, args.seed)
    Path(args.out).write_text(traces_to_csv(traces))
    print(f"rows={2 * args.samples} out={args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    traces = traces_from_csv(Path(args.traces).read_text()).only(args.kind)
    if len(traces) == 0:
        raise ValidationError(f"trace file has no {args.kind!r} rows")
    if not 0.0 < args.holdout < 1.0:
        raise ValidationError("--holdout must be in (0, 1)")
    train, holdout = split_train_holdout(traces, args.holdout)
    params = Hyperparams(trees=args.trees, max_depth=args.depth,
                         learning_rate=args.lr, min_samples_leaf=args.min_leaf)
    model = train_gbdt(train.features, train.labels, args.kind, params)
    Path(args.out).write_text(save_model(model))
    errors = evaluate_model(model, holdout)
    print(json.dumps({"kind": args.kind, "holdout_rows": len(holdout), **errors},
                     sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeplan",
        description="Plan minimum-latency partition/fusion schemes for "
                    "multi-device DNN inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one model on one testbed")
    p.add_argument("--model", required=True,
                   help=f"model document path or builtin name {BUILTIN_NAMES}")
    p.add_argument("--testbed", required=True, help="testbed document path")
    _add_estimator_flags(p)
    p.add_argument("--out", required=True, help="plan document output path")
    p.add_argument("--no-prune", action="store_true",
                   help="disable search pruning (diagnostics only)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("compare", help="compare strategies over a testbed matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--testbed-matrix", help="matrix document path (default grid if omitted)")
    _add_estimator_flags(p)
    p.add_argument("--out", required=True, help="report output path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="check planner optimality against brute force")
    p.add_argument("--max-layers", type=int, default=7)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-traces", help="generate simulator-labelled training traces")
    p.add_argument("--samples", type=int, required=True,
                   help="samples per label kind (file gets twice this many rows)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_traces)

    p = sub.add_parser("train", help="train a cost model from a trace file")
    p.add_argument("--traces", required=True)
    p.add_argument("--kind", choices=("inference", "sync"), required=True)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=20)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PlannerError as exc:
        print(f"planner error: {exc}", file=sys.stderr)
        return EXIT_PLANNER
    except EdgeplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
