#!/usr/bin/env python3
"""Train the learned cost models from simulator traces and plan with them.

A small-scale version of the full pipeline: generate a trace corpus, fit the
compute-time and sync-time regressors, report held-out accuracy, then compare
the learned planner's choice against the exact oracle.
"""

import time

from edgeplan import (
    LearnedEstimator,
    OracleEstimator,
    builtin_model,
    evaluate_model,
    gen_traces,
    make_testbed,
    plan_dpp,
    train_gbdt,
)
from edgeplan.estimator import TraceConfig, split_train_holdout
from edgeplan.gbdt import Hyperparams

SAMPLES = 8000  # per label kind; the full pipeline uses 40k+

print(f"generating {SAMPLES} compute + {SAMPLES} sync traces...")
traces = gen_traces(SAMPLES, seed=1, config=TraceConfig())

params = Hyperparams(trees=120, max_depth=6, learning_rate=0.1,
                     min_samples_leaf=20)
models = {}
for kind in ("inference", "sync"):
    subset = traces.only(kind)
    train, holdout = split_train_holdout(subset, 0.2)
    start = time.monotonic()
    models[kind] = train_gbdt(train.features, train.labels, kind, params)
    errors = evaluate_model(models[kind], holdout)
    print(f"{kind:>9}: trained in {time.monotonic() - start:.1f}s,"
          f" median rel err {errors['median_relative_error']:.2%},"
          f" p90 {errors['p90_relative_error']:.2%}")

learned = LearnedEstimator(models["inference"], models["sync"])
oracle = OracleEstimator()

print("\nplanning resnet18-like on a 4-node ring at 500 Mbps:")
graph = builtin_model("resnet18-like")
testbed = make_testbed(4, 1e10, "ring", 5e8)
for name, estimator in (("oracle", oracle), ("learned", learned)):
    result = plan_dpp(graph, testbed, estimator)
    print(f"{name:>8}: predicted {result.predicted_seconds * 1e3:.3f} ms,"
          f" simulated {result.simulated_seconds * 1e3:.3f} ms")

ratio = (plan_dpp(graph, testbed, learned).simulated_seconds
         / plan_dpp(graph, testbed, oracle).simulated_seconds)
print(f"\nlearned-mode regret on this cell: {ratio:.4f}x "
      "(1.0 means it found an equally good plan)")
