#!/usr/bin/env python3
"""Plan a model and pit the planner against the fixed-strategy baselines.

Runs the full comparison harness on one benchmark model and prints the
per-cell score table that the `edgeplan compare` command writes as JSON.
"""

from edgeplan import OracleEstimator, builtin_model
from edgeplan.compare import DEFAULT_MATRIX, STRATEGY_ORDER, run_comparison

MODEL = "mobilenet-like"

graph = builtin_model(MODEL)
report = run_comparison(graph, DEFAULT_MATRIX, OracleEstimator(), model_name=MODEL)

header = f"{'cell':<22}" + "".join(f"{name:>13}" for name in STRATEGY_ORDER)
print(f"{MODEL}: performance score per strategy (1.0 = best in cell)\n")
print(header)
for cell in report["cells"]:
    label = f"{cell['topology']}/{cell['bandwidth_bps']:.0e}/{cell['node_count']}n"
    scores = {s["name"]: s["performance_score"] for s in cell["strategies"]}
    print(f"{label:<22}" + "".join(f"{scores[name]:>13.3f}"
                                   for name in STRATEGY_ORDER))

speedups = [cell["dpp_speedup_vs_best_fixed"] for cell in report["cells"]]
print(f"\nplanner speedup vs best fixed partitioning: "
      f"{min(speedups):.2f}x .. {max(speedups):.2f}x")

print("\nchosen plan for the last cell (scheme, mode per layer):")
plan = report["cells"][-1]["dpp_plan"]
tokens = [f"{e['scheme']}-{e['mode']}" for e in plan]
for start in range(0, len(tokens), 7):
    print("   ", "  ".join(tokens[start:start + 7]))
