"""Strategy comparison harness over a testbed matrix.

Runs the planner against the fixed, layerwise and fused baselines on every
(topology x bandwidth x node count) cell and scores each strategy by
min-time / time.  Reports are plain JSON-able dicts with a deterministic
cell and strategy order, suitable for golden-file pinning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ParseError, ValidationError
from .estimator import OracleEstimator
from .geometry import Plan, PlanEntry, Scheme
from .models import ModelGraph
from .planner import (
    GeometryTables,
    SegmentEvaluator,
    performance_scores,
    plan_dpp,
    plan_fixed,
    plan_fused_fixed,
    plan_layerwise,
)
from .simulator import TestbedSpec, Topology, make_testbed, simulate, topology_from_token

FIXED_STRATEGIES = ("fixed-inh", "fixed-inw", "fixed-outc", "fixed-grid2d")
STRATEGY_ORDER = FIXED_STRATEGIES + ("layerwise", "fused", "dpp")

_FIXED_SCHEME = {
    "fixed-inh": Scheme.INH,
    "fixed-inw": Scheme.INW,
    "fixed-outc": Scheme.OUTC,
    "fixed-grid2d": Scheme.GRID2D,
}


@dataclass(frozen=True)
class MatrixSpec:
    topologies: tuple[Topology, ...]
    bandwidths_bps: tuple[float, ...]
    node_counts: tuple[int, ...]
    rate_flops: float = 1e10
    per_layer_overhead_s: float = 0.0

    def cells(self):
        for topology in self.topologies:
            for bandwidth in self.bandwidths_bps:
                for node_count in self.node_counts:
                    yield topology, bandwidth, node_count

    def testbed(self, topology, bandwidth, node_count) -> TestbedSpec:
        return make_testbed(node_count, self.rate_flops, topology, bandwidth,
                            self.per_layer_overhead_s)


#: Evaluation grid: ring and star topologies, three bandwidth tiers, 3 and 4
#: nodes.  Mesh tracks ring closely and is left out by default but remains
#: selectable through a matrix document.
DEFAULT_MATRIX = MatrixSpec(
    topologies=(Topology.RING, Topology.PS),
    bandwidths_bps=(5e9, 1e9, 5e8),
    node_counts=(3, 4),
)

_MATRIX_FIELDS = {"topologies", "bandwidths_bps", "node_counts", "rate_flops",
                  "per_layer_overhead_s"}


def parse_matrix(text: str) -> MatrixSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"matrix document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("matrix document must be a JSON object")
    unknown = set(doc) - _MATRIX_FIELDS
    if unknown:
        raise ParseError(f"matrix document has unknown fields: {sorted(unknown)}")
    missing = {"topologies", "bandwidths_bps", "node_counts"} - set(doc)
    if missing:
        raise ParseError(f"matrix document is missing fields: {sorted(missing)}")
    try:
        topologies = tuple(topology_from_token(t) for t in doc["topologies"])
        bandwidths = tuple(float(b) for b in doc["bandwidths_bps"])
        node_counts = tuple(int(n) for n in doc["node_counts"])
    except (TypeError, ValidationError) as exc:
        raise ParseError(f"malformed matrix document: {exc}") from exc
    if not topologies or not bandwidths or not node_counts:
        raise ParseError("matrix lists must be non-empty")
    return MatrixSpec(
        topologies=topologies,
        bandwidths_bps=bandwidths,
        node_counts=node_counts,
        rate_flops=float(doc.get("rate_flops", 1e10)),
        per_layer_overhead_s=float(doc.get("per_layer_overhead_s", 0.0)),
    )


def plan_to_entries(plan: Plan) -> list[dict]:
    return [
        {"layer_id": i, "scheme": entry.scheme.token, "mode": entry.mode.token}
        for i, entry in enumerate(plan)
    ]


def entries_to_plan(entries: list[dict]) -> Plan:
    from .geometry import mode_from_token, scheme_from_token
    plan = []
    for i, entry in enumerate(entries):
        if entry.get("layer_id") != i:
            raise ParseError(f"plan entry {i} has layer_id {entry.get('layer_id')}")
        plan.append(PlanEntry(scheme_from_token(entry["scheme"]),
                              mode_from_token(entry["mode"])))
    return tuple(plan)


def run_cell(graph: ModelGraph, testbed: TestbedSpec, estimator,
             geometry: GeometryTables) -> dict:
    """All strategies on one testbed cell."""
    plans: dict[str, Plan] = {}
    for name in FIXED_STRATEGIES:
        plans[name] = plan_fixed(graph, _FIXED_SCHEME[name])
    plans["layerwise"] = plan_layerwise(graph, testbed, estimator, geometry)

    fused_best = None
    for scheme in Scheme:
        fused_plan = plan_fused_fixed(graph, testbed, estimator, scheme, geometry)
        t = simulate(graph, fused_plan, testbed).total_s
        if fused_best is None or (t, int(scheme)) < fused_best[:2]:
            fused_best = (t, int(scheme), fused_plan)
    plans["fused"] = fused_best[2]

    dpp = plan_dpp(graph, testbed, estimator, geometry=geometry)
    plans["dpp"] = dpp.plan

    times = {name: simulate(graph, plans[name], testbed).total_s
             for name in STRATEGY_ORDER}
    scores = performance_scores([times[name] for name in STRATEGY_ORDER])
    best_fixed = min(times[name] for name in FIXED_STRATEGIES)
    return {
        "strategies": [
            {"name": name, "simulated_seconds": times[name],
             "performance_score": scores[i]}
            for i, name in enumerate(STRATEGY_ORDER)
        ],
        "dpp_plan": plan_to_entries(dpp.plan),
        "dpp_predicted_seconds": dpp.predicted_seconds,
        "dpp_speedup_vs_best_fixed": best_fixed / times["dpp"],
    }


def run_comparison(graph: ModelGraph, matrix: MatrixSpec, estimator,
                   model_name: str = "model") -> dict:
    """Full comparison report over every matrix cell."""
    by_cell = {}
    for node_count in matrix.node_counts:
        geometry = GeometryTables(graph, node_count)
        for topology in matrix.topologies:
            for bandwidth in matrix.bandwidths_bps:
                testbed = matrix.testbed(topology, bandwidth, node_count)
                by_cell[(topology, bandwidth, node_count)] = run_cell(
                    graph, testbed, estimator, geometry
                )
    cells = []
    for topology, bandwidth, node_count in matrix.cells():
        cell = {
            "topology": topology.token,
            "bandwidth_bps": bandwidth,
            "node_count": node_count,
        }
        cell.update(by_cell[(topology, bandwidth, node_count)])
        cells.append(cell)
    return {
        "model": model_name,
        "estimator": getattr(estimator, "kind", "unknown"),
        "cells": cells,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def scheme_preference_table(graph: ModelGraph, testbed: TestbedSpec,
                            geometry: GeometryTables | None = None) -> list[Scheme]:
    """Per-layer best scheme in an all-transmit steady state (micro-bench view).

    Layer i's cost under scheme s is its own balanced compute plus the halo or
    redistribution sync needed to enter it from layer i-1 tiled the same way.
    """
    ev = SegmentEvaluator(graph, testbed, OracleEstimator(), geometry)
    table = []
    for i in range(len(graph.layers)):
        best = None
        for s in Scheme:
            if not ev.executable(i, s):
                continue
            if i > 0 and not ev.executable(i - 1, s):
                continue
            cost = ev.seg_cost(i - 1, s if i > 0 else None, i, i, s)
            key = (cost, int(s))
            if best is None or key < best:
                best = key
        if best is None:
            raise ValidationError(f"layer {i}: no executable scheme")
        table.append(Scheme(best[1]))
    return table
