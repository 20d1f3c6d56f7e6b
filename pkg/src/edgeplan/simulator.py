"""Deterministic analytic timing model for a plan on a described testbed.

The model is intentionally simple and exactly additive:

* a plan splits into segments at T layers; each segment pays one entry
  synchronization (redistribution from the previous T layer's tiles into the
  chain's entry requirements) followed by compute;
* compute inside a segment is max over nodes of the node's total flops across
  the chain divided by its rate (nodes do not synchronize inside a chain),
  plus a fixed per-layer overhead;
* after the last layer every node ships its owned output tile to node 0;
* communication and computation never overlap.

All volumes and flop counts are exact integers; a single float division per
term (by rate or bandwidth) produces seconds, and totals are accumulated
back-to-front.  This makes independently computed plan costs bit-identical,
which the planner's optimality checks rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence

from .errors import ParseError, PlanError, ValidationError
from .geometry import (
    Mode,
    Plan,
    SPATIAL_SCHEMES,
    Scheme,
    assign_tiles,
    backward_regions,
    feasible,
    input_region_set,
    node_workload,
    region_set_volume,
    scheme_executable,
    transfer_volumes,
)
from .models import ModelGraph


class Topology(IntEnum):
    RING = 0
    PS = 1
    MESH = 2

    @property
    def token(self) -> str:
        return self.name.lower()


def topology_from_token(token: str) -> Topology:
    try:
        return Topology[token.upper()]
    except KeyError:
        raise ValidationError(f"unknown topology {token!r}") from None


@dataclass(frozen=True)
class TestbedSpec:
    """Node cluster description: compute rates plus one link model."""

    node_count: int
    rates: tuple[float, ...]          # flops/second per node
    topology: Topology
    bandwidth_bps: float              # bits/second per link
    per_layer_overhead_s: float = 0.0

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise ValidationError("distributed inference requires at least 2 nodes")
        if len(self.rates) != self.node_count:
            raise ValidationError(
                f"{len(self.rates)} rates for {self.node_count} nodes"
            )
        if any(r <= 0 for r in self.rates):
            raise ValidationError("node rates must be positive")
        if self.bandwidth_bps <= 0:
            raise ValidationError("bandwidth must be positive")
        if self.per_layer_overhead_s < 0:
            raise ValidationError("per-layer overhead must be non-negative")


def make_testbed(
    node_count: int,
    rate: float | Sequence[float],
    topology: Topology | str,
    bandwidth_bps: float,
    per_layer_overhead_s: float = 0.0,
) -> TestbedSpec:
    if isinstance(topology, str):
        topology = topology_from_token(topology)
    rates = (float(rate),) * node_count if isinstance(rate, (int, float)) \
        else tuple(float(r) for r in rate)
    return TestbedSpec(node_count, rates, topology, float(bandwidth_bps),
                       float(per_layer_overhead_s))


_TESTBED_FIELDS = {"node_count", "rates", "topology", "bandwidth_bps",
                   "per_layer_overhead_s"}


def parse_testbed(text: str) -> TestbedSpec:
    """Decode and validate a testbed document (JSON)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"testbed document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("testbed document must be a JSON object")
    unknown = set(doc) - _TESTBED_FIELDS
    if unknown:
        raise ParseError(f"testbed document has unknown fields: {sorted(unknown)}")
    missing = {"node_count", "rates", "topology", "bandwidth_bps"} - set(doc)
    if missing:
        raise ParseError(f"testbed document is missing fields: {sorted(missing)}")
    node_count = doc["node_count"]
    if not isinstance(node_count, int) or isinstance(node_count, bool):
        raise ParseError("node_count must be an integer")
    rates = doc["rates"]
    if isinstance(rates, list):
        if not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in rates):
            raise ParseError("rates list must contain numbers")
    elif not isinstance(rates, (int, float)) or isinstance(rates, bool):
        raise ParseError("rates must be a number or a list of numbers")
    topology = doc["topology"]
    if not isinstance(topology, str):
        raise ParseError("topology must be a string")
    bandwidth = doc["bandwidth_bps"]
    if not isinstance(bandwidth, (int, float)) or isinstance(bandwidth, bool):
        raise ParseError("bandwidth_bps must be a number")
    overhead = doc.get("per_layer_overhead_s", 0.0)
    if not isinstance(overhead, (int, float)) or isinstance(overhead, bool):
        raise ParseError("per_layer_overhead_s must be a number")
    return make_testbed(node_count, rates, topology, bandwidth, overhead)


def serialize_testbed(testbed: TestbedSpec) -> str:
    doc = {
        "node_count": testbed.node_count,
        "rates": list(testbed.rates),
        "topology": testbed.topology.token,
        "bandwidth_bps": testbed.bandwidth_bps,
        "per_layer_overhead_s": testbed.per_layer_overhead_s,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def comm_time(volumes: Sequence[Sequence[int]], testbed: TestbedSpec) -> float:
    """Seconds for all transfers in the byte matrix to complete.

    Mesh: a private full-duplex link per ordered pair; the slowest pair rules.
    PS: every transfer relays through a hub; each node's uplink carries all it
    sends and its downlink all it receives.
    Ring: transfers route along the shorter arc (ties clockwise, i.e. towards
    increasing node index); the most loaded directed link rules.
    """
    n = testbed.node_count
    if len(volumes) != n or any(len(row) != n for row in volumes):
        raise ValidationError(
            f"volume matrix must be {n}x{n} for this testbed"
        )
    bw = testbed.bandwidth_bps
    if testbed.topology is Topology.MESH:
        worst = max((volumes[u][v] for u in range(n) for v in range(n) if u != v),
                    default=0)
        return worst * 8 / bw
    if testbed.topology is Topology.PS:
        worst = 0
        for u in range(n):
            sent = sum(volumes[u][v] for v in range(n) if v != u)
            recv = sum(volumes[v][u] for v in range(n) if v != u)
            worst = max(worst, sent, recv)
        return worst * 8 / bw
    # Ring: directed links cw[i] = i -> (i+1) % n, ccw[i] = i -> (i-1) % n.
    cw_load = [0] * n
    ccw_load = [0] * n
    for u in range(n):
        for v in range(n):
            if u == v or volumes[u][v] == 0:
                continue
            d_cw = (v - u) % n
            d_ccw = (u - v) % n
            if d_cw <= d_ccw:
                node = u
                for _ in range(d_cw):
                    cw_load[node] += volumes[u][v]
                    node = (node + 1) % n
            else:
                node = u
                for _ in range(d_ccw):
                    ccw_load[node] += volumes[u][v]
                    node = (node - 1) % n
    worst = max(max(cw_load), max(ccw_load))
    return worst * 8 / bw


@dataclass(frozen=True)
class Segment:
    """One fused run: layers ``start..end`` under one scheme, modes NT..NT,T.

    ``anchor`` is the index of the preceding T layer (-1 = the model input,
    which is assumed pre-distributed at zero cost).
    """

    anchor: int
    start: int
    end: int
    scheme: Scheme

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def validate_plan(graph: ModelGraph, plan: Plan, node_count: int) -> None:
    """Raise PlanError naming the first offending entry, if any."""
    n = len(graph.layers)
    if len(plan) != n:
        raise PlanError(f"plan has {len(plan)} entries for {n} layers")
    if plan[-1].mode is not Mode.T:
        raise PlanError(f"entry {n - 1}: the last layer must use T mode")
    for i, entry in enumerate(plan):
        layer = graph.layers[i]
        next_layer = graph.layers[i + 1] if i + 1 < n else None
        next_scheme = plan[i + 1].scheme if i + 1 < n else None
        if not feasible(entry.scheme, entry.mode, layer, next_layer, next_scheme):
            raise PlanError(
                f"entry {i}: ({entry.scheme.token}, {entry.mode.token}) is infeasible"
            )
        if entry.mode is Mode.T and not scheme_executable(layer, entry.scheme, node_count):
            raise PlanError(
                f"entry {i}: layer {i} cannot be tiled by {entry.scheme.token} "
                f"across {node_count} nodes"
            )


def segments_of_plan(plan: Plan) -> list[Segment]:
    segments = []
    anchor = -1
    start = 0
    for i, entry in enumerate(plan):
        if entry.mode is Mode.T:
            segments.append(Segment(anchor=anchor, start=start, end=i,
                                    scheme=entry.scheme))
            anchor = i
            start = i + 1
    return segments


@dataclass(frozen=True)
class SegmentCost:
    segment: Segment
    entry_sync_s: float
    compute_s: float
    volumes: Optional[list[list[int]]]          # None for the virtual input anchor
    workloads: list[list[int]]                  # [chain layer][node] flops

    @property
    def total_s(self) -> float:
        return self.entry_sync_s + self.compute_s


def segment_cost(
    graph: ModelGraph,
    segment: Segment,
    producer_scheme: Optional[Scheme],
    testbed: TestbedSpec,
) -> SegmentCost:
    """Exact cost of one segment given the tiling of its anchor layer."""
    layers = graph.layers[segment.start:segment.end + 1]
    n = testbed.node_count
    if segment.scheme in SPATIAL_SCHEMES:
        per_layer = backward_regions(layers, segment.scheme, n)
    else:
        per_layer = [assign_tiles(layers[-1], segment.scheme, n).tiles]
    if len(per_layer) != len(layers):
        raise PlanError(
            f"segment {segment.start}..{segment.end}: chained recomputation "
            f"needs a spatial scheme, got {segment.scheme.token}"
        )

    workloads = [
        [node_workload(layer, per_layer[i][node]) for node in range(n)]
        for i, layer in enumerate(layers)
    ]
    node_totals = [sum(workloads[i][node] for i in range(len(layers)))
                   for node in range(n)]
    compute = max(node_totals[node] / testbed.rates[node] for node in range(n))
    compute += testbed.per_layer_overhead_s * len(layers)

    if segment.anchor < 0:
        return SegmentCost(segment, 0.0, compute, None, workloads)

    entry = [input_region_set(layers[0], regions) for regions in per_layer[0]]
    producer = graph.layers[segment.anchor]
    tiles = assign_tiles(producer, producer_scheme, n)
    volumes = transfer_volumes(producer, tiles, entry, graph.element_size)
    sync = comm_time(volumes, testbed)
    return SegmentCost(segment, sync, compute, volumes, workloads)


def final_gather_volumes(graph: ModelGraph, scheme: Scheme, node_count: int) -> list[list[int]]:
    """Every node ships its owned slice of the last layer's output to node 0."""
    last = graph.layers[-1]
    tiles = assign_tiles(last, scheme, node_count)
    matrix = [[0] * node_count for _ in range(node_count)]
    for u in range(1, node_count):
        matrix[u][0] = region_set_volume(tiles.tiles[u]) * graph.element_size
    return matrix


@dataclass(frozen=True)
class CostReport:
    """Full breakdown of one simulated plan."""

    plan: Plan
    segments: list[SegmentCost]
    final_sync_s: float
    total_s: float
    layer_workloads: list[list[int]] = field(repr=False, default_factory=list)


def simulate(graph: ModelGraph, plan: Plan, testbed: TestbedSpec) -> CostReport:
    """Evaluate a plan end to end.

    The total is accumulated from the last segment backwards so that it is
    bit-identical to the planner's recurrence, which sums in that order.
    """
    validate_plan(graph, plan, testbed.node_count)
    segments = segments_of_plan(plan)
    costs = []
    for seg in segments:
        producer_scheme = plan[seg.anchor].scheme if seg.anchor >= 0 else None
        costs.append(segment_cost(graph, seg, producer_scheme, testbed))

    final = comm_time(
        final_gather_volumes(graph, plan[-1].scheme, testbed.node_count), testbed
    )
    total = final
    for cost in reversed(costs):
        total = (cost.entry_sync_s + cost.compute_s) + total

    layer_workloads: list[list[int]] = []
    for cost in costs:
        layer_workloads.extend(cost.workloads)
    return CostReport(plan=plan, segments=costs, final_sync_s=final,
                      total_s=total, layer_workloads=layer_workloads)


def scale_bandwidth(testbed: TestbedSpec, factor: float) -> TestbedSpec:
    return replace(testbed, bandwidth_bps=testbed.bandwidth_bps * factor)


def scale_rates(testbed: TestbedSpec, factor: float) -> TestbedSpec:
    return replace(testbed, rates=tuple(r * factor for r in testbed.rates))
