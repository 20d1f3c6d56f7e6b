"""Dynamic partition planner, brute-force oracle, and baseline strategies.

The planner walks the layer chain backwards.  ``V[j][s]`` is the best cost of
everything downstream of layer ``j`` given that ``j`` transmitted its output
tiled by scheme ``s``: it minimizes, over a chain scheme ``s'`` and a chain
length ``m``, the entry redistribution into the chain, the chain's fused
compute (halos accumulate towards the closing T layer, so each length is a
separate evaluation), and the already-final ``V[j+m][s']``.  States that end
with a locally recomputed (non-transmitting) layer are never anchored: their
cost depends on choices not yet made in reverse order, which is exactly why
the memo is keyed on T states only.

Candidate evaluation order is (scheme ordinal, length ascending) and ties
break to (shorter chain, lower scheme ordinal), making pruned, unpruned and
brute-force searches return bit-identical plans.

Pruning: a candidate is skipped when an admissible floor already exceeds the
best candidate seen for this state.  The floor drops the entry sync (>= 0)
and keeps the candidate's exact fused compute plus the finalized downstream
memo; with a learned estimator only the downstream memo is used, since
predicted compute is not a provable bound.  Skips use strict comparison, so
cost ties are still evaluated and tie-breaking is unaffected.

Among cost-tied optima the brute-force enumerator can legitimately return a
different plan: two mathematically equal plans may round an ulp apart at an
interior suffix (where the DP commits) yet to identical totals, so only the
costs -- not the tied plans -- are guaranteed to coincide.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf
from typing import Optional, Sequence

import numpy as np

from .errors import PlannerError, SearchCapExceeded, ValidationError
from .estimator import (
    LayerWorkload,
    SyncEvent,
    extract_features,
    sync_features,
    sync_floor_seconds,
)
from .gbdt import predict_batch
from .geometry import (
    Mode,
    Plan,
    PlanEntry,
    SPATIAL_SCHEMES,
    Scheme,
    assign_tiles,
    backward_regions,
    input_region_set,
    node_workload,
    scheme_executable,
)
from .models import ModelGraph
from .simulator import (
    TestbedSpec,
    comm_time,
    final_gather_volumes,
    simulate,
    transfer_volumes,
)


@dataclass(frozen=True)
class PlanResult:
    plan: Plan
    predicted_seconds: float
    simulated_seconds: float
    evaluations: int


class GeometryTables:
    """Testbed-independent tiling geometry for one (graph, node count) pair.

    Chains are tabulated per closing layer: one backward walk from ``b`` to
    layer 0 yields every node's per-layer region and an integer suffix-sum of
    workloads, so any chain ``a..b`` costs O(nodes) to read off.  Reusable
    across bandwidths and topologies.
    """

    def __init__(self, graph: ModelGraph, node_count: int):
        self.graph = graph
        self.node_count = node_count
        self._tiles: dict = {}
        self._chains: dict = {}
        self._entries: dict = {}
        self._volumes: dict = {}
        self._final: dict = {}

    def tiles(self, i: int, scheme: Scheme):
        key = (i, scheme)
        if key not in self._tiles:
            layer = self.graph.layers[i]
            self._tiles[key] = (
                assign_tiles(layer, scheme, self.node_count)
                if scheme_executable(layer, scheme, self.node_count) else None
            )
        return self._tiles[key]

    def executable(self, i: int, scheme: Scheme) -> bool:
        return self.tiles(i, scheme) is not None

    def chain(self, b: int, scheme: Scheme):
        """(regions, workloads, cum) over layers 0..b closing at b, or None."""
        key = (b, scheme)
        if key not in self._chains:
            if not self.executable(b, scheme):
                self._chains[key] = None
            elif scheme in SPATIAL_SCHEMES:
                layers = self.graph.layers[:b + 1]
                regions = backward_regions(layers, scheme, self.node_count)
                workloads = [
                    [node_workload(layers[i], regions[i][n])
                     for n in range(self.node_count)]
                    for i in range(b + 1)
                ]
                cum = [[0] * self.node_count for _ in range(b + 2)]
                for i in range(b, -1, -1):
                    for n in range(self.node_count):
                        cum[i][n] = workloads[i][n] + cum[i + 1][n]
                self._chains[key] = (regions, workloads, cum)
            else:
                tiles = self.tiles(b, scheme).tiles
                workloads = [[node_workload(self.graph.layers[b], tiles[n])
                              for n in range(self.node_count)]]
                self._chains[key] = ([tiles], workloads, None)
        return self._chains[key]

    def chain_regions(self, a: int, b: int, scheme: Scheme):
        """Per-layer per-node output regions of chain a..b (index 0 = layer a)."""
        table = self.chain(b, scheme)
        if table is None:
            return None
        regions = table[0]
        offset = a if scheme in SPATIAL_SCHEMES else 0
        return regions[offset:]

    def chain_flops(self, a: int, b: int, scheme: Scheme) -> Optional[list[int]]:
        """Per-node total flops of chain a..b (halo included)."""
        table = self.chain(b, scheme)
        if table is None:
            return None
        regions, workloads, cum = table
        if scheme in SPATIAL_SCHEMES:
            return cum[a]
        return workloads[0]

    def entry_regions(self, a: int, b: int, scheme: Scheme):
        """Per-node input each node must hold before layer ``a`` of chain a..b."""
        key = (a, b, scheme)
        if key not in self._entries:
            table = self.chain(b, scheme)
            if table is None:
                self._entries[key] = None
            else:
                first = self.chain_regions(a, b, scheme)[0]
                layer = self.graph.layers[a]
                self._entries[key] = tuple(
                    input_region_set(layer, regions) for regions in first
                )
        return self._entries[key]

    def volumes(self, j: int, anchor_scheme: Scheme, b: int, scheme: Scheme):
        """Redistribution byte matrix from anchor tiles into chain j+1..b."""
        key = (j, anchor_scheme, b, scheme)
        if key not in self._volumes:
            entry = self.entry_regions(j + 1, b, scheme)
            tiles = self.tiles(j, anchor_scheme)
            self._volumes[key] = transfer_volumes(
                self.graph.layers[j], tiles, entry, self.graph.element_size
            )
        return self._volumes[key]

    def final_volumes(self, scheme: Scheme):
        if scheme not in self._final:
            self._final[scheme] = final_gather_volumes(
                self.graph, scheme, self.node_count
            )
        return self._final[scheme]


class SegmentEvaluator:
    """Segment costs for one (geometry, testbed, estimator) triple.

    The oracle path reads integer workload sums and volume matrices straight
    from the geometry tables and divides once, which makes its costs
    bit-identical to the simulator.  The learned path batches GBDT queries:
    per-layer compute predictions fold into suffix sums per closing layer and
    sync predictions are cached per candidate.
    """

    def __init__(self, graph: ModelGraph, testbed: TestbedSpec, estimator,
                 geometry: GeometryTables | None = None):
        if geometry is not None and geometry.node_count != testbed.node_count:
            raise ValidationError("geometry tables built for a different node count")
        self.graph = graph
        self.testbed = testbed
        self.estimator = estimator
        self.geo = geometry or GeometryTables(graph, testbed.node_count)
        self.exact = bool(getattr(estimator, "is_exact", False))
        self._seg_cache: dict = {}
        self._final_cache: dict = {}
        self._i_suffix: dict = {}
        self._s_pred: dict = {}

    def executable(self, i: int, scheme: Scheme) -> bool:
        return self.geo.executable(i, scheme)

    def final_cost(self, scheme: Scheme) -> float:
        if scheme not in self._final_cache:
            self._final_cache[scheme] = comm_time(
                self.geo.final_volumes(scheme), self.testbed
            )
        return self._final_cache[scheme]

    def exact_chain_seconds(self, a: int, b: int, scheme: Scheme) -> float:
        flops = self.geo.chain_flops(a, b, scheme)
        rates = self.testbed.rates
        worst = max(flops[n] / rates[n] for n in range(self.testbed.node_count))
        return worst + self.testbed.per_layer_overhead_s * (b - a + 1)

    def _learned_chain_seconds(self, a: int, b: int, scheme: Scheme) -> float:
        key = (b, scheme)
        suffix = self._i_suffix.get(key)
        if suffix is None:
            regions = self.geo.chain_regions(0 if scheme in SPATIAL_SCHEMES else b,
                                             b, scheme)
            start = 0 if scheme in SPATIAL_SCHEMES else b
            workloads = [
                LayerWorkload(self.graph.layers[i], tuple(layer_regions))
                for i, layer_regions in enumerate(regions, start=start)
            ]
            i_model = getattr(self.estimator, "i_model", None)
            if i_model is not None:
                rows = np.asarray([
                    extract_features(w, self.testbed, scheme).to_array()
                    for w in workloads
                ])
                preds = predict_batch(i_model, rows)
            else:
                preds = [self.estimator.estimate_inference(w, self.testbed, scheme)
                         for w in workloads]
            suffix = {}
            acc = 0.0
            for i in range(b, start - 1, -1):
                acc = float(preds[i - start]) + acc
                suffix[i] = acc
            self._i_suffix[key] = suffix
        return suffix[a]

    def _learned_sync_seconds(self, j: int, anchor_scheme: Scheme, b: int,
                              scheme: Scheme) -> float:
        key = (j, anchor_scheme, b, scheme)
        pred = self._s_pred.get(key)
        if pred is None:
            event = SyncEvent(
                producer=self.graph.layers[j],
                producer_scheme=anchor_scheme,
                producer_tiles=self.geo.tiles(j, anchor_scheme),
                first_layer=self.graph.layers[j + 1],
                consumer_scheme=scheme,
                entry_regions=self.geo.entry_regions(j + 1, b, scheme),
                element_size=self.graph.element_size,
            )
            pred = self.estimator.estimate_sync(event, self.testbed)
            self._s_pred[key] = pred
        return pred

    def prefetch_sync(self, rows: list[tuple[int, Scheme, int, Scheme]]) -> None:
        """Batch-predict sync costs for many candidates (learned mode only)."""
        if self.exact or getattr(self.estimator, "s_model", None) is None:
            return
        missing = [key for key in rows if key not in self._s_pred]
        if not missing:
            return
        pending = []
        feats = []
        floors = []
        for key in missing:
            j, anchor_scheme, b, scheme = key
            volumes = self.geo.volumes(j, anchor_scheme, b, scheme)
            if not any(v for row in volumes for v in row):
                self._s_pred[key] = 0.0  # nothing crosses nodes
                continue
            floor = sync_floor_seconds(volumes, self.testbed)
            if anchor_scheme == scheme:
                self._s_pred[key] = floor  # boundary exchange: geometry-priced
                continue
            event = SyncEvent(
                producer=self.graph.layers[j],
                producer_scheme=anchor_scheme,
                producer_tiles=self.geo.tiles(j, anchor_scheme),
                first_layer=self.graph.layers[j + 1],
                consumer_scheme=scheme,
                entry_regions=self.geo.entry_regions(j + 1, b, scheme),
                element_size=self.graph.element_size,
            )
            pending.append(key)
            feats.append(sync_features(event, self.testbed).to_array())
            floors.append(floor)
        if pending:
            preds = predict_batch(self.estimator.s_model, np.asarray(feats))
            for key, value, floor in zip(pending, preds, floors):
                self._s_pred[key] = max(float(value), floor)

    def seg_cost(self, j: int, anchor_scheme: Optional[Scheme], a: int, b: int,
                 scheme: Scheme) -> float:
        """Entry sync plus fused compute of chain a..b after anchor (j, s)."""
        key = (j, anchor_scheme, a, b, scheme)
        cached = self._seg_cache.get(key)
        if cached is not None:
            return cached
        if self.exact:
            compute = self.exact_chain_seconds(a, b, scheme)
            sync = 0.0 if j < 0 else comm_time(
                self.geo.volumes(j, anchor_scheme, b, scheme), self.testbed
            )
        else:
            compute = self._learned_chain_seconds(a, b, scheme)
            sync = 0.0 if j < 0 else self._learned_sync_seconds(
                j, anchor_scheme, b, scheme
            )
        total = sync + compute
        self._seg_cache[key] = total
        return total


def _segments_to_plan(segments: Sequence[tuple[int, Scheme]]) -> Plan:
    entries: list[PlanEntry] = []
    for m, scheme in segments:
        entries.extend([PlanEntry(scheme, Mode.NT)] * (m - 1))
        entries.append(PlanEntry(scheme, Mode.T))
    return tuple(entries)


def plan_dpp(
    graph: ModelGraph,
    testbed: TestbedSpec,
    estimator,
    prune: bool = True,
    schemes: Sequence[Scheme] = tuple(Scheme),
    geometry: GeometryTables | None = None,
) -> PlanResult:
    """Reverse-search DP over (T-layer, scheme) anchors; optimal under the oracle."""
    L = len(graph.layers)
    ev = SegmentEvaluator(graph, testbed, estimator, geometry)
    schemes = tuple(schemes)

    V: list[dict[Scheme, float]] = [dict() for _ in range(L)]
    parent: list[dict[Scheme, tuple[int, Scheme]]] = [dict() for _ in range(L)]
    for s in schemes:
        if ev.executable(L - 1, s):
            V[L - 1][s] = ev.final_cost(s)
    if not V[L - 1]:
        raise PlannerError("no scheme can tile the last layer on this testbed")

    evaluations = 0
    if not ev.exact:
        ev.prefetch_sync(_candidate_sync_keys(ev, L, schemes))

    start_best: Optional[tuple[float, int, int]] = None
    start_parent: Optional[tuple[int, Scheme]] = None
    for j in range(L - 2, -2, -1):
        anchors = [s for s in schemes if ev.executable(j, s)] if j >= 0 else [None]
        for s in anchors:
            best: Optional[tuple[float, int, int]] = None
            best_parent: Optional[tuple[int, Scheme]] = None
            for s_chain in schemes:
                max_m = 1 if s_chain not in SPATIAL_SCHEMES else L - 1 - j
                for m in range(1, max_m + 1):
                    b = j + m
                    v_next = V[b].get(s_chain)
                    if v_next is None:
                        continue
                    if prune and best is not None:
                        # Admissible floor: entry sync >= 0 always; predicted
                        # compute is only a provable bound in oracle mode.
                        floor = v_next if not ev.exact else (
                            ev.exact_chain_seconds(j + 1, b, s_chain) + v_next
                        )
                        if floor > best[0]:
                            continue
                    cost = ev.seg_cost(j, s, j + 1, b, s_chain) + v_next
                    evaluations += 1
                    key = (cost, m, int(s_chain))
                    if best is None or key < best:
                        best = key
                        best_parent = (m, s_chain)
            if best is None:
                continue
            if j >= 0:
                V[j][s] = best[0]
                parent[j][s] = best_parent
            else:
                start_best, start_parent = best, best_parent

    if start_best is None:
        raise PlannerError("no feasible plan exists for this graph and testbed")

    segments = []
    j, nxt = -1, start_parent
    while True:
        m, s_chain = nxt
        segments.append((m, s_chain))
        j += m
        if j == L - 1:
            break
        nxt = parent[j][s_chain]
    plan = _segments_to_plan(segments)
    report = simulate(graph, plan, testbed)
    return PlanResult(plan=plan, predicted_seconds=start_best[0],
                      simulated_seconds=report.total_s, evaluations=evaluations)


def _candidate_sync_keys(ev: SegmentEvaluator, L: int,
                         schemes: Sequence[Scheme]) -> list:
    keys = []
    for j in range(0, L - 1):
        anchors = [s for s in schemes if ev.executable(j, s)]
        for s in anchors:
            for s_chain in schemes:
                max_m = 1 if s_chain not in SPATIAL_SCHEMES else L - 1 - j
                for m in range(1, max_m + 1):
                    if ev.executable(j + m, s_chain):
                        keys.append((j, s, j + m, s_chain))
    return keys


def plan_bruteforce(
    graph: ModelGraph,
    testbed: TestbedSpec,
    estimator,
    cap: int = 8,
    geometry: GeometryTables | None = None,
) -> PlanResult:
    """Enumerate every valid plan and take the exact minimum.

    Walks segment decompositions from the last layer backwards so that each
    complete plan's cost accumulates in the same back-to-front order as the
    planner and the simulator.  Deliberately exhaustive; capped by layer count.
    """
    L = len(graph.layers)
    if L > cap:
        raise SearchCapExceeded(
            f"{L} layers exceeds the brute-force cap of {cap}"
        )
    ev = SegmentEvaluator(graph, testbed, estimator, geometry)

    best_cost = inf
    best_key: Optional[tuple] = None
    best_segments: Optional[tuple] = None
    evaluations = 0
    enumerated = 0

    # Stack entries: (next end layer j, scheme of the segment ending at j,
    # suffix cost, segments collected so far in front-first order).
    stack = []
    for s in Scheme:
        if ev.executable(L - 1, s):
            stack.append((L - 1, s, ev.final_cost(s), ()))
    if not stack:
        raise PlannerError("no scheme can tile the last layer on this testbed")

    while stack:
        j, s_j, acc, segs = stack.pop()
        for m in range(1, j + 2):
            if m >= 2 and s_j not in SPATIAL_SCHEMES:
                break
            a = j - m + 1
            seg = ((m, int(s_j)),) + segs
            if a == 0:
                cost = ev.seg_cost(-1, None, 0, j, s_j) + acc
                evaluations += 1
                enumerated += 1
                key = seg
                if cost < best_cost or (cost == best_cost and key < best_key):
                    best_cost, best_key, best_segments = cost, key, seg
            else:
                for s_prev in Scheme:
                    if not ev.executable(a - 1, s_prev):
                        continue
                    cost = ev.seg_cost(a - 1, s_prev, a, j, s_j) + acc
                    evaluations += 1
                    stack.append((a - 1, s_prev, cost, seg))

    if best_segments is None:
        raise PlannerError("no feasible plan exists for this graph and testbed")
    plan = _segments_to_plan([(m, Scheme(s)) for m, s in best_segments])
    report = simulate(graph, plan, testbed)
    return PlanResult(plan=plan, predicted_seconds=best_cost,
                      simulated_seconds=report.total_s, evaluations=evaluations)


def count_plans(graph: ModelGraph, testbed: TestbedSpec) -> int:
    """Number of valid plans (feasibility-filtered), by dynamic counting."""
    L = len(graph.layers)
    n = testbed.node_count
    ok = [
        {s for s in Scheme if scheme_executable(graph.layers[i], s, n)}
        for i in range(L)
    ]
    counts = [0] * (L + 1)
    counts[L] = 1
    for a in range(L - 1, -1, -1):
        total = 0
        for b in range(a, L):
            m = b - a + 1
            eligible = ok[b] if m == 1 else (ok[b] & set(SPATIAL_SCHEMES))
            total += len(eligible) * counts[b + 1]
        counts[a] = total
    return counts[0]


def count_search_space(layer_count: int, scheme_count: int = 4) -> int:
    """Unfiltered combinatorial space: schemes ** layers * 2 ** (layers - 1)."""
    if layer_count < 1:
        raise ValidationError("layer count must be >= 1")
    return scheme_count ** layer_count * 2 ** (layer_count - 1)


def plan_fixed(graph: ModelGraph, scheme: Scheme) -> Plan:
    """Every layer transmitted under one scheme (classic fixed partitioning)."""
    return tuple(PlanEntry(scheme, Mode.T) for _ in graph.layers)


def plan_layerwise(
    graph: ModelGraph,
    testbed: TestbedSpec,
    estimator,
    geometry: GeometryTables | None = None,
) -> Plan:
    """Greedy front-to-back per-layer scheme choice, all layers transmitted."""
    L = len(graph.layers)
    ev = SegmentEvaluator(graph, testbed, estimator, geometry)
    if not ev.exact:
        ev.prefetch_sync([
            (i - 1, s_prev, i, s)
            for i in range(1, L)
            for s_prev in Scheme if ev.executable(i - 1, s_prev)
            for s in Scheme if ev.executable(i, s)
        ])
    entries: list[PlanEntry] = []
    prev: Optional[Scheme] = None
    for i in range(L):
        best = None
        for s in Scheme:
            if not ev.executable(i, s):
                continue
            cost = ev.seg_cost(i - 1, prev, i, i, s)
            key = (cost, int(s))
            if best is None or key < best:
                best = key
        if best is None:
            raise PlannerError(f"layer {i}: no scheme can tile it on this testbed")
        prev = Scheme(best[1])
        entries.append(PlanEntry(prev, Mode.T))
    return tuple(entries)


def plan_fused_fixed(
    graph: ModelGraph,
    testbed: TestbedSpec,
    estimator,
    scheme: Scheme,
    geometry: GeometryTables | None = None,
) -> Plan:
    """Fusion search restricted to a single scheme (only T/NT varies)."""
    result = plan_dpp(graph, testbed, estimator, schemes=(scheme,),
                      geometry=geometry)
    return result.plan


def performance_scores(times: Sequence[float]) -> list[float]:
    """min(times) / t for each strategy; the best strategy scores exactly 1.0."""
    if not times:
        raise ValidationError("no times to score")
    if any(t <= 0 for t in times):
        raise ValidationError("times must be positive")
    best = min(times)
    return [best / t for t in times]
