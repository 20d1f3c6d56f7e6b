"""Cost-model pipeline: features, trace generation, estimators, evaluation.

Two regressors drive planning: one predicts a layer's slowest-node compute
time from the node's effective (halo-inflated) region shape, the other
predicts the time to redistribute a producer's tiles into a consumer chain's
entry requirements.  The exact oracle computes both quantities with the same
integer arithmetic as the timing simulator, which is what makes planner
optimality provable in oracle mode.

Feature schema (14 columns, all integral, categoricals ordinal-encoded):

    in_h,in_w,in_c,out_h,out_w,out_c,kernel,stride,padding,conv_type,
    bandwidth_bps,topology,node_count,scheme

For compute features the shape fields describe the representative (slowest)
node's effective region.  For sync features ``in_*`` is the redistributed
tensor, ``out_*`` is the neediest node's entry bounding box, the window fields
come from the consumer chain's first layer, and ``scheme`` is the producer's
tiling; the consumer's own scheme is implied by the entry-box geometry.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gbdt import GbdtModel, predict
from .geometry import (
    RegionSet,
    SPATIAL_SCHEMES,
    Scheme,
    TileMap,
    assign_tiles,
    backward_regions,
    chain_entry_regions,
    input_region_set,
    node_workload,
    region_set_bounds,
    region_set_volume,
    transfer_volumes,
)
from .models import CONV_TYPE_ORDINAL, LayerSpec
from .simulator import TestbedSpec, Topology, comm_time, make_testbed
from .zoo import BUILTIN_NAMES, builtin_model

FEATURE_COLUMNS = (
    "in_h", "in_w", "in_c", "out_h", "out_w", "out_c",
    "kernel", "stride", "padding", "conv_type",
    "bandwidth_bps", "topology", "node_count", "scheme",
)

LABEL_KINDS = ("inference", "sync")

#: Guard for relative error against zero-second labels.
RELATIVE_ERROR_EPS = 1e-9


@dataclass(frozen=True)
class FeatureVector:
    in_h: int
    in_w: int
    in_c: int
    out_h: int
    out_w: int
    out_c: int
    kernel: int
    stride: int
    padding: int
    conv_type: int
    bandwidth_bps: float
    topology: int
    node_count: int
    scheme: int

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_COLUMNS],
                        dtype=np.float64)


@dataclass(frozen=True)
class LayerWorkload:
    """One layer plus the per-node output regions it must produce."""

    layer: LayerSpec
    node_regions: tuple[RegionSet, ...]

    def workloads(self) -> list[int]:
        return [node_workload(self.layer, regions) for regions in self.node_regions]

    def representative(self) -> int:
        """Index of the heaviest node (ties to the lowest index)."""
        loads = self.workloads()
        return loads.index(max(loads))


def _region_dims(regions: RegionSet) -> tuple[int, int, int]:
    box = region_set_bounds(regions)
    if box is None:
        return (0, 0, 0)
    return (box.row_hi - box.row_lo + 1,
            box.col_hi - box.col_lo + 1,
            box.ch_hi - box.ch_lo + 1)


def extract_features(
    workload: LayerWorkload, testbed: TestbedSpec, scheme: Scheme
) -> FeatureVector:
    """Compute-time features for the representative node's effective region."""
    layer = workload.layer
    rep = workload.representative()
    out_regions = workload.node_regions[rep]
    out_dims = _region_dims(out_regions)
    in_dims = _region_dims(input_region_set(layer, out_regions))
    return FeatureVector(
        in_h=in_dims[0], in_w=in_dims[1], in_c=in_dims[2],
        out_h=out_dims[0], out_w=out_dims[1], out_c=out_dims[2],
        kernel=layer.kernel, stride=layer.stride, padding=layer.padding,
        conv_type=CONV_TYPE_ORDINAL[layer.kind],
        bandwidth_bps=testbed.bandwidth_bps,
        topology=int(testbed.topology),
        node_count=testbed.node_count,
        scheme=int(scheme),
    )


@dataclass(frozen=True)
class SyncEvent:
    """A redistribution: producer tiles feeding a consumer chain's entry needs."""

    producer: LayerSpec
    producer_scheme: Scheme
    producer_tiles: TileMap
    first_layer: LayerSpec
    consumer_scheme: Scheme
    entry_regions: tuple[RegionSet, ...]
    element_size: int

    def volumes(self) -> list[list[int]]:
        return transfer_volumes(self.producer, self.producer_tiles,
                                self.entry_regions, self.element_size)


def sync_features(event: SyncEvent, testbed: TestbedSpec) -> FeatureVector:
    producer = event.producer
    needs = [region_set_volume(regions) for regions in event.entry_regions]
    neediest = needs.index(max(needs))
    out_dims = _region_dims(event.entry_regions[neediest])
    first = event.first_layer
    return FeatureVector(
        in_h=producer.out_h, in_w=producer.out_w, in_c=producer.out_c,
        out_h=out_dims[0], out_w=out_dims[1], out_c=out_dims[2],
        kernel=first.kernel, stride=first.stride, padding=first.padding,
        conv_type=CONV_TYPE_ORDINAL[first.kind],
        bandwidth_bps=testbed.bandwidth_bps,
        topology=int(testbed.topology),
        node_count=testbed.node_count,
        scheme=int(event.producer_scheme),
    )


def exact_inference_seconds(workload: LayerWorkload, testbed: TestbedSpec) -> float:
    loads = workload.workloads()
    worst = max(loads[n] / testbed.rates[n] for n in range(testbed.node_count))
    return worst + testbed.per_layer_overhead_s


def exact_sync_seconds(event: SyncEvent, testbed: TestbedSpec) -> float:
    return comm_time(event.volumes(), testbed)


class OracleEstimator:
    """Exact analytic estimator; shares the simulator's arithmetic."""

    kind = "oracle"
    is_exact = True

    def estimate_inference(self, workload: LayerWorkload, testbed: TestbedSpec,
                           scheme: Scheme) -> float:
        del scheme  # the regions already encode the tiling
        return exact_inference_seconds(workload, testbed)

    def estimate_sync(self, event: SyncEvent, testbed: TestbedSpec) -> float:
        return exact_sync_seconds(event, testbed)


def event_moves_data(event: SyncEvent) -> bool:
    """Whether any bytes cross nodes.  Pure tile geometry, not timing."""
    return any(v for row in event.volumes() for v in row)


def sync_floor_seconds(volumes, testbed: TestbedSpec) -> float:
    """Provable lower bound on any redistribution schedule.

    Two capacity arguments: the busiest node must move its aggregate traffic
    through its own links (one uplink/downlink on a star, two directions on a
    ring, ``n - 1`` private links on a mesh), and any single flow crosses at
    least one link whole.  Exact for star topologies and for single-flow
    bottlenecks; never above the true time.
    """
    n = testbed.node_count
    aggregate = 0
    single = 0
    for u in range(n):
        sent = recv = 0
        for v in range(n):
            if v == u:
                continue
            sent += volumes[u][v]
            recv += volumes[v][u]
            if volumes[u][v] > single:
                single = volumes[u][v]
        aggregate = max(aggregate, sent, recv)
    links = {Topology.PS: 1, Topology.RING: 2, Topology.MESH: n - 1}
    per_link = aggregate / links[testbed.topology]
    return max(per_link, single) * 8 / testbed.bandwidth_bps


class LearnedEstimator:
    """GBDT-backed estimator trained on simulator traces.

    Tile geometry is planner-side knowledge, and the sync model's job is the
    part geometry alone does not give: how redistributions (scheme switches,
    channel gathers) behave on a given fabric.  Three guards embody that
    split:

    * events that move no bytes cost exactly zero;
    * same-scheme boundary exchanges -- each node trading known halo strips
      with its band neighbours -- are priced directly at their link bound,
      which is exact on star fabrics and for single-flow bottlenecks;
    * model predictions never fall below that link bound, so an under-priced
      redistribution on a rarely sampled configuration cannot look free.

    The trace corpus mirrors this: zero-byte and same-scheme events are
    excluded, and the models train purely on redistribution behaviour.
    """

    kind = "learned"
    is_exact = False

    def __init__(self, i_model: GbdtModel, s_model: GbdtModel):
        if i_model.label_kind != "inference":
            raise ValidationError(
                f"inference model has label kind {i_model.label_kind!r}"
            )
        if s_model.label_kind != "sync":
            raise ValidationError(f"sync model has label kind {s_model.label_kind!r}")
        self.i_model = i_model
        self.s_model = s_model

    def estimate_inference(self, workload: LayerWorkload, testbed: TestbedSpec,
                           scheme: Scheme) -> float:
        return predict(self.i_model,
                       extract_features(workload, testbed, scheme).to_array())

    def estimate_sync(self, event: SyncEvent, testbed: TestbedSpec) -> float:
        volumes = event.volumes()
        if not any(v for row in volumes for v in row):
            return 0.0
        floor = sync_floor_seconds(volumes, testbed)
        if event.producer_scheme == event.consumer_scheme:
            return floor
        pred = predict(self.s_model, sync_features(event, testbed).to_array())
        return max(pred, floor)


@dataclass
class TraceSet:
    """Feature rows plus labels; ``kinds`` holds indexes into LABEL_KINDS."""

    features: np.ndarray
    labels: np.ndarray
    kinds: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def only(self, kind: str) -> "TraceSet":
        if kind not in LABEL_KINDS:
            raise ValidationError(f"unknown label kind {kind!r}")
        mask = self.kinds == LABEL_KINDS.index(kind)
        return TraceSet(self.features[mask], self.labels[mask], self.kinds[mask])


def traces_to_csv(traces: TraceSet) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(FEATURE_COLUMNS) + ["label_kind", "label_seconds"])
    for row, label, kind in zip(traces.features, traces.labels, traces.kinds):
        cells = [repr(int(v)) if float(v).is_integer() else repr(float(v))
                 for v in row]
        writer.writerow(cells + [LABEL_KINDS[int(kind)], repr(float(label))])
    return out.getvalue()


def traces_from_csv(text: str) -> TraceSet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("trace file is empty") from None
    expected = list(FEATURE_COLUMNS) + ["label_kind", "label_seconds"]
    if header != expected:
        raise ValidationError(f"trace header {header} != expected {expected}")
    feats, labels, kinds = [], [], []
    for row in reader:
        if not row:
            continue
        if len(row) != len(expected):
            raise ValidationError(f"trace row has {len(row)} cells")
        feats.append([float(v) for v in row[:-2]])
        if row[-2] not in LABEL_KINDS:
            raise ValidationError(f"unknown label kind {row[-2]!r}")
        kinds.append(LABEL_KINDS.index(row[-2]))
        labels.append(float(row[-1]))
    return TraceSet(np.asarray(feats, dtype=np.float64),
                    np.asarray(labels, dtype=np.float64),
                    np.asarray(kinds, dtype=np.int8))


@dataclass(frozen=True)
class TraceConfig:
    """Sampling space for the trace corpus.

    The defaults mirror the evaluation grid: layers of the built-in models
    under the default testbed matrix with a fixed per-node rate, so samples
    repeat heavily -- the same regime as a measured corpus, where every
    configuration is run many times.

    Compute samples draw layers with probability proportional to the square
    root of their flop count: accuracy effort follows where time goes, and
    micro-layers whose absolute cost is negligible stay a small minority.

    Sync samples come from an enumerated grid of redistribution events
    (anchor layer x producer scheme x consumer chain), deduplicated by
    feature identity and ranked by bytes moved.  Most of the sampling mass
    (``sync_hot_mass``) cycles over the heaviest ``sync_hot_cells`` cells so
    each gets enough repeats to be learned precisely; the remainder spreads
    over the long tail for coverage.  Zero-byte and same-scheme boundary
    events are excluded: the learned estimator prices those from geometry
    (see :class:`LearnedEstimator`), so the models train purely on
    scheme-switch and channel-gather behaviour.
    """

    models: tuple[str, ...] = BUILTIN_NAMES
    scale: float = 1.0
    node_counts: tuple[int, ...] = (3, 4)
    topologies: tuple[Topology, ...] = (Topology.RING, Topology.PS)
    bandwidths_bps: tuple[float, ...] = (5e8, 1e9, 5e9)
    rate_flops: float = 1e10
    per_layer_overhead_s: float = 0.0
    chain_offsets: tuple[int, ...] = (0, 1, 2, 3)
    chain_offset_weights: tuple[float, ...] = (0.45, 0.25, 0.18, 0.12)
    sync_max_extra_layers: int = 2
    sync_hot_cells: int = 240
    sync_hot_mass: float = 0.94

    def validate(self) -> None:
        for name in ("models", "node_counts", "topologies", "bandwidths_bps",
                     "chain_offsets"):
            if not getattr(self, name):
                raise ValidationError(f"trace config: {name} must be non-empty")
        if len(self.chain_offsets) != len(self.chain_offset_weights):
            raise ValidationError("trace config: offsets and weights must pair up")
        if any(w < 0 for w in self.chain_offset_weights):
            raise ValidationError("trace config: weights must be non-negative")
        if sum(self.chain_offset_weights) <= 0:
            raise ValidationError("trace config: weights must not all be zero")
        if self.rate_flops <= 0:
            raise ValidationError("trace config: rate must be positive")
        if any(n < 2 for n in self.node_counts):
            raise ValidationError("trace config: node counts must be >= 2")
        if self.sync_max_extra_layers < 0:
            raise ValidationError("trace config: sync_max_extra_layers must be >= 0")
        if self.sync_hot_cells < 1:
            raise ValidationError("trace config: sync_hot_cells must be >= 1")
        if not 0.0 < self.sync_hot_mass <= 1.0:
            raise ValidationError("trace config: sync_hot_mass must be in (0, 1]")


def _weighted_index(rng: np.random.Generator, weights: np.ndarray) -> int:
    return int(rng.choice(len(weights), p=weights))


def _tileable(layer, scheme: Scheme, node_count: int) -> bool:
    from .geometry import scheme_executable
    return scheme_executable(layer, scheme, node_count)


class _TraceSampler:
    """Seeded sampler with memoized geometry per repeated configuration."""

    def __init__(self, config: TraceConfig, seed: int):
        config.validate()
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.graphs = [builtin_model(name, config.scale) for name in config.models]
        self.testbeds = {
            (topo, bw, n): make_testbed(n, config.rate_flops, topo, bw,
                                        config.per_layer_overhead_s)
            for topo in config.topologies
            for bw in config.bandwidths_bps
            for n in config.node_counts
        }
        self._chain_weights = (np.asarray(config.chain_offset_weights, dtype=float)
                               / sum(config.chain_offset_weights))
        from .models import layer_flops
        self._layer_weights = []
        for graph in self.graphs:
            w = np.sqrt([layer_flops(layer) for layer in graph.layers])
            self._layer_weights.append(w / w.sum())
        self._infer_cache: dict = {}
        self._hot_events, self._tail_events = self._enumerate_sync_events()

    def _enumerate_sync_events(self):
        """Distinct nonzero redistribution events, most important first.

        Zero-byte and same-scheme events never reach the model (the estimator
        prices them from geometry), so only redistribution events are
        enumerated.  Events whose feature rows coincide are merged (the
        heaviest representative stands for the cell, so each cell carries one
        exact label per testbed and the regressor can converge on it), and
        the heaviest cells by bytes moved form the hot set.
        """
        by_key: dict = {}
        for graph in self.graphs:
            n_layers = len(graph.layers)
            for node_count in self.config.node_counts:
                for j in range(n_layers - 1):
                    a = j + 1
                    offsets = range(self.config.sync_max_extra_layers + 1)
                    seen_b = set()
                    for offset in offsets:
                        b = min(a + offset, n_layers - 1)
                        if b in seen_b:
                            continue
                        seen_b.add(b)
                        chain = graph.layers[a:b + 1]
                        consumer_schemes = (tuple(Scheme) if b == a
                                            else SPATIAL_SCHEMES)
                        for s_c in consumer_schemes:
                            if not _tileable(graph.layers[b], s_c, node_count):
                                continue
                            if s_c in SPATIAL_SCHEMES:
                                entry = chain_entry_regions(chain, s_c, node_count)
                            else:
                                tiles = assign_tiles(graph.layers[b], s_c,
                                                     node_count)
                                entry = tuple(input_region_set(chain[0], r)
                                              for r in tiles.tiles)
                            for s_p in Scheme:
                                if s_p == s_c:
                                    continue  # priced from geometry, not learned
                                if not _tileable(graph.layers[j], s_p, node_count):
                                    continue
                                event = SyncEvent(
                                    producer=graph.layers[j],
                                    producer_scheme=s_p,
                                    producer_tiles=assign_tiles(
                                        graph.layers[j], s_p, node_count),
                                    first_layer=chain[0],
                                    consumer_scheme=s_c,
                                    entry_regions=entry,
                                    element_size=graph.element_size,
                                )
                                volumes = event.volumes()
                                weight = sum(v for row in volumes for v in row)
                                if weight == 0:
                                    continue
                                probe = self.testbeds[(self.config.topologies[0],
                                                       self.config.bandwidths_bps[0],
                                                       node_count)]
                                key = tuple(sync_features(event, probe).to_array())
                                kept = by_key.get(key)
                                if kept is None or weight > kept[0]:
                                    by_key[key] = (weight, node_count, event)
        cells = sorted(by_key.values(), key=lambda c: -c[0])
        hot = cells[:self.config.sync_hot_cells]
        tail = cells[self.config.sync_hot_cells:]
        return hot, tail

    def _draw_testbed(self) -> TestbedSpec:
        c = self.config
        topo = c.topologies[int(self.rng.integers(len(c.topologies)))]
        bw = c.bandwidths_bps[int(self.rng.integers(len(c.bandwidths_bps)))]
        n = c.node_counts[int(self.rng.integers(len(c.node_counts)))]
        return self.testbeds[(topo, bw, n)]

    def inference_row(self) -> tuple[np.ndarray, float]:
        c = self.config
        rng = self.rng
        g_idx = int(rng.integers(len(self.graphs)))
        graph = self.graphs[g_idx]
        n_layers = len(graph.layers)
        i = int(rng.choice(n_layers, p=self._layer_weights[g_idx]))
        scheme = Scheme(int(rng.integers(len(Scheme))))
        offset = c.chain_offsets[_weighted_index(rng, self._chain_weights)]
        b = i if scheme not in SPATIAL_SCHEMES else min(i + offset, n_layers - 1)
        testbed = self._draw_testbed()

        key = (g_idx, i, b, scheme, testbed.node_count)
        cached = self._infer_cache.get(key)
        if cached is None:
            chain = graph.layers[i:b + 1]
            regions = backward_regions(chain, scheme, testbed.node_count)[0] \
                if scheme in SPATIAL_SCHEMES \
                else assign_tiles(graph.layers[b], scheme, testbed.node_count).tiles
            workload = LayerWorkload(graph.layers[i], tuple(regions))
            cached = (workload, exact_inference_seconds(workload, testbed))
            self._infer_cache[key] = cached
        workload, label = cached
        feats = extract_features(workload, testbed, scheme).to_array()
        return feats, label

    def sync_row(self) -> tuple[np.ndarray, float]:
        c = self.config
        rng = self.rng
        if self._tail_events and rng.random() >= c.sync_hot_mass:
            pool = self._tail_events
        else:
            pool = self._hot_events
            if not pool:
                raise ValidationError("trace config produced no learnable sync events")
        _, node_count, event = pool[int(rng.integers(len(pool)))]
        topo = c.topologies[int(rng.integers(len(c.topologies)))]
        bw = c.bandwidths_bps[int(rng.integers(len(c.bandwidths_bps)))]
        testbed = self.testbeds[(topo, bw, node_count)]
        feats = sync_features(event, testbed).to_array()
        return feats, exact_sync_seconds(event, testbed)


def gen_traces(count: int, seed: int, config: TraceConfig | None = None) -> TraceSet:
    """Deterministically sample ``count`` inference rows plus ``count`` sync rows."""
    if count < 1:
        raise ValidationError("trace count must be >= 1")
    sampler = _TraceSampler(config or TraceConfig(), seed)
    rows = np.empty((2 * count, len(FEATURE_COLUMNS)), dtype=np.float64)
    labels = np.empty(2 * count, dtype=np.float64)
    kinds = np.empty(2 * count, dtype=np.int8)
    for r in range(count):
        rows[r], labels[r] = sampler.inference_row()
        kinds[r] = 0
    for r in range(count, 2 * count):
        rows[r], labels[r] = sampler.sync_row()
        kinds[r] = 1
    return TraceSet(rows, labels, kinds)


def evaluate_model(model: GbdtModel, holdout: TraceSet) -> dict[str, float]:
    """Relative-error summary of a model on one-kind holdout traces."""
    if len(holdout) == 0:
        raise ValidationError("holdout set is empty")
    kinds = set(holdout.kinds.tolist())
    if len(kinds) > 1:
        raise ValidationError("holdout mixes label kinds")
    kind = LABEL_KINDS[kinds.pop()]
    if kind != model.label_kind:
        raise ValidationError(
            f"model predicts {model.label_kind!r} but holdout is {kind!r}"
        )
    from .gbdt import predict_batch
    preds = predict_batch(model, holdout.features)
    abs_err = np.abs(preds - holdout.labels)
    rel = abs_err / np.maximum(holdout.labels, RELATIVE_ERROR_EPS)
    return {
        "median_relative_error": float(np.quantile(rel, 0.5)),
        "p90_relative_error": float(np.quantile(rel, 0.9)),
        "max_abs_error": float(abs_err.max()),
    }


def split_train_holdout(traces: TraceSet, holdout_fraction: float,
                        seed: int = 0) -> tuple[TraceSet, TraceSet]:
    """Deterministic shuffled split; errors when either side would be empty."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValidationError("holdout fraction must be in (0, 1)")
    n = len(traces)
    n_hold = int(round(n * holdout_fraction))
    if n_hold == 0 or n_hold == n:
        raise ValidationError(
            f"holdout fraction {holdout_fraction} leaves an empty split for {n} rows"
        )
    order = np.random.default_rng(seed).permutation(n)
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    pick = lambda idx: TraceSet(traces.features[idx], traces.labels[idx],
                                traces.kinds[idx])
    return pick(train_idx), pick(hold_idx)
