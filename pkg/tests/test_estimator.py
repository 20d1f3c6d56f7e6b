import dataclasses

import numpy as np
import pytest

from edgeplan.errors import ValidationError
from edgeplan.estimator import (
    FEATURE_COLUMNS,
    LayerWorkload,
    OracleEstimator,
    SyncEvent,
    TraceConfig,
    evaluate_model,
    event_moves_data,
    exact_inference_seconds,
    extract_features,
    gen_traces,
    split_train_holdout,
    sync_features,
    traces_from_csv,
    traces_to_csv,
)
from edgeplan.gbdt import Hyperparams, train_gbdt
from edgeplan.geometry import Scheme, assign_tiles, backward_regions, chain_entry_regions
from edgeplan.models import LayerKind
from edgeplan.simulator import Segment, Topology, make_testbed, segment_cost

from conftest import conv_layer, stacked_graph


class TestExtractFeatures:
    def test_fourteen_fields(self):
        layer = conv_layer()
        tiles = assign_tiles(layer, Scheme.INH, 4)
        workload = LayerWorkload(layer, tiles.tiles)
        tb = make_testbed(4, 1e10, "ring", 1e9)
        fv = extract_features(workload, tb, Scheme.INH)
        assert len(dataclasses.fields(fv)) == len(FEATURE_COLUMNS) == 14
        assert fv.to_array().shape == (14,)

    def test_halo_inflates_row_features(self):
        # interior node of a 2-layer fused chain owns 4 rows + 2 halo rows
        l0 = conv_layer(lid=0)
        l1 = conv_layer(lid=1)
        regions = backward_regions([l0, l1], Scheme.INH, 4)
        workload = LayerWorkload(l0, regions[0])
        tb = make_testbed(4, 1e10, "ring", 1e9)
        fv = extract_features(workload, tb, Scheme.INH)
        assert fv.out_h == 6           # 4 owned + 1 halo row each side
        assert fv.in_h == 8            # one more window row each side
        assert fv.out_w == 14 and fv.out_c == 512

    def test_unit_kernel_features_identical_for_modes(self):
        layer = conv_layer(kind=LayerKind.POINTWISE_CONV, in_h=16, in_w=16,
                           in_c=32, out_c=32)
        nxt = conv_layer(lid=1, kind=LayerKind.POINTWISE_CONV, in_h=16,
                         in_w=16, in_c=32, out_c=32)
        tb = make_testbed(4, 1e10, "ring", 1e9)
        plain = LayerWorkload(layer, assign_tiles(layer, Scheme.INH, 4).tiles)
        fused = LayerWorkload(layer, backward_regions([layer, nxt], Scheme.INH, 4)[0])
        a = extract_features(plain, tb, Scheme.INH)
        b = extract_features(fused, tb, Scheme.INH)
        assert a == b

    def test_bandwidth_is_the_only_difference(self):
        layer = conv_layer()
        workload = LayerWorkload(layer, assign_tiles(layer, Scheme.INH, 4).tiles)
        a = extract_features(workload, make_testbed(4, 1e10, "ring", 1e9),
                             Scheme.INH)
        b = extract_features(workload, make_testbed(4, 1e10, "ring", 5e9),
                             Scheme.INH)
        diffs = [f.name for f in dataclasses.fields(a)
                 if getattr(a, f.name) != getattr(b, f.name)]
        assert diffs == ["bandwidth_bps"]

    def test_ordinal_encodings(self):
        layer = conv_layer(kind=LayerKind.MATMUL, in_h=32, in_w=16, in_c=64,
                           out_c=64)
        workload = LayerWorkload(layer, assign_tiles(layer, Scheme.GRID2D, 4).tiles)
        fv = extract_features(workload, make_testbed(4, 1e10, "mesh", 1e9),
                              Scheme.GRID2D)
        assert fv.conv_type == 4
        assert fv.topology == int(Topology.MESH) == 2
        assert fv.scheme == int(Scheme.GRID2D) == 3


class TestSyncFeatures:
    def _event(self, nodes=4):
        producer = conv_layer(lid=0)
        consumer = conv_layer(lid=1)
        entry = chain_entry_regions([consumer], Scheme.INH, nodes)
        return SyncEvent(
            producer=producer, producer_scheme=Scheme.OUTC,
            producer_tiles=assign_tiles(producer, Scheme.OUTC, nodes),
            first_layer=consumer, consumer_scheme=Scheme.INH,
            entry_regions=entry, element_size=4,
        )

    def test_fields_describe_producer_and_entry(self):
        event = self._event()
        fv = sync_features(event, make_testbed(4, 1e10, "ring", 1e9))
        assert (fv.in_h, fv.in_w, fv.in_c) == (14, 14, 512)
        assert fv.out_h == 6  # neediest interior node: 4 owned + 2 halo rows
        assert fv.scheme == int(Scheme.OUTC)
        assert fv.kernel == 3

    def test_zero_volume_detection(self):
        layer = conv_layer(kind=LayerKind.POINTWISE_CONV, in_c=512, out_c=512)
        nxt = conv_layer(lid=1, kind=LayerKind.POINTWISE_CONV, in_c=512,
                         out_c=512)
        entry = chain_entry_regions([nxt], Scheme.INH, 4)
        event = SyncEvent(layer, Scheme.INH, assign_tiles(layer, Scheme.INH, 4),
                          nxt, Scheme.INH, entry, 4)
        assert not event_moves_data(event)
        assert event_moves_data(self._event())


class TestGenTraces:
    def test_deterministic_and_byte_identical(self):
        config = TraceConfig(models=("bert-like", "resnet18-like"))
        a = gen_traces(10, seed=7, config=config)
        b = gen_traces(10, seed=7, config=config)
        assert traces_to_csv(a) == traces_to_csv(b)
        c = gen_traces(10, seed=8, config=config)
        assert traces_to_csv(a) != traces_to_csv(c)

    def test_row_counts_both_kinds(self):
        traces = gen_traces(50, seed=3, config=TraceConfig(models=("bert-like",)))
        assert len(traces) == 100
        assert len(traces.only("inference")) == 50
        assert len(traces.only("sync")) == 50

    def test_inference_label_matches_segment_cost(self):
        # a trace's compute label equals the compute part of a 1-layer segment
        layer = conv_layer()
        graph = stacked_graph(layer)
        tb = make_testbed(4, 1e10, "ring", 1e9)
        workload = LayerWorkload(layer, assign_tiles(layer, Scheme.INH, 4).tiles)
        label = exact_inference_seconds(workload, tb)
        cost = segment_cost(graph, Segment(-1, 0, 0, Scheme.INH), None, tb)
        assert label == cost.compute_s

    def test_sync_labels_are_nonzero(self):
        traces = gen_traces(200, seed=5).only("sync")
        assert (traces.labels > 0).all()

    def test_degenerate_config_rejected(self):
        with pytest.raises(ValidationError):
            TraceConfig(node_counts=()).validate()
        with pytest.raises(ValidationError):
            TraceConfig(rate_flops=0).validate()
        with pytest.raises(ValidationError):
            TraceConfig(sync_hot_mass=0.0).validate()
        with pytest.raises(ValidationError):
            gen_traces(0, seed=1)

    def test_csv_roundtrip(self):
        traces = gen_traces(25, seed=9, config=TraceConfig(models=("bert-like",)))
        text = traces_to_csv(traces)
        back = traces_from_csv(text)
        assert np.array_equal(back.features, traces.features)
        assert np.array_equal(back.labels, traces.labels)
        assert np.array_equal(back.kinds, traces.kinds)
        assert text.splitlines()[0] == ",".join(FEATURE_COLUMNS) \
            + ",label_kind,label_seconds"


class TestOracleEstimator:
    def test_matches_simulator_arithmetic(self):
        layer = conv_layer()
        graph = stacked_graph(layer)
        tb = make_testbed(4, [1e10, 2e10, 5e9, 1e10], "ring", 1e9)
        oracle = OracleEstimator()
        workload = LayerWorkload(layer, assign_tiles(layer, Scheme.INH, 4).tiles)
        got = oracle.estimate_inference(workload, tb, Scheme.INH)
        cost = segment_cost(graph, Segment(-1, 0, 0, Scheme.INH), None, tb)
        assert got == cost.compute_s


class TestEvaluate:
    def _memorizable(self):
        X = np.zeros((8, 14))
        X[:, 0] = np.arange(8)
        y = np.linspace(1.0, 8.0, 8)
        return X, y

    def test_memorization_gives_zero_median(self):
        X, y = self._memorizable()
        model = train_gbdt(X, y, "inference",
                           Hyperparams(trees=400, max_depth=4, learning_rate=0.5,
                                       min_samples_leaf=1))
        from edgeplan.estimator import TraceSet
        holdout = TraceSet(X, y, np.zeros(8, dtype=np.int8))
        errs = evaluate_model(model, holdout)
        assert errs["median_relative_error"] < 1e-9
        assert errs["max_abs_error"] < 1e-8

    def test_empty_holdout_rejected(self):
        from edgeplan.estimator import TraceSet
        X, y = self._memorizable()
        model = train_gbdt(X, y, "inference", Hyperparams(trees=1))
        empty = TraceSet(np.zeros((0, 14)), np.zeros(0), np.zeros(0, dtype=np.int8))
        with pytest.raises(ValidationError, match="empty"):
            evaluate_model(model, empty)

    def test_kind_mismatch_rejected(self):
        from edgeplan.estimator import TraceSet
        X, y = self._memorizable()
        model = train_gbdt(X, y, "inference", Hyperparams(trees=1))
        sync_only = TraceSet(X, y, np.ones(8, dtype=np.int8))
        with pytest.raises(ValidationError, match="sync"):
            evaluate_model(model, sync_only)

    def test_split_rejects_degenerate_fractions(self):
        traces = gen_traces(10, seed=1, config=TraceConfig(models=("bert-like",)))
        with pytest.raises(ValidationError):
            split_train_holdout(traces, 1.0)
        with pytest.raises(ValidationError):
            split_train_holdout(traces, 0.0)
