"""Optimality verification: seeded random instances, DP vs exhaustive search.

Each instance is a random chain-consistent graph plus a random testbed.  The
planner must match the brute-force minimum bit-exactly, and pruning must not
change the result while evaluating no more candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import OracleEstimator
from .models import LayerKind, LayerSpec, ModelGraph, conv_out_dim
from .planner import plan_bruteforce, plan_dpp
from .simulator import Topology, make_testbed

_KINDS = (LayerKind.STANDARD_CONV, LayerKind.DEPTHWISE_CONV,
          LayerKind.POINTWISE_CONV, LayerKind.POOL, LayerKind.MATMUL)
_KIND_WEIGHTS = (0.30, 0.20, 0.20, 0.20, 0.10)
_CHANNELS = (4, 8, 12, 16)
_BANDWIDTHS = (2e8, 5e8, 1e9, 5e9, 2e10)
_MIN_SPATIAL = 6  # keeps every scheme executable for up to 4 nodes


def random_instance(seed: int, index: int, max_layers: int):
    """Deterministic (graph, testbed) pair for one verification instance."""
    rng = np.random.default_rng([seed, index])
    n_layers = int(rng.integers(1, max_layers + 1))
    h = int(rng.integers(8, 17))
    w = int(rng.integers(8, 17))
    c = int(rng.choice(_CHANNELS))

    layers = []
    for i in range(n_layers):
        kind = _KINDS[int(rng.choice(len(_KINDS), p=_KIND_WEIGHTS))]
        if kind in (LayerKind.POINTWISE_CONV, LayerKind.MATMUL):
            kernel, padding = 1, 0
        else:
            kernel = int(rng.choice((1, 3, 5)))
            padding = int(rng.integers(0, 3))
        stride = 2 if rng.random() < 0.25 else 1
        oh = conv_out_dim(h, kernel, stride, padding)
        ow = conv_out_dim(w, kernel, stride, padding)
        if oh < _MIN_SPATIAL or ow < _MIN_SPATIAL:
            stride, padding = 1, (kernel - 1) // 2
            oh = conv_out_dim(h, kernel, stride, padding)
            ow = conv_out_dim(w, kernel, stride, padding)
        if kind in (LayerKind.DEPTHWISE_CONV, LayerKind.POOL):
            oc = c
        else:
            oc = int(rng.choice(_CHANNELS))
        layers.append(LayerSpec(id=i, kind=kind, in_h=h, in_w=w, in_c=c,
                                out_h=oh, out_w=ow, out_c=oc,
                                kernel=kernel, stride=stride, padding=padding))
        h, w, c = oh, ow, oc
    graph = ModelGraph(layers=tuple(layers))

    node_count = int(rng.integers(2, 5))
    topology = Topology(int(rng.integers(3)))
    bandwidth = float(rng.choice(_BANDWIDTHS))
    if rng.random() < 0.30:
        rates = tuple(float(r) for r in rng.uniform(5e9, 2e10, node_count))
    else:
        rates = 1e10
    overhead = 1e-5 if rng.random() < 0.20 else 0.0
    testbed = make_testbed(node_count, rates, topology, bandwidth, overhead)
    return graph, testbed


@dataclass
class InstanceOutcome:
    index: int
    layer_count: int
    node_count: int
    dp_cost: float
    bf_cost: float
    evaluations_pruned: int
    evaluations_unpruned: int
    evaluations_bruteforce: int
    optimal: bool
    pruning_sound: bool

    @property
    def ok(self) -> bool:
        return self.optimal and self.pruning_sound


@dataclass
class VerifySummary:
    outcomes: list[InstanceOutcome]
    failures: list[int]
    total_pruned: int
    total_unpruned: int
    total_bruteforce: int

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def mean_evaluation_reduction(self) -> float:
        if self.total_unpruned == 0:
            return 0.0
        return 1.0 - self.total_pruned / self.total_unpruned


def verify_instances(
    max_layers: int,
    instances: int,
    seed: int,
    dp_estimator_factory=None,
) -> VerifySummary:
    """Run the verification corpus.

    ``dp_estimator_factory`` exists for harness self-tests: it supplies the
    estimator used by the DP runs only, so an injected perturbation must
    surface as a mismatch against the brute-force result.
    """
    if max_layers < 1 or max_layers > 8:
        raise ValueError("max_layers must be between 1 and 8")
    if instances < 1:
        raise ValueError("instances must be >= 1")
    oracle = OracleEstimator()
    outcomes = []
    failures = []
    total_pruned = total_unpruned = total_bf = 0
    for index in range(instances):
        graph, testbed = random_instance(seed, index, max_layers)
        dp_estimator = dp_estimator_factory() if dp_estimator_factory else oracle
        pruned = plan_dpp(graph, testbed, dp_estimator, prune=True)
        unpruned = plan_dpp(graph, testbed, dp_estimator, prune=False)
        brute = plan_bruteforce(graph, testbed, oracle)
        # Cost must match bit-exactly; among float-tied optima the plans
        # themselves may differ (see planner module notes).
        optimal = (pruned.predicted_seconds == brute.predicted_seconds
                   and pruned.simulated_seconds == brute.simulated_seconds)
        sound = (pruned.predicted_seconds == unpruned.predicted_seconds
                 and pruned.plan == unpruned.plan
                 and pruned.evaluations <= unpruned.evaluations)
        outcome = InstanceOutcome(
            index=index,
            layer_count=len(graph.layers),
            node_count=testbed.node_count,
            dp_cost=pruned.predicted_seconds,
            bf_cost=brute.predicted_seconds,
            evaluations_pruned=pruned.evaluations,
            evaluations_unpruned=unpruned.evaluations,
            evaluations_bruteforce=brute.evaluations,
            optimal=optimal,
            pruning_sound=sound,
        )
        outcomes.append(outcome)
        if not outcome.ok:
            failures.append(index)
        total_pruned += pruned.evaluations
        total_unpruned += unpruned.evaluations
        total_bf += brute.evaluations
    return VerifySummary(outcomes=outcomes, failures=failures,
                         total_pruned=total_pruned,
                         total_unpruned=total_unpruned,
                         total_bruteforce=total_bf)
