"""Partition and fusion planning for multi-device DNN inference.

Given a layer chain and a cluster description, search the combined space of
per-layer partition schemes and transmit-vs-recompute decisions for the
minimum-latency execution plan, driven by an exact analytic cost oracle or a
learned gradient-boosted cost model.
"""

from .errors import (
    EdgeplanError,
    ParseError,
    PlanError,
    PlannerError,
    SearchCapExceeded,
    ValidationError,
)
from .estimator import (
    FeatureVector,
    LayerWorkload,
    LearnedEstimator,
    OracleEstimator,
    SyncEvent,
    TraceConfig,
    TraceSet,
    evaluate_model,
    extract_features,
    gen_traces,
    sync_features,
)
from .gbdt import GbdtModel, Hyperparams, load_model, predict, predict_batch, save_model, train_gbdt
from .geometry import (
    Mode,
    Plan,
    PlanEntry,
    Region,
    Scheme,
    TileMap,
    assign_tiles,
    chain_entry_regions,
    feasible,
    input_region,
    node_workload,
    transfer_volumes,
)
from .models import (
    LayerKind,
    LayerSpec,
    ModelGraph,
    layer_flops,
    parse_model,
    serialize_model,
)
from .planner import (
    PlanResult,
    count_search_space,
    performance_scores,
    plan_bruteforce,
    plan_dpp,
    plan_fixed,
    plan_fused_fixed,
    plan_layerwise,
)
from .simulator import (
    CostReport,
    Segment,
    TestbedSpec,
    Topology,
    comm_time,
    make_testbed,
    parse_testbed,
    segment_cost,
    serialize_testbed,
    simulate,
)
from .zoo import BUILTIN_NAMES, builtin_model

__version__ = "0.1.0"
