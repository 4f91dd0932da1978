"""Condition-aware similarity search over unit-norm embeddings.

Fixed visual embeddings are re-scored under text-derived conditions by
rotating the database cone onto the condition's textual mean, mapping
into the tangent space there, and projecting onto the span of the top
singular directions of the condition's prompt embeddings. Switching
conditions reuses the stored embeddings; nothing is re-encoded.
"""

from ._backend import BACKEND
from .conditioning import (
    ModulatorConfig,
    ZeroProjectionPolicy,
    csim_asym,
    csim_clay,
    csim_raw,
    csim_sym,
    modulate,
    modulate_batch,
)
from .evaluation import (
    MetricsReport,
    QuerySet,
    SplitSpec,
    average_precision,
    grouped_map,
    mean_ap,
    mean_ap_raw,
    recall_at_k,
    split_query_database,
)
from .geometry import (
    Rotation,
    TangentVector,
    apply_rotation,
    exp_map,
    householder_align,
    log_map,
    normalize,
    spherical_mean,
)
from .index import (
    ConditionedView,
    Database,
    TimingReport,
    ViewCache,
    bench_condition_switch,
    build_index,
    prepare_condition,
    query_topk,
)
from .subspace import (
    ConditionSubspace,
    PromptMatrix,
    build_subspace,
    explained_energy,
    merge_conditions,
    project,
)
from .synthbench import (
    SyntheticWorld,
    WorldConfig,
    cross_condition_matrix,
    generate_world,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConditionSubspace",
    "ConditionedView",
    "Database",
    "MetricsReport",
    "ModulatorConfig",
    "PromptMatrix",
    "QuerySet",
    "Rotation",
    "SplitSpec",
    "SyntheticWorld",
    "TangentVector",
    "TimingReport",
    "ViewCache",
    "WorldConfig",
    "apply_rotation",
    "average_precision",
    "bench_condition_switch",
    "build_index",
    "build_subspace",
    "cross_condition_matrix",
    "csim_asym",
    "csim_clay",
    "csim_raw",
    "csim_sym",
    "exp_map",
    "explained_energy",
    "generate_world",
    "grouped_map",
    "householder_align",
    "log_map",
    "mean_ap",
    "mean_ap_raw",
    "merge_conditions",
    "modulate",
    "modulate_batch",
    "normalize",
    "prepare_condition",
    "project",
    "query_topk",
    "recall_at_k",
    "spherical_mean",
    "split_query_database",
    "ZeroProjectionPolicy",
]
