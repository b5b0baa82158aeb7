"""metriq: define metrics once, compile and analyze them anywhere.

The pipeline: parse metric definitions into a typed AST, lower them into a
fabric-agnostic plan DAG, enrich the plan with variance and segmentation
expressions, optimize it, then either emit fabric SQL or execute it locally
to produce a statistically analyzed scorecard.
"""

from .codegen import builtin_registry, emit
from .config import AnalysisConfig, config_from_dict, load_config
from .engine import (
    Dataset,
    Scorecard,
    SqliteAdapter,
    brute_force_oracle,
    execute_plan,
    load_dataset,
    load_manifest,
    run_emitted,
)
from .mdl import parse_metric_set, pretty_print, type_check
from .plan import build_plan, normalize, topo_order
from .schema import DatasetSchema, schema_from_manifest
from .stats import (
    MomentAccumulator,
    RatioMoments,
    TestResult,
    delta_ratio_variance,
    mean_and_variance,
    normal_cdf,
    percentile_nearest_rank,
    two_sample_test,
)
from .transforms import (
    SegmentSpec,
    VarianceEstimatorKind,
    dedup_common_subexpressions,
    eliminate_null_checks,
    enrich_segments,
    enrich_variance,
    prune_unused,
    run_pipeline,
    select_variance_estimator,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "Dataset",
    "DatasetSchema",
    "MomentAccumulator",
    "RatioMoments",
    "Scorecard",
    "SegmentSpec",
    "SqliteAdapter",
    "TestResult",
    "VarianceEstimatorKind",
    "__version__",
    "build_plan",
    "builtin_registry",
    "brute_force_oracle",
    "config_from_dict",
    "dedup_common_subexpressions",
    "delta_ratio_variance",
    "eliminate_null_checks",
    "emit",
    "enrich_segments",
    "enrich_variance",
    "execute_plan",
    "load_config",
    "load_dataset",
    "load_manifest",
    "mean_and_variance",
    "normal_cdf",
    "normalize",
    "parse_metric_set",
    "percentile_nearest_rank",
    "pretty_print",
    "prune_unused",
    "run_emitted",
    "run_pipeline",
    "schema_from_manifest",
    "select_variance_estimator",
    "topo_order",
    "two_sample_test",
    "type_check",
]
