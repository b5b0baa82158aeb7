"""The metrics plan: a fabric-agnostic DAG of expression nodes."""

from .build import build_plan, requested_metrics
from .explain import plan_to_dict, plan_to_dot
from .ir import (
    MetricsPlan,
    PlanBuilder,
    PlanNode,
    plan_digest,
    reachable_from,
    topo_order,
)
from .normalize import normalize

__all__ = [
    "MetricsPlan",
    "PlanBuilder",
    "PlanNode",
    "build_plan",
    "normalize",
    "plan_digest",
    "plan_to_dict",
    "plan_to_dot",
    "reachable_from",
    "requested_metrics",
    "topo_order",
]
