"""Lowering a typed metric set plus an analysis config into a metrics plan."""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..core import ValueType
from ..diagnostics import ConfigError
from ..mdl import ast
from ..mdl.typecheck import TypedExpr, TypedMetricSet
from .ir import MetricsPlan, PlanBuilder

if TYPE_CHECKING:  # pragma: no cover
    from ..config import AnalysisConfig


def requested_metrics(tms: TypedMetricSet, cfg: "AnalysisConfig") -> list[str]:
    """Resolve the config's requested groups and metrics to a sorted name list.

    With no groups and no metrics requested, the whole set is selected.
    """
    ms = tms.metric_set
    names: list[str] = []
    if cfg.groups is None and cfg.metrics is None:
        names = [m.name for m in ms.metrics]
    else:
        defined_groups = set(ast.group_names(ms))
        for g in cfg.groups or ():
            if g not in defined_groups:
                raise ConfigError(f"requested metric group '{g}' is not defined")
            names.extend(ast.group_members(ms, g))
        for m in cfg.metrics or ():
            if ms.metric(m) is None:
                raise ConfigError(f"requested metric '{m}' is not defined")
            names.append(m)
    if not names:
        raise ConfigError("the requested metric list is empty")
    return sorted(set(names))


def build_plan(tms: TypedMetricSet, cfg: "AnalysisConfig") -> MetricsPlan:
    """Create a plan with one root per requested metric.

    Shared subtrees become shared nodes through hash-consing, so the result is
    independent of metric declaration order up to node-id renaming.
    """
    names = requested_metrics(tms, cfg)
    if cfg.mode == "experiment":
        spec = tms.schema.column(cfg.assignment_column)
        if spec is None:
            raise ConfigError(f"assignment column '{cfg.assignment_column}' not in schema")
        if spec.vtype is not ValueType.STRING:
            raise ConfigError(
                f"assignment column '{cfg.assignment_column}' must be string-typed"
            )
        if cfg.randomization_unit not in tms.schema.units:
            raise ConfigError(f"unknown randomization unit '{cfg.randomization_unit}'")
    builder = PlanBuilder(tms.schema)

    metric_roots: dict[str, int] = {}
    for name in names:
        metric_roots[name] = _lower(builder, tms.metrics[name].expr)

    segment_nodes: dict[str, int] = {}
    for seg_name in cfg.segment_spec.all_segments():
        typed = tms.segments.get(seg_name)
        if typed is None:
            raise ConfigError(f"requested segment '{seg_name}' is not defined")
        segment_nodes[seg_name] = _lower(builder, typed)

    return builder.freeze(
        metric_roots=metric_roots,
        schema=tms.schema,
        mode=cfg.mode,
        config_digest=cfg.digest(),
        randomization_unit=cfg.randomization_unit,
        assignment_column=cfg.assignment_column,
        treatment=cfg.treatment,
        control=cfg.control,
        segment_nodes=segment_nodes,
        slice_families=cfg.segment_spec.families(),
    )


def _lower(b: PlanBuilder, typed: TypedExpr) -> int:
    node = typed.node
    if isinstance(node, ast.ColumnRef):
        return b.column(node.name)
    if isinstance(node, ast.Literal):
        return b.literal(node.value)
    if isinstance(node, ast.Arithmetic):
        left, right = (_lower(b, c) for c in typed.children)
        return b.arith(node.op, left, right)
    if isinstance(node, ast.Comparison):
        left, right = (_lower(b, c) for c in typed.children)
        return b.compare(node.op, left, right)
    if isinstance(node, ast.Logical):
        left, right = (_lower(b, c) for c in typed.children)
        return b.logic(node.op, left, right)
    if isinstance(node, ast.Not):
        return b.not_(_lower(b, typed.children[0]))
    if isinstance(node, ast.Conditional):
        pred, then_n, else_n = (_lower(b, c) for c in typed.children)
        return b.cond(pred, then_n, else_n)
    if isinstance(node, ast.Aggregation):
        idx = 0
        arg = None
        if node.arg is not None:
            arg = _lower(b, typed.children[idx])
            idx += 1
        filt = None
        if node.filter is not None:
            filt = _lower(b, typed.children[idx])
        args = (arg,) if arg is not None else ()
        return b.agg(node.kind, args, unit=node.level, rank=node.rank, filter=filt)
    raise TypeError(f"unknown AST node: {node!r}")
