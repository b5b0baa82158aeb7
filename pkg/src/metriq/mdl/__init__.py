"""Metric definition language: lexer, parser, pretty printer, and type checker."""

from .ast import (
    Aggregation,
    Arithmetic,
    ColumnRef,
    Comparison,
    Conditional,
    Expression,
    Literal,
    Logical,
    MetricDefinition,
    MetricGroup,
    MetricSet,
    Not,
    SegmentDefinition,
    UnitDecl,
    group_members,
)
from .parser import parse_metric_set
from .printer import format_expr, pretty_print
from .typecheck import TypedExpr, TypedMetricSet, type_check

__all__ = [
    "Aggregation",
    "Arithmetic",
    "ColumnRef",
    "Comparison",
    "Conditional",
    "Expression",
    "Literal",
    "Logical",
    "MetricDefinition",
    "MetricGroup",
    "MetricSet",
    "Not",
    "SegmentDefinition",
    "UnitDecl",
    "group_members",
    "parse_metric_set",
    "pretty_print",
    "format_expr",
    "type_check",
    "TypedExpr",
    "TypedMetricSet",
]
