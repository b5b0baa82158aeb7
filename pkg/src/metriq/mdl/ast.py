"""Syntax tree for metric sets.

Nodes compare structurally; source spans are carried for diagnostics but are
excluded from equality so that parse(pretty_print(ast)) == ast holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import AggKind


@dataclass(frozen=True)
class Span:
    line: int
    col: int


def _span_field():
    return field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class ColumnRef:
    name: str
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Literal:
    value: float | str | bool | None
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Arithmetic:
    op: str  # "+", "-", "*", "/"
    left: Expression
    right: Expression
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Comparison:
    op: str  # "==", "!=", "<", "<=", ">", ">="
    left: Expression
    right: Expression
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Logical:
    op: str  # "and", "or"
    left: Expression
    right: Expression
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Not:
    operand: Expression
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Conditional:
    cond: Expression
    then_expr: Expression
    else_expr: Expression
    span: Span | None = _span_field()


@dataclass(frozen=True)
class Aggregation:
    kind: AggKind
    arg: Expression | None
    level: str | None = None  # unit name, or None for a population aggregation
    rank: float | None = None  # Percentile only
    filter: Expression | None = None
    span: Span | None = _span_field()


Expression = (
    ColumnRef | Literal | Arithmetic | Comparison | Logical | Not | Conditional | Aggregation
)


@dataclass(frozen=True)
class UnitDecl:
    name: str
    key_column: str
    span: Span | None = _span_field()


@dataclass(frozen=True)
class MetricDefinition:
    name: str
    expr: Expression
    groups: tuple[str, ...] = ()
    description: str | None = None
    span: Span | None = _span_field()


@dataclass(frozen=True)
class SegmentDefinition:
    name: str
    expr: Expression
    span: Span | None = _span_field()


@dataclass(frozen=True)
class MetricGroup:
    name: str
    members: tuple[str, ...]
    span: Span | None = _span_field()


@dataclass(frozen=True)
class MetricSet:
    # The name is artifact metadata (usually the source file name), not part
    # of the language, so it is excluded from structural equality.
    name: str = field(compare=False)
    units: tuple[UnitDecl, ...] = ()
    metrics: tuple[MetricDefinition, ...] = ()
    segments: tuple[SegmentDefinition, ...] = ()
    groups: tuple[MetricGroup, ...] = ()

    def metric(self, name: str) -> MetricDefinition | None:
        for m in self.metrics:
            if m.name == name:
                return m
        return None

    def segment(self, name: str) -> SegmentDefinition | None:
        for s in self.segments:
            if s.name == name:
                return s
        return None


def group_names(ms: MetricSet) -> list[str]:
    """All group names, from group definitions and metric `in` clauses."""
    names: list[str] = []
    for g in ms.groups:
        if g.name not in names:
            names.append(g.name)
    for m in ms.metrics:
        for g in m.groups:
            if g not in names:
                names.append(g)
    return names


def group_members(ms: MetricSet, group: str) -> list[str]:
    """Metrics belonging to a group, via the group definition or `in` clauses."""
    members: list[str] = []
    for g in ms.groups:
        if g.name == group:
            for m in g.members:
                if m not in members:
                    members.append(m)
    for m in ms.metrics:
        if group in m.groups and m.name not in members:
            members.append(m.name)
    return members


def walk(expr: Expression):
    """Yield expr and all of its descendants, depth first."""
    yield expr
    if isinstance(expr, (Arithmetic, Comparison, Logical)):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Not):
        yield from walk(expr.operand)
    elif isinstance(expr, Conditional):
        yield from walk(expr.cond)
        yield from walk(expr.then_expr)
        yield from walk(expr.else_expr)
    elif isinstance(expr, Aggregation):
        if expr.arg is not None:
            yield from walk(expr.arg)
        if expr.filter is not None:
            yield from walk(expr.filter)


def agg_depth(expr: Expression) -> int:
    """Maximum aggregation nesting depth within expr."""
    if isinstance(expr, Aggregation):
        inner = 0
        if expr.arg is not None:
            inner = max(inner, agg_depth(expr.arg))
        if expr.filter is not None:
            inner = max(inner, agg_depth(expr.filter))
        return 1 + inner
    if isinstance(expr, (Arithmetic, Comparison, Logical)):
        return max(agg_depth(expr.left), agg_depth(expr.right))
    if isinstance(expr, Not):
        return agg_depth(expr.operand)
    if isinstance(expr, Conditional):
        return max(agg_depth(expr.cond), agg_depth(expr.then_expr), agg_depth(expr.else_expr))
    return 0
