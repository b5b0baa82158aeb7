"""Type and level checking of metric sets against a dataset schema."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from ..core import AggKind, Level, NULL_ON_EMPTY, ROW, ValueType, unit_level
from ..diagnostics import Diagnostic, DiagnosticError, error_at
from ..schema import DatasetSchema
from . import ast

_ORDERED_TYPES = (ValueType.NUMBER, ValueType.STRING)


@dataclass(frozen=True)
class TypedExpr:
    """An expression node annotated with its type, nullability, and level.

    ``level`` is None for literals, which adapt to the level of their context.
    """

    node: ast.Expression
    vtype: ValueType
    nullable: bool
    level: Level | None
    children: tuple["TypedExpr", ...] = ()


@dataclass(frozen=True)
class TypedMetric:
    definition: ast.MetricDefinition
    expr: TypedExpr


@dataclass(frozen=True)
class TypedMetricSet:
    metric_set: ast.MetricSet
    schema: DatasetSchema
    metrics: Mapping[str, TypedMetric]
    segments: Mapping[str, TypedExpr]


class _Checker:
    def __init__(self, schema: DatasetSchema, declared_units: set[str]):
        self.schema = schema
        self.declared_units = declared_units
        self.problems: list[Diagnostic] = []

    def err(self, msg: str, node) -> None:
        span = getattr(node, "span", None)
        line, col = (span.line, span.col) if span else (0, 0)
        self.problems.append(error_at(msg, line, col))

    def check(self, expr: ast.Expression, where: str) -> TypedExpr:
        if isinstance(expr, ast.ColumnRef):
            spec = self.schema.column(expr.name)
            if spec is None:
                self.err(f"{where}: unknown column '{expr.name}'", expr)
                return TypedExpr(expr, ValueType.NUMBER, True, ROW)
            return TypedExpr(expr, spec.vtype, spec.nullable, ROW)

        if isinstance(expr, ast.Literal):
            v = expr.value
            if v is None:
                return TypedExpr(expr, ValueType.NULL, True, None)
            if isinstance(v, bool):
                return TypedExpr(expr, ValueType.BOOL, False, None)
            if isinstance(v, str):
                return TypedExpr(expr, ValueType.STRING, False, None)
            return TypedExpr(expr, ValueType.NUMBER, False, None)

        if isinstance(expr, ast.Arithmetic):
            left = self.check(expr.left, where)
            right = self.check(expr.right, where)
            for side in (left, right):
                if side.vtype not in (ValueType.NUMBER, ValueType.NULL):
                    self.err(
                        f"{where}: arithmetic '{expr.op}' requires numeric operands, "
                        f"got {side.vtype.value}",
                        expr,
                    )
            level = self.join_levels(left, right, expr, where)
            nullable = left.nullable or right.nullable or expr.op == "/"
            return TypedExpr(expr, ValueType.NUMBER, nullable, level, (left, right))

        if isinstance(expr, ast.Comparison):
            left = self.check(expr.left, where)
            right = self.check(expr.right, where)
            level = self.join_levels(left, right, expr, where)
            null_literal = ValueType.NULL in (left.vtype, right.vtype)
            if null_literal:
                if expr.op not in ("==", "!="):
                    self.err(f"{where}: ordering comparison with null is not allowed", expr)
                # `x == null` is a null test: total, never null itself.
                return TypedExpr(expr, ValueType.BOOL, False, level, (left, right))
            if left.vtype is not right.vtype:
                self.err(
                    f"{where}: cannot compare {left.vtype.value} with {right.vtype.value}",
                    expr,
                )
            elif expr.op not in ("==", "!=") and left.vtype not in _ORDERED_TYPES:
                self.err(f"{where}: ordering comparison requires number or string operands", expr)
            nullable = left.nullable or right.nullable
            return TypedExpr(expr, ValueType.BOOL, nullable, level, (left, right))

        if isinstance(expr, ast.Logical):
            left = self.check(expr.left, where)
            right = self.check(expr.right, where)
            for side in (left, right):
                if side.vtype not in (ValueType.BOOL, ValueType.NULL):
                    self.err(
                        f"{where}: '{expr.op}' requires boolean operands, got {side.vtype.value}",
                        expr,
                    )
            level = self.join_levels(left, right, expr, where)
            nullable = left.nullable or right.nullable
            return TypedExpr(expr, ValueType.BOOL, nullable, level, (left, right))

        if isinstance(expr, ast.Not):
            operand = self.check(expr.operand, where)
            if operand.vtype not in (ValueType.BOOL, ValueType.NULL):
                self.err(f"{where}: 'not' requires a boolean operand", expr)
            return TypedExpr(expr, ValueType.BOOL, operand.nullable, operand.level, (operand,))

        if isinstance(expr, ast.Conditional):
            cond = self.check(expr.cond, where)
            then_t = self.check(expr.then_expr, where)
            else_t = self.check(expr.else_expr, where)
            if cond.vtype not in (ValueType.BOOL, ValueType.NULL):
                self.err(f"{where}: conditional predicate must be boolean", expr)
            vtype, nullable = self.unify_branches(then_t, else_t, expr, where)
            level = self.join_levels(cond, then_t, expr, where)
            level = self._join(level, else_t.level, expr, where)
            return TypedExpr(expr, vtype, nullable, level, (cond, then_t, else_t))

        if isinstance(expr, ast.Aggregation):
            return self.check_agg(expr, where)

        raise TypeError(f"unknown expression node: {expr!r}")

    def check_agg(self, expr: ast.Aggregation, where: str) -> TypedExpr:
        children: list[TypedExpr] = []
        arg = None
        if expr.arg is not None:
            arg = self.check(expr.arg, where)
            children.append(arg)
        if expr.filter is not None:
            filt = self.check(expr.filter, where)
            children.append(filt)
            if filt.vtype not in (ValueType.BOOL, ValueType.NULL):
                self.err(f"{where}: aggregation filter must be boolean", expr)
            if filt.level is not None and filt.level.kind != "row":
                self.err(f"{where}: aggregation filter must be row-level", expr)

        if arg is not None and expr.kind is not AggKind.COUNT:
            if arg.vtype not in (ValueType.NUMBER, ValueType.NULL):
                self.err(
                    f"{where}: non-numeric aggregation argument for {expr.kind.value} "
                    f"(got {arg.vtype.value})",
                    expr,
                )

        arg_level = arg.level if arg is not None else None
        if expr.level is not None:
            # Per-unit aggregation: consumes rows, produces one value per unit.
            if arg_level is not None and arg_level.kind != "row":
                self.err(f"{where}: a unit-level aggregation must aggregate row values", expr)
            level = unit_level(expr.level)
        else:
            # Population aggregation: consumes rows or per-unit values.
            if arg_level is not None and arg_level.kind == "population":
                self.err(
                    f"{where}: a population-level aggregation cannot aggregate "
                    "another population-level value",
                    expr,
                )
            if expr.filter is not None and arg_level is not None and arg_level.kind == "unit":
                self.err(
                    f"{where}: a filter is not allowed on an aggregation over "
                    "per-unit values; put the filter on the inner aggregation",
                    expr,
                )
            level = Level("population")

        nullable = expr.kind in NULL_ON_EMPTY
        return TypedExpr(expr, ValueType.NUMBER, nullable, level, tuple(children))

    # -- level lattice -----------------------------------------------------

    def join_levels(self, left: TypedExpr, right: TypedExpr, node, where: str) -> Level | None:
        return self._join(left.level, right.level, node, where, other=right.level)

    def _join(self, a: Level | None, b: Level | None, node, where: str, other=None) -> Level | None:
        if a is None:
            return b
        if b is None:
            return a
        if a == b:
            return a
        self.err(f"{where}: cannot combine {a} and {b} values in one expression", node)
        return a

    def unify_branches(self, a: TypedExpr, b: TypedExpr, node, where: str):
        if a.vtype is ValueType.NULL:
            return b.vtype if b.vtype is not ValueType.NULL else ValueType.NULL, True
        if b.vtype is ValueType.NULL:
            return a.vtype, True
        if a.vtype is not b.vtype:
            self.err(
                f"{where}: conditional branches have different types "
                f"({a.vtype.value} vs {b.vtype.value})",
                node,
            )
        return a.vtype, a.nullable or b.nullable


def type_check(ms: ast.MetricSet, schema: DatasetSchema) -> TypedMetricSet:
    """Annotate every expression with type, nullability, and level.

    All problems are collected and raised together as a DiagnosticError.
    Unit declarations in the metric set must agree with the schema's units.
    """
    checker = _Checker(schema, {u.name for u in ms.units})

    for u in ms.units:
        key = schema.units.get(u.name)
        if key is None:
            checker.err(f"unit '{u.name}' is not declared in the dataset manifest", u)
        elif key != u.key_column:
            checker.err(
                f"unit '{u.name}' is keyed by '{u.key_column}' here but by "
                f"'{key}' in the manifest",
                u,
            )
        elif schema.column(u.key_column) is None:
            checker.err(f"unit '{u.name}' key column '{u.key_column}' not in schema", u)

    metrics: dict[str, TypedMetric] = {}
    for m in ms.metrics:
        typed = checker.check(m.expr, f"metric '{m.name}'")
        metrics[m.name] = TypedMetric(m, typed)

    segments: dict[str, TypedExpr] = {}
    for s in ms.segments:
        typed = checker.check(s.expr, f"segment '{s.name}'")
        if typed.level is not None and typed.level.kind != "row":
            checker.err(f"segment '{s.name}' must be a row-level expression", s)
        segments[s.name] = typed

    if checker.problems:
        raise DiagnosticError(checker.problems)
    return TypedMetricSet(ms, schema, metrics, segments)
