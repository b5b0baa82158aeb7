"""Brute-force oracle: evaluates metrics straight from the syntax tree.

This is the differential-testing reference. It shares only the parser and
the output containers with the engine: evaluation is naive nested loops over
row dicts in binary64, variances are two-pass definitional formulas over
explicit per-unit value lists, and tail probabilities come from mpmath. No
plan, no transformations, no moment accumulators.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import mpmath

from ..core import AggKind
from ..diagnostics import ConfigError, DataError
from ..mdl import ast, parse_metric_set
from ..stats import CONFIDENCE_Z, STDERR_NOISE_FLOOR, TestResult
from .data import Dataset
from .scorecard import Scorecard, ScorecardRow, render_segment_key

if TYPE_CHECKING:  # pragma: no cover
    from ..config import AnalysisConfig

_MP_SQRT2 = mpmath.sqrt(2)


def brute_force_oracle(source: str, ds: Dataset, cfg: "AnalysisConfig") -> Scorecard:
    """Compute the scorecard for metric source text by direct evaluation."""
    ms = parse_metric_set(source)
    requested = _requested(ms, cfg)

    if cfg.mode == "experiment":
        labels = ds.column(cfg.assignment_column)
        analysis_rows = [
            i for i, lab in enumerate(labels) if lab in (cfg.treatment, cfg.control)
        ]
        _check_contamination(ds, cfg, analysis_rows, labels)
        variants = (cfg.treatment, cfg.control)
    else:
        labels = None
        analysis_rows = list(range(ds.n_rows))
        variants = (None,)

    rows_out: list[ScorecardRow] = []
    for family in cfg.segment_spec.families():
        seg_exprs = [_segment_expr(ms, name) for name in family]
        combos: dict[tuple, list[int]] = {}
        if not family:
            combos[()] = list(analysis_rows)
        else:
            for i in analysis_rows:
                combo = tuple(_row_value(e, ds, i) for e in seg_exprs)
                combos.setdefault(combo, []).append(i)
            if len(combos) > cfg.segment_cardinality_limit:
                raise ConfigError(
                    f"segment slice family {family} produces {len(combos)} distinct "
                    f"values, above the limit of {cfg.segment_cardinality_limit}"
                )
        for combo, rows in combos.items():
            segment = render_segment_key(family, combo)
            for name in requested:
                expr = ms.metric(name).expr
                if cfg.mode == "business":
                    value = _metric_value(expr, ds, rows) if rows else None
                    rows_out.append(ScorecardRow(metric=name, segment=segment, value=value))
                else:
                    rows_out.append(
                        _experiment_row(expr, name, segment, ds, cfg, rows, labels)
                    )

    rows_out.sort(key=lambda r: (r.metric, r.segment))
    return Scorecard(
        mode=cfg.mode,
        rows=tuple(rows_out),
        config_digest=cfg.digest(),
        plan_digest="(oracle)",
        source="oracle",
    )


def _requested(ms: ast.MetricSet, cfg) -> list[str]:
    if cfg.groups is None and cfg.metrics is None:
        names = [m.name for m in ms.metrics]
    else:
        names = []
        for g in cfg.groups or ():
            if g not in ast.group_names(ms):
                raise ConfigError(f"requested metric group '{g}' is not defined")
            names.extend(ast.group_members(ms, g))
        for name in cfg.metrics or ():
            if ms.metric(name) is None:
                raise ConfigError(f"requested metric '{name}' is not defined")
            names.append(name)
    if not names:
        raise ConfigError("the requested metric list is empty")
    return sorted(set(names))


def _segment_expr(ms: ast.MetricSet, name: str) -> ast.Expression:
    seg = ms.segment(name)
    if seg is None:
        raise ConfigError(f"requested segment '{name}' is not defined")
    return seg.expr


def _check_contamination(ds, cfg, analysis_rows, labels) -> None:
    key_col = ds.column(ds.schema.unit_key(cfg.randomization_unit))
    seen: dict = {}
    for i in analysis_rows:
        unit = key_col[i]
        prev = seen.get(unit)
        if prev is None:
            seen[unit] = labels[i]
        elif prev != labels[i]:
            raise DataError(
                f"unit {unit!r} of '{cfg.randomization_unit}' appears in both "
                "variants; assignment is contaminated"
            )


# ---------------------------------------------------------------------------
# Expression evaluation (floats, row at a time)
# ---------------------------------------------------------------------------


def _row_value(expr: ast.Expression, ds: Dataset, i: int):
    if isinstance(expr, ast.ColumnRef):
        return ds.column(expr.name)[i]
    if isinstance(expr, ast.Literal):
        return expr.value
    if isinstance(expr, ast.Arithmetic):
        a = _row_value(expr.left, ds, i)
        b = _row_value(expr.right, ds, i)
        if a is None or b is None:
            return None
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        return a / b if b != 0 else None
    if isinstance(expr, ast.Comparison):
        # Null-literal equality is a null test; other comparisons follow
        # three-valued logic.
        if isinstance(expr.right, ast.Literal) and expr.right.value is None:
            left = _row_value(expr.left, ds, i)
            return (left is None) if expr.op == "==" else (left is not None)
        if isinstance(expr.left, ast.Literal) and expr.left.value is None:
            right = _row_value(expr.right, ds, i)
            return (right is None) if expr.op == "==" else (right is not None)
        a = _row_value(expr.left, ds, i)
        b = _row_value(expr.right, ds, i)
        if a is None or b is None:
            return None
        return {
            "==": a == b, "!=": a != b, "<": a < b,
            "<=": a <= b, ">": a > b, ">=": a >= b,
        }[expr.op]
    if isinstance(expr, ast.Logical):
        a = _row_value(expr.left, ds, i)
        b = _row_value(expr.right, ds, i)
        if expr.op == "and":
            if a is False or b is False:
                return False
            return None if a is None or b is None else True
        if a is True or b is True:
            return True
        return None if a is None or b is None else False
    if isinstance(expr, ast.Not):
        v = _row_value(expr.operand, ds, i)
        return None if v is None else not v
    if isinstance(expr, ast.Conditional):
        cond = _row_value(expr.cond, ds, i)
        branch = expr.then_expr if cond is True else expr.else_expr
        return _row_value(branch, ds, i)
    raise TypeError(f"cannot evaluate {expr!r} as a row expression")


def _filtered_rows(agg: ast.Aggregation, ds: Dataset, rows: list[int]) -> list[int]:
    if agg.filter is None:
        return rows
    return [i for i in rows if _row_value(agg.filter, ds, i) is True]


def _reduce(kind: AggKind, values: list, rank: float | None, row_count: int | None = None):
    if values is None:
        return float(row_count)
    present = [v for v in values if v is not None]
    if kind is AggKind.COUNT:
        return float(len(present))
    if kind is AggKind.SUM:
        return math.fsum(present)
    if not present:
        return None
    if kind is AggKind.AVG:
        return math.fsum(present) / len(present)
    if kind is AggKind.MIN:
        return min(present)
    if kind is AggKind.MAX:
        return max(present)
    if kind is AggKind.PERCENTILE:
        ordered = sorted(present)
        idx = math.ceil(rank * len(ordered) / 100)
        return ordered[idx - 1]
    raise TypeError(f"unexpected aggregation kind {kind}")


def _simple_agg(agg: ast.Aggregation, ds: Dataset, rows: list[int]):
    """One aggregation over the given rows (no nesting below it)."""
    rows = _filtered_rows(agg, ds, rows)
    if agg.arg is None:
        return _reduce(agg.kind, None, agg.rank, row_count=len(rows))
    values = [_row_value(agg.arg, ds, i) for i in rows]
    return _reduce(agg.kind, values, agg.rank)


def _unit_groups(ds: Dataset, unit: str, rows: list[int]) -> dict:
    key_col = ds.column(ds.schema.unit_key(unit))
    groups: dict = {}
    for i in rows:
        groups.setdefault(key_col[i], []).append(i)
    return groups


def _unit_values(inner: ast.Aggregation, ds: Dataset, rows: list[int]) -> list:
    return [
        _simple_agg(inner, ds, group)
        for group in _unit_groups(ds, inner.level, rows).values()
    ]


def _metric_value(expr: ast.Aggregation, ds: Dataset, rows: list[int]):
    if isinstance(expr.arg, ast.Aggregation):
        return _reduce(expr.kind, _unit_values(expr.arg, ds, rows), expr.rank)
    return _simple_agg(expr, ds, rows)


# ---------------------------------------------------------------------------
# Statistics (independent formulas)
# ---------------------------------------------------------------------------


def _classify(expr: ast.Aggregation, rand_unit: str) -> str:
    if expr.kind is not AggKind.AVG:
        return "unsupported"
    if isinstance(expr.arg, ast.Aggregation):
        return "standard" if expr.arg.level == rand_unit else "unsupported"
    return "delta"


def _two_pass_mean_var(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    s2 = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, s2 / n


def _delta_value_var(ys: list[float], xs: list[float]) -> tuple[float, float]:
    n = len(ys)
    sy, sx = math.fsum(ys), math.fsum(xs)
    ratio = sy / sx
    uy, ux = sy / n, sx / n
    vy = math.fsum((y - uy) ** 2 for y in ys) / (n - 1)
    vx = math.fsum((x - ux) ** 2 for x in xs) / (n - 1)
    cyx = math.fsum((y - uy) * (x - ux) for y, x in zip(ys, xs)) / (n - 1)
    var = (vy / ux**2 - 2 * uy * cyx / ux**3 + uy**2 * vx / ux**4) / n
    return ratio, max(var, 0.0)


def _variant_stats(expr: ast.Aggregation, ds, cfg, rows: list[int]):
    """(value, variance, n_units) for one variant, or variance None."""
    if not rows:
        return None, None, 0
    kind = _classify(expr, cfg.randomization_unit)
    value = _metric_value(expr, ds, rows)
    if kind == "standard":
        values = [v for v in _unit_values(expr.arg, ds, rows) if v is not None]
        n = len(values)
        if n < 2 or value is None:
            return value, None, n
        _, var = _two_pass_mean_var(values)
        return value, var, n
    if kind == "delta":
        ys, xs = [], []
        for group in _unit_groups(ds, cfg.randomization_unit, rows).values():
            kept = _filtered_rows(expr, ds, group)
            vals = [v for v in (_row_value(expr.arg, ds, i) for i in kept) if v is not None]
            ys.append(math.fsum(vals))
            xs.append(float(len(vals)))
        n = len(ys)
        if n < 2 or value is None or math.fsum(xs) == 0.0:
            return value, None, n
        _, var = _delta_value_var(ys, xs)
        return value, var, n
    return value, None, _value_only_units(expr, ds, cfg, rows)


def _value_only_units(expr: ast.Aggregation, ds, cfg, rows: list[int]) -> int:
    if isinstance(expr.arg, ast.Aggregation):
        return sum(1 for v in _unit_values(expr.arg, ds, rows) if v is not None)
    key_col = ds.column(ds.schema.unit_key(cfg.randomization_unit))
    kept = _filtered_rows(expr, ds, rows)
    if expr.arg is not None:
        kept = [i for i in kept if _row_value(expr.arg, ds, i) is not None]
    return len({key_col[i] for i in kept})


def _experiment_row(expr, name, segment, ds, cfg, rows, labels) -> ScorecardRow:
    t_rows = [i for i in rows if labels[i] == cfg.treatment]
    c_rows = [i for i in rows if labels[i] == cfg.control]
    vt, var_t, n_t = _variant_stats(expr, ds, cfg, t_rows)
    vc, var_c, n_c = _variant_stats(expr, ds, cfg, c_rows)
    estimator = {"standard": "Standard", "delta": "DeltaRatio", "unsupported": "Unsupported"}[
        _classify(expr, cfg.randomization_unit)
    ]
    row = ScorecardRow(
        metric=name, segment=segment, estimator=estimator,
        value_t=vt, value_c=vc, n_t=n_t, n_c=n_c,
    )
    if var_t is None or var_c is None or vt is None or vc is None:
        return row
    delta = vt - vc
    var_sum = var_t + var_c
    scale = max(1.0, abs(vt), abs(vc))
    if math.sqrt(var_sum) <= STDERR_NOISE_FLOOR * scale:
        var_sum = 0.0
    if var_sum == 0.0:
        if delta != 0.0:
            return row
        z, stderr, p = 0.0, 0.0, 1.0
    else:
        stderr = math.sqrt(var_sum)
        z = delta / stderr
        p = float(mpmath.erfc(abs(z) / _MP_SQRT2))
    test = TestResult(
        value_t=vt, value_c=vc, delta=delta,
        relative_delta=(delta / vc) if vc != 0.0 else None,
        stderr=stderr, z=z, p_value=p,
        ci_low=delta - CONFIDENCE_Z * stderr,
        ci_high=delta + CONFIDENCE_Z * stderr,
        n_t=n_t, n_c=n_c,
    )
    return ScorecardRow(
        metric=name, segment=segment, estimator=estimator,
        value_t=vt, value_c=vc, n_t=n_t, n_c=n_c, test=test,
    )
