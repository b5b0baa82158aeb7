"""Reference interpreter: evaluates a finalized plan over a local dataset.

Evaluation is bottom-up per (segment slice, variant) context. Row-level
nodes evaluate once globally as column vectors; unit-level aggregations
group the context's rows by the unit key; population aggregations reduce
either the row domain or the per-unit values. Numbers are exact rationals
throughout (see metriq.semantics), so results are independent of grouping
and evaluation order, and optimization passes preserve them bit for bit.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import TYPE_CHECKING

from .. import semantics
from ..core import AggKind, ValueType
from ..diagnostics import ConfigError, DataError, PlanCorruptionError
from ..plan.ir import MetricsPlan, agg_parts
from .data import Dataset
from .scorecard import CellStats, Cells, Scorecard, render_segment_key, scorecard_from_cells

if TYPE_CHECKING:  # pragma: no cover
    from ..config import AnalysisConfig


def execute_plan(plan: MetricsPlan, ds: Dataset, cfg: "AnalysisConfig") -> Scorecard:
    """Evaluate every requested metric per slice and variant, with statistics.

    Deterministic: identical inputs produce identical scorecards. Division by
    zero propagates as null; slices with under two units per variant report
    values but no test.
    """
    if not plan.finalized:
        raise PlanCorruptionError("plan is not finalized; run the pass pipeline first")
    if ds.schema != plan.schema:
        raise DataError("dataset schema does not match the plan's schema")

    ev = _Evaluator(plan, ds)

    if cfg.mode == "experiment":
        labels = ds.column(cfg.assignment_column)
        analysis_rows = [i for i, lab in enumerate(labels) if lab in (cfg.treatment, cfg.control)]
        _check_contamination(plan, ds, cfg, analysis_rows, labels)
        variants: tuple[str | None, ...] = (cfg.treatment, cfg.control)
    else:
        labels = None
        analysis_rows = list(range(ds.n_rows))
        variants = (None,)

    cells: Cells = {}
    for family in plan.slice_families:
        seg_vectors = [ev.row_vector(plan.segment_nodes[name]) for name in family]
        combos: dict[tuple, list[int]] = {}
        if not family:
            combos[()] = list(analysis_rows)
        else:
            for i in analysis_rows:
                combo = tuple(vec[i] for vec in seg_vectors)
                combos.setdefault(combo, []).append(i)
            if len(combos) > cfg.segment_cardinality_limit:
                raise ConfigError(
                    f"segment slice family {family} produces {len(combos)} distinct "
                    f"values, above the limit of {cfg.segment_cardinality_limit}"
                )
        for combo, rows in combos.items():
            segment = render_segment_key(family, combo)
            for variant in variants:
                if variant is None:
                    ctx_rows = rows
                else:
                    ctx_rows = [i for i in rows if labels[i] == variant]
                ctx = _Context(ev, tuple(ctx_rows))
                for metric, root in plan.metric_roots.items():
                    cell = _metric_cell(plan, cfg, ctx, metric, root)
                    cells.setdefault((metric, segment), {})[variant] = cell

    return scorecard_from_cells(plan, cfg, cells, source="interpreter")


def _check_contamination(plan, ds, cfg, analysis_rows, labels) -> None:
    key_col = ds.column(plan.schema.unit_key(cfg.randomization_unit))
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


def _metric_cell(plan, cfg, ctx: "_Context", metric: str, root: int) -> CellStats:
    if not ctx.rows:
        # No data at all for this slice and variant: report null, matching
        # executed programs where the group simply does not exist.
        return CellStats(value=None, n=0)
    value = semantics.from_rational(ctx.population(root))
    roles = plan.moment_roots.get(metric, {})
    moments = {role: float(ctx.population(nid)) for role, nid in roles.items()}
    if moments:
        n = int(moments["n"])
    elif cfg.mode == "experiment":
        n = _value_only_units(plan, cfg, ctx, root)
    else:
        n = None
    return CellStats(value=value, n=n, moments=moments)


def _value_only_units(plan, cfg, ctx: "_Context", root: int) -> int:
    """Unit count reported for metrics without moment roots.

    Row-domain aggregations count distinct randomization units among rows
    that pass the filter and have a non-null argument (all filtered rows for
    an argument-less count); unit-domain aggregations count non-null per-unit
    values.
    """
    node = plan.node(root)
    args, filt, _ = agg_parts(node)
    if args and plan.node(args[0]).level.kind == "unit":
        values = ctx.unit(args[0]).values()
        return sum(1 for v in values if v is not None)
    key_col = ctx.ev.ds.column(plan.schema.unit_key(cfg.randomization_unit))
    mask = ctx.filter_mask(filt)
    arg_vec = ctx.ev.row_vector(args[0]) if args else None
    units = set()
    for i in ctx.rows:
        if mask is not None and mask[i] is not True:
            continue
        if arg_vec is not None and arg_vec[i] is None:
            continue
        units.add(key_col[i])
    return len(units)


class _Evaluator:
    """Plan-wide evaluation state: global row vectors shared by all contexts."""

    def __init__(self, plan: MetricsPlan, ds: Dataset):
        self.plan = plan
        self.ds = ds
        self._row_cache: dict[int, list] = {}

    def row_vector(self, nid: int) -> list:
        cached = self._row_cache.get(nid)
        if cached is not None:
            return cached
        node = self.plan.node(nid)
        n = self.ds.n_rows
        if node.op == "column":
            name = node.payload[0]
            if node.vtype is ValueType.NUMBER:
                vec = self.ds.rational_column(name)
            else:
                vec = self.ds.column(name)
        elif node.op == "literal":
            vec = [node.payload[1]] * n
        elif node.op == "arith":
            a, b = (self.row_vector(c) for c in node.children)
            op = node.payload[0]
            vec = [semantics.arith_apply(op, a[i], b[i]) for i in range(n)]
        elif node.op == "compare":
            a, b = (self.row_vector(c) for c in node.children)
            op = node.payload[0]
            vec = [semantics.compare_apply(op, a[i], b[i]) for i in range(n)]
        elif node.op == "logic":
            a, b = (self.row_vector(c) for c in node.children)
            op = node.payload[0]
            vec = [semantics.logic_apply(op, a[i], b[i]) for i in range(n)]
        elif node.op == "not":
            a = self.row_vector(node.children[0])
            vec = [semantics.not_apply(a[i]) for i in range(n)]
        elif node.op == "cond":
            p, t, e = (self.row_vector(c) for c in node.children)
            vec = [semantics.cond_apply(p[i], t[i], e[i]) for i in range(n)]
        elif node.op == "is_null":
            a = self.row_vector(node.children[0])
            vec = [v is None for v in a]
        elif node.op == "coalesce":
            a, b = (self.row_vector(c) for c in node.children)
            vec = [a[i] if a[i] is not None else b[i] for i in range(n)]
        else:
            raise PlanCorruptionError(f"node {nid} ({node.op}) is not row-level")
        self._row_cache[nid] = vec
        return vec


class _Context:
    """Evaluation caches for one (slice, variant) subset of rows."""

    def __init__(self, ev: _Evaluator, rows: tuple[int, ...]):
        self.ev = ev
        self.plan = ev.plan
        self.rows = rows
        self._unit_cache: dict[int, dict] = {}
        self._pop_cache: dict[int, object] = {}

    def filter_mask(self, filt: int | None) -> list | None:
        return self.ev.row_vector(filt) if filt is not None else None

    def unit(self, nid: int) -> dict:
        cached = self._unit_cache.get(nid)
        if cached is not None:
            return cached
        node = self.plan.node(nid)
        if node.op not in ("agg", "grouped_agg") or node.level.kind != "unit":
            raise PlanCorruptionError(f"node {nid} ({node.op}) is not a unit aggregation")
        kind, rank = node.payload[0], node.payload[1]
        args, filt, _ = agg_parts(node)
        key_col = self.ev.ds.column(self.plan.schema.unit_key(node.level.unit))
        mask = self.filter_mask(filt)
        arg_vec = self.ev.row_vector(args[0]) if args else None

        grouped: dict = {}
        for i in self.rows:
            grouped.setdefault(key_col[i], []).append(i)
        out: dict = {}
        for key, idxs in grouped.items():
            if mask is not None:
                idxs = [i for i in idxs if mask[i] is True]
            if arg_vec is None:
                out[key] = _agg_value(kind, None, rank, count_rows=len(idxs))
            else:
                out[key] = _agg_value(kind, [arg_vec[i] for i in idxs], rank)
        self._unit_cache[nid] = out
        return out

    def population(self, nid: int):
        if nid in self._pop_cache:
            return self._pop_cache[nid]
        node = self.plan.node(nid)
        if node.op not in ("agg", "grouped_agg") or node.level.kind != "population":
            raise PlanCorruptionError(f"node {nid} ({node.op}) is not a population aggregation")
        kind, rank = node.payload[0], node.payload[1]
        args, filt, _ = agg_parts(node)

        if kind is AggKind.SUM_PROD:
            ys = self.unit(args[0])
            xs = self.unit(args[1])
            total = Fraction(0)
            for key, y in ys.items():
                x = xs.get(key)
                if y is None or x is None:
                    continue
                total += y * x
            value = total
        elif args and self.plan.node(args[0]).level.kind == "unit":
            if filt is not None:
                raise PlanCorruptionError("filter on an aggregation over per-unit values")
            value = _agg_value(kind, list(self.unit(args[0]).values()), rank)
        elif args:
            mask = self.filter_mask(filt)
            arg_vec = self.ev.row_vector(args[0])
            rows = self.rows if mask is None else [i for i in self.rows if mask[i] is True]
            value = _agg_value(kind, [arg_vec[i] for i in rows], rank)
        else:
            mask = self.filter_mask(filt)
            count = (
                len(self.rows)
                if mask is None
                else sum(1 for i in self.rows if mask[i] is True)
            )
            value = _agg_value(kind, None, rank, count_rows=count)
        self._pop_cache[nid] = value
        return value


def _agg_value(kind: AggKind, values, rank, count_rows: int | None = None):
    """Aggregation kernel. Nulls are skipped; empty sums are 0, counts 0,
    and the rest are null."""
    if values is None:
        # Argument-less count: the domain size itself.
        return Fraction(count_rows)
    present = [v for v in values if v is not None]
    if kind is AggKind.COUNT:
        return Fraction(len(present))
    if kind is AggKind.SUM:
        return sum(present, Fraction(0))
    if kind is AggKind.SUM_SQ:
        return sum((v * v for v in present), Fraction(0))
    if not present:
        return None
    if kind is AggKind.AVG:
        return sum(present, Fraction(0)) / len(present)
    if kind is AggKind.MIN:
        return min(present)
    if kind is AggKind.MAX:
        return max(present)
    if kind is AggKind.PERCENTILE:
        ordered = sorted(present)
        idx = math.ceil(rank * len(ordered) / 100)
        return ordered[idx - 1]
    raise PlanCorruptionError(f"unknown aggregation kind {kind}")
