"""Two-stage SQL emission from a finalized metrics plan.

Program shape, for each slice family (overall, each segment, each crossing):

  * stage 1: a per-(variant, segment keys, unit) aggregation CTE over the
    shared ``base`` CTE of row expressions
  * stage 2: one SELECT per metric producing (metric, segment, variant,
    value, n, moment sums), grouped by (variant, segment keys)

all UNION ALLed with a final ORDER BY. Shared nodes appear exactly once as
``e<k>`` aliases named in topological order, so common subexpressions are
computed once. Emission is deterministic byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..core import AggKind, OVERALL_SEGMENT, ValueType
from ..diagnostics import PlanCorruptionError, UnsupportedConstructError
from ..plan.ir import MetricsPlan, PlanNode, agg_parts, plan_digest, reachable_from, topo_order
from ..transforms import VarianceEstimatorKind
from .dialect import FabricDialect

#: Table name emitted programs read from; adapters load datasets under it.
SOURCE_TABLE = "data"

#: Output column contract of emitted programs.
EXPERIMENT_RESULT_COLUMNS = (
    "metric", "segment", "variant", "value", "n",
    "sum_v", "sum_v2", "sum_y", "sum_x", "sum_y2", "sum_x2", "sum_xy",
)
BUSINESS_RESULT_COLUMNS = ("metric", "segment", "value")

_ARITH_KEYS = {"+": "add", "-": "sub", "*": "mul", "/": "div"}
_COMPARE_KEYS = {"==": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}

_MOMENT_ORDER = ("sum_v", "sum_v2", "sum_y", "sum_x", "sum_y2", "sum_x2", "sum_xy")


@dataclass(frozen=True)
class EmittedProgram:
    dialect: str
    text: str
    output_schema: tuple[tuple[str, str], ...]
    plan_digest: str


def emit(plan: MetricsPlan, dialect: FabricDialect) -> EmittedProgram:
    """Render the plan as a query in the dialect.

    Requires a finalized plan (the full pass pipeline applied). Raises
    UnsupportedConstructError when the dialect lacks a needed template or
    capability.
    """
    if not plan.finalized:
        raise PlanCorruptionError("plan is not finalized; run the pass pipeline first")
    return _Emitter(plan, dialect).run()


class _Emitter:
    def __init__(self, plan: MetricsPlan, d: FabricDialect):
        self.plan = plan
        self.d = d
        self.experiment = plan.mode == "experiment"

        roots: list[int] = list(plan.metric_roots.values())
        for roles in plan.moment_roots.values():
            roots.extend(roles.values())
        self.live = reachable_from(plan, roots)

        self.row_needed: set[int] = set()
        self.unit_aggs: dict[str, list[int]] = {}
        for nid in sorted(self.live):
            node = plan.node(nid)
            if node.op not in ("agg", "grouped_agg"):
                continue
            args, filt, keys = agg_parts(node)
            if node.level.kind == "unit":
                self.unit_aggs.setdefault(node.level.unit, []).append(nid)
                self.row_needed.update(args)
            else:
                for a in args:
                    if plan.node(a).level.kind == "row":
                        self.row_needed.add(a)
            if filt is not None:
                self.row_needed.add(filt)
            self.row_needed.update(keys)

        order = topo_order(plan)
        topo_pos = {nid: k for k, nid in enumerate(order)}
        unit_agg_ids = {nid for v in self.unit_aggs.values() for nid in v}
        materialized = [
            nid for nid in order if nid in self.row_needed or nid in unit_agg_ids
        ]
        self.alias = {nid: f"e{k}" for k, nid in enumerate(materialized)}
        self.base_rows = [nid for nid in materialized if nid in self.row_needed]
        for per_unit in self.unit_aggs.values():
            per_unit.sort(key=topo_pos.__getitem__)

        self.rand_key_ref: str | None = None
        self.rand_key_extra: str | None = None
        if self.experiment:
            key_col = plan.schema.unit_key(plan.randomization_unit)
            key_node = plan.unit_key_nodes.get(plan.randomization_unit)
            if key_node is not None and key_node in self.alias:
                self.rand_key_ref = self.ref(key_node)
            else:
                self.rand_key_ref = self.d.ident("uk")
                self.rand_key_extra = f'{self.d.ident(key_col)} AS {self.d.ident("uk")}'

    # -- small renderers ---------------------------------------------------

    def ref(self, nid: int) -> str:
        return self.d.ident(self.alias[nid])

    def literal_sql(self, payload: tuple) -> str:
        tag, value = payload
        if tag == "null":
            return self.d.null_literal
        if tag == "bool":
            return self.d.true_literal if value else self.d.false_literal
        if tag == "str":
            return self.d.string(value)
        return repr(float(value))

    def row_expr(self, nid: int) -> str:
        """Inline rendering of a row-level expression (base stage only)."""
        node = self.plan.node(nid)
        d = self.d
        if node.op == "column":
            return d.ident(node.payload[0])
        if node.op == "literal":
            return self.literal_sql(node.payload)
        ch = [self.row_expr(c) for c in node.children]
        if node.op == "arith":
            return d.template(_ARITH_KEYS[node.payload[0]], op=node.payload[0]).format(*ch)
        if node.op == "compare":
            return d.template(_COMPARE_KEYS[node.payload[0]], op=node.payload[0]).format(*ch)
        if node.op == "logic":
            return d.template(node.payload[0], op=node.payload[0]).format(*ch)
        if node.op == "not":
            return d.template("not").format(*ch)
        if node.op == "cond":
            return d.template("cond").format(*ch)
        if node.op == "is_null":
            return d.template("is_null").format(*ch)
        if node.op == "coalesce":
            return d.template("coalesce").format(*ch)
        raise UnsupportedConstructError(node.op, d.name, "not a row-level construct")

    def rank_fraction(self, rank: Fraction) -> str:
        return repr(float(rank) / 100.0)

    def agg_sql(self, node: PlanNode, arg_ref: str | None, filt_ref: str | None) -> str:
        """Aggregate call text given rendered argument and filter references."""
        d = self.d
        kind: AggKind = node.payload[0]
        if kind is AggKind.PERCENTILE:
            if d.percentile_mode != "function":
                raise UnsupportedConstructError(
                    "Percentile", d.name, "no percentile aggregate in this dialect"
                )
            if arg_ref is None:
                raise PlanCorruptionError("percentile without an argument")
            if filt_ref is not None:
                arg_ref = d.template("filtered_arg").format(filt_ref, arg_ref)
            return f"{d.percentile_function}({arg_ref}, {self.rank_fraction(node.payload[1])})"
        if arg_ref is None:
            if filt_ref is not None:
                return d.template("agg_count_rows_filtered").format(filt_ref)
            return d.template("agg_count_rows")
        if filt_ref is not None:
            arg_ref = d.template("filtered_arg").format(filt_ref, arg_ref)
        key = {
            AggKind.SUM: "agg_sum",
            AggKind.AVG: "agg_avg",
            AggKind.COUNT: "agg_count",
            AggKind.MIN: "agg_min",
            AggKind.MAX: "agg_max",
            AggKind.SUM_SQ: "agg_sum_sq",
        }.get(kind)
        if key is None:
            raise UnsupportedConstructError(kind.value, d.name)
        return d.template(key, op=kind.value).format(arg_ref)

    def stage1_agg(self, nid: int) -> str:
        """A unit-level aggregation rendered over base aliases."""
        node = self.plan.node(nid)
        args, filt, _ = agg_parts(node)
        if node.payload[0] is AggKind.PERCENTILE and self.d.percentile_mode != "function":
            raise UnsupportedConstructError(
                "Percentile", self.d.name,
                "per-unit percentiles need a percentile aggregate function",
            )
        arg_ref = self.ref(args[0]) if args else None
        filt_ref = self.ref(filt) if filt is not None else None
        return self.agg_sql(node, arg_ref, filt_ref)

    def stage2_agg(self, nid: int) -> str:
        """A population aggregation rendered over stage-1 (or base) aliases."""
        node = self.plan.node(nid)
        args, filt, _ = agg_parts(node)
        kind = node.payload[0]
        if kind is AggKind.SUM_PROD:
            t = self.d.template("agg_sum_prod", op=kind.value)
            return t.format(self.ref(args[0]), self.ref(args[1]))
        arg_ref = self.ref(args[0]) if args else None
        filt_ref = self.ref(filt) if filt is not None else None
        return self.agg_sql(node, arg_ref, filt_ref)

    # -- select-list fragments ----------------------------------------------

    def group_key_refs(self, family: tuple[str, ...]) -> list[str]:
        keys = []
        if self.experiment:
            keys.append(self.ref(self.plan.variant_node))
        keys.extend(self.ref(self.plan.segment_nodes[name]) for name in family)
        return keys

    def segment_expr(self, family: tuple[str, ...]) -> str:
        if not family:
            return self.d.string(OVERALL_SEGMENT)
        parts = []
        for name in family:
            ref = self.ref(self.plan.segment_nodes[name])
            node = self.plan.node(self.plan.segment_nodes[name])
            text = ref if node.vtype is ValueType.STRING else self.d.cast_text.format(ref)
            rendered = self.d.template("coalesce").format(text, self.d.string("null"))
            parts.append(self.d.concat.format(self.d.string(f"{name}="), rendered))
        out = parts[0]
        for part in parts[1:]:
            out = self.d.concat.format(self.d.concat.format(out, self.d.string(",")), part)
        return out

    def distinct_units(self, root: PlanNode) -> str:
        """Unit count for value-only metrics over the row domain."""
        d = self.d
        args, filt, _ = agg_parts(root)
        conds = []
        if filt is not None:
            conds.append(self.ref(filt))
        if args:
            conds.append(d.template("not").format(d.template("is_null").format(self.ref(args[0]))))
        if not conds:
            return d.template("count_distinct").format(self.rand_key_ref)
        cond = conds[0]
        for extra in conds[1:]:
            cond = d.template("and").format(cond, extra)
        picked = d.template("cond").format(cond, self.rand_key_ref, d.null_literal)
        return d.template("count_distinct").format(picked)

    # -- whole statements ----------------------------------------------------

    def base_cte(self) -> str:
        items = [f"{self.row_expr(nid)} AS {self.ref(nid)}" for nid in self.base_rows]
        if self.rand_key_extra is not None:
            items.append(self.rand_key_extra)
        d = self.d
        lines = [f'{d.ident("base")} AS (', "  SELECT"]
        lines.append(",\n".join(f"    {item}" for item in items))
        lines.append(f"  FROM {d.ident(SOURCE_TABLE)}")
        if self.experiment:
            col = d.ident(self.plan.assignment_column)
            keep = d.template("or").format(
                d.template("eq").format(col, d.string(self.plan.treatment)),
                d.template("eq").format(col, d.string(self.plan.control)),
            )
            lines.append(f"  WHERE {keep}")
        lines.append(")")
        return "\n".join(lines)

    def unit_cte_name(self, fam_idx: int, unit: str) -> str:
        return f"unit_{fam_idx}_{unit}"

    def unit_cte(self, fam_idx: int, family: tuple[str, ...], unit: str) -> str:
        d = self.d
        keys = self.group_key_refs(family)
        key_node = self.plan.unit_key_nodes[unit]
        select_items = [*keys, self.ref(key_node)]
        for nid in self.unit_aggs[unit]:
            select_items.append(f"{self.stage1_agg(nid)} AS {self.ref(nid)}")
        lines = [f"{d.ident(self.unit_cte_name(fam_idx, unit))} AS (", "  SELECT"]
        lines.append(",\n".join(f"    {item}" for item in select_items))
        lines.append(f'  FROM {d.ident("base")}')
        group = [*keys, self.ref(key_node)]
        lines.append(f"  GROUP BY {', '.join(group)}")
        lines.append(")")
        return "\n".join(lines)

    def result_row(
        self,
        metric: str,
        family: tuple[str, ...],
        value_sql: str,
        n_sql: str | None,
        moments: dict[str, str],
    ) -> list[str]:
        d = self.d
        cols = [
            f'{d.string(metric)} AS {d.ident("metric")}',
            f'{self.segment_expr(family)} AS {d.ident("segment")}',
        ]
        if self.experiment:
            cols.append(f'{self.ref(self.plan.variant_node)} AS {d.ident("variant")}')
        cols.append(f'{value_sql} AS {d.ident("value")}')
        if self.experiment:
            cols.append(f'{n_sql or d.null_literal} AS {d.ident("n")}')
            for name in _MOMENT_ORDER:
                cols.append(f'{moments.get(name, d.null_literal)} AS {d.ident(name)}')
        return cols

    def plain_select(
        self,
        metric: str,
        fam_idx: int,
        family: tuple[str, ...],
        from_name: str,
        value_sql: str,
        n_sql: str | None,
        moments: dict[str, str],
    ) -> str:
        d = self.d
        cols = self.result_row(metric, family, value_sql, n_sql, moments)
        lines = ["SELECT"]
        lines.append(",\n".join(f"  {c}" for c in cols))
        lines.append(f"FROM {d.ident(from_name)}")
        keys = self.group_key_refs(family)
        if keys:
            lines.append(f"GROUP BY {', '.join(keys)}")
        return "\n".join(lines)

    def percentile_select(
        self, metric: str, fam_idx: int, family: tuple[str, ...], root_id: int
    ) -> str:
        """Nearest-rank percentile via an ordered window subquery."""
        d = self.d
        root = self.plan.node(root_id)
        args, filt, _ = agg_parts(root)
        arg = args[0]
        unit_domain = self.plan.node(arg).level.kind == "unit"
        from_name = (
            self.unit_cte_name(fam_idx, self.plan.node(arg).level.unit)
            if unit_domain
            else "base"
        )
        val = self.ref(arg)
        keys = self.group_key_refs(family)

        partition = f"PARTITION BY {', '.join(keys)} ORDER BY {val}" if keys else f"ORDER BY {val}"
        count_partition = f"PARTITION BY {', '.join(keys)}" if keys else ""
        inner_cols = [*keys]
        if self.experiment and not unit_domain:
            inner_cols.append(self.rand_key_ref)
        inner_cols.append(val)
        inner_cols.append(f'{d.template("row_number").format(partition)} AS {d.ident("rn")}')
        inner_cols.append(
            f'{d.template("count_rows_over").format(count_partition)} AS {d.ident("cnt")}'
        )

        not_null = d.template("not").format(d.template("is_null").format(val))
        where = not_null
        if filt is not None:
            where = d.template("and").format(self.ref(filt), not_null)

        frac = self.rank_fraction(root.payload[1])
        idx = d.template("percentile_index").format(frac, d.ident("cnt"))
        hit = d.template("eq").format(d.ident("rn"), idx)
        value_sql = d.template("agg_min").format(
            d.template("cond").format(hit, val, d.null_literal)
        )
        if self.experiment:
            n_sql = (
                d.template("agg_count_rows")
                if unit_domain
                else d.template("count_distinct").format(self.rand_key_ref)
            )
        else:
            n_sql = None

        cols = self.result_row(metric, family, value_sql, n_sql, {})
        lines = ["SELECT"]
        lines.append(",\n".join(f"  {c}" for c in cols))
        lines.append("FROM (")
        lines.append("  SELECT")
        lines.append(",\n".join(f"    {c}" for c in inner_cols))
        lines.append(f"  FROM {d.ident(from_name)}")
        lines.append(f"  WHERE {where}")
        lines.append(f') AS {d.ident("w")}')
        if keys:
            lines.append(f"GROUP BY {', '.join(keys)}")
        return "\n".join(lines)

    def metric_select(self, metric: str, fam_idx: int, family: tuple[str, ...]) -> str:
        plan = self.plan
        root_id = plan.metric_roots[metric]
        root = plan.node(root_id)
        estimator = plan.estimators.get(metric, VarianceEstimatorKind.UNSUPPORTED.value)
        roles = plan.moment_roots.get(metric, {})

        if estimator == VarianceEstimatorKind.STANDARD.value and roles:
            from_name = self.unit_cte_name(fam_idx, plan.randomization_unit)
            moments = {k: self.stage2_agg(nid) for k, nid in roles.items() if k != "n"}
            return self.plain_select(
                metric, fam_idx, family, from_name,
                self.stage2_agg(root_id), self.stage2_agg(roles["n"]), moments,
            )
        if estimator == VarianceEstimatorKind.DELTA_RATIO.value and roles:
            from_name = self.unit_cte_name(fam_idx, plan.randomization_unit)
            moments = {k: self.stage2_agg(nid) for k, nid in roles.items() if k != "n"}
            value = self.d.template("div").format(moments["sum_y"], moments["sum_x"])
            return self.plain_select(
                metric, fam_idx, family, from_name,
                value, self.stage2_agg(roles["n"]), moments,
            )

        # Value-only metrics.
        args, filt, _ = agg_parts(root)
        if root.payload[0] is AggKind.PERCENTILE and self.d.percentile_mode == "window":
            if "percentile_population" not in self.d.capabilities:
                raise UnsupportedConstructError("Percentile", self.d.name)
            return self.percentile_select(metric, fam_idx, family, root_id)
        if args and plan.node(args[0]).level.kind == "unit":
            unit = plan.node(args[0]).level.unit
            from_name = self.unit_cte_name(fam_idx, unit)
            n_sql = self.d.template("agg_count").format(self.ref(args[0]))
            return self.plain_select(
                metric, fam_idx, family, from_name, self.stage2_agg(root_id), n_sql, {}
            )
        n_sql = self.distinct_units(root) if self.experiment else None
        return self.plain_select(
            metric, fam_idx, family, "base", self.stage2_agg(root_id), n_sql, {}
        )

    def run(self) -> EmittedProgram:
        plan = self.plan
        ctes = [self.base_cte()]
        for fam_idx, family in enumerate(plan.slice_families):
            for unit in sorted(self.unit_aggs):
                ctes.append(self.unit_cte(fam_idx, family, unit))

        selects = []
        for metric in sorted(plan.metric_roots):
            for fam_idx, family in enumerate(plan.slice_families):
                try:
                    selects.append(self.metric_select(metric, fam_idx, family))
                except UnsupportedConstructError as exc:
                    raise UnsupportedConstructError(
                        exc.op, exc.dialect, f"metric '{metric}'"
                    ) from exc

        order_cols = "1, 2, 3" if self.experiment else "1, 2"
        text = (
            "WITH\n"
            + ",\n".join(ctes)
            + "\n"
            + "\nUNION ALL\n".join(selects)
            + f"\nORDER BY {order_cols}\n"
        )
        columns = EXPERIMENT_RESULT_COLUMNS if self.experiment else BUSINESS_RESULT_COLUMNS
        types = {
            "metric": "string", "segment": "string", "variant": "string",
        }
        schema = tuple((name, types.get(name, "number")) for name in columns)
        return EmittedProgram(
            dialect=self.d.name,
            text=text,
            output_schema=schema,
            plan_digest=plan_digest(plan),
        )
