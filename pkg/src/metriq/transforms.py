"""Plan passes: variance enrichment, segmentation, DCE, CSE, null-check removal.

The pipeline order is fixed:

    normalize -> enrich_variance -> enrich_segments -> prune_unused
              -> dedup_common_subexpressions -> eliminate_null_checks -> normalize

Enrichment precedes pruning so moment roots are retained, and CSE runs after
enrichment so moment expressions share subtrees. Re-running the pipeline on
its own output is a no-op.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

from .core import AggKind
from .diagnostics import ConfigError, PlanCorruptionError
from .plan.ir import (
    MetricsPlan,
    PlanBuilder,
    agg_parts,
    reachable_from,
    remap_root_fields,
    topo_order,
)
from .plan.normalize import normalize

if TYPE_CHECKING:  # pragma: no cover
    from .config import AnalysisConfig


class VarianceEstimatorKind(Enum):
    STANDARD = "Standard"
    DELTA_RATIO = "DeltaRatio"
    UNSUPPORTED = "Unsupported"


#: Moment roles added per estimator kind.
STANDARD_MOMENTS = ("n", "sum_v", "sum_v2")
DELTA_MOMENTS = ("n", "sum_y", "sum_x", "sum_y2", "sum_x2", "sum_xy")


@dataclass(frozen=True)
class SegmentSpec:
    """Which segment slices an analysis computes."""

    segments: tuple[str, ...] = ()
    combine: tuple[tuple[str, ...], ...] = ()
    include_overall: bool = True

    def __post_init__(self):
        for combo in self.combine:
            if len(combo) < 2:
                raise ConfigError("crossed segments need at least two members")

    def all_segments(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in self.segments:
            if name not in seen:
                seen.append(name)
        for combo in self.combine:
            for name in combo:
                if name not in seen:
                    seen.append(name)
        return tuple(seen)

    def families(self) -> tuple[tuple[str, ...], ...]:
        """Slice families in scorecard order: overall, singles, then crossed."""
        fams: list[tuple[str, ...]] = []
        if self.include_overall:
            fams.append(())
        for name in self.segments:
            if (name,) not in fams:
                fams.append((name,))
        for combo in self.combine:
            if tuple(combo) not in fams:
                fams.append(tuple(combo))
        if not fams:
            fams.append(())
        return tuple(fams)


@dataclass(frozen=True)
class PassReport:
    name: str
    nodes_before: int
    nodes_after: int
    nodes_added: int
    nodes_removed: int
    estimators: dict[str, str] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "pass": self.name,
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "nodes_added": self.nodes_added,
            "nodes_removed": self.nodes_removed,
            "estimators": dict(sorted(self.estimators.items())),
            "notes": list(self.notes),
        }


def _report(name: str, before: int, after: int, **kw) -> PassReport:
    added = max(after - before, 0)
    removed = max(before - after, 0)
    return PassReport(name, before, after, added, removed, **kw)


# ---------------------------------------------------------------------------
# Variance estimator selection and enrichment
# ---------------------------------------------------------------------------


def select_variance_estimator(
    plan: MetricsPlan, metric_root: int, randomization_unit: str
) -> VarianceEstimatorKind:
    """Pick the variance treatment for a metric from its plan structure.

    Standard: the root averages per-unit values of the randomization unit,
    so the per-unit values are an independent sample. DeltaRatio: the root
    averages row-level values while randomization is per unit (a dependent
    sample); the metric is recast as a ratio of per-unit sums. Everything
    else (Percentile, Min, Max, totals, averages over a foreign unit)
    reports its value with no test.
    """
    if randomization_unit not in plan.schema.units:
        raise ConfigError(f"unknown randomization unit '{randomization_unit}'")
    root = plan.node(metric_root)
    if root.op not in ("agg", "grouped_agg"):
        raise PlanCorruptionError("metric root is not an aggregation")
    if root.level.kind != "population":
        raise PlanCorruptionError("metric root is not population-level")
    kind = root.payload[0]
    if kind is not AggKind.AVG:
        return VarianceEstimatorKind.UNSUPPORTED
    args, _, _ = agg_parts(root)
    arg = plan.node(args[0])
    if arg.level.kind == "unit":
        if arg.level.unit == randomization_unit:
            return VarianceEstimatorKind.STANDARD
        return VarianceEstimatorKind.UNSUPPORTED
    return VarianceEstimatorKind.DELTA_RATIO


def enrich_variance(plan: MetricsPlan, cfg: "AnalysisConfig") -> tuple[MetricsPlan, PassReport]:
    """Add moment roots (n and the needed sums) for each testable metric.

    Skipped entirely in business mode. Moment nodes are interned, so they
    reuse existing subtrees and re-running the pass is a no-op.
    """
    before = len(plan.nodes)
    if cfg.mode != "experiment":
        return plan, _report("enrich_variance", before, before, notes=("business mode: skipped",))

    unit = cfg.randomization_unit
    b = PlanBuilder(plan.schema)
    mapping: dict[int, int] = {}
    for nid in topo_order(plan):
        b.copy_of(plan, nid, mapping)

    estimators: dict[str, str] = {}
    moment_roots: dict[str, dict[str, int]] = {}
    for name, old_root in sorted(plan.metric_roots.items()):
        kind = select_variance_estimator(plan, old_root, unit)
        estimators[name] = kind.value
        root = mapping[old_root]
        if kind is VarianceEstimatorKind.STANDARD:
            args, _, _ = agg_parts(b.node(root))
            v = args[0]
            moment_roots[name] = {
                "n": b.agg(AggKind.COUNT, (v,)),
                "sum_v": b.agg(AggKind.SUM, (v,)),
                "sum_v2": b.agg(AggKind.SUM_SQ, (v,)),
            }
        elif kind is VarianceEstimatorKind.DELTA_RATIO:
            args, filt, _ = agg_parts(b.node(root))
            w = args[0]
            y = b.agg(AggKind.SUM, (w,), unit=unit, filter=filt)
            x = b.agg(AggKind.COUNT, (w,), unit=unit, filter=filt)
            moment_roots[name] = {
                "n": b.agg(AggKind.COUNT, (x,)),
                "sum_y": b.agg(AggKind.SUM, (y,)),
                "sum_x": b.agg(AggKind.SUM, (x,)),
                "sum_y2": b.agg(AggKind.SUM_SQ, (y,)),
                "sum_x2": b.agg(AggKind.SUM_SQ, (x,)),
                "sum_xy": b.agg(AggKind.SUM_PROD, (y, x)),
            }

    fields = remap_root_fields(plan, mapping)
    fields["moment_roots"] = moment_roots
    fields["estimators"] = estimators
    new_plan = b.freeze(**fields)
    return new_plan, _report(
        "enrich_variance", before, len(new_plan.nodes), estimators=estimators
    )


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def enrich_segments(plan: MetricsPlan, spec: SegmentSpec) -> tuple[MetricsPlan, PassReport]:
    """Turn every aggregation into a grouped aggregation with explicit keys.

    Group keys, in order: the variant column (experiment mode), the segment
    expressions sorted by name, and for unit-level aggregations the unit key
    column. Execution restricts the segment keys to each slice family; the
    overall slice uses no segment keys. Idempotent: grouped aggregations are
    left untouched.
    """
    before = len(plan.nodes)
    for name in spec.all_segments():
        if name not in plan.segment_nodes:
            raise ConfigError(f"segment '{name}' was not captured at plan build time")
        if plan.node(plan.segment_nodes[name]).level.kind != "row":
            raise ConfigError(f"segment '{name}' must be a row-level expression")

    b = PlanBuilder(plan.schema)
    mapping: dict[int, int] = {}

    def shared_keys() -> tuple[int, ...]:
        keys: list[int] = []
        if plan.mode == "experiment":
            keys.append(b.column(plan.assignment_column))
        for name in sorted(spec.all_segments()):
            keys.append(b.copy_of(plan, plan.segment_nodes[name], mapping))
        return tuple(keys)

    unit_keys: dict[str, int] = {}

    def unit_key(unit: str) -> int:
        if unit not in unit_keys:
            unit_keys[unit] = b.column(plan.schema.unit_key(unit))
        return unit_keys[unit]

    for nid in topo_order(plan):
        node = plan.node(nid)
        if node.op == "agg":
            args, filt, _ = agg_parts(node)
            new_args = tuple(mapping[a] for a in args)
            new_filt = mapping[filt] if filt is not None else None
            keys = shared_keys()
            unit = node.level.unit if node.level.kind == "unit" else None
            if unit is not None:
                keys = keys + (unit_key(unit),)
            mapping[nid] = b.grouped_agg(
                node.payload[0], new_args, keys,
                unit=unit, rank=node.payload[1], filter=new_filt,
            )
        else:
            b.copy_of(plan, nid, mapping)

    fields = remap_root_fields(plan, mapping)
    fields["slice_families"] = spec.families()
    if plan.mode == "experiment":
        fields["variant_node"] = b.column(plan.assignment_column)
    fields["segment_nodes"] = {
        name: b.copy_of(plan, plan.segment_nodes[name], mapping)
        for name in spec.all_segments()
    }
    fields["unit_key_nodes"] = dict(unit_keys)
    new_plan = b.freeze(**fields)
    return new_plan, _report("enrich_segments", before, len(new_plan.nodes))


# ---------------------------------------------------------------------------
# Optimizations
# ---------------------------------------------------------------------------


def prune_unused(plan: MetricsPlan, requested: set[str]) -> tuple[MetricsPlan, PassReport]:
    """Keep exactly the nodes reachable from the requested metric and moment roots."""
    if not requested:
        raise ConfigError("prune: the requested metric set is empty")
    unknown = sorted(requested - set(plan.metric_roots))
    if unknown:
        raise ConfigError(f"prune: unknown metrics {unknown}")

    before = len(plan.nodes)
    roots = [plan.metric_roots[m] for m in sorted(requested)]
    for m in sorted(requested):
        roots.extend(plan.moment_roots.get(m, {}).values())
    live = reachable_from(plan, roots)

    b = PlanBuilder(plan.schema)
    mapping: dict[int, int] = {}
    for nid in topo_order(plan):
        if nid in live:
            b.copy_of(plan, nid, mapping)

    fields = remap_root_fields(plan, mapping)
    fields["metric_roots"] = {
        m: mapping[nid] for m, nid in plan.metric_roots.items() if m in requested
    }
    fields["moment_roots"] = {
        m: {role: mapping[nid] for role, nid in roles.items()}
        for m, roles in plan.moment_roots.items()
        if m in requested
    }
    fields["estimators"] = {
        m: kind for m, kind in plan.estimators.items() if m in requested
    }
    new_plan = b.freeze(**fields)
    return new_plan, _report("prune_unused", before, len(new_plan.nodes))


def dedup_common_subexpressions(plan: MetricsPlan) -> tuple[MetricsPlan, PassReport]:
    """Merge structurally equal nodes, re-pointing parents to the survivor.

    Re-interning bottom-up merges duplicates automatically: once children are
    merged, equal parents intern to the same node. Plans built through the
    interning constructors are already deduplicated, so there this verifies
    rather than rewrites; it repairs node tables assembled by hand. Distinct
    surviving nodes with colliding structural hashes are an invariant breach.
    """
    before = len(plan.nodes)
    b = PlanBuilder(plan.schema)
    mapping: dict[int, int] = {}
    for nid in topo_order(plan):
        b.copy_of(plan, nid, mapping)

    by_hash: dict[int, int] = {}
    for new_id in set(mapping.values()):
        node = b.node(new_id)
        other = by_hash.setdefault(node.shash, new_id)
        if other != new_id:
            raise PlanCorruptionError(
                f"structural hash collision between nodes {other} and {new_id}"
            )

    fields = remap_root_fields(plan, mapping)
    new_plan = b.freeze(**fields)
    merged = before - len(new_plan.nodes)
    return new_plan, _report(
        "dedup_common_subexpressions",
        before,
        len(new_plan.nodes),
        notes=(f"{merged} duplicate nodes merged",),
    )


def eliminate_null_checks(
    plan: MetricsPlan, schema=None
) -> tuple[MetricsPlan, PassReport]:
    """Drop null tests and coalesces that schema nullability proves redundant.

    ``is-null(e)`` becomes false and ``coalesce(e, k)`` becomes e whenever e
    cannot be null per declared column nullability. Conditionals that
    depended on removed checks are simplified by re-running normalize.
    """
    schema = schema or plan.schema
    before = len(plan.nodes)
    # Canonicalize first so `x == null` tests appear as is-null/coalesce nodes.
    plan = normalize(plan)
    live = reachable_from(
        plan,
        list(plan.metric_roots.values())
        + [nid for roles in plan.moment_roots.values() for nid in roles.values()],
    )
    b = PlanBuilder(schema)
    mapping: dict[int, int] = {}
    removed = 0
    for nid in topo_order(plan):
        node = plan.node(nid)
        if node.op == "is_null" and not plan.node(node.children[0]).nullable:
            mapping[nid] = b.literal(False)
            removed += nid in live
        elif node.op == "coalesce" and not plan.node(node.children[0]).nullable:
            mapping[nid] = mapping[node.children[0]]
            removed += nid in live
        else:
            b.copy_of(plan, nid, mapping)

    rewritten = b.freeze(**remap_root_fields(plan, mapping))
    new_plan = normalize(rewritten)
    return new_plan, _report(
        "eliminate_null_checks",
        before,
        len(new_plan.nodes),
        notes=(f"{removed} null checks removed",),
    )


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def run_pipeline(plan: MetricsPlan, cfg: "AnalysisConfig") -> tuple[MetricsPlan, list[PassReport]]:
    """Apply the full pass pipeline in its fixed order and mark the plan final."""
    reports: list[PassReport] = []

    before = len(plan.nodes)
    plan = normalize(plan)
    reports.append(_report("normalize", before, len(plan.nodes)))

    plan, rep = enrich_variance(plan, cfg)
    reports.append(rep)

    plan, rep = enrich_segments(plan, cfg.segment_spec)
    reports.append(rep)

    plan, rep = prune_unused(plan, set(plan.metric_roots))
    reports.append(rep)

    plan, rep = dedup_common_subexpressions(plan)
    reports.append(rep)

    plan, rep = eliminate_null_checks(plan)
    reports.append(rep)

    before = len(plan.nodes)
    plan = normalize(plan)
    reports.append(_report("normalize", before, len(plan.nodes)))

    # Rewrites may orphan nodes; sweep them so emission sees a tight table.
    plan, rep = prune_unused(plan, set(plan.metric_roots))
    reports.append(rep)

    return plan.with_updates(finalized=True), reports
