"""Enrichment and optimization passes."""

import dataclasses

import pytest

import metriq
from metriq import (
    AnalysisConfig,
    SegmentSpec,
    VarianceEstimatorKind,
    build_plan,
    dedup_common_subexpressions,
    eliminate_null_checks,
    enrich_segments,
    enrich_variance,
    normalize,
    parse_metric_set,
    prune_unused,
    run_pipeline,
    select_variance_estimator,
    type_check,
)
from metriq.core import AggKind
from metriq.diagnostics import ConfigError
from metriq.plan.ir import PlanBuilder, agg_parts
from metriq.testgen import random_case
from support import compare_scorecards


def _plan(schema, source, cfg):
    tms = type_check(parse_metric_set(source), schema)
    return build_plan(tms, cfg)


# ---------------------------------------------------------------------------
# Estimator selection
# ---------------------------------------------------------------------------


def test_worked_classifications(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    kinds = {
        name: select_variance_estimator(plan, root, "User")
        for name, root in plan.metric_roots.items()
    }
    assert kinds["AvgRevPerUser"] is VarianceEstimatorKind.STANDARD
    assert kinds["AvgPLT"] is VarianceEstimatorKind.DELTA_RATIO
    assert kinds["PLT95"] is VarianceEstimatorKind.UNSUPPORTED


def test_unknown_randomization_unit(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    with pytest.raises(ConfigError, match="unknown unit|randomization"):
        select_variance_estimator(plan, plan.metric_roots["AvgPLT"], "Session")


def test_every_metric_gets_exactly_one_estimator():
    for seed in range(30):
        case = random_case(seed)
        tms = metriq.type_check(metriq.parse_metric_set(case.source), case.schema)
        plan = build_plan(tms, case.config)
        enriched, report = enrich_variance(plan, case.config)
        assert set(enriched.estimators) == set(plan.metric_roots)
        for kind in enriched.estimators.values():
            assert kind in {k.value for k in VarianceEstimatorKind}


# ---------------------------------------------------------------------------
# Variance enrichment
# ---------------------------------------------------------------------------


def test_standard_enrichment_adds_three_nodes(website_schema, experiment_config):
    src = "unit User = User;\nmetric M = Avg(Sum<User>(Revenue));"
    plan = _plan(website_schema, src, experiment_config)
    before = len(plan.nodes)
    enriched, report = enrich_variance(plan, experiment_config)
    assert len(enriched.nodes) - before == 3
    assert set(enriched.moment_roots["M"]) == {"n", "sum_v", "sum_v2"}
    assert report.nodes_added == 3


def test_sum_sq_reuses_the_existing_inner_sum(website_schema, experiment_config):
    src = "unit User = User;\nmetric M = Avg(Sum<User>(Revenue));"
    plan = _plan(website_schema, src, experiment_config)
    enriched, _ = enrich_variance(plan, experiment_config)
    root = enriched.node(enriched.metric_roots["M"])
    (v_node,) = agg_parts(root)[0]
    sum_sq = enriched.node(enriched.moment_roots["M"]["sum_v2"])
    assert sum_sq.payload[0] is AggKind.SUM_SQ
    assert agg_parts(sum_sq)[0] == (v_node,)


def test_delta_enrichment_adds_recast_and_six_moments(website_schema, experiment_config):
    src = "unit User = User;\nmetric M = Avg(PageLoadTime);"
    plan = _plan(website_schema, src, experiment_config)
    before = len(plan.nodes)
    enriched, _ = enrich_variance(plan, experiment_config)
    # y and x per-unit recasts plus six population moments
    assert len(enriched.nodes) - before == 8
    roles = enriched.moment_roots["M"]
    assert set(roles) == {"n", "sum_y", "sum_x", "sum_y2", "sum_x2", "sum_xy"}
    y = enriched.node(agg_parts(enriched.node(roles["sum_y"]))[0][0])
    assert y.level.unit == "User"


def test_business_mode_skips_enrichment(website_tms, business_config):
    plan = build_plan(website_tms, business_config)
    enriched, report = enrich_variance(plan, business_config)
    assert enriched is plan
    assert report.nodes_added == 0
    assert "business mode: skipped" in report.notes


def test_unsupported_metrics_gain_no_moments(website_schema, experiment_config):
    src = "unit User = User;\nmetric M = Percentile(PageLoadTime, 95);"
    plan = _plan(website_schema, src, experiment_config)
    enriched, report = enrich_variance(plan, experiment_config)
    assert enriched.moment_roots == {}
    assert report.nodes_added == 0
    assert enriched.estimators["M"] == "Unsupported"


def test_enrichment_is_idempotent(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    once, _ = enrich_variance(plan, experiment_config)
    twice, report = enrich_variance(once, experiment_config)
    assert len(twice.nodes) == len(once.nodes)
    assert report.nodes_added == 0


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def test_segments_wrap_aggregations(website_tms, segmented_config):
    plan = build_plan(website_tms, segmented_config)
    enriched, _ = enrich_variance(plan, segmented_config)
    wrapped, _ = enrich_segments(enriched, segmented_config.segment_spec)
    aggs = [n for n in wrapped.nodes if n.op == "agg"]
    grouped = [n for n in wrapped.nodes if n.op == "grouped_agg"]
    assert not aggs and grouped
    for node in grouped:
        keys = agg_parts(node)[2]
        expected = 3 if node.level.kind == "unit" else 2  # variant, segment[, unit key]
        assert len(keys) == expected
    assert wrapped.variant_node is not None
    assert wrapped.slice_families == ((), ("Country",))


def test_overall_slice_can_be_disabled(website_tms, experiment_config):
    spec = SegmentSpec(segments=("Country",), include_overall=False)
    cfg = dataclasses.replace(experiment_config, segment_spec=spec)
    plan = build_plan(website_tms, cfg)
    wrapped, _ = enrich_segments(plan, spec)
    assert wrapped.slice_families == (("Country",),)


def test_crossed_segments_families(website_tms, experiment_config):
    spec = SegmentSpec(segments=("Country",), combine=(("Country", "Browser"),))
    cfg = dataclasses.replace(experiment_config, segment_spec=spec)
    plan = build_plan(website_tms, cfg)
    wrapped, _ = enrich_segments(plan, spec)
    assert wrapped.slice_families == ((), ("Country",), ("Country", "Browser"))


def test_segment_pass_idempotent(website_tms, segmented_config):
    plan = build_plan(website_tms, segmented_config)
    once, _ = enrich_segments(plan, segmented_config.segment_spec)
    twice, report = enrich_segments(once, segmented_config.segment_spec)
    assert len(twice.nodes) == len(once.nodes)


def test_unknown_segment_rejected(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    with pytest.raises(ConfigError, match="segment"):
        enrich_segments(plan, SegmentSpec(segments=("Nope",)))


def test_crossed_segments_need_arity_two():
    with pytest.raises(ConfigError, match="at least two"):
        SegmentSpec(combine=(("Country",),))


# ---------------------------------------------------------------------------
# Prune (DCE)
# ---------------------------------------------------------------------------


def _independent_reachable(plan, roots):
    # Deliberately separate from plan.ir.reachable_from: recursive DFS.
    seen = set()

    def walk(nid):
        if nid in seen:
            return
        seen.add(nid)
        for child in plan.node(nid).children:
            walk(child)

    for nid in roots:
        walk(nid)
    return seen


def test_prune_keeps_exactly_the_requested_subgraph(website_schema, experiment_config):
    lines = ["unit User = User;"]
    for i in range(10):
        lines.append(f"metric M{i} = Avg(Sum<User>(Col{i}));")
    src = "\n".join(lines)
    manifest = {
        "columns": [
            {"name": "User", "type": "string"},
            {"name": "Variant", "type": "string"},
        ]
        + [{"name": f"Col{i}", "type": "number"} for i in range(10)],
        "units": {"User": "User"},
    }
    schema = metriq.schema_from_manifest(manifest)
    plan = _plan(schema, src, experiment_config)
    pruned, report = prune_unused(plan, {"M3"})

    expected_live = _independent_reachable(plan, [plan.metric_roots["M3"]])
    assert len(pruned.nodes) == len(expected_live)
    assert set(pruned.metric_roots) == {"M3"}
    columns = {n.payload[0] for n in pruned.nodes if n.op == "column"}
    assert columns == {"Col3"}
    assert report.nodes_removed == len(plan.nodes) - len(expected_live)


def test_prune_all_requested_is_identity(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    pruned, report = prune_unused(plan, set(plan.metric_roots))
    assert len(pruned.nodes) == len(plan.nodes)
    assert report.nodes_removed == 0


def test_prune_empty_and_unknown_requests(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    with pytest.raises(ConfigError, match="empty"):
        prune_unused(plan, set())
    with pytest.raises(ConfigError, match="unknown metrics"):
        prune_unused(plan, {"Nope"})


def test_prune_retains_moment_roots(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    enriched, _ = enrich_variance(plan, experiment_config)
    pruned, _ = prune_unused(enriched, {"AvgRevPerUser"})
    assert set(pruned.moment_roots["AvgRevPerUser"]) == {"n", "sum_v", "sum_v2"}


# ---------------------------------------------------------------------------
# CSE
# ---------------------------------------------------------------------------


def test_cse_merges_hand_built_duplicates(website_schema):
    # Assemble a node table with structural duplicates outside the interner.
    b = PlanBuilder(website_schema)
    col_a = b.column("Revenue")
    dup = b.node(col_a)
    import dataclasses as dc

    nodes = list(b._nodes)
    nodes.append(dc.replace(dup))  # literal twin of the column node
    plus = PlanBuilder(website_schema)
    plan = metriq.plan.ir.MetricsPlan(
        nodes=tuple(nodes),
        metric_roots={"a": 0, "b": 1},
        schema=website_schema,
        mode="business",
        config_digest="t",
    )
    merged, report = dedup_common_subexpressions(plan)
    assert len(merged.nodes) == 1
    assert merged.metric_roots == {"a": 0, "b": 0}
    assert "1 duplicate nodes merged" in report.notes


def test_cse_is_identity_on_interned_plans(website_tms, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    merged, report = dedup_common_subexpressions(plan)
    assert len(merged.nodes) == len(plan.nodes)
    assert "0 duplicate nodes merged" in report.notes


def test_duplicate_literals_collapse(website_schema):
    import dataclasses as dc

    b = PlanBuilder(website_schema)
    lit = b.literal(5)
    node = b.node(lit)
    plan = metriq.plan.ir.MetricsPlan(
        nodes=tuple([node, dc.replace(node), dc.replace(node)]),
        metric_roots={"a": 0, "b": 1, "c": 2},
        schema=website_schema,
        mode="business",
        config_digest="t",
    )
    merged, _ = dedup_common_subexpressions(plan)
    assert len(merged.nodes) == 1


# ---------------------------------------------------------------------------
# Null-check elimination
# ---------------------------------------------------------------------------


def test_null_guard_on_non_nullable_column_removed(website_schema, experiment_config):
    # PageLoadTime is non-nullable: the guard must vanish.
    src = (
        "unit User = User;\n"
        "metric M = Avg(Sum<User>(if PageLoadTime == null then 0 else PageLoadTime));"
    )
    plan = normalize(_plan(website_schema, src, experiment_config))
    cleaned, report = eliminate_null_checks(plan)
    root = cleaned.node(cleaned.metric_roots["M"])
    inner = cleaned.node(agg_parts(root)[0][0])
    arg = cleaned.node(agg_parts(inner)[0][0])
    assert arg.op == "column" and arg.payload == ("PageLoadTime",)
    assert "1 null checks removed" in report.notes


def test_null_guard_on_nullable_column_kept(website_schema, experiment_config):
    # Revenue is nullable: the guard must stay (as a coalesce after normalize).
    src = (
        "unit User = User;\n"
        "metric M = Avg(Sum<User>(if Revenue == null then 0 else Revenue));"
    )
    plan = normalize(_plan(website_schema, src, experiment_config))
    cleaned, report = eliminate_null_checks(plan)
    root = cleaned.node(cleaned.metric_roots["M"])
    inner = cleaned.node(agg_parts(root)[0][0])
    arg = cleaned.node(agg_parts(inner)[0][0])
    assert arg.op == "coalesce"
    assert "0 null checks removed" in report.notes


def test_no_null_checks_is_identity(website_tms, experiment_config):
    plan = normalize(build_plan(website_tms, experiment_config))
    cleaned, report = eliminate_null_checks(plan)
    assert len(cleaned.nodes) == len(plan.nodes)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def test_pipeline_fixed_order_and_finalization(website_tms, segmented_config):
    plan = build_plan(website_tms, segmented_config)
    final, reports = run_pipeline(plan, segmented_config)
    names = [r.name for r in reports]
    assert names == [
        "normalize",
        "enrich_variance",
        "enrich_segments",
        "prune_unused",
        "dedup_common_subexpressions",
        "eliminate_null_checks",
        "normalize",
        "prune_unused",
    ]
    assert final.finalized


def test_pipeline_is_idempotent_on_its_output(website_tms, segmented_config):
    plan = build_plan(website_tms, segmented_config)
    final, _ = run_pipeline(plan, segmented_config)
    again, _ = run_pipeline(final, segmented_config)
    assert len(again.nodes) == len(final.nodes)
    assert {m: final.node(n).shash for m, n in final.metric_roots.items()} == {
        m: again.node(n).shash for m, n in again.metric_roots.items()
    }


def test_pass_report_counts_consistent():
    for seed in range(20):
        case = random_case(seed)
        tms = metriq.type_check(metriq.parse_metric_set(case.source), case.schema)
        plan = build_plan(tms, case.config)
        _, reports = run_pipeline(plan, case.config)
        for r in reports:
            assert r.nodes_after == r.nodes_before + r.nodes_added - r.nodes_removed


def test_optimization_passes_preserve_results_bit_exactly():
    for seed in range(25):
        case = random_case(seed, max_units=12, max_rows=80)
        tms = metriq.type_check(metriq.parse_metric_set(case.source), case.schema)
        plan = build_plan(tms, case.config)
        plan = normalize(plan)
        plan, _ = enrich_variance(plan, case.config)
        plan, _ = enrich_segments(plan, case.config.segment_spec)
        baseline = plan.with_updates(finalized=True)
        before = metriq.execute_plan(baseline, case.dataset, case.config)
        for pass_fn in (
            lambda p: prune_unused(p, set(p.metric_roots))[0],
            lambda p: dedup_common_subexpressions(p)[0],
            lambda p: eliminate_null_checks(p)[0],
        ):
            after_plan = pass_fn(plan).with_updates(finalized=True)
            after = metriq.execute_plan(after_plan, case.dataset, case.config)
            mismatches = compare_scorecards(before, after, allow_missing_right=False)
            # bit-exact: tolerance zero
            for a, b in zip(before.rows, after.rows):
                assert a == b, f"seed {seed}: {a} != {b}"
            assert not mismatches
