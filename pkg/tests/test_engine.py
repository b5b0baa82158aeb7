"""Dataset loading and the reference interpreter."""

import dataclasses
import math

import pytest

import metriq
from metriq import AnalysisConfig, build_plan, execute_plan, run_pipeline
from metriq.core import OVERALL_SEGMENT
from metriq.diagnostics import ConfigError, DataError, PlanCorruptionError
from metriq.engine.data import dataset_from_csv, dataset_from_jsonl, dataset_from_rows
from metriq.engine.scorecard import scorecard_to_csv, scorecard_to_json
from metriq.testgen import random_case


def _finalized(tms, cfg):
    plan = build_plan(tms, cfg)
    final, _ = run_pipeline(plan, cfg)
    return final


# ---------------------------------------------------------------------------
# load_dataset
# ---------------------------------------------------------------------------


def test_six_row_fixture_loads(six_row_dataset):
    assert six_row_dataset.n_rows == 6
    assert six_row_dataset.column("Revenue")[2] is None


def test_bad_number_reports_row_and_column(website_schema):
    csv_text = "User,Revenue,PageLoadTime,Country,Browser,Variant\nA,abc,1,US,Edge,T\n"
    with pytest.raises(DataError, match=r"'abc' as a number at row 1, column 'Revenue'"):
        dataset_from_csv(csv_text, website_schema)


def test_null_in_non_nullable_rejected(website_schema):
    csv_text = "User,Revenue,PageLoadTime,Country,Browser,Variant\nA,1,,US,Edge,T\n"
    with pytest.raises(DataError, match="non-nullable column 'PageLoadTime'"):
        dataset_from_csv(csv_text, website_schema)


def test_missing_declared_column_rejected(website_schema):
    with pytest.raises(DataError, match="missing declared column 'Variant'"):
        dataset_from_csv("User,Revenue,PageLoadTime,Country,Browser\n", website_schema)


def test_header_only_csv_is_a_valid_empty_dataset(website_schema):
    ds = dataset_from_csv(
        "User,Revenue,PageLoadTime,Country,Browser,Variant\n", website_schema
    )
    assert ds.n_rows == 0


def test_jsonl_loading(website_schema):
    lines = (
        '{"User": "A", "Revenue": 3, "PageLoadTime": 120, "Country": "US",'
        ' "Browser": "Edge", "Variant": "T"}\n'
        '{"User": "B", "Revenue": null, "PageLoadTime": 95, "Country": "DE",'
        ' "Browser": "Chrome", "Variant": "C"}\n'
    )
    ds = dataset_from_jsonl(lines, website_schema)
    assert ds.n_rows == 2
    assert ds.column("Revenue") == [3.0, None]


def test_jsonl_type_mismatch(website_schema):
    with pytest.raises(DataError, match="expected a number at row 1"):
        dataset_from_jsonl(
            '{"User": "A", "Revenue": "x", "PageLoadTime": 1, "Country": "US",'
            ' "Browser": "Edge", "Variant": "T"}\n',
            website_schema,
        )


def test_non_finite_rejected(website_schema):
    csv_text = "User,Revenue,PageLoadTime,Country,Browser,Variant\nA,inf,1,US,Edge,T\n"
    with pytest.raises(DataError, match="non-finite"):
        dataset_from_csv(csv_text, website_schema)


# ---------------------------------------------------------------------------
# execute_plan
# ---------------------------------------------------------------------------


def test_avg_rev_per_user_on_fixture(website_tms, six_row_dataset, experiment_config):
    final = _finalized(website_tms, experiment_config)
    card = execute_plan(final, six_row_dataset, experiment_config)
    row = card.row("AvgRevPerUser")
    assert row.value_t == 5.0  # (3 + 7 + 0) over users A and B, exactly
    assert row.value_c == 3.0
    assert (row.n_t, row.n_c) == (2, 2)
    assert row.test is not None


def test_plt95_nearest_rank_over_hundred_values(website_schema):
    rows = [
        {
            "User": f"u{i}", "Revenue": 0, "PageLoadTime": float(i),
            "Country": "US", "Browser": "Edge", "Variant": "T",
        }
        for i in range(1, 101)
    ]
    ds = dataset_from_rows(website_schema, rows)
    cfg = AnalysisConfig(mode="business")
    tms = metriq.type_check(metriq.parse_metric_set(
        "unit User = User;\nmetric PLT95 = Percentile(PageLoadTime, 95);"
    ), website_schema)
    final = _finalized(tms, cfg)
    card = execute_plan(final, ds, cfg)
    assert card.row("PLT95").value == 95.0


def test_business_mode_rows_are_value_only(website_tms, six_row_dataset, business_config):
    final = _finalized(website_tms, business_config)
    card = execute_plan(final, six_row_dataset, business_config)
    row = card.row("AvgRevPerUser")
    assert row.value == 4.0  # (10 + 0 + 2 + 4) over four users
    assert row.test is None and row.value_t is None
    text = scorecard_to_json(card)
    assert "value_t" not in text and "p_value" not in text


def test_segment_slices(website_tms, six_row_dataset, segmented_config):
    final = _finalized(website_tms, segmented_config)
    card = execute_plan(final, six_row_dataset, segmented_config)
    segments = {r.segment for r in card.rows if r.metric == "AvgRevPerUser"}
    assert segments == {OVERALL_SEGMENT, "Country=US", "Country=DE"}


def test_contaminated_assignment_rejected(website_tms, website_schema, experiment_config):
    rows = [
        {"User": "A", "Revenue": 1, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "T"},
        {"User": "A", "Revenue": 2, "PageLoadTime": 2, "Country": "US",
         "Browser": "Edge", "Variant": "C"},
        {"User": "B", "Revenue": 1, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "C"},
    ]
    ds = dataset_from_rows(website_schema, rows)
    final = _finalized(website_tms, experiment_config)
    with pytest.raises(DataError, match="contaminated"):
        execute_plan(final, ds, experiment_config)


def test_rows_outside_the_variant_labels_are_ignored(website_tms, website_schema, experiment_config):
    rows = [
        {"User": "A", "Revenue": 4, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "T"},
        {"User": "B", "Revenue": 2, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "T"},
        {"User": "C", "Revenue": 8, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "C"},
        {"User": "D", "Revenue": 6, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "C"},
        {"User": "E", "Revenue": 999, "PageLoadTime": 1, "Country": "US",
         "Browser": "Edge", "Variant": "holdout"},
    ]
    ds = dataset_from_rows(website_schema, rows)
    final = _finalized(website_tms, experiment_config)
    card = execute_plan(final, ds, experiment_config)
    row = card.row("AvgRevPerUser")
    assert (row.value_t, row.value_c) == (3.0, 7.0)


def test_unfinalized_plan_rejected(website_tms, six_row_dataset, experiment_config):
    plan = build_plan(website_tms, experiment_config)
    with pytest.raises(PlanCorruptionError, match="finalized"):
        execute_plan(plan, six_row_dataset, experiment_config)


def test_empty_dataset_yields_null_rows(website_tms, website_schema, experiment_config):
    ds = dataset_from_csv(
        "User,Revenue,PageLoadTime,Country,Browser,Variant\n", website_schema
    )
    final = _finalized(website_tms, experiment_config)
    card = execute_plan(final, ds, experiment_config)
    for row in card.rows:
        assert row.segment == OVERALL_SEGMENT
        assert row.value_t is None and row.value_c is None
        assert row.test is None


def test_division_by_zero_propagates_null(website_schema, experiment_config):
    src = "unit User = User;\nmetric M = Avg(Revenue / (PageLoadTime - PageLoadTime));"
    tms = metriq.type_check(metriq.parse_metric_set(src), website_schema)
    rows = [
        {"User": u, "Revenue": 1, "PageLoadTime": 5, "Country": "US",
         "Browser": "Edge", "Variant": v}
        for u, v in (("A", "T"), ("B", "T"), ("C", "C"), ("D", "C"))
    ]
    ds = dataset_from_rows(website_schema, rows)
    final = _finalized(tms, experiment_config)
    card = execute_plan(final, ds, experiment_config)
    row = card.row("M")
    assert row.value_t is None and row.value_c is None


def test_segment_cardinality_guard(website_tms, website_schema, experiment_config):
    rows = [
        {"User": f"u{i}", "Revenue": 1, "PageLoadTime": 1, "Country": f"c{i}",
         "Browser": "Edge", "Variant": "T" if i % 2 else "C"}
        for i in range(12)
    ]
    ds = dataset_from_rows(website_schema, rows)
    cfg = dataclasses.replace(
        experiment_config,
        segment_spec=metriq.SegmentSpec(segments=("Country",)),
        segment_cardinality_limit=5,
    )
    final = _finalized(website_tms, cfg)
    with pytest.raises(ConfigError, match="above the limit"):
        execute_plan(final, ds, cfg)


def test_slice_additivity_for_sum_metrics(website_schema, experiment_config):
    src = "unit User = User;\nmetric Total = Sum(Revenue);\nsegment Country = Country;"
    tms = metriq.type_check(metriq.parse_metric_set(src), website_schema)
    case_rows = []
    import random

    rng = random.Random(5)
    for i in range(40):
        case_rows.append(
            {"User": f"u{i % 9}", "Revenue": float(rng.randint(0, 9)),
             "PageLoadTime": 1.0, "Country": rng.choice(["US", "DE", "BR"]),
             "Browser": "Edge", "Variant": "T" if (i % 9) % 2 else "C"}
        )
    ds = dataset_from_rows(website_schema, case_rows)
    cfg = dataclasses.replace(
        experiment_config, segment_spec=metriq.SegmentSpec(segments=("Country",))
    )
    final = _finalized(tms, cfg)
    card = execute_plan(final, ds, cfg)
    overall = card.row("Total")
    by_country = [r for r in card.rows if r.segment != OVERALL_SEGMENT]
    assert sum(r.value_t for r in by_country) == overall.value_t
    assert sum(r.value_c for r in by_country) == overall.value_c


def test_scorecard_serialization_is_deterministic(website_tms, six_row_dataset, segmented_config):
    final = _finalized(website_tms, segmented_config)
    a = execute_plan(final, six_row_dataset, segmented_config)
    b = execute_plan(final, six_row_dataset, segmented_config)
    assert scorecard_to_json(a) == scorecard_to_json(b)
    assert scorecard_to_csv(a) == scorecard_to_csv(b)


def test_null_discipline_between_count_and_sum(website_tms, six_row_dataset, experiment_config):
    src = (
        "unit User = User;\n"
        "metric NonNull = Count(Revenue);\n"
        "metric Total = Sum(Revenue);\n"
    )
    tms = metriq.type_check(metriq.parse_metric_set(src), website_tms.schema)
    final = _finalized(tms, experiment_config)
    card = execute_plan(final, six_row_dataset, experiment_config)
    # Treatment has 4 rows, one with null revenue: Count skips it, Sum skips it.
    assert card.row("NonNull").value_t == 3.0
    assert card.row("Total").value_t == 10.0


def test_interpreter_output_is_stable_across_runs():
    case = random_case(11)
    tms = metriq.type_check(metriq.parse_metric_set(case.source), case.schema)
    plan = build_plan(tms, case.config)
    final, _ = run_pipeline(plan, case.config)
    first = execute_plan(final, case.dataset, case.config)
    second = execute_plan(final, case.dataset, case.config)
    assert scorecard_to_json(first) == scorecard_to_json(second)
