"""Lexer, parser, pretty printer, and type checker."""

import random

import pytest

from metriq import parse_metric_set, pretty_print, type_check
from metriq.core import AggKind, ValueType
from metriq.diagnostics import DiagnosticError
from metriq.mdl import ast
from metriq.mdl.printer import format_expr
from metriq.testgen import random_case


def parse_one_metric(text: str) -> ast.MetricDefinition:
    ms = parse_metric_set(f"unit User = User;\nmetric M = {text};")
    return ms.metrics[0]


def test_avg_revenue_per_user_shape():
    m = parse_one_metric("Avg(Sum<User>(Revenue))")
    outer = m.expr
    assert isinstance(outer, ast.Aggregation) and outer.kind is AggKind.AVG
    assert outer.level is None
    inner = outer.arg
    assert isinstance(inner, ast.Aggregation) and inner.kind is AggKind.SUM
    assert inner.level == "User"
    assert inner.arg == ast.ColumnRef("Revenue")


def test_percentile_shape():
    m = parse_one_metric("Percentile(PageLoadTime, 95)")
    agg = m.expr
    assert agg.kind is AggKind.PERCENTILE
    assert agg.rank == 95
    assert agg.arg == ast.ColumnRef("PageLoadTime")
    assert agg.level is None and agg.filter is None


def test_syntax_error_carries_location():
    with pytest.raises(DiagnosticError) as exc:
        parse_metric_set("metric Bad = Avg(Revenue")
    (diag,) = exc.value.diagnostics
    assert diag.severity == "error"
    assert diag.line == 1
    assert diag.col >= 24  # at end of input


def test_duplicate_metric_names_both_located():
    src = "metric A = Avg(X);\nmetric A = Sum(Y);"
    with pytest.raises(DiagnosticError) as exc:
        parse_metric_set(src)
    (diag,) = exc.value.diagnostics
    assert "duplicate metric 'A'" in diag.message
    assert "line 1" in diag.message and diag.line == 2


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("metric M = Revenue + 1;", "must be an aggregation"),
        ("metric M = Sum<User>(X);", "population-level"),
        ("metric M = Avg(Sum<User>(Sum<User>(X)));", "exceeds the maximum of 2"),
        ("metric M = Avg(Avg(X));", "cannot be nested"),
        ("metric M = Percentile(X);", "requires a rank"),
        ("metric M = Percentile(X, 101);", "rank must be in"),
        ("metric M = Sum(X, 5);", "only Percentile takes a rank"),
        ("metric M = Sum();", "requires an argument"),
        ("metric M = Avg(Sum<Nope>(X));", "not a declared unit"),
        ("segment S = Sum(X);", "must not contain an aggregation"),
        ("group G = { Missing };", "unknown metric"),
    ],
)
def test_structural_errors(src, fragment):
    full = "unit User = User;\n" + src
    with pytest.raises(DiagnosticError) as exc:
        parse_metric_set(full)
    assert any(fragment in d.message for d in exc.value.diagnostics), exc.value


def test_filter_clause_and_conditional_arguments_disambiguate():
    m = parse_one_metric('Avg(Sum<User>(Revenue if Country == "US"))')
    assert m.expr.arg.filter is not None
    assert isinstance(m.expr.arg.filter, ast.Comparison)

    m = parse_one_metric("Avg(Count<User>(if Clicks > 0))")
    inner = m.expr.arg
    assert inner.arg is None and inner.filter is not None

    m = parse_one_metric("Avg(if Clicks > 0 then 1 else 0)")
    assert isinstance(m.expr.arg, ast.Conditional)
    assert m.expr.filter is None

    m = parse_one_metric("Avg(if Clicks > 0 then 1 else 0 if Valid == true)")
    assert isinstance(m.expr.arg, ast.Conditional)
    assert m.expr.filter is not None


def test_aggregation_rejected_inside_arithmetic():
    with pytest.raises(DiagnosticError) as exc:
        parse_metric_set("metric M = Avg(1 + Sum<User>(X));")
    assert any("not allowed inside" in d.message for d in exc.value.diagnostics)
    # Trailing arithmetic after a nested aggregation is a plain syntax error.
    with pytest.raises(DiagnosticError) as exc:
        parse_metric_set("metric M = Avg(Sum<User>(X) + 1);")
    assert any("expected )" in d.message for d in exc.value.diagnostics)


def test_depth_three_rejected():
    with pytest.raises(DiagnosticError) as exc:
        parse_metric_set(
            "unit U = U;\nunit V = V;\nmetric M = Avg(Sum<U>(Sum<V>(X)));"
        )
    messages = " ".join(d.message for d in exc.value.diagnostics)
    assert "cannot contain another" in messages or "depth" in messages


def test_comments_and_strings():
    ms = parse_metric_set(
        '// leading comment\nmetric M = Count(if Name == "a \\"b\\" \\\\ c"); // trailing\n'
    )
    filt = ms.metrics[0].expr.filter
    assert filt.right.value == 'a "b" \\ c'


def test_pretty_print_canonical_forms(website_ms):
    text = pretty_print(website_ms)
    assert "metric AvgRevPerUser = Avg(Sum<User>(Revenue));" in text
    assert "metric PLT95 = Percentile(PageLoadTime, 95);" in text
    assert "group Core = { AvgRevPerUser, PLT95 };" in text


def test_pretty_print_filter_form():
    m = parse_one_metric('Avg(Sum<User>(Revenue if Country == "US"))')
    assert format_expr(m.expr.arg) == 'Sum<User>(Revenue if Country == "US")'


def test_pretty_print_empty_set():
    out = pretty_print(ast.MetricSet("empty"))
    assert out.splitlines() == ["// metric set: empty"]
    assert parse_metric_set(out) == ast.MetricSet("empty")


def test_unary_minus_round_trips():
    m = parse_one_metric("Sum(0 - Revenue + -3)")
    text = f"unit User = User;\nmetric M = {format_expr(m.expr)};"
    assert parse_metric_set(text).metrics[0].expr == m.expr


@pytest.mark.parametrize("seed", range(40))
def test_round_trip_random_metric_sets(seed):
    case = random_case(seed)
    ms = parse_metric_set(case.source)
    assert parse_metric_set(pretty_print(ms)) == ms


def test_parse_is_deterministic():
    case = random_case(99)
    first = parse_metric_set(case.source)
    second = parse_metric_set(case.source)
    assert first == second


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------


def test_type_check_annotates_levels_and_types(website_tms):
    avg_rev = website_tms.metrics["AvgRevPerUser"].expr
    assert avg_rev.vtype is ValueType.NUMBER
    assert avg_rev.level.kind == "population"
    inner = avg_rev.children[0]
    assert inner.level.kind == "unit" and inner.level.unit == "User"


def test_sum_over_string_rejected(website_schema):
    ms = parse_metric_set("unit User = User;\nmetric M = Avg(Sum<User>(Country));")
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert any("non-numeric aggregation argument" in d.message for d in exc.value.diagnostics)


def test_unknown_column_rejected(website_schema):
    ms = parse_metric_set("unit User = User;\nmetric M = Avg(Nope);")
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert any("unknown column 'Nope'" in d.message for d in exc.value.diagnostics)


def test_count_without_argument_is_numeric_row_count(website_schema):
    ms = parse_metric_set("unit User = User;\nmetric M = Avg(Count<User>());")
    tms = type_check(ms, website_schema)
    inner = tms.metrics["M"].expr.children[0]
    assert inner.vtype is ValueType.NUMBER
    assert inner.nullable is False
    assert inner.level.unit == "User"


def test_non_boolean_filter_rejected(website_schema):
    ms = parse_metric_set("unit User = User;\nmetric M = Avg(Sum<User>(Revenue if Country));")
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert any("filter must be boolean" in d.message for d in exc.value.diagnostics)


def test_null_ordering_comparison_rejected(website_schema):
    ms = parse_metric_set("unit User = User;\nmetric M = Avg(if Revenue < null then 0 else 1);")
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert any("ordering comparison with null" in d.message for d in exc.value.diagnostics)


def test_filter_on_unit_domain_aggregation_rejected(website_schema):
    ms = parse_metric_set(
        'unit User = User;\nmetric M = Avg(Sum<User>(Revenue) if Country == "US");'
    )
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert any("filter is not allowed" in d.message for d in exc.value.diagnostics)


def test_manifest_unit_mismatch_rejected(website_schema):
    ms = parse_metric_set("unit User = Country;\nmetric M = Avg(Sum<User>(Revenue));")
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert any("keyed by" in d.message for d in exc.value.diagnostics)


def test_all_type_errors_collected(website_schema):
    ms = parse_metric_set(
        "unit User = User;\nmetric M = Avg(NopeA);\nmetric N = Avg(NopeB);"
    )
    with pytest.raises(DiagnosticError) as exc:
        type_check(ms, website_schema)
    assert len(exc.value.diagnostics) == 2


def test_every_diagnostic_is_located():
    random_sources = [
        "metric = ;",
        "metric M = Avg(;",
        'metric M = "unterminated',
        "unit U = ;",
        "group G = {};",
    ]
    for src in random_sources:
        with pytest.raises(DiagnosticError) as exc:
            parse_metric_set(src)
        for diag in exc.value.diagnostics:
            assert diag.line >= 1 and diag.col >= 1
