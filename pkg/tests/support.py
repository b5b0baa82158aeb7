"""Helpers for differential comparisons between engine paths."""

from __future__ import annotations

import metriq
from metriq.engine.scorecard import Scorecard, cells_from_result_table, scorecard_from_cells

#: Relative tolerance for scorecard cell agreement, with an absolute floor of
#: the same size for near-zero cells (differences of nearly equal values are
#: not relatively stable).
CELL_TOLERANCE = 1e-9


def cells_close(a, b, tol: float = CELL_TOLERANCE) -> bool:
    if a is None and b is None:
        return True
    if a is None or b is None:
        return False
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def row_cells(row) -> list:
    cells = [row.value_t, row.value_c, row.n_t, row.n_c]
    if row.test is not None:
        t = row.test
        cells += [t.delta, t.stderr, t.z, t.p_value, t.ci_low, t.ci_high]
    else:
        cells += [None] * 6
    return cells


def business_cells(row) -> list:
    return [row.value]


def compare_scorecards(
    left: Scorecard, right: Scorecard, *, allow_missing_right: bool = False
) -> list[str]:
    """Cell-by-cell comparison; returns human-readable mismatch descriptions.

    With allow_missing_right, rows absent on the right match when the left
    row is empty (null values, zero units), which is how executed programs
    represent slices that have no data.
    """
    extract = business_cells if left.mode == "business" else row_cells
    left_rows = {(r.metric, r.segment): r for r in left.rows}
    right_rows = {(r.metric, r.segment): r for r in right.rows}
    problems = []
    for key in sorted(set(left_rows) | set(right_rows)):
        lr, rr = left_rows.get(key), right_rows.get(key)
        if rr is None:
            lcells = extract(lr)
            if allow_missing_right and all(v in (None, 0) for v in lcells):
                continue
            problems.append(f"{key}: missing on the right, left={lcells}")
            continue
        if lr is None:
            problems.append(f"{key}: missing on the left, right={extract(rr)}")
            continue
        lcells, rcells = extract(lr), extract(rr)
        for idx, (a, b) in enumerate(zip(lcells, rcells)):
            if not cells_close(a, b):
                problems.append(f"{key}: cell {idx} differs: {a} vs {b}")
                break
    return problems


def run_three_ways(case) -> tuple[Scorecard, Scorecard, Scorecard]:
    """Interpreter, oracle, and executed-ansi scorecards for a generated case."""
    ms = metriq.parse_metric_set(case.source)
    tms = metriq.type_check(ms, case.schema)
    plan = metriq.build_plan(tms, case.config)
    final, _ = metriq.run_pipeline(plan, case.config)
    interp = metriq.execute_plan(final, case.dataset, case.config)
    oracle = metriq.brute_force_oracle(case.source, case.dataset, case.config)
    program = metriq.emit(final, metriq.builtin_registry().get("ansi"))
    table = metriq.run_emitted(program, metriq.SqliteAdapter(), case.dataset)
    executed = scorecard_from_cells(
        final, case.config, cells_from_result_table(final, case.config, table.rows),
        source="fabric:ansi",
    )
    return interp, oracle, executed


def assert_three_way_agreement(case) -> None:
    interp, oracle, executed = run_three_ways(case)
    problems = compare_scorecards(interp, oracle)
    problems += compare_scorecards(interp, executed, allow_missing_right=True)
    assert not problems, f"seed {case.seed}:\n" + "\n".join(problems[:10])
