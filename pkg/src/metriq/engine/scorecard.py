"""Scorecard rows and the shared assembly path from per-cell values.

Both the interpreter and executed fabric programs reduce to the same cell
shape (value, unit count, moment sums per metric/segment/variant), so one
assembly function turns either into a scorecard and applies the statistics.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

from .. import stats
from ..codegen.emit import BUSINESS_RESULT_COLUMNS, EXPERIMENT_RESULT_COLUMNS
from ..core import OVERALL_SEGMENT
from ..diagnostics import DataError
from ..transforms import DELTA_MOMENTS, STANDARD_MOMENTS, VarianceEstimatorKind

if TYPE_CHECKING:  # pragma: no cover
    from ..config import AnalysisConfig
    from ..plan.ir import MetricsPlan


@dataclass(frozen=True)
class CellStats:
    """One (metric, segment, variant) cell before statistics."""

    value: float | None
    n: int | None = None
    moments: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScorecardRow:
    metric: str
    segment: str
    estimator: str | None = None
    value: float | None = None  # business mode
    value_t: float | None = None
    value_c: float | None = None
    n_t: int | None = None
    n_c: int | None = None
    test: stats.TestResult | None = None


@dataclass(frozen=True)
class Scorecard:
    mode: str
    rows: tuple[ScorecardRow, ...]
    config_digest: str
    plan_digest: str
    source: str
    created_at: str | None = None

    def row(self, metric: str, segment: str = OVERALL_SEGMENT) -> ScorecardRow | None:
        for row in self.rows:
            if row.metric == metric and row.segment == segment:
                return row
        return None


def render_segment_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return repr(float(value))


def render_segment_key(family: tuple[str, ...], values: tuple) -> str:
    if not family:
        return OVERALL_SEGMENT
    return ",".join(
        f"{name}={render_segment_value(v)}" for name, v in zip(family, values)
    )


Cells = dict[tuple[str, str], dict[str | None, CellStats]]


def scorecard_from_cells(
    plan: "MetricsPlan", cfg: "AnalysisConfig", cells: Cells, source: str
) -> Scorecard:
    from ..plan.ir import plan_digest  # local import avoids a cycle at module load

    rows = []
    for (metric, segment) in sorted(cells):
        per_variant = cells[(metric, segment)]
        if cfg.mode == "business":
            cell = per_variant.get(None)
            rows.append(
                ScorecardRow(
                    metric=metric,
                    segment=segment,
                    value=cell.value if cell else None,
                )
            )
            continue
        rows.append(_experiment_row(plan, cfg, metric, segment, per_variant))

    return Scorecard(
        mode=cfg.mode,
        rows=tuple(rows),
        config_digest=plan.config_digest,
        plan_digest=plan_digest(plan),
        source=source,
    )


def _experiment_row(plan, cfg, metric, segment, per_variant) -> ScorecardRow:
    t = per_variant.get(cfg.treatment)
    c = per_variant.get(cfg.control)
    estimator = plan.estimators.get(metric, VarianceEstimatorKind.UNSUPPORTED.value)
    row = ScorecardRow(
        metric=metric,
        segment=segment,
        estimator=estimator,
        value_t=t.value if t else None,
        value_c=c.value if c else None,
        n_t=t.n if t else 0,
        n_c=c.n if c else 0,
    )
    if t is None or c is None or row.value_t is None or row.value_c is None:
        return row
    try:
        if estimator == VarianceEstimatorKind.STANDARD.value:
            var_t = _standard_variance(t.moments)
            var_c = _standard_variance(c.moments)
        elif estimator == VarianceEstimatorKind.DELTA_RATIO.value:
            var_t = _delta_variance(t.moments)
            var_c = _delta_variance(c.moments)
        else:
            return row
        scale = max(1.0, abs(row.value_t), abs(row.value_c))
        if math.sqrt(var_t + var_c) <= stats.STDERR_NOISE_FLOOR * scale:
            var_t = var_c = 0.0
        test = stats.two_sample_test(
            (row.value_t, var_t, int(t.moments["n"])),
            (row.value_c, var_c, int(c.moments["n"])),
        )
    except stats.StatsError:
        # Too few units or a degenerate variance: report values, suppress the test.
        return row
    return ScorecardRow(
        metric=metric,
        segment=segment,
        estimator=estimator,
        value_t=row.value_t,
        value_c=row.value_c,
        n_t=test.n_t,
        n_c=test.n_c,
        test=test,
    )


def _standard_variance(moments: Mapping[str, float]) -> float:
    acc = stats.MomentAccumulator(int(moments["n"]), moments["sum_v"], moments["sum_v2"])
    _, var = stats.mean_and_variance(acc)
    return var


def _delta_variance(moments: Mapping[str, float]) -> float:
    r = stats.RatioMoments(
        int(moments["n"]),
        moments["sum_y"],
        moments["sum_x"],
        moments["sum_y2"],
        moments["sum_x2"],
        moments["sum_xy"],
    )
    _, var = stats.delta_ratio_variance(r)
    return var


# ---------------------------------------------------------------------------
# Result tables from executed fabric programs
# ---------------------------------------------------------------------------


def cells_from_result_table(plan: "MetricsPlan", cfg: "AnalysisConfig", rows) -> Cells:
    """Fold executed-program result rows back into assembly cells."""
    cells: Cells = {}
    if cfg.mode == "business":
        for metric, segment, value in rows:
            cells.setdefault((metric, segment), {})[None] = CellStats(
                value=None if value is None else float(value)
            )
        return cells

    for record in rows:
        if len(record) != len(EXPERIMENT_RESULT_COLUMNS):
            raise DataError(
                f"result row has {len(record)} columns, "
                f"expected {len(EXPERIMENT_RESULT_COLUMNS)}"
            )
        row = dict(zip(EXPERIMENT_RESULT_COLUMNS, record))
        estimator = plan.estimators.get(row["metric"])
        roles: tuple[str, ...] = ()
        if estimator == VarianceEstimatorKind.STANDARD.value:
            roles = STANDARD_MOMENTS
        elif estimator == VarianceEstimatorKind.DELTA_RATIO.value:
            roles = DELTA_MOMENTS
        moments = {}
        for role in roles:
            raw = row[role]
            if raw is None:
                moments = {}
                break
            moments[role] = float(raw)
        n = None if row["n"] is None else int(row["n"])
        cells.setdefault((row["metric"], row["segment"]), {})[row["variant"]] = CellStats(
            value=None if row["value"] is None else float(row["value"]),
            n=n,
            moments=moments,
        )
    return cells


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _row_dict(row: ScorecardRow, mode: str) -> dict:
    if mode == "business":
        return {"metric": row.metric, "segment": row.segment, "value": row.value}
    test = row.test
    return {
        "metric": row.metric,
        "segment": row.segment,
        "estimator": row.estimator,
        "value_t": row.value_t,
        "value_c": row.value_c,
        "n_t": row.n_t,
        "n_c": row.n_c,
        "delta": test.delta if test else None,
        "relative_delta": test.relative_delta if test else None,
        "stderr": test.stderr if test else None,
        "z": test.z if test else None,
        "p_value": test.p_value if test else None,
        "ci_low": test.ci_low if test else None,
        "ci_high": test.ci_high if test else None,
    }


def scorecard_to_json(card: Scorecard) -> str:
    doc = {
        "metadata": {
            "mode": card.mode,
            "source": card.source,
            "config_digest": card.config_digest,
            "plan_digest": card.plan_digest,
            "created_at": card.created_at,
        },
        "rows": [_row_dict(r, card.mode) for r in card.rows],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def scorecard_to_csv(card: Scorecard) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if card.mode == "business":
        header = BUSINESS_RESULT_COLUMNS
    else:
        header = (
            "metric", "segment", "estimator", "value_t", "value_c", "n_t", "n_c",
            "delta", "relative_delta", "stderr", "z", "p_value", "ci_low", "ci_high",
        )
    writer.writerow(header)
    for row in card.rows:
        doc = _row_dict(row, card.mode)
        writer.writerow(["" if doc[k] is None else _csv_value(doc[k]) for k in header])
    return out.getvalue()


def _csv_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
