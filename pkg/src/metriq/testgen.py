"""Seeded random metric sets, datasets, and configs for differential testing.

Generated inputs are deliberately tame where exactness matters: numeric data
is integers and halves so sums are exact in binary64 across the interpreter,
the oracle, and executed SQL; comparisons never involve division; percentile
ranks are integers; segment columns are strings. Everything else (filters,
null checks, nested aggregations, crossed segments) is fair game.

Runs as a module for reproducible fixture files:

    python -m metriq.testgen --seed 7 --out /tmp/case7
"""

from __future__ import annotations

import argparse
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .config import AnalysisConfig
from .core import AggKind
from .engine.data import Dataset, dataset_from_rows
from .mdl import ast, pretty_print
from .schema import DatasetSchema, schema_from_manifest
from .transforms import SegmentSpec

_SEGMENT_POOLS = (
    ("US", "DE", "BR", "IN"),
    ("Edge", "Chrome", "Safari"),
    ("phone", "desktop"),
)


@dataclass(frozen=True)
class GeneratedCase:
    seed: int
    source: str
    manifest: dict
    schema: DatasetSchema
    dataset: Dataset
    config: AnalysisConfig


def random_manifest(rng: random.Random) -> dict:
    columns = [
        {"name": "User", "type": "string", "nullable": False},
        {"name": "Variant", "type": "string", "nullable": False},
    ]
    n_numeric = rng.randint(2, 4)
    for i in range(n_numeric):
        columns.append(
            {"name": f"m{i}", "type": "number", "nullable": rng.random() < 0.4}
        )
    n_segments = rng.randint(1, 2)
    for i in range(n_segments):
        columns.append(
            {"name": f"s{i}", "type": "string", "nullable": rng.random() < 0.25}
        )
    return {"columns": columns, "units": {"User": "User"}}


def random_dataset(
    rng: random.Random, schema: DatasetSchema, max_units: int = 50, max_rows: int = 1000
) -> Dataset:
    n_units = rng.randint(4, max_units)
    rows: list[dict] = []
    numeric_cols = [c.name for c in schema.columns if c.name.startswith("m")]
    segment_cols = [c.name for c in schema.columns if c.name.startswith("s")]
    for u in range(n_units):
        unit = f"u{u:03d}"
        variant = "T" if rng.random() < 0.5 else "C"
        for _ in range(rng.randint(1, 5)):
            if len(rows) >= max_rows:
                break
            row: dict = {"User": unit, "Variant": variant}
            for name in numeric_cols:
                col = schema.column(name)
                if col.nullable and rng.random() < 0.12:
                    row[name] = None
                else:
                    # Integers and halves keep sums exact in binary64.
                    row[name] = rng.randint(0, 40) / 2.0
            for idx, name in enumerate(segment_cols):
                col = schema.column(name)
                if col.nullable and rng.random() < 0.1:
                    row[name] = None
                else:
                    row[name] = rng.choice(_SEGMENT_POOLS[idx % len(_SEGMENT_POOLS)])
            rows.append(row)
    return dataset_from_rows(schema, rows)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


def random_numeric_expr(
    rng: random.Random, columns: list[str], depth: int = 2, allow_division: bool = True
) -> ast.Expression:
    if depth <= 0 or rng.random() < 0.35:
        if rng.random() < 0.25:
            return ast.Literal(float(rng.randint(0, 10)))
        return ast.ColumnRef(rng.choice(columns))
    roll = rng.random()
    if roll < 0.5:
        op = rng.choice(["+", "-", "*"])
        return ast.Arithmetic(
            op,
            random_numeric_expr(rng, columns, depth - 1, allow_division),
            random_numeric_expr(rng, columns, depth - 1, allow_division=False),
        )
    if roll < 0.65 and allow_division:
        # Divisors stay away from zero: a positive literal or a shifted column.
        if rng.random() < 0.5:
            divisor: ast.Expression = ast.Literal(float(rng.choice([2, 4, 5, 8])))
        else:
            divisor = ast.Arithmetic("+", ast.ColumnRef(rng.choice(columns)), ast.Literal(10.0))
        return ast.Arithmetic(
            "/", random_numeric_expr(rng, columns, depth - 1, False), divisor
        )
    if roll < 0.85:
        return ast.Conditional(
            random_bool_expr(rng, columns, depth - 1),
            random_numeric_expr(rng, columns, depth - 1, allow_division),
            random_numeric_expr(rng, columns, depth - 1, allow_division),
        )
    # The null-check idiom.
    col = rng.choice(columns)
    return ast.Conditional(
        ast.Comparison("==", ast.ColumnRef(col), ast.Literal(None)),
        ast.Literal(float(rng.randint(0, 5))),
        ast.ColumnRef(col),
    )


def random_bool_expr(rng: random.Random, columns: list[str], depth: int = 1) -> ast.Expression:
    roll = rng.random()
    if depth <= 0 or roll < 0.55:
        op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
        return ast.Comparison(
            op, ast.ColumnRef(rng.choice(columns)), ast.Literal(float(rng.randint(0, 20)))
        )
    if roll < 0.7:
        return ast.Comparison(
            rng.choice(["==", "!="]), ast.ColumnRef(rng.choice(columns)), ast.Literal(None)
        )
    if roll < 0.9:
        return ast.Logical(
            rng.choice(["and", "or"]),
            random_bool_expr(rng, columns, depth - 1),
            random_bool_expr(rng, columns, depth - 1),
        )
    return ast.Not(random_bool_expr(rng, columns, depth - 1))


def random_metric_expr(rng: random.Random, columns: list[str]) -> ast.Aggregation:
    """A random population-level metric drawn from the supported families."""
    roll = rng.random()
    filt = random_bool_expr(rng, columns) if rng.random() < 0.3 else None
    if roll < 0.35:
        inner_kind = rng.choice(
            [AggKind.SUM, AggKind.SUM, AggKind.COUNT, AggKind.AVG, AggKind.MIN, AggKind.MAX]
        )
        if inner_kind is AggKind.COUNT and rng.random() < 0.5:
            inner = ast.Aggregation(inner_kind, None, level="User", filter=filt)
        else:
            inner = ast.Aggregation(
                inner_kind, random_numeric_expr(rng, columns), level="User", filter=filt
            )
        return ast.Aggregation(AggKind.AVG, inner)
    if roll < 0.6:
        return ast.Aggregation(
            AggKind.AVG, random_numeric_expr(rng, columns), filter=filt
        )
    if roll < 0.75:
        kind = rng.choice([AggKind.SUM, AggKind.MIN, AggKind.MAX])
        return ast.Aggregation(kind, random_numeric_expr(rng, columns), filter=filt)
    if roll < 0.85:
        if rng.random() < 0.5:
            return ast.Aggregation(AggKind.COUNT, None, filter=filt)
        return ast.Aggregation(AggKind.COUNT, ast.ColumnRef(rng.choice(columns)), filter=filt)
    rank = float(rng.choice([25, 50, 75, 90, 95, 99]))
    return ast.Aggregation(
        AggKind.PERCENTILE, ast.ColumnRef(rng.choice(columns)), rank=rank, filter=filt
    )


def random_metric_set(
    rng: random.Random, schema: DatasetSchema, max_metrics: int = 8
) -> ast.MetricSet:
    numeric_cols = [c.name for c in schema.columns if c.name.startswith("m")]
    segment_cols = [c.name for c in schema.columns if c.name.startswith("s")]
    metrics = []
    n_metrics = rng.randint(1, max_metrics)
    group_pool = ["Core", "Extra"]
    for i in range(n_metrics):
        groups = tuple(g for g in group_pool if rng.random() < 0.4)
        metrics.append(
            ast.MetricDefinition(
                f"Metric{i}", random_metric_expr(rng, numeric_cols), groups=groups
            )
        )
    segments = tuple(
        ast.SegmentDefinition(f"By_{name}", ast.ColumnRef(name)) for name in segment_cols
    )
    groups = ()
    if rng.random() < 0.3 and len(metrics) >= 2:
        members = tuple(m.name for m in rng.sample(metrics, k=2))
        groups = (ast.MetricGroup("Picked", members),)
    return ast.MetricSet(
        "generated",
        units=(ast.UnitDecl("User", "User"),),
        metrics=tuple(metrics),
        segments=segments,
        groups=groups,
    )


def random_config(rng: random.Random, ms: ast.MetricSet, mode: str = "experiment") -> AnalysisConfig:
    segment_names = [s.name for s in ms.segments]
    chosen = tuple(s for s in segment_names if rng.random() < 0.5)
    combine = ()
    if len(segment_names) >= 2 and rng.random() < 0.3:
        combine = (tuple(segment_names[:2]),)
    metrics = None
    if rng.random() < 0.25 and len(ms.metrics) > 1:
        metrics = tuple(
            m.name for m in rng.sample(list(ms.metrics), k=rng.randint(1, len(ms.metrics)))
        )
    return AnalysisConfig(
        mode=mode,
        assignment_column="Variant" if mode == "experiment" else None,
        treatment="T" if mode == "experiment" else None,
        control="C" if mode == "experiment" else None,
        randomization_unit="User" if mode == "experiment" else None,
        metrics=metrics,
        segment_spec=SegmentSpec(segments=chosen, combine=combine),
    )


def random_case(seed: int, *, mode: str = "experiment", max_metrics: int = 8,
                max_units: int = 50, max_rows: int = 1000) -> GeneratedCase:
    rng = random.Random(seed)
    manifest = random_manifest(rng)
    schema = schema_from_manifest(manifest)
    ms = random_metric_set(rng, schema, max_metrics=max_metrics)
    source = pretty_print(ms)
    dataset = random_dataset(rng, schema, max_units=max_units, max_rows=max_rows)
    config = random_config(rng, ms, mode=mode)
    return GeneratedCase(seed, source, manifest, schema, dataset, config)


def _write_case(case: GeneratedCase, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.mdl").write_text(case.source, encoding="utf-8")
    (out_dir / "manifest.json").write_text(
        json.dumps(case.manifest, indent=2) + "\n", encoding="utf-8"
    )
    header = [c.name for c in case.schema.columns]
    lines = [",".join(header)]
    for i in range(case.dataset.n_rows):
        record = []
        for name in header:
            v = case.dataset.column(name)[i]
            if v is None:
                record.append("")
            elif isinstance(v, bool):
                record.append("true" if v else "false")
            elif isinstance(v, float):
                record.append(repr(v))
            else:
                record.append(str(v))
        lines.append(",".join(record))
    (out_dir / "data.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    cfg = case.config
    doc = {
        "mode": cfg.mode,
        "manifest": "manifest.json",
        "dataset": "data.csv",
        "randomization_unit": cfg.randomization_unit,
        "segments": {
            "segments": list(cfg.segment_spec.segments),
            "combine": [list(c) for c in cfg.segment_spec.combine],
            "include_overall": cfg.segment_spec.include_overall,
        },
    }
    if cfg.mode == "experiment":
        doc["assignment"] = {
            "column": cfg.assignment_column,
            "treatment": cfg.treatment,
            "control": cfg.control,
        }
    if cfg.metrics is not None:
        doc["metrics"] = list(cfg.metrics)
    (out_dir / "config.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m metriq.testgen", description="Generate a random analysis case"
    )
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--mode", choices=("experiment", "business"), default="experiment")
    args = parser.parse_args(argv)
    case = random_case(args.seed, mode=args.mode)
    _write_case(case, Path(args.out))
    print(f"wrote case seed={args.seed} to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
