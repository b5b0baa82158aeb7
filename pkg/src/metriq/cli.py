"""Command-line interface: validate, compile, run, explain.

Exit codes: 0 success, 1 user error (bad input, bad flags, failed
validation), 2 internal error. Human-readable output goes to stdout;
machine-readable artifacts (programs, scorecards, plan dumps) go to files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .codegen import DialectRegistry, builtin_registry, emit
from .config import AnalysisConfig, load_config
from .diagnostics import DiagnosticError, MetriqError, PlanCorruptionError
from .engine.data import load_dataset, load_manifest
from .engine.interp import execute_plan
from .engine.scorecard import Scorecard, scorecard_to_csv, scorecard_to_json
from .mdl import parse_metric_set, type_check
from .plan import build_plan, plan_to_dict, plan_to_dot
from .transforms import run_pipeline

FABRIC_DIR_ENV = "METRIQ_FABRIC_DIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="metriq", description="Cross-fabric metrics compiler")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and type-check a metric set")
    p.add_argument("--metrics", required=True, help="metric set source file")
    p.add_argument("--manifest", help="dataset manifest for type checking")

    p = sub.add_parser("compile", help="compile metrics to a fabric program")
    p.add_argument("--metrics", required=True)
    p.add_argument("--config", required=True, help="analysis config JSON")
    p.add_argument("--fabric", required=True, help="target dialect name")
    p.add_argument("--out", help="output program path")

    p = sub.add_parser("run", help="execute an analysis locally")
    p.add_argument("--metrics", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="dataset file (CSV or JSONL)")
    p.add_argument("--out", help="output scorecard path")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("explain", help="dump the plan and pass pipeline")
    p.add_argument("--metrics", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--passes", action="store_true", help="print one JSON report per pass")
    p.add_argument("--dot", help="directory for DOT/JSON plan snapshots")

    return parser


def _registry() -> DialectRegistry:
    registry = builtin_registry()
    fabric_dir = os.environ.get(FABRIC_DIR_ENV)
    if fabric_dir and Path(fabric_dir).is_dir():
        registry.load_directory(fabric_dir)
    return registry


def _load_frontend(metrics_path: str, manifest_path: str | None):
    source = Path(metrics_path).read_text(encoding="utf-8")
    ms = parse_metric_set(source, name=Path(metrics_path).stem)
    if manifest_path is None:
        return ms, None
    schema = load_manifest(manifest_path)
    return ms, type_check(ms, schema)


def _finalized_plan(args, cfg: AnalysisConfig):
    if not cfg.manifest_path:
        raise MetriqError("config must name a dataset manifest")
    _, tms = _load_frontend(args.metrics, cfg.manifest_path)
    plan = build_plan(tms, cfg)
    return run_pipeline(plan, cfg)


def cmd_validate(args) -> int:
    try:
        ms, _ = _load_frontend(args.metrics, args.manifest)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DiagnosticError as exc:
        for diag in exc.diagnostics:
            print(diag.render(), file=sys.stderr)
        return 1
    print(f"OK: {len(ms.metrics)} metrics, {len(ms.segments)} segments, {len(ms.groups)} groups")
    return 0


def cmd_compile(args) -> int:
    cfg = load_config(args.config)
    dialect = _registry().get(args.fabric)
    plan, reports = _finalized_plan(args, cfg)
    program = emit(plan, dialect)
    out = Path(args.out or cfg.output_path or f"{dialect.name}.sql")
    out.write_text(program.text, encoding="utf-8")
    for report in reports:
        print(f"pass {report.name}: {report.nodes_before} -> {report.nodes_after} nodes")
    print(f"wrote {out} ({dialect.name}, plan {program.plan_digest})")
    return 0


def _summary_table(card: Scorecard) -> str:
    if card.mode == "business":
        lines = [f"{'metric':<24} {'segment':<20} {'value':>14}"]
        for row in card.rows:
            value = "" if row.value is None else f"{row.value:.6g}"
            lines.append(f"{row.metric:<24} {row.segment:<20} {value:>14}")
        return "\n".join(lines)
    lines = [
        f"{'metric':<24} {'segment':<20} {'treatment':>12} {'control':>12} "
        f"{'delta':>12} {'p-value':>10}"
    ]
    for row in card.rows:
        vt = "" if row.value_t is None else f"{row.value_t:.6g}"
        vc = "" if row.value_c is None else f"{row.value_c:.6g}"
        delta = f"{row.test.delta:.6g}" if row.test else ""
        p = f"{row.test.p_value:.4f}" if row.test else "n/a"
        lines.append(f"{row.metric:<24} {row.segment:<20} {vt:>12} {vc:>12} {delta:>12} {p:>10}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    plan, _ = _finalized_plan(args, cfg)
    ds = load_dataset(args.data, plan.schema)
    card = execute_plan(plan, ds, cfg)
    out = Path(args.out or cfg.output_path or f"scorecard.{args.format}")
    text = scorecard_to_json(card) if args.format == "json" else scorecard_to_csv(card)
    out.write_text(text, encoding="utf-8")
    print(_summary_table(card))
    print(f"wrote {out}")
    return 0


def cmd_explain(args) -> int:
    cfg = load_config(args.config)
    if not cfg.manifest_path:
        raise MetriqError("config must name a dataset manifest")
    _, tms = _load_frontend(args.metrics, cfg.manifest_path)
    plan = build_plan(tms, cfg)

    snapshots = [("initial", plan)]
    final, reports = run_pipeline(plan, cfg)
    stage = plan
    # Re-run pass by pass to snapshot intermediate plans for --dot.
    if args.dot:
        from .plan.normalize import normalize
        from . import transforms as tf

        stage = normalize(stage)
        snapshots.append(("normalize", stage))
        stage, _ = tf.enrich_variance(stage, cfg)
        snapshots.append(("enrich_variance", stage))
        stage, _ = tf.enrich_segments(stage, cfg.segment_spec)
        snapshots.append(("enrich_segments", stage))
        stage, _ = tf.prune_unused(stage, set(stage.metric_roots))
        snapshots.append(("prune_unused", stage))
        stage, _ = tf.dedup_common_subexpressions(stage)
        snapshots.append(("dedup_common_subexpressions", stage))
        stage, _ = tf.eliminate_null_checks(stage)
        snapshots.append(("eliminate_null_checks", stage))
        stage = normalize(stage)
        snapshots.append(("final", stage))

    print("estimator assignments:")
    for metric in sorted(final.metric_roots):
        kind = final.estimators.get(metric, "Unsupported" if cfg.mode == "experiment" else "n/a")
        print(f"  {metric}: {kind}")
    if args.passes:
        for report in reports:
            print(json.dumps(report.to_dict(), sort_keys=True))
    if args.dot:
        out_dir = Path(args.dot)
        out_dir.mkdir(parents=True, exist_ok=True)
        for idx, (name, snapshot) in enumerate(snapshots):
            stem = f"{idx:02d}_{name}"
            (out_dir / f"{stem}.dot").write_text(
                plan_to_dot(snapshot, title=name), encoding="utf-8"
            )
            (out_dir / f"{stem}.json").write_text(
                json.dumps(plan_to_dict(snapshot), indent=2) + "\n", encoding="utf-8"
            )
        print(f"wrote {2 * len(snapshots)} plan snapshots to {out_dir}")
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "compile": cmd_compile,
    "run": cmd_run,
    "explain": cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except DiagnosticError as exc:
        for diag in exc.diagnostics:
            print(diag.render(), file=sys.stderr)
        return 1
    except PlanCorruptionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MetriqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
