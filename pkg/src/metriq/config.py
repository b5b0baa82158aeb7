"""The analysis configuration object: one config describes one analysis task."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .diagnostics import ConfigError
from .transforms import SegmentSpec

DEFAULT_SEGMENT_CARDINALITY_LIMIT = 1000


@dataclass(frozen=True)
class AnalysisConfig:
    mode: str = "experiment"  # "experiment" | "business"
    manifest_path: str | None = None
    dataset_path: str | None = None
    assignment_column: str | None = None
    treatment: str | None = None
    control: str | None = None
    randomization_unit: str | None = None
    groups: tuple[str, ...] | None = None
    metrics: tuple[str, ...] | None = None
    segment_spec: SegmentSpec = field(default_factory=SegmentSpec)
    fabric: str | None = None
    output_path: str | None = None
    segment_cardinality_limit: int = DEFAULT_SEGMENT_CARDINALITY_LIMIT

    def __post_init__(self):
        if self.mode not in ("experiment", "business"):
            raise ConfigError(f"mode must be 'experiment' or 'business', got '{self.mode}'")
        if self.mode == "experiment":
            missing = [
                name
                for name, value in (
                    ("assignment.column", self.assignment_column),
                    ("assignment.treatment", self.treatment),
                    ("assignment.control", self.control),
                    ("randomization_unit", self.randomization_unit),
                )
                if not value
            ]
            if missing:
                raise ConfigError(f"experiment mode requires {', '.join(missing)}")
            if self.treatment == self.control:
                raise ConfigError("treatment and control labels must be distinct")
        if self.segment_cardinality_limit < 1:
            raise ConfigError("segment_cardinality_limit must be positive")

    def digest(self) -> str:
        doc = {
            "mode": self.mode,
            "assignment": [self.assignment_column, self.treatment, self.control],
            "randomization_unit": self.randomization_unit,
            "groups": sorted(self.groups) if self.groups is not None else None,
            "metrics": sorted(self.metrics) if self.metrics is not None else None,
            "segments": {
                "segments": list(self.segment_spec.segments),
                "combine": [list(c) for c in self.segment_spec.combine],
                "include_overall": self.segment_spec.include_overall,
            },
            "fabric": self.fabric,
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def config_from_dict(doc: Any, base_dir: str | Path | None = None) -> AnalysisConfig:
    """Build an AnalysisConfig from a parsed JSON config document.

    Relative manifest/dataset/output paths resolve against base_dir (normally
    the config file's directory).
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {
        "mode", "manifest", "dataset", "assignment", "randomization_unit",
        "groups", "metrics", "segments", "fabric", "output",
        "segment_cardinality_limit",
    }
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    def resolve(p):
        if p is None:
            return None
        path = Path(p)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return str(path)

    assignment = doc.get("assignment") or {}
    if assignment and not isinstance(assignment, dict):
        raise ConfigError("'assignment' must be an object with column/treatment/control")

    seg_doc = doc.get("segments") or {}
    if isinstance(seg_doc, list):
        seg_doc = {"segments": seg_doc}
    if not isinstance(seg_doc, dict):
        raise ConfigError("'segments' must be a list or an object")
    try:
        spec = SegmentSpec(
            segments=tuple(seg_doc.get("segments", ())),
            combine=tuple(tuple(c) for c in seg_doc.get("combine", ())),
            include_overall=bool(seg_doc.get("include_overall", True)),
        )
    except TypeError as exc:
        raise ConfigError(f"bad segments spec: {exc}") from None

    def opt_tuple(key):
        value = doc.get(key)
        if value is None:
            return None
        if not isinstance(value, list):
            raise ConfigError(f"'{key}' must be a list of names")
        return tuple(str(v) for v in value)

    return AnalysisConfig(
        mode=doc.get("mode", "experiment"),
        manifest_path=resolve(doc.get("manifest")),
        dataset_path=resolve(doc.get("dataset")),
        assignment_column=assignment.get("column"),
        treatment=assignment.get("treatment"),
        control=assignment.get("control"),
        randomization_unit=doc.get("randomization_unit"),
        groups=opt_tuple("groups"),
        metrics=opt_tuple("metrics"),
        segment_spec=spec,
        fabric=doc.get("fabric"),
        output_path=resolve(doc.get("output")),
        segment_cardinality_limit=int(
            doc.get("segment_cardinality_limit", DEFAULT_SEGMENT_CARDINALITY_LIMIT)
        ),
    )


def load_config(path: str | Path) -> AnalysisConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc, base_dir=path.parent)
