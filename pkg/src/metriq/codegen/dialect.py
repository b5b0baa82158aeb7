"""Fabric dialects as data: quoting, templates per plan op, capabilities.

Adding a fabric means adding a table, not code: built-in dialects are
declared below, and user dialects load from JSON descriptor files (one per
file) with the same fields. Registration self-checks that every claimed
capability has its templates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..diagnostics import ConfigError

#: Template keys every capability requires.
REQUIRED_TEMPLATES: dict[str, tuple[str, ...]] = {
    "arithmetic": ("add", "sub", "mul", "div"),
    "comparison": ("eq", "ne", "lt", "le", "gt", "ge"),
    "logic": ("and", "or", "not"),
    "conditional": ("cond",),
    "null_ops": ("is_null", "coalesce"),
    "agg_basic": (
        "agg_sum",
        "agg_avg",
        "agg_count",
        "agg_count_rows",
        "agg_count_rows_filtered",
        "agg_min",
        "agg_max",
        "count_distinct",
        "filtered_arg",
    ),
    "agg_moments": ("agg_sum_sq", "agg_sum_prod"),
    "percentile_population": (),
    "percentile_grouped": (),
}

#: Extra keys window-mode percentiles need.
_WINDOW_PERCENTILE_TEMPLATES = ("row_number", "count_rows_over", "percentile_index")


@dataclass(frozen=True)
class FabricDialect:
    name: str
    quote_open: str
    quote_close: str
    quote_escape: str
    templates: Mapping[str, str]
    capabilities: frozenset[str]
    cast_text: str
    concat: str
    true_literal: str = "TRUE"
    false_literal: str = "FALSE"
    null_literal: str = "NULL"
    percentile_mode: str = "window"  # "window" | "function"
    percentile_function: str | None = None
    notes: tuple[str, ...] = ()

    def ident(self, name: str) -> str:
        body = name.replace(self.quote_close, self.quote_escape)
        return f"{self.quote_open}{body}{self.quote_close}"

    def string(self, value: str) -> str:
        return "'" + value.replace("'", "''") + "'"

    def template(self, key: str, *, op: str | None = None) -> str:
        try:
            return self.templates[key]
        except KeyError:
            from ..diagnostics import UnsupportedConstructError

            raise UnsupportedConstructError(op or key, self.name) from None

    def self_check(self) -> None:
        unknown = sorted(self.capabilities - set(REQUIRED_TEMPLATES))
        if unknown:
            raise ConfigError(f"dialect '{self.name}' claims unknown capabilities {unknown}")
        for cap in sorted(self.capabilities):
            missing = [k for k in REQUIRED_TEMPLATES[cap] if k not in self.templates]
            if missing:
                raise ConfigError(
                    f"dialect '{self.name}' claims capability '{cap}' but lacks "
                    f"templates {missing}"
                )
        if self.percentile_mode not in ("window", "function"):
            raise ConfigError(
                f"dialect '{self.name}': percentile_mode must be 'window' or 'function'"
            )
        for cap in ("percentile_population", "percentile_grouped"):
            if cap in self.capabilities and self.percentile_mode == "function":
                if not self.percentile_function:
                    raise ConfigError(
                        f"dialect '{self.name}' claims '{cap}' with function mode "
                        "but names no percentile function"
                    )
        if "percentile_grouped" in self.capabilities and self.percentile_mode == "window":
            raise ConfigError(
                f"dialect '{self.name}': window-mode percentiles cannot be grouped; "
                "'percentile_grouped' needs a percentile aggregate function"
            )
        if "percentile_population" in self.capabilities and self.percentile_mode == "window":
            missing = [k for k in _WINDOW_PERCENTILE_TEMPLATES if k not in self.templates]
            if missing:
                raise ConfigError(
                    f"dialect '{self.name}' uses window-mode percentiles but lacks "
                    f"templates {missing}"
                )


class DialectRegistry:
    def __init__(self):
        self._dialects: dict[str, FabricDialect] = {}

    def register(self, dialect: FabricDialect) -> "DialectRegistry":
        dialect.self_check()
        if dialect.name in self._dialects:
            raise ConfigError(f"dialect '{dialect.name}' is already registered")
        self._dialects[dialect.name] = dialect
        return self

    def get(self, name: str) -> FabricDialect:
        try:
            return self._dialects[name]
        except KeyError:
            available = ", ".join(sorted(self._dialects))
            raise ConfigError(
                f"unknown fabric '{name}'; available fabrics: {available}"
            ) from None

    def names(self) -> list[str]:
        return sorted(self._dialects)

    def load_directory(self, path: str | Path) -> list[str]:
        """Register every *.json descriptor in a directory; returns the names."""
        loaded = []
        for file in sorted(Path(path).glob("*.json")):
            try:
                doc = json.loads(file.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"dialect descriptor {file} is not valid JSON: {exc}") from None
            dialect = dialect_from_descriptor(doc)
            self.register(dialect)
            loaded.append(dialect.name)
        return loaded


def dialect_from_descriptor(doc) -> FabricDialect:
    """Build a dialect from a parsed JSON descriptor document."""
    if not isinstance(doc, dict) or "name" not in doc:
        raise ConfigError("dialect descriptor must be an object with a 'name'")
    required = ("templates", "capabilities")
    for key in required:
        if key not in doc:
            raise ConfigError(f"dialect descriptor '{doc['name']}' is missing '{key}'")
    quoting = doc.get("quoting", {})
    return FabricDialect(
        name=str(doc["name"]),
        quote_open=quoting.get("open", '"'),
        quote_close=quoting.get("close", '"'),
        quote_escape=quoting.get("escape", '""'),
        templates=dict(doc["templates"]),
        capabilities=frozenset(doc["capabilities"]),
        cast_text=doc.get("cast_text", "CAST({0} AS TEXT)"),
        concat=doc.get("concat", "({0} || {1})"),
        true_literal=doc.get("true_literal", "TRUE"),
        false_literal=doc.get("false_literal", "FALSE"),
        null_literal=doc.get("null_literal", "NULL"),
        percentile_mode=doc.get("percentile_mode", "window"),
        percentile_function=doc.get("percentile_function"),
        notes=tuple(doc.get("notes", ())),
    )


_COMMON_TEMPLATES = {
    "add": "({0} + {1})",
    "sub": "({0} - {1})",
    "mul": "({0} * {1})",
    "eq": "({0} = {1})",
    "lt": "({0} < {1})",
    "le": "({0} <= {1})",
    "gt": "({0} > {1})",
    "ge": "({0} >= {1})",
    "and": "({0} AND {1})",
    "or": "({0} OR {1})",
    "not": "(NOT {0})",
    "cond": "CASE WHEN {0} THEN {1} ELSE {2} END",
    "is_null": "({0} IS NULL)",
    "filtered_arg": "CASE WHEN {0} THEN {1} ELSE NULL END",
    "agg_avg": "AVG({0})",
    "agg_count": "COUNT({0})",
    "agg_count_rows": "COUNT(*)",
    "agg_count_rows_filtered": "COUNT(CASE WHEN {0} THEN 1 END)",
    "agg_min": "MIN({0})",
    "agg_max": "MAX({0})",
    "count_distinct": "COUNT(DISTINCT {0})",
}

ANSI = FabricDialect(
    name="ansi",
    quote_open='"',
    quote_close='"',
    quote_escape='""',
    templates={
        **_COMMON_TEMPLATES,
        "ne": "({0} <> {1})",
        "div": "CASE WHEN {1} = 0 OR {1} IS NULL THEN NULL ELSE {0} / {1} END",
        "coalesce": "COALESCE({0}, {1})",
        "agg_sum": "COALESCE(SUM({0}), 0.0)",
        "agg_sum_sq": "COALESCE(SUM(({0}) * ({0})), 0.0)",
        "agg_sum_prod": "COALESCE(SUM(({0}) * ({1})), 0.0)",
        "row_number": "ROW_NUMBER() OVER ({0})",
        "count_rows_over": "COUNT(*) OVER ({0})",
        # Nearest-rank index: ceil(fraction * n), nudged so that exactly
        # integral products do not round up one position.
        "percentile_index": "(CAST({0} * {1} - 0.000000001 AS INTEGER) + 1)",
    },
    capabilities=frozenset(
        {
            "arithmetic",
            "comparison",
            "logic",
            "conditional",
            "null_ops",
            "agg_basic",
            "agg_moments",
            "percentile_population",
        }
    ),
    cast_text="CAST({0} AS TEXT)",
    concat="({0} || {1})",
    percentile_mode="window",
    notes=("nearest-rank percentile via ordered window subquery",),
)

WAREHOUSE = FabricDialect(
    name="warehouse",
    quote_open="`",
    quote_close="`",
    quote_escape="``",
    templates={
        **_COMMON_TEMPLATES,
        "ne": "({0} != {1})",
        "div": "CASE WHEN {1} = 0 OR {1} IS NULL THEN NULL ELSE {0} / {1} END",
        "coalesce": "nvl({0}, {1})",
        "agg_sum": "nvl(SUM({0}), 0.0)",
        "agg_sum_sq": "nvl(SUM(({0}) * ({0})), 0.0)",
        "agg_sum_prod": "nvl(SUM(({0}) * ({1})), 0.0)",
    },
    capabilities=frozenset(
        {
            "arithmetic",
            "comparison",
            "logic",
            "conditional",
            "null_ops",
            "agg_basic",
            "agg_moments",
            "percentile_population",
            "percentile_grouped",
        }
    ),
    cast_text="CAST({0} AS STRING)",
    concat="({0} || {1})",
    percentile_mode="function",
    percentile_function="percentile_approx",
    notes=("percentile_approx is approximate, not exact nearest-rank",),
)


def builtin_registry() -> DialectRegistry:
    registry = DialectRegistry()
    registry.register(ANSI)
    registry.register(WAREHOUSE)
    return registry
