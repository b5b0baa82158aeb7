"""Dataset schemas: column types, nullability, and declared analysis units."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .core import ValueType
from .diagnostics import ConfigError

_TYPE_NAMES = {t.value: t for t in (ValueType.NUMBER, ValueType.STRING, ValueType.BOOL)}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    vtype: ValueType
    nullable: bool


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple[ColumnSpec, ...]
    units: Mapping[str, str] = field(default_factory=dict)  # unit name -> key column

    def __post_init__(self):
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise ConfigError(f"duplicate column '{col.name}' in schema")
            seen.add(col.name)
        for unit, key in self.units.items():
            spec = self.column(key)
            if spec is None:
                raise ConfigError(f"unit '{unit}' references unknown key column '{key}'")
            if spec.nullable:
                raise ConfigError(
                    f"unit '{unit}' key column '{key}' must be declared non-nullable"
                )

    def column(self, name: str) -> ColumnSpec | None:
        for col in self.columns:
            if col.name == name:
                return col
        return None

    def unit_key(self, unit: str) -> str:
        try:
            return self.units[unit]
        except KeyError:
            raise ConfigError(f"unknown unit '{unit}'") from None


def schema_from_manifest(doc: Any) -> DatasetSchema:
    """Build a schema from a parsed manifest document.

    Manifest shape: {"columns": [{"name", "type", "nullable"}], "units": {"User": "UserId"}}.
    """
    if not isinstance(doc, dict):
        raise ConfigError("manifest must be a JSON object")
    raw_cols = doc.get("columns")
    if not isinstance(raw_cols, list) or not raw_cols:
        raise ConfigError("manifest must declare a non-empty 'columns' list")
    columns = []
    for i, raw in enumerate(raw_cols):
        if not isinstance(raw, dict) or "name" not in raw or "type" not in raw:
            raise ConfigError(f"manifest column #{i} must have 'name' and 'type'")
        tname = raw["type"]
        if tname not in _TYPE_NAMES:
            raise ConfigError(
                f"manifest column '{raw['name']}' has unknown type '{tname}' "
                f"(expected one of {sorted(_TYPE_NAMES)})"
            )
        columns.append(ColumnSpec(str(raw["name"]), _TYPE_NAMES[tname], bool(raw.get("nullable", False))))
    units = doc.get("units", {})
    if not isinstance(units, dict):
        raise ConfigError("manifest 'units' must be an object of unit name -> key column")
    return DatasetSchema(tuple(columns), {str(k): str(v) for k, v in units.items()})
