"""Shared value types, aggregation kinds, and the aggregation level lattice."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ValueType(Enum):
    NUMBER = "number"
    STRING = "string"
    BOOL = "bool"
    # Type of a bare `null` literal before it is unified with its context.
    NULL = "null"


class AggKind(Enum):
    SUM = "Sum"
    AVG = "Avg"
    COUNT = "Count"
    MIN = "Min"
    MAX = "Max"
    PERCENTILE = "Percentile"
    # Moment kinds used by variance enrichment. They exist only in plans and
    # cannot be written in metric source.
    SUM_SQ = "SumSq"
    SUM_PROD = "SumProd"


SOURCE_AGG_KINDS = frozenset(
    {AggKind.SUM, AggKind.AVG, AggKind.COUNT, AggKind.MIN, AggKind.MAX, AggKind.PERCENTILE}
)

#: Aggregations whose value over an empty (or all-null) group is null rather
#: than zero. Sum and the counting kinds yield 0 instead.
NULL_ON_EMPTY = frozenset({AggKind.AVG, AggKind.MIN, AggKind.MAX, AggKind.PERCENTILE})

#: Segment key label of the un-sliced scorecard rows.
OVERALL_SEGMENT = "(all)"


@dataclass(frozen=True)
class Level:
    """Where a value lives: one per row, one per unit, or one per population slice."""

    kind: str  # "row" | "unit" | "population"
    unit: str | None = None

    def __str__(self) -> str:
        if self.kind == "unit":
            return f"unit<{self.unit}>"
        return self.kind


ROW = Level("row")
POPULATION = Level("population")


def unit_level(name: str) -> Level:
    return Level("unit", name)
