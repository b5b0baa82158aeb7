"""Engine adapters: run emitted programs against an embedded database.

The shipped adapter is backed by sqlite3 from the standard library, which
covers the portable `ansi` dialect. Adapters exist to differentially test
emitted programs against the interpreter; they are not a production runner.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

from ..codegen.emit import SOURCE_TABLE
from ..core import ValueType
from ..diagnostics import AdapterError
from .data import Dataset

if TYPE_CHECKING:  # pragma: no cover
    from ..codegen.emit import EmittedProgram


@dataclass(frozen=True)
class ResultTable:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


class EngineAdapter(Protocol):
    """Anything that can create a table from a Dataset and run a program."""

    dialect: str

    def run(self, program: "EmittedProgram", ds: Dataset) -> ResultTable: ...


class SqliteAdapter:
    """Executes `ansi` programs in an in-memory sqlite database."""

    dialect = "ansi"

    _SQL_TYPES = {
        ValueType.NUMBER: "REAL",
        ValueType.STRING: "TEXT",
        ValueType.BOOL: "INTEGER",
    }

    def run(self, program: "EmittedProgram", ds: Dataset) -> ResultTable:
        con = sqlite3.connect(":memory:")
        try:
            cols = ds.schema.columns
            decl = ", ".join(f'"{c.name}" {self._SQL_TYPES[c.vtype]}' for c in cols)
            con.execute(f'CREATE TABLE "{SOURCE_TABLE}" ({decl})')
            placeholders = ", ".join("?" for _ in cols)
            col_data = [ds.column(c.name) for c in cols]
            con.executemany(
                f'INSERT INTO "{SOURCE_TABLE}" VALUES ({placeholders})',
                zip(*col_data) if cols else [],
            )
            try:
                cur = con.execute(program.text)
            except sqlite3.Error as exc:
                raise AdapterError(f"sqlite execution failed: {exc}", program.text) from exc
            names = tuple(d[0] for d in cur.description)
            return ResultTable(columns=names, rows=tuple(tuple(r) for r in cur.fetchall()))
        finally:
            con.close()


def run_emitted(program: "EmittedProgram", adapter: EngineAdapter, ds: Dataset) -> ResultTable:
    """Run an emitted program through an adapter registered for its dialect."""
    if adapter.dialect != program.dialect:
        raise AdapterError(
            f"adapter handles dialect '{adapter.dialect}', "
            f"program is for '{program.dialect}'",
            program.text,
        )
    return adapter.run(program, ds)
