"""Code emission: fabric dialects and the two-stage SQL emitter."""

from .dialect import (
    DialectRegistry,
    FabricDialect,
    builtin_registry,
    dialect_from_descriptor,
)
from .emit import EmittedProgram, emit

__all__ = [
    "DialectRegistry",
    "EmittedProgram",
    "FabricDialect",
    "builtin_registry",
    "dialect_from_descriptor",
    "emit",
]
