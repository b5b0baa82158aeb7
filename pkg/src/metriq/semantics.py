"""Scalar evaluation semantics shared by constant folding and the interpreter.

Numbers are exact rationals so that evaluation is invariant under the
reorderings and re-associations performed by plan normalization, and so that
grouped aggregation is exactly mergeable. Values are Fraction | str | bool |
None; None is the null value and follows SQL-style three-valued logic, with
one deliberate exception: comparing against a null *literal* is a null test
and is rewritten to an is-null node before evaluation.
"""

from __future__ import annotations

from fractions import Fraction

Value = Fraction | str | bool | None


def to_rational(value: float | int | Fraction) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(value)


def from_rational(value: Value) -> float | str | bool | None:
    if isinstance(value, Fraction):
        return float(value)
    return value


def arith_apply(op: str, a: Value, b: Value) -> Fraction | None:
    if a is None or b is None:
        return None
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            return None  # division by zero propagates as null
        return a / b
    raise ValueError(f"unknown arithmetic op {op!r}")


def compare_apply(op: str, a: Value, b: Value) -> bool | None:
    if a is None or b is None:
        return None
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown comparison op {op!r}")


def logic_apply(op: str, a: Value, b: Value) -> bool | None:
    if op == "and":
        if a is False or b is False:
            return False
        if a is None or b is None:
            return None
        return True
    if op == "or":
        if a is True or b is True:
            return True
        if a is None or b is None:
            return None
        return False
    raise ValueError(f"unknown logical op {op!r}")


def not_apply(a: Value) -> bool | None:
    if a is None:
        return None
    return not a


def cond_apply(cond: Value, then_v: Value, else_v: Value) -> Value:
    # A null predicate selects the else branch, as in SQL CASE.
    return then_v if cond is True else else_v


def is_null_apply(a: Value) -> bool:
    return a is None


def coalesce_apply(a: Value, fallback: Value) -> Value:
    return a if a is not None else fallback
