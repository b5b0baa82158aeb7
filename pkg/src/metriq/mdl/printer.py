"""Canonical pretty printer; parse(pretty_print(ms)) == ms structurally."""

from __future__ import annotations

from . import ast

# Binding strengths used to decide where parentheses are required.
_PREC_IF = 1
_PREC_OR = 2
_PREC_AND = 3
_PREC_NOT = 4
_PREC_CMP = 5
_PREC_ADD = 6
_PREC_MUL = 7
_PREC_PRIMARY = 9

_ARITH_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL}


def _number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _string(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_expr(expr: ast.Expression) -> str:
    text, _ = _fmt(expr)
    return text


def _fmt(expr: ast.Expression) -> tuple[str, int]:
    """Render expr, returning (text, its binding strength)."""
    if isinstance(expr, ast.ColumnRef):
        return expr.name, _PREC_PRIMARY
    if isinstance(expr, ast.Literal):
        v = expr.value
        if v is None:
            return "null", _PREC_PRIMARY
        if isinstance(v, bool):
            return ("true" if v else "false"), _PREC_PRIMARY
        if isinstance(v, str):
            return _string(v), _PREC_PRIMARY
        return _number(v), _PREC_PRIMARY
    if isinstance(expr, ast.Arithmetic):
        prec = _ARITH_PREC[expr.op]
        left = _child(expr.left, prec)
        right = _child(expr.right, prec + 1)
        return f"{left} {expr.op} {right}", prec
    if isinstance(expr, ast.Comparison):
        left = _child(expr.left, _PREC_ADD)
        right = _child(expr.right, _PREC_ADD)
        return f"{left} {expr.op} {right}", _PREC_CMP
    if isinstance(expr, ast.Logical):
        prec = _PREC_OR if expr.op == "or" else _PREC_AND
        left = _child(expr.left, prec)
        right = _child(expr.right, prec + 1)
        return f"{left} {expr.op} {right}", prec
    if isinstance(expr, ast.Not):
        return f"not {_child(expr.operand, _PREC_NOT)}", _PREC_NOT
    if isinstance(expr, ast.Conditional):
        cond = _child(expr.cond, _PREC_IF)
        then_t = _child(expr.then_expr, _PREC_IF)
        else_t = _child(expr.else_expr, _PREC_IF)
        return f"if {cond} then {then_t} else {else_t}", _PREC_IF
    if isinstance(expr, ast.Aggregation):
        head = expr.kind.value
        if expr.level is not None:
            head += f"<{expr.level}>"
        parts = []
        if expr.arg is not None:
            parts.append(format_expr(expr.arg))
        if expr.rank is not None:
            parts.append(_number(expr.rank))
        inner = ", ".join(parts)
        if expr.filter is not None:
            filt = format_expr(expr.filter)
            inner = f"{inner} if {filt}" if inner else f"if {filt}"
        return f"{head}({inner})", _PREC_PRIMARY
    raise TypeError(f"unknown expression node: {expr!r}")


def _child(expr: ast.Expression, min_prec: int) -> str:
    text, prec = _fmt(expr)
    if prec < min_prec:
        return f"({text})"
    return text


def pretty_print(ms: ast.MetricSet) -> str:
    """Canonical source text for a metric set."""
    lines = [f"// metric set: {ms.name}"]
    if ms.units:
        lines.append("")
        for u in ms.units:
            lines.append(f"unit {u.name} = {u.key_column};")
    if ms.metrics:
        lines.append("")
        for m in ms.metrics:
            groups = f" in {', '.join(m.groups)}" if m.groups else ""
            lines.append(f"metric {m.name}{groups} = {format_expr(m.expr)};")
    if ms.segments:
        lines.append("")
        for s in ms.segments:
            lines.append(f"segment {s.name} = {format_expr(s.expr)};")
    if ms.groups:
        lines.append("")
        for g in ms.groups:
            lines.append(f"group {g.name} = {{ {', '.join(g.members)} }};")
    return "\n".join(lines) + "\n"
