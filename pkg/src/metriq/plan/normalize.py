"""Canonical normalization of metrics plans.

Rules, applied bottom-up through the interning builder:

  * constant folding with the interpreter's exact arithmetic
  * null-test canonicalization: ``x == null`` becomes is-null, and the
    ``if x == null then k else x`` idiom becomes coalesce
  * commutative operands sorted by structural hash (+, *, and, or, ==, !=)
  * associative chains flattened, constants combined, then re-built
    left-associated; identity elements (x + 0, x * 1) dropped
  * double negation removal, constant-branch conditionals, true-filter removal

Normalization is idempotent and preserves evaluation results exactly; the
latter holds because the interpreter evaluates numbers as exact rationals,
so reordering and re-association cannot change any result.
"""

from __future__ import annotations

from fractions import Fraction

from .. import semantics
from ..core import AggKind, ValueType
from .ir import MetricsPlan, PlanBuilder, PlanNode, agg_parts, remap_root_fields, topo_order


def normalize(plan: MetricsPlan) -> MetricsPlan:
    b = PlanBuilder(plan.schema)
    mapping: dict[int, int] = {}
    for nid in topo_order(plan):
        node = plan.node(nid)
        mapping[nid] = _rebuild(b, node, mapping)
    return b.freeze(**remap_root_fields(plan, mapping))


def _rebuild(b: PlanBuilder, node: PlanNode, mapping: dict[int, int]) -> int:
    ch = tuple(mapping[c] for c in node.children)
    op = node.op
    if op == "column":
        return b.column(node.payload[0])
    if op == "literal":
        return b.literal(node.payload[1])
    if op == "arith":
        return _arith(b, node.payload[0], ch[0], ch[1])
    if op == "compare":
        return _compare(b, node.payload[0], ch[0], ch[1])
    if op == "logic":
        return _logic(b, node.payload[0], ch[0], ch[1])
    if op == "not":
        return _not(b, ch[0])
    if op == "cond":
        return _cond(b, ch[0], ch[1], ch[2])
    if op == "is_null":
        return _is_null(b, ch[0])
    if op == "coalesce":
        return _coalesce(b, ch[0], ch[1])
    if op in ("agg", "grouped_agg"):
        return _agg(b, node, ch)
    raise TypeError(f"unknown plan op {op!r}")


def _lit_value(b: PlanBuilder, nid: int):
    """The literal's value if nid is a literal node, else a miss marker."""
    node = b.node(nid)
    if node.op == "literal":
        return True, node.payload[1]
    return False, None


def _arith(b: PlanBuilder, op: str, left: int, right: int) -> int:
    l_lit, l_val = _lit_value(b, left)
    r_lit, r_val = _lit_value(b, right)
    if l_lit and r_lit:
        return b.literal(semantics.arith_apply(op, l_val, r_val))
    if op in ("+", "*"):
        return _assoc_chain(b, op, [left, right])
    if op == "-":
        if r_lit and r_val == 0:
            return left
        # 0 - (0 - x) -> x
        if l_lit and l_val == 0:
            inner = b.node(right)
            if inner.op == "arith" and inner.payload[0] == "-":
                inner_l_lit, inner_l_val = _lit_value(b, inner.children[0])
                if inner_l_lit and inner_l_val == 0:
                    return inner.children[1]
    if op == "/" and r_lit and r_val == 1:
        return left
    return b.arith(op, left, right)


def _assoc_chain(b: PlanBuilder, op: str, operands: list[int]) -> int:
    identity = Fraction(0) if op == "+" else Fraction(1)

    leaves: list[int] = []
    const: Fraction | None = identity
    stack = list(reversed(operands))
    while stack:
        nid = stack.pop()
        node = b.node(nid)
        if node.op == "arith" and node.payload[0] == op:
            stack.append(node.children[1])
            stack.append(node.children[0])
            continue
        is_lit, val = _lit_value(b, nid)
        if is_lit and (isinstance(val, Fraction) or val is None):
            const = semantics.arith_apply(op, const, val) if const is not None else None
            continue
        leaves.append(nid)

    if const is None:
        # A null constant absorbs the whole chain.
        return b.literal(None)
    leaves.sort(key=lambda nid: (b.node(nid).shash, nid))
    if const != identity or not leaves:
        leaves.append(b.literal(const))
    out = leaves[0]
    for nid in leaves[1:]:
        out = b.arith(op, out, nid)
    return out


def _compare(b: PlanBuilder, op: str, left: int, right: int) -> int:
    if b.node(left).vtype is ValueType.NULL and op in ("==", "!="):
        left, right = right, left
    if b.node(right).vtype is ValueType.NULL and op in ("==", "!="):
        test = _is_null(b, left)
        return test if op == "==" else _not(b, test)
    l_lit, l_val = _lit_value(b, left)
    r_lit, r_val = _lit_value(b, right)
    if l_lit and r_lit:
        return b.literal(semantics.compare_apply(op, l_val, r_val))
    if op in ("==", "!=") and (b.node(right).shash, right) < (b.node(left).shash, left):
        left, right = right, left
    return b.compare(op, left, right)


def _logic(b: PlanBuilder, op: str, left: int, right: int) -> int:
    absorber = op == "or"  # True absorbs or-chains, False absorbs and-chains

    leaves: list[int] = []
    const: bool | None = not absorber
    saw_const = False
    stack = [right, left]
    while stack:
        nid = stack.pop()
        node = b.node(nid)
        if node.op == "logic" and node.payload[0] == op:
            stack.append(node.children[1])
            stack.append(node.children[0])
            continue
        is_lit, val = _lit_value(b, nid)
        if is_lit and (isinstance(val, bool) or val is None):
            const = semantics.logic_apply(op, const, val)
            saw_const = True
            continue
        if nid not in leaves:  # and/or are idempotent
            leaves.append(nid)

    if saw_const and const is absorber:
        return b.literal(absorber)
    leaves.sort(key=lambda nid: (b.node(nid).shash, nid))
    if const is None:
        leaves.append(b.literal(None))
    if not leaves:
        return b.literal(const)
    out = leaves[0]
    for nid in leaves[1:]:
        out = b.logic(op, out, nid)
    return out


def _not(b: PlanBuilder, operand: int) -> int:
    node = b.node(operand)
    if node.op == "literal":
        return b.literal(semantics.not_apply(node.payload[1]))
    if node.op == "not":
        return node.children[0]
    return b.not_(operand)


def _cond(b: PlanBuilder, pred: int, then_n: int, else_n: int) -> int:
    p_lit, p_val = _lit_value(b, pred)
    if p_lit:
        return then_n if p_val is True else else_n
    if then_n == else_n:
        return then_n
    pred_node = b.node(pred)
    if pred_node.op == "is_null" and pred_node.children[0] == else_n:
        return _coalesce(b, else_n, then_n)
    return b.cond(pred, then_n, else_n)


def _is_null(b: PlanBuilder, operand: int) -> int:
    # Nullability-based elimination is the null-check pass's job; only
    # constants fold here.
    is_lit, val = _lit_value(b, operand)
    if is_lit:
        return b.literal(val is None)
    return b.is_null(operand)


def _coalesce(b: PlanBuilder, operand: int, fallback: int) -> int:
    is_lit, val = _lit_value(b, operand)
    if is_lit:
        return fallback if val is None else operand
    if b.node(fallback).vtype is ValueType.NULL:
        return operand
    return b.coalesce(operand, fallback)


def _agg(b: PlanBuilder, node: PlanNode, ch: tuple[int, ...]) -> int:
    kind = node.payload[0]
    rank = node.payload[1]
    old_args, old_filter, old_keys = agg_parts(node)
    n_args = len(old_args)
    args = ch[:n_args]
    filt = ch[n_args] if old_filter is not None else None
    keys = ch[n_args + (1 if old_filter is not None else 0) :]

    if filt is not None:
        f_lit, f_val = _lit_value(b, filt)
        if f_lit and f_val is True:
            filt = None

    if kind is AggKind.SUM_PROD and len(args) == 2:
        args = tuple(sorted(args, key=lambda nid: (b.node(nid).shash, nid)))

    unit = node.level.unit if node.level.kind == "unit" else None
    if node.op == "agg":
        return b.agg(kind, args, unit=unit, rank=rank, filter=filt)
    return b.grouped_agg(kind, args, keys, unit=unit, rank=rank, filter=filt)
