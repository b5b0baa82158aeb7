"""Plan node table, hash-consing builder, structural hashing, and topo order.

Node identity is content addressed: the builder interns every node by
(op, payload, children, level), so structurally equal subtrees share one node
and leaf sharing across metrics is automatic. Plans are immutable; passes
build new plans by re-interning through a fresh builder.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from ..core import AggKind, Level, NULL_ON_EMPTY, POPULATION, ROW, ValueType, unit_level
from ..diagnostics import PlanCorruptionError
from ..schema import DatasetSchema

_LEVEL_ORDER = {"row": 0, "unit": 1, "population": 2}


@dataclass(frozen=True)
class PlanNode:
    op: str
    payload: tuple
    children: tuple[int, ...]
    level: Level
    vtype: ValueType
    nullable: bool
    shash: int

    def describe(self) -> str:
        if self.op == "column":
            return f"column({self.payload[0]})"
        if self.op == "literal":
            return f"literal({_literal_repr(self.payload[1])})"
        if self.op in ("arith", "compare", "logic"):
            return f"{self.op}({self.payload[0]})"
        if self.op in ("agg", "grouped_agg"):
            kind, rank = self.payload[0], self.payload[1]
            name = kind.value
            if self.level.kind == "unit":
                name += f"<{self.level.unit}>"
            if rank is not None:
                name += f"[{float(rank):g}]"
            return name
        return self.op


def _literal_repr(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return repr(float(value))
    return repr(value)


def _payload_bytes(payload: tuple) -> bytes:
    out = bytearray()
    for item in payload:
        if item is None:
            out += b"\x00n"
        elif isinstance(item, bool):
            out += b"\x00b1" if item else b"\x00b0"
        elif isinstance(item, int):
            out += b"\x00i" + str(item).encode()
        elif isinstance(item, Fraction):
            out += b"\x00f" + f"{item.numerator}/{item.denominator}".encode()
        elif isinstance(item, str):
            out += b"\x00s" + item.encode("utf-8")
        elif isinstance(item, AggKind):
            out += b"\x00a" + item.value.encode()
        else:  # pragma: no cover - payloads are built internally
            raise TypeError(f"unhashable payload element: {item!r}")
    return bytes(out)


def _structural_hash(op: str, payload: tuple, child_hashes: Iterable[int], level: Level) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(op.encode())
    h.update(_payload_bytes(payload))
    h.update(b"|" + level.kind.encode())
    if level.unit:
        h.update(level.unit.encode())
    for ch in child_hashes:
        h.update(ch.to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class MetricsPlan:
    nodes: tuple[PlanNode, ...]
    metric_roots: Mapping[str, int]
    schema: DatasetSchema
    mode: str  # "experiment" | "business"
    config_digest: str
    randomization_unit: str | None = None
    assignment_column: str | None = None
    treatment: str | None = None
    control: str | None = None
    moment_roots: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    estimators: Mapping[str, str] = field(default_factory=dict)
    segment_nodes: Mapping[str, int] = field(default_factory=dict)
    slice_families: tuple[tuple[str, ...], ...] = ((),)
    variant_node: int | None = None
    unit_key_nodes: Mapping[str, int] = field(default_factory=dict)
    finalized: bool = False

    def node(self, nid: int) -> PlanNode:
        return self.nodes[nid]

    def with_updates(self, **kwargs) -> "MetricsPlan":
        return replace(self, **kwargs)


class PlanBuilder:
    """Interning constructor for plan nodes."""

    def __init__(self, schema: DatasetSchema):
        self.schema = schema
        self._nodes: list[PlanNode] = []
        self._memo: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, nid: int) -> PlanNode:
        return self._nodes[nid]

    def _intern(
        self,
        op: str,
        payload: tuple,
        children: tuple[int, ...],
        level: Level,
        vtype: ValueType,
        nullable: bool,
    ) -> int:
        key = (op, payload, children, level)
        found = self._memo.get(key)
        if found is not None:
            return found
        shash = _structural_hash(op, payload, (self._nodes[c].shash for c in children), level)
        nid = len(self._nodes)
        self._nodes.append(PlanNode(op, payload, children, level, vtype, nullable, shash))
        self._memo[key] = nid
        return nid

    def _join_level(self, children: tuple[int, ...]) -> Level:
        best = ROW
        for c in children:
            lvl = self._nodes[c].level
            if _LEVEL_ORDER[lvl.kind] > _LEVEL_ORDER[best.kind]:
                best = lvl
            elif lvl.kind == "unit" and best.kind == "unit" and lvl != best:
                raise PlanCorruptionError(f"mixing unit levels {best} and {lvl}")
        return best

    # -- constructors --------------------------------------------------------

    def column(self, name: str) -> int:
        spec = self.schema.column(name)
        if spec is None:
            raise PlanCorruptionError(f"column '{name}' not in schema")
        return self._intern("column", (name,), (), ROW, spec.vtype, spec.nullable)

    def literal(self, value: float | int | Fraction | str | bool | None) -> int:
        if value is None:
            payload = ("null", None)
            vtype, nullable = ValueType.NULL, True
        elif isinstance(value, bool):
            payload = ("bool", value)
            vtype, nullable = ValueType.BOOL, False
        elif isinstance(value, str):
            payload = ("str", value)
            vtype, nullable = ValueType.STRING, False
        else:
            payload = ("num", Fraction(value))
            vtype, nullable = ValueType.NUMBER, False
        return self._intern("literal", payload, (), ROW, vtype, nullable)

    def arith(self, op: str, left: int, right: int) -> int:
        children = (left, right)
        nullable = (
            self._nodes[left].nullable or self._nodes[right].nullable or op == "/"
        )
        return self._intern(
            "arith", (op,), children, self._join_level(children), ValueType.NUMBER, nullable
        )

    def compare(self, op: str, left: int, right: int) -> int:
        children = (left, right)
        nullable = self._nodes[left].nullable or self._nodes[right].nullable
        return self._intern(
            "compare", (op,), children, self._join_level(children), ValueType.BOOL, nullable
        )

    def logic(self, op: str, left: int, right: int) -> int:
        children = (left, right)
        nullable = self._nodes[left].nullable or self._nodes[right].nullable
        return self._intern(
            "logic", (op,), children, self._join_level(children), ValueType.BOOL, nullable
        )

    def not_(self, operand: int) -> int:
        children = (operand,)
        return self._intern(
            "not", (), children, self._join_level(children), ValueType.BOOL,
            self._nodes[operand].nullable,
        )

    def cond(self, pred: int, then_n: int, else_n: int) -> int:
        children = (pred, then_n, else_n)
        t, e = self._nodes[then_n], self._nodes[else_n]
        if t.vtype is ValueType.NULL:
            vtype = e.vtype
        else:
            vtype = t.vtype
        nullable = t.nullable or e.nullable
        return self._intern("cond", (), children, self._join_level(children), vtype, nullable)

    def is_null(self, operand: int) -> int:
        children = (operand,)
        return self._intern(
            "is_null", (), children, self._join_level(children), ValueType.BOOL, False
        )

    def coalesce(self, operand: int, fallback: int) -> int:
        children = (operand, fallback)
        o, f = self._nodes[operand], self._nodes[fallback]
        vtype = f.vtype if o.vtype is ValueType.NULL else o.vtype
        return self._intern(
            "coalesce", (), children, self._join_level(children), vtype, f.nullable
        )

    def agg(
        self,
        kind: AggKind,
        args: tuple[int, ...],
        *,
        unit: str | None = None,
        rank: float | Fraction | None = None,
        filter: int | None = None,
    ) -> int:
        children = args + ((filter,) if filter is not None else ())
        rank_f = Fraction(rank) if rank is not None else None
        payload = (kind, rank_f, len(args), filter is not None)
        level = unit_level(unit) if unit else POPULATION
        nullable = kind in NULL_ON_EMPTY
        return self._intern("agg", payload, tuple(children), level, ValueType.NUMBER, nullable)

    def grouped_agg(
        self,
        kind: AggKind,
        args: tuple[int, ...],
        keys: tuple[int, ...],
        *,
        unit: str | None = None,
        rank: float | Fraction | None = None,
        filter: int | None = None,
    ) -> int:
        children = args + ((filter,) if filter is not None else ()) + keys
        rank_f = Fraction(rank) if rank is not None else None
        payload = (kind, rank_f, len(args), filter is not None, len(keys))
        level = unit_level(unit) if unit else POPULATION
        nullable = kind in NULL_ON_EMPTY
        return self._intern(
            "grouped_agg", payload, tuple(children), level, ValueType.NUMBER, nullable
        )

    def copy_of(self, plan: MetricsPlan, nid: int, mapping: dict[int, int]) -> int:
        """Re-intern a node (and transitively its children) from another plan."""
        if nid in mapping:
            return mapping[nid]
        node = plan.node(nid)
        children = tuple(self.copy_of(plan, c, mapping) for c in node.children)
        new_id = self._intern(
            node.op, node.payload, children, node.level, node.vtype, node.nullable
        )
        mapping[nid] = new_id
        return new_id

    def freeze(self, **plan_fields) -> MetricsPlan:
        return MetricsPlan(nodes=tuple(self._nodes), **plan_fields)


def agg_parts(node: PlanNode) -> tuple[tuple[int, ...], int | None, tuple[int, ...]]:
    """Split an aggregation node's children into (args, filter, group keys)."""
    if node.op == "agg":
        kind, rank, n_args, has_filter = node.payload
        n_keys = 0
    else:
        kind, rank, n_args, has_filter, n_keys = node.payload
    args = node.children[:n_args]
    filt = node.children[n_args] if has_filter else None
    keys = node.children[n_args + (1 if has_filter else 0) :]
    assert len(keys) == n_keys or node.op == "agg"
    return args, filt, keys


def topo_order(plan: MetricsPlan) -> list[int]:
    """All node ids, children before parents.

    Deterministic: ordered by (depth, structural hash, insertion id). Raises
    PlanCorruptionError if the node table contains a cycle.
    """
    n = len(plan.nodes)
    rank: dict[int, int] = {}
    on_stack: set[int] = set()

    def visit(nid: int) -> int:
        if nid in rank:
            return rank[nid]
        if nid in on_stack:
            raise PlanCorruptionError(f"cycle through node {nid}")
        on_stack.add(nid)
        r = 0
        for c in plan.nodes[nid].children:
            if not (0 <= c < n):
                raise PlanCorruptionError(f"node {nid} references missing child {c}")
            r = max(r, visit(c) + 1)
        on_stack.discard(nid)
        rank[nid] = r
        return r

    for nid in range(n):
        visit(nid)
    return sorted(range(n), key=lambda i: (rank[i], plan.nodes[i].shash, i))


def reachable_from(plan: MetricsPlan, roots: Iterable[int]) -> set[int]:
    seen: set[int] = set()
    stack = list(roots)
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(plan.nodes[nid].children)
    return seen


def all_root_ids(plan: MetricsPlan) -> list[int]:
    roots = list(plan.metric_roots.values())
    for per_metric in plan.moment_roots.values():
        roots.extend(per_metric.values())
    return roots


def remap_root_fields(plan: MetricsPlan, mapping: Mapping[int, int]) -> dict:
    """Root-ish plan fields rewritten through an old-id -> new-id mapping.

    Entries whose nodes did not survive the rewrite are dropped.
    """

    def keep(nid: int | None):
        return mapping.get(nid) if nid is not None else None

    moment_roots = {}
    for metric, roles in plan.moment_roots.items():
        remapped = {role: mapping[nid] for role, nid in roles.items() if nid in mapping}
        if remapped:
            moment_roots[metric] = remapped
    return dict(
        metric_roots={m: mapping[nid] for m, nid in plan.metric_roots.items() if nid in mapping},
        moment_roots=moment_roots,
        segment_nodes={s: mapping[nid] for s, nid in plan.segment_nodes.items() if nid in mapping},
        variant_node=keep(plan.variant_node),
        unit_key_nodes={u: mapping[nid] for u, nid in plan.unit_key_nodes.items() if nid in mapping},
        estimators=dict(plan.estimators),
        slice_families=plan.slice_families,
        schema=plan.schema,
        mode=plan.mode,
        config_digest=plan.config_digest,
        randomization_unit=plan.randomization_unit,
        assignment_column=plan.assignment_column,
        treatment=plan.treatment,
        control=plan.control,
        finalized=plan.finalized,
    )


def plan_digest(plan: MetricsPlan) -> str:
    h = hashlib.blake2b(digest_size=16)
    for node in plan.nodes:
        h.update(node.shash.to_bytes(8, "little"))
    for name in sorted(plan.metric_roots):
        h.update(name.encode())
        h.update(plan.metric_roots[name].to_bytes(4, "little"))
    return h.hexdigest()
