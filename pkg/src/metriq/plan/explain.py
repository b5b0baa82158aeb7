"""Plan serialization for inspection: JSON-ready dicts and DOT graphs."""

from __future__ import annotations

from .ir import MetricsPlan, plan_digest


def plan_to_dict(plan: MetricsPlan) -> dict:
    nodes = []
    for nid, node in enumerate(plan.nodes):
        nodes.append(
            {
                "id": nid,
                "op": node.describe(),
                "children": list(node.children),
                "level": str(node.level),
                "type": node.vtype.value,
                "nullable": node.nullable,
            }
        )
    return {
        "digest": plan_digest(plan),
        "mode": plan.mode,
        "nodes": nodes,
        "roots": {
            "metrics": dict(sorted(plan.metric_roots.items())),
            "moments": {
                m: dict(sorted(roles.items()))
                for m, roles in sorted(plan.moment_roots.items())
            },
            "segments": dict(sorted(plan.segment_nodes.items())),
        },
        "estimators": dict(sorted(plan.estimators.items())),
    }


def plan_to_dot(plan: MetricsPlan, title: str = "metrics plan") -> str:
    lines = ["digraph plan {", f'  label="{title}";', "  rankdir=BT;"]
    root_ids = set(plan.metric_roots.values())
    moment_ids = {nid for roles in plan.moment_roots.values() for nid in roles.values()}
    for nid, node in enumerate(plan.nodes):
        label = f"{nid}: {node.describe()}\\n{node.level}"
        shape = "box" if node.op in ("agg", "grouped_agg") else "ellipse"
        color = ""
        if nid in root_ids:
            color = ', style=filled, fillcolor="lightblue"'
        elif nid in moment_ids:
            color = ', style=filled, fillcolor="lightgrey"'
        lines.append(f'  n{nid} [label="{label}", shape={shape}{color}];')
    for nid, node in enumerate(plan.nodes):
        for child in node.children:
            lines.append(f"  n{child} -> n{nid};")
    for name, nid in sorted(plan.metric_roots.items()):
        lines.append(f'  m_{name} [label="{name}", shape=plaintext];')
        lines.append(f"  n{nid} -> m_{name} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
