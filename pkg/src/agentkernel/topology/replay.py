"""Rebuild a run's final output from its message log alone."""

from __future__ import annotations

from ..core.types import TeamDesign, TopologyKind
from .hub import MsgHub, labeled
from .runners import NO_UPDATE, dag_levels


def _last(hub: MsgHub, sender: str, kinds=("output",)) -> str:
    msgs = [m for m in hub.messages if m.sender == sender and m.kind in kinds]
    return msgs[-1].content if msgs else ""


def replay_final_output(design: TeamDesign, hub: MsgHub) -> str:
    kind = design.topology
    names = design.names
    msgs = hub.messages
    if kind is TopologyKind.SEQUENTIAL:
        return _last(hub, names[-1])
    if kind is TopologyKind.PARALLEL:
        ok = [(m.sender, m.content) for m in msgs if m.kind == "output"]
        order = {n: i for i, n in enumerate(names)}
        ok.sort(key=lambda p: order[p[0]])
        return ok[0][1] if len(names) == 1 else labeled(ok)
    if kind in (TopologyKind.HIERARCHICAL, TopologyKind.STAR):
        return _last(hub, names[0], ("synthesis",))
    if kind is TopologyKind.DAG:
        edges = list(design.params.dag_edges)
        dag_levels(names, edges)
        sinks = [n for n in names if not any(u == n for u, _ in edges)]
        return labeled((n, _last(hub, n)) for n in sinks)
    if kind is TopologyKind.MIXTURE:
        return _last(hub, names[-1], ("aggregate",))
    if kind in (TopologyKind.DEBATE, TopologyKind.MAKER):
        return _last(hub, names[0], ("proposal",))
    if kind is TopologyKind.MESH:
        pairs = []
        for n in names:
            text = _last(hub, n)
            if text or any(m.sender == n and m.kind == "output" for m in msgs):
                pairs.append((n, text))
        return labeled(pairs)
    if kind is TopologyKind.CIRCULAR:
        return msgs[-1].content if msgs else ""
    if kind is TopologyKind.GRID:
        return labeled((n, _last(hub, n)) for n in names)
    if kind is TopologyKind.FOREST:
        parents = design.params.parents
        return labeled((n, _last(hub, n)) for n in names if parents.get(n) is None)
    raise ValueError(f"unknown topology {kind}")


__all__ = ["replay_final_output", "NO_UPDATE"]
