from __future__ import annotations

from ..core.errors import DesignError
from ..core.types import TeamDesign, TopologyKind
from .runners import dag_levels, forest_heights


def structure_violations(design: TeamDesign) -> list[str]:
    """Arity and shape problems for the design's topology (never raises)."""
    n = len(design.agents)
    kind = design.topology
    p = design.params
    out: list[str] = []
    if n == 0:
        return ["design has no agents"]
    names = design.names
    if len(set(names)) != n:
        out.append("agent names must be unique")
    if p.max_rounds is not None and p.max_rounds < 1:
        out.append("max_rounds must be a positive integer")
    if kind in (TopologyKind.HIERARCHICAL, TopologyKind.STAR) and n < 2:
        out.append(f"{kind.value} requires a coordinator and at least 1 worker")
    elif kind in (TopologyKind.MIXTURE, TopologyKind.MESH, TopologyKind.CIRCULAR) and n < 2:
        out.append(f"{kind.value} requires at least 2 agents")
    elif kind is TopologyKind.DEBATE and n != 2:
        out.append("debate requires exactly 2 agents (proposer, critic)")
    elif kind is TopologyKind.MAKER:
        if n - 1 < 2:
            out.append("maker requires ≥2 voters")
        if not 0.5 <= p.vote_threshold <= 1:
            out.append("maker vote_threshold must be in [0.5, 1]")
    elif kind is TopologyKind.GRID:
        if not p.grid_rows or not p.grid_cols or p.grid_rows * p.grid_cols != n:
            out.append(f"grid {p.grid_rows}x{p.grid_cols} does not match {n} agents")
    elif kind is TopologyKind.DAG:
        try:
            dag_levels(names, list(p.dag_edges))
        except DesignError as exc:
            out.extend(exc.violations)
    elif kind is TopologyKind.FOREST:
        unknown = [c for c, _ in p.tree_edges if c not in names]
        if unknown:
            out.append(f"forest references unknown agents {unknown}")
        else:
            try:
                forest_heights(names, p.parents)
            except DesignError as exc:
                out.extend(exc.violations)
    return out
