"""Undirected projection, character subgraphs and DOT export."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import OCCURS_AT, Fact, KnowledgeGraph, ValidationError


@dataclass
class UndirectedGraph:
    """Untyped, undirected view of a knowledge graph.

    ``adjacency[u]`` maps each neighbour index to the facts linking the pair,
    in either direction.  Parallel facts collapse into one edge but stay
    available as supporting references.
    """

    vertices: list[str] = field(default_factory=list)
    adjacency: list[dict[int, list[Fact]]] = field(default_factory=list)

    def __post_init__(self):
        self.index = {label: i for i, label in enumerate(self.vertices)}

    def __len__(self) -> int:
        return len(self.vertices)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def neighbors(self, v: int) -> list[int]:
        return list(self.adjacency[v])

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2


def underlying_graph(kg: KnowledgeGraph, include_derived: bool = False) -> UndirectedGraph:
    g = UndirectedGraph(vertices=kg.entities)
    g.adjacency = [dict() for _ in g.vertices]
    for fact in kg.training_facts(include_derived):
        u, v = g.index[fact.subject], g.index[fact.object]
        g.adjacency[u].setdefault(v, []).append(fact)
        if u != v:
            g.adjacency[v].setdefault(u, []).append(fact)
    # sorted neighbour order keeps sampling reproducible across builds
    g.adjacency = [dict(sorted(a.items())) for a in g.adjacency]
    return g


def character_subgraph(kg: KnowledgeGraph, who: str, subject_only: bool = True) -> KnowledgeGraph:
    """Facts with ``who`` as subject (or, if not ``subject_only``, as either end)."""
    if not kg.has_entity(who):
        raise ValidationError(f"unknown entity {who!r}")
    sub = KnowledgeGraph(kg.ontology.copy())
    sub.add_entity(who)
    for fact in kg.facts:
        if fact.subject == who or (not subject_only and fact.object == who):
            sub.add_fact(fact, derived=kg.is_derived(fact))
    return sub


def _dot_id(label: str) -> str:
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(kg: KnowledgeGraph, suppress_temporal: bool = False, name: str = "kg") -> str:
    facts = kg.facts
    hidden: set[str] = set()
    if suppress_temporal:
        hidden = {f.object for f in facts if f.predicate == OCCURS_AT}
        facts = [f for f in facts if f.predicate != OCCURS_AT]
    used = {f.subject for f in facts} | {f.object for f in facts}
    nodes = [e for e in kg.entities if e not in hidden or e in used]
    lines = [f"digraph {_dot_id(name)} {{"]
    lines += [f"  {_dot_id(e)};" for e in nodes]
    lines += [
        f"  {_dot_id(f.subject)} -> {_dot_id(f.object)} [label={_dot_id(f.predicate)}];"
        for f in facts
    ]
    lines.append("}")
    return "\n".join(lines) + "\n"


def connected_components(g: UndirectedGraph) -> list[list[int]]:
    """Components as sorted index lists, ordered by their smallest vertex."""
    seen = [False] * len(g)
    components = []
    for root in range(len(g)):
        if seen[root]:
            continue
        seen[root] = True
        stack, comp = [root], []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in g.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        components.append(sorted(comp))
    return components
