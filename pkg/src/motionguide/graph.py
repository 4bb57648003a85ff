"""Motion graph data model: instance nodes, relation edges, JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum


class MotionCategory(Enum):
    MOTIONLESS = "motionless"
    RIGID = "rigid"
    NONRIGID = "nonrigid"


class RelationKind(Enum):
    SPATIAL = "spatial"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class KinematicHint:
    """Coarse kinematic cues attached to a node by the lexicon."""

    speed: str = "medium"       # slow | medium | fast
    oscillation: str = "none"   # none | sway | pulse | bob
    direction: str = "right"    # left | right | up | down

    def to_json(self) -> dict:
        return {"speed": self.speed, "oscillation": self.oscillation,
                "direction": self.direction}

    @classmethod
    def from_json(cls, d: dict) -> "KinematicHint":
        return cls(speed=d.get("speed", "medium"),
                   oscillation=d.get("oscillation", "none"),
                   direction=d.get("direction", "right"))


@dataclass
class InstanceNode:
    id: int
    noun_phrase: str
    motion_attributes: list[str] = field(default_factory=list)
    category: MotionCategory = MotionCategory.MOTIONLESS
    hint: KinematicHint = field(default_factory=KinematicHint)


@dataclass
class RelationEdge:
    src: int
    dst: int
    kind: RelationKind
    phrase: str
    placement_hint: str | None = None


@dataclass
class MotionGraph:
    nodes: list[InstanceNode] = field(default_factory=list)
    edges: list[RelationEdge] = field(default_factory=list)
    source_prompt: str = ""

    def node_by_id(self, node_id: int) -> InstanceNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "noun": n.noun_phrase,
                    "attributes": list(n.motion_attributes),
                    "category": n.category.value,
                    "hint": n.hint.to_json(),
                }
                for n in self.nodes
            ],
            "edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "kind": e.kind.value,
                    "phrase": e.phrase,
                    **({"placement": e.placement_hint} if e.placement_hint else {}),
                }
                for e in self.edges
            ],
            "prompt": self.source_prompt,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MotionGraph":
        nodes = [
            InstanceNode(
                id=int(n["id"]),
                noun_phrase=str(n["noun"]),
                motion_attributes=[str(a) for a in n.get("attributes", [])],
                category=MotionCategory(n["category"]),
                hint=KinematicHint.from_json(n.get("hint", {})),
            )
            for n in d["nodes"]
        ]
        edges = [
            RelationEdge(
                src=int(e["src"]),
                dst=int(e["dst"]),
                kind=RelationKind(e["kind"]),
                phrase=str(e.get("phrase", "")),
                placement_hint=e.get("placement"),
            )
            for e in d.get("edges", [])
        ]
        return cls(nodes=nodes, edges=edges, source_prompt=d.get("prompt", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "MotionGraph":
        return cls.from_json(json.loads(text))


def validate_graph(graph: MotionGraph) -> list[str]:
    """Return a list of invariant violations; empty iff the graph is valid."""
    report: list[str] = []
    seen: set[int] = set()
    for node in graph.nodes:
        if node.id in seen:
            report.append(f"duplicate node id {node.id}")
        seen.add(node.id)
        if not isinstance(node.category, MotionCategory):
            report.append(f"node {node.id} missing motion category")
    for edge in graph.edges:
        if edge.src not in seen:
            report.append(f"edge {edge.phrase!r} references missing node id {edge.src}")
        if edge.dst not in seen:
            report.append(f"edge {edge.phrase!r} references missing node id {edge.dst}")
        if edge.src == edge.dst:
            report.append(f"edge {edge.phrase!r} is a self-loop on node {edge.src}")
    return report
