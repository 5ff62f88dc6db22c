"""Translate preprocessed CEGs into causal knowledge graphs.

Each causal edge ``u -> v`` with weight ``w`` yields four causal quads:
``u causes v``, ``v causedBy u``, ``u causesType type(v)`` and
``v causedByType type(u)``, all carrying ``w``. Type-level keys shared by
several edges keep the maximum weight.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import InvalidQuad, IoFailure, MalformedQuadLine, OutOfRange, UnpreprocessedInput
from .model import (
    CAUSAL_RELATIONS,
    CausalKG,
    CausalNetwork,
    Ceg,
    EntityKind,
    NetEdge,
    NetNode,
    Quad,
    Relation,
    check_acyclic,
    sort_quads,
)


def normalize_weight(score: int) -> float:
    if isinstance(score, bool) or score not in (1, 2, 3, 4, 5):
        raise OutOfRange(f"score must be an integer in 1..5, got {score!r}")
    return (score - 1) / 4


def instance_name(video_id: str, node_id: str) -> str:
    return f"{video_id}/{node_id}"


def network_from_ceg(ceg: Ceg) -> CausalNetwork:
    nodes = []
    for n in ceg.nodes:
        if n.event is None:
            raise UnpreprocessedInput(f"{ceg.video_id}: node {n.id!r} has no parsed event")
        nodes.append(NetNode(instance_name(ceg.video_id, n.id), n.event.type_name, n.event.participants))
    edges = [
        NetEdge(instance_name(ceg.video_id, e.src), instance_name(ceg.video_id, e.dst), normalize_weight(e.score))
        for e in ceg.edges
    ]
    return CausalNetwork(tuple(nodes), tuple(edges), ceg.video_id)


def _check_network(net: CausalNetwork):
    if not check_acyclic(net):
        raise UnpreprocessedInput(f"network {net.video_id!r} is cyclic")
    for node in net.nodes:
        if node.event_type is None:
            raise UnpreprocessedInput(f"node {node.name!r} has no event type")
    for e in net.edges:
        if not 0.0 < e.weight <= 1.0:
            raise UnpreprocessedInput(f"edge {e.src}->{e.dst} has weight {e.weight} outside (0, 1]")


def edge_quads(net: CausalNetwork, edge: NetEdge) -> list[Quad]:
    """The four causal quads generated by one edge, before deduplication."""
    src, dst, w = edge.src, edge.dst, edge.weight
    return [
        Quad(src, Relation.CAUSES, dst, w),
        Quad(dst, Relation.CAUSED_BY, src, w),
        Quad(src, Relation.CAUSES_TYPE, net.node(dst).event_type, w),
        Quad(dst, Relation.CAUSED_BY_TYPE, net.node(src).event_type, w),
    ]


def causal_quads(net: CausalNetwork) -> tuple[dict, dict]:
    """Deduplicated causal quads and their provenance.

    Returns ``(weights, provenance)``, both keyed by ``(head, relation,
    tail)``. ``provenance`` maps each key to the set of ``(src, dst)`` edges
    generating it.
    """
    weights: dict = {}
    prov: dict = defaultdict(set)
    for edge in net.edges:
        for q in edge_quads(net, edge):
            if weights.get(q.key, -1.0) < q.weight:
                weights[q.key] = q.weight
            prov[q.key].add((edge.src, edge.dst))
    return weights, {k: frozenset(v) for k, v in prov.items()}


def network_quads(net: CausalNetwork) -> list[Quad]:
    _check_network(net)
    weights, _ = causal_quads(net)
    quads = [Quad(h, r, t, w) for (h, r, t), w in weights.items()]
    quads += [Quad(n.name, Relation.RDF_TYPE, n.event_type, 1.0) for n in net.nodes]
    return quads


def kg_from_network(net: CausalNetwork) -> CausalKG:
    return CausalKG(network_quads(net))


def provenance(networks: Iterable[CausalNetwork]) -> dict:
    out: dict = {}
    for net in networks:
        _, prov = causal_quads(net)
        for k, edges in prov.items():
            out[k] = out.get(k, frozenset()) | edges
    return out


def object_name(video_id: str, obj) -> str:
    return f"{video_id}/{obj.slug}"


def context_quads(net: CausalNetwork) -> list[Quad]:
    scene = net.video_id
    quads = []
    objects = {}
    for node in net.nodes:
        if scene:
            quads.append(Quad(scene, Relation.INCLUDES, node.name))
        for obj in node.participants:
            slot = (obj.color, obj.shape, obj.material)
            name = objects.setdefault(slot, object_name(scene or "scene", obj))
            quads.append(Quad(node.name, Relation.HAS_PARTICIPANT, name))
    for slot, name in objects.items():
        color, shape, material = slot
        for value in (color, shape, material):
            if value is not None:
                quads.append(Quad(name, Relation.HAS_PROPERTY, value))
    return quads


def enrich_context(kg: CausalKG, net: CausalNetwork) -> CausalKG:
    """Add scene, participant and object-property links for ``net``."""
    extra = context_quads(net)
    if not extra:
        return kg
    return kg.merged(extra)


def build_kg(networks: Iterable[CausalNetwork], context: bool = True) -> CausalKG:
    quads = []
    for net in networks:
        quads += network_quads(net)
        if context:
            quads += context_quads(net)
    return CausalKG(quads)


# -- subgraph views -------------------------------------------------------------


class SubgraphView(str, enum.Enum):
    C = "C"
    CT = "CT"
    CTP = "CTP"

    @property
    def relations(self) -> frozenset:
        rels = set(CAUSAL_RELATIONS)
        if self in (SubgraphView.CT, SubgraphView.CTP):
            rels.add(Relation.RDF_TYPE)
        if self is SubgraphView.CTP:
            rels |= {Relation.HAS_PARTICIPANT, Relation.INCLUDES, Relation.HAS_PROPERTY}
        return frozenset(rels)


def view_quads(quads: Iterable[Quad], view) -> list[Quad]:
    rels = SubgraphView(view).relations
    return [q for q in quads if q.relation in rels]


def project(kg: CausalKG, view) -> CausalKG:
    return CausalKG(view_quads(kg.quads, view))


# -- statistics -------------------------------------------------------------------


@dataclass(frozen=True)
class BuildStats:
    entities: int
    quads: int
    entity_types: int
    relations: int

    def to_tsv(self) -> str:
        return "".join(f"{k}\t{getattr(self, k)}\n" for k in ("entities", "quads", "entity_types", "relations"))


def build_stats(kg: CausalKG) -> BuildStats:
    return BuildStats(
        entities=len(kg.entities),
        quads=len(kg),
        entity_types=len(kg.of_kind(EntityKind.EVENT_TYPE)),
        relations=len(kg.relations()),
    )


# -- quad files -------------------------------------------------------------------


def format_weight(w: float) -> str:
    return f"{w:.6f}"


def format_quad(q: Quad) -> str:
    return f"{q.head}\t{q.relation.value}\t{q.tail}\t{format_weight(q.weight)}"


def write_quads(quads: Iterable[Quad], path) -> None:
    text = "".join(format_quad(q) + "\n" for q in sort_quads(quads))
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_quads(path) -> list[Quad]:
    """Read a quad file without any graph-level validation."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    out = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise MalformedQuadLine(line_no, f"expected 4 tab-separated fields, got {len(parts)}")
        head, rel, tail, weight = parts
        try:
            out.append(Quad(head, Relation(rel), tail, float(weight)))
        except (ValueError, InvalidQuad) as exc:
            raise MalformedQuadLine(line_no, str(exc)) from None
    return out


def export_quads(kg: CausalKG, path) -> None:
    write_quads(kg.quads, path)


def import_quads(path) -> CausalKG:
    return CausalKG(read_quads(path))
