"""Shared data model: entities, relations, quads, causal networks and CEGs.

Everything here is immutable once built. Graph utilities (acyclicity, roots,
longest-path depths) work on plain ``(src, dst)`` pairs so that both raw CEGs
and weighted causal networks can use them.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    CyclicGraph,
    DanglingEdge,
    DuplicateKey,
    InvalidQuad,
    KindConflict,
    MalformedInput,
)


class EntityKind(str, enum.Enum):
    EVENT_INSTANCE = "event-instance"
    EVENT_TYPE = "event-type"
    OBJECT = "object"
    PROPERTY_VALUE = "property-value"
    SCENE = "scene"


class Relation(str, enum.Enum):
    CAUSES = "causes"
    CAUSED_BY = "causedBy"
    CAUSES_TYPE = "causesType"
    CAUSED_BY_TYPE = "causedByType"
    RDF_TYPE = "rdfType"
    INCLUDES = "includes"
    HAS_PARTICIPANT = "hasParticipant"
    HAS_PROPERTY = "hasProperty"

    def __str__(self):
        return self.value

    @property
    def is_causal(self) -> bool:
        return self in CAUSAL_RELATIONS


CAUSAL_RELATIONS = frozenset(
    {Relation.CAUSES, Relation.CAUSED_BY, Relation.CAUSES_TYPE, Relation.CAUSED_BY_TYPE}
)
TYPE_RELATIONS = frozenset({Relation.CAUSES_TYPE, Relation.CAUSED_BY_TYPE})
CONTEXT_RELATIONS = frozenset(Relation) - CAUSAL_RELATIONS

_EI = EntityKind.EVENT_INSTANCE
_ET = EntityKind.EVENT_TYPE

# (head kind, tail kind) allowed for each relation
SIGNATURES: dict[Relation, tuple[EntityKind, EntityKind]] = {
    Relation.CAUSES: (_EI, _EI),
    Relation.CAUSED_BY: (_EI, _EI),
    Relation.CAUSES_TYPE: (_EI, _ET),
    Relation.CAUSED_BY_TYPE: (_EI, _ET),
    Relation.RDF_TYPE: (_EI, _ET),
    Relation.INCLUDES: (EntityKind.SCENE, _EI),
    Relation.HAS_PARTICIPANT: (_EI, EntityKind.OBJECT),
    Relation.HAS_PROPERTY: (EntityKind.OBJECT, EntityKind.PROPERTY_VALUE),
}

INVERSE = {Relation.CAUSES: Relation.CAUSED_BY, Relation.CAUSED_BY: Relation.CAUSES}


def check_name(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise InvalidQuad(f"entity name must be non-empty text, got {name!r}")
    if any(c in name for c in " \t\n\r"):
        raise InvalidQuad(f"entity name contains whitespace: {name!r}")
    return name


@dataclass(frozen=True, order=True)
class Quad:
    head: str
    relation: Relation
    tail: str
    weight: float = 1.0

    def __post_init__(self):
        rel = Relation(self.relation)
        object.__setattr__(self, "relation", rel)
        check_name(self.head)
        check_name(self.tail)
        w = float(self.weight)
        if not 0.0 <= w <= 1.0:
            raise InvalidQuad(f"weight {w} outside [0, 1] for {self.key}")
        if not rel.is_causal and w != 1.0:
            raise InvalidQuad(f"context relation {rel} must carry weight 1.0")
        object.__setattr__(self, "weight", w)

    @property
    def key(self) -> tuple[str, Relation, str]:
        return (self.head, self.relation, self.tail)


class CausalKG:
    """Immutable store of quads with head/tail lookup indexes.

    Entity kinds are inferred from relation signatures, so a name used with
    two kinds raises :class:`KindConflict`. Exact duplicate quads collapse;
    the same key with two weights raises :class:`DuplicateKey`. The
    causes/causedBy inverse closure is checked unless ``check_inverse`` is
    false.
    """

    def __init__(self, quads: Iterable[Quad] = (), check_inverse: bool = True):
        weights: dict[tuple, float] = {}
        kinds: dict[str, EntityKind] = {}
        for q in quads:
            prev = weights.get(q.key)
            if prev is not None and prev != q.weight:
                raise DuplicateKey(f"{q.key} already stored with weight {prev}, got {q.weight}")
            weights[q.key] = q.weight
            hk, tk = SIGNATURES[q.relation]
            for name, kind in ((q.head, hk), (q.tail, tk)):
                seen = kinds.setdefault(name, kind)
                if seen is not kind:
                    raise KindConflict(f"{name!r} used as {seen.value} and {kind.value}")
        self._weights = weights
        self.entities: Mapping[str, EntityKind] = dict(sorted(kinds.items()))
        self.quads: tuple[Quad, ...] = tuple(
            Quad(h, r, t, w) for (h, r, t), w in sorted(weights.items(), key=lambda kv: _sort_key(kv[0]))
        )
        by_hr = defaultdict(list)
        by_tr = defaultdict(list)
        for q in self.quads:
            by_hr[(q.head, q.relation)].append(q)
            by_tr[(q.tail, q.relation)].append(q)
        self.by_head_relation = {k: tuple(v) for k, v in by_hr.items()}
        self.by_tail_relation = {k: tuple(v) for k, v in by_tr.items()}
        if check_inverse:
            self._check_inverse()

    def _check_inverse(self):
        for (h, r, t), w in self._weights.items():
            inv = INVERSE.get(r)
            if inv is None:
                continue
            if self._weights.get((t, inv, h)) != w:
                raise InvalidQuad(f"missing or unequal inverse {inv} for {(h, r, t)}")

    def __len__(self):
        return len(self.quads)

    def __iter__(self) -> Iterator[Quad]:
        return iter(self.quads)

    def __contains__(self, item) -> bool:
        if isinstance(item, Quad):
            return self._weights.get(item.key) == item.weight
        h, r, t = item
        return (h, Relation(r), t) in self._weights

    def __eq__(self, other):
        if not isinstance(other, CausalKG):
            return NotImplemented
        return self._weights == other._weights and dict(self.entities) == dict(other.entities)

    def __repr__(self):
        return f"CausalKG(entities={len(self.entities)}, quads={len(self.quads)})"

    def weight(self, head, relation, tail) -> float:
        return self._weights[(head, Relation(relation), tail)]

    def keys(self):
        return self._weights.keys()

    def with_head(self, head, relation) -> tuple[Quad, ...]:
        return self.by_head_relation.get((head, Relation(relation)), ())

    def with_tail(self, tail, relation) -> tuple[Quad, ...]:
        return self.by_tail_relation.get((tail, Relation(relation)), ())

    def of_kind(self, kind: EntityKind) -> list[str]:
        kind = EntityKind(kind)
        return [n for n, k in self.entities.items() if k is kind]

    def relations(self) -> list[Relation]:
        return sorted({q.relation for q in self.quads}, key=lambda r: r.value)

    def merged(self, extra: Iterable[Quad]) -> "CausalKG":
        return CausalKG(list(self.quads) + list(extra))


def _sort_key(key):
    h, r, t = key
    return (h, r.value, t)


def sort_quads(quads: Iterable[Quad]) -> list[Quad]:
    return sorted(quads, key=lambda q: _sort_key(q.key))


# -- CEG and parsed events --------------------------------------------------


@dataclass(frozen=True)
class ObjectRef:
    """An object mention. ``None`` marks an unknown attribute."""

    color: str | None = None
    shape: str | None = None
    material: str | None = None

    def __post_init__(self):
        if self.color is None and self.shape is None and self.material is None:
            raise ValueError("object reference with no known attribute")

    @property
    def slug(self) -> str:
        return "-".join(p for p in (self.color, self.material, self.shape) if p)

    def properties(self) -> list[tuple[str, str]]:
        return [(k, v) for k, v in (("color", self.color), ("shape", self.shape),
                                     ("material", self.material)) if v is not None]


class Arity(str, enum.Enum):
    SINGULAR = "singular"
    BINARY = "binary"

    @property
    def n_participants(self) -> int:
        return 1 if self is Arity.SINGULAR else 2


@dataclass(frozen=True)
class ParsedEvent:
    event_type: str
    arity: Arity
    participants: tuple[ObjectRef, ...]

    def __post_init__(self):
        object.__setattr__(self, "arity", Arity(self.arity))
        object.__setattr__(self, "participants", tuple(self.participants))
        if len(self.participants) != self.arity.n_participants:
            raise ValueError(
                f"{self.arity.value} event {self.event_type!r} needs "
                f"{self.arity.n_participants} participants, got {len(self.participants)}"
            )

    @property
    def type_name(self) -> str:
        """Entity name of the event type, e.g. ``collide`` -> ``Collide``."""
        return self.event_type[:1].upper() + self.event_type[1:]


@dataclass(frozen=True)
class CegNode:
    id: str
    description: str
    event: ParsedEvent | None = None


@dataclass(frozen=True)
class CegEdge:
    src: str
    dst: str
    score: int

    def __post_init__(self):
        if isinstance(self.score, bool) or not isinstance(self.score, int) or not 1 <= self.score <= 5:
            raise MalformedInput(None, f"edge {self.src}->{self.dst}: score must be an integer 1-5, got {self.score!r}")


@dataclass(frozen=True)
class Ceg:
    video_id: str
    nodes: tuple[CegNode, ...]
    edges: tuple[CegEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise MalformedInput(None, f"{self.video_id}: duplicate node id")
        known = set(ids)
        pairs = set()
        for e in self.edges:
            for end in (e.src, e.dst):
                if end not in known:
                    raise DanglingEdge(None, f"{self.video_id}: edge references unknown node {end!r}")
            if (e.src, e.dst) in pairs:
                raise MalformedInput(None, f"{self.video_id}: duplicate edge {e.src}->{e.dst}")
            pairs.add((e.src, e.dst))

    def node(self, node_id) -> CegNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def pairs(self) -> list[tuple[str, str]]:
        return [(e.src, e.dst) for e in self.edges]


# -- causal networks ---------------------------------------------------------


@dataclass(frozen=True)
class NetNode:
    name: str
    event_type: str | None = None
    participants: tuple[ObjectRef, ...] = ()


@dataclass(frozen=True)
class NetEdge:
    src: str
    dst: str
    weight: float = 1.0


@dataclass(frozen=True)
class CausalNetwork:
    """Weighted event DAG. Acyclicity is checked by consumers, not here."""

    nodes: tuple[NetNode, ...]
    edges: tuple[NetEdge, ...]
    video_id: str = ""
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        index = {n.name: n for n in self.nodes}
        for e in self.edges:
            if e.src not in index or e.dst not in index:
                raise DanglingEdge(None, f"edge {e.src}->{e.dst} references an unknown node")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence], nodes: Iterable[str] = (), video_id: str = "") -> "CausalNetwork":
        """Build an untyped network from ``(src, dst[, weight])`` tuples."""
        edges = [NetEdge(e[0], e[1], e[2] if len(e) > 2 else 1.0) for e in edges]
        names = list(dict.fromkeys([*nodes, *(x for e in edges for x in (e.src, e.dst))]))
        return cls(tuple(NetNode(n) for n in names), tuple(edges), video_id)

    def node(self, name) -> NetNode:
        return self._index[name]

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def pairs(self) -> list[tuple[str, str]]:
        return [(e.src, e.dst) for e in self.edges]


# -- graph utilities ---------------------------------------------------------


def _adjacency(nodes, pairs):
    succ = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for u, v in pairs:
        succ[u].append(v)
        indeg[v] += 1
    return succ, indeg


def topological_order(nodes: Iterable[str], pairs: Iterable[tuple[str, str]]) -> list[str] | None:
    """Kahn's algorithm with lexicographic tie-breaking; ``None`` if cyclic."""
    import heapq

    nodes = list(nodes)
    succ, indeg = _adjacency(nodes, pairs)
    heap = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, m)
    return order if len(order) == len(nodes) else None


def graph_roots(nodes, pairs) -> set[str]:
    nodes = list(nodes)
    pairs = list(pairs)
    if topological_order(nodes, pairs) is None:
        raise CyclicGraph("graph has a cycle")
    _, indeg = _adjacency(nodes, pairs)
    return {n for n in nodes if indeg[n] == 0}


def graph_depths(nodes, pairs) -> dict[str, int]:
    """Longest-path distance (in edges) from any root; roots are 0."""
    nodes = list(nodes)
    pairs = list(pairs)
    order = topological_order(nodes, pairs)
    if order is None:
        raise CyclicGraph("graph has a cycle")
    succ, _ = _adjacency(nodes, pairs)
    depth = dict.fromkeys(nodes, 0)
    for n in order:
        for m in succ[n]:
            if depth[m] < depth[n] + 1:
                depth[m] = depth[n] + 1
    return depth


def check_acyclic(network: CausalNetwork) -> bool:
    return topological_order(network.names, network.pairs()) is not None


def roots(network: CausalNetwork) -> set[str]:
    return graph_roots(network.names, network.pairs())


def node_depths(network: CausalNetwork) -> dict[str, int]:
    return graph_depths(network.names, network.pairs())
