"""CEG parsing and preprocessing.

The pipeline turns raw annotated causal event graphs into clean causal
networks: weak edges are dropped, every node description is reduced to a
single event with its participants, cycles are broken and graphs that are
too shallow for the Markov split are discarded.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from .errors import DanglingEdge, MalformedInput
from .model import (
    Arity,
    Ceg,
    CegEdge,
    CegNode,
    ObjectRef,
    ParsedEvent,
    graph_depths,
    graph_roots,
)

# -- vocabulary ---------------------------------------------------------------


class Lexicon:
    """Closed CLEVRER vocabulary plus alias tables, loaded from a data file."""

    def __init__(self, data: dict):
        self.events = {lemma: Arity(spec["arity"]) for lemma, spec in data["events"].items()}
        self.forms = {f: lemma for lemma, spec in data["events"].items() for f in spec["forms"]}
        self.canonical = {
            "color": set(data["colors"]),
            "shape": set(data["shapes"]),
            "material": set(data["materials"]),
        }
        self.aliases = {k: dict(v) for k, v in data["aliases"].items()}
        # token -> (field, canonical value)
        self.attributes: dict[str, tuple[str, str]] = {}
        for fld, values in self.canonical.items():
            for v in values:
                self.attributes[v] = (fld, v)
            for alias, v in self.aliases.get(fld, {}).items():
                self.attributes[alias] = (fld, v)
        self.unknown = Counter()

    @classmethod
    def load(cls, path=None) -> "Lexicon":
        if path is None:
            text = resources.files("causallp").joinpath("data/vocabulary.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls(json.loads(text))

    def canonicalize(self, fld: str, token: str | None) -> str | None:
        if token is None:
            return None
        token = token.strip().lower()
        if token in self.canonical[fld]:
            return token
        if token in self.aliases.get(fld, {}):
            return self.aliases[fld][token]
        self.unknown[(fld, token)] += 1
        return None


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    return Lexicon.load()


def normalize_lexicon(color=None, shape=None, material=None, lexicon: Lexicon | None = None) -> ObjectRef:
    """Map raw attribute strings onto the canonical vocabulary.

    Aliases such as ``gold`` or ``ball`` are rewritten; anything outside the
    vocabulary becomes unknown and is tallied in ``lexicon.unknown``. Raises
    ``ValueError`` if no attribute survives.
    """
    lex = lexicon or default_lexicon()
    return ObjectRef(
        color=lex.canonicalize("color", color),
        shape=lex.canonicalize("shape", shape),
        material=lex.canonicalize("material", material),
    )


# -- event extraction ---------------------------------------------------------


@dataclass(frozen=True)
class Composite:
    verbs: tuple[str, ...]


@dataclass(frozen=True)
class Unparseable:
    reason: str


_TOKEN = re.compile(r"[a-z]+")


def _objects(tokens, lex: Lexicon) -> list[ObjectRef]:
    found = []
    pending: dict[str, str] = {}

    def flush():
        if pending:
            found.append(ObjectRef(**pending))
            pending.clear()

    for tok in tokens:
        attr = lex.attributes.get(tok)
        if attr is None:
            flush()
            continue
        fld, value = attr
        if fld in pending:
            flush()
        pending[fld] = value
        if fld == "shape":
            flush()
    flush()
    return found


def extract_event(description: str, lexicon: Lexicon | None = None):
    """Reduce a node description to one event.

    Returns a :class:`ParsedEvent`, :class:`Composite` when two or more event
    verbs occur, or :class:`Unparseable` when no verb is found or there are
    too few participants for the verb's arity.
    """
    lex = lexicon or default_lexicon()
    tokens = _TOKEN.findall(description.lower())
    verbs = [lex.forms[t] for t in tokens if t in lex.forms]
    if not verbs:
        return Unparseable("no known event verb")
    if len(verbs) >= 2:
        return Composite(tuple(verbs))
    lemma = verbs[0]
    arity = lex.events[lemma]
    objs = _objects(tokens, lex)
    if len(objs) < arity.n_participants:
        return Unparseable(f"{lemma} needs {arity.n_participants} participants, found {len(objs)}")
    return ParsedEvent(lemma, arity, tuple(objs[: arity.n_participants]))


# -- report -------------------------------------------------------------------


@dataclass
class IngestReport:
    cegs_in: int = 0
    edges_dropped_score1: int = 0
    nodes_dropped_composite: int = 0
    nodes_dropped_unparseable: int = 0
    edges_dropped_node: int = 0
    edges_dropped_cycle: int = 0
    cegs_dropped_empty: int = 0
    cegs_dropped_shallow: int = 0
    cegs_multi_root: int = 0
    cegs_out: int = 0

    def merge(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_tsv(self) -> str:
        return "".join(f"{k}\t{v}\n" for k, v in self.items())


# -- parsing ------------------------------------------------------------------

Adapter = Callable[[dict], dict]


def _require(cond, line, reason):
    if not cond:
        raise MalformedInput(line, reason)


def _ident(value, line, what):
    _require(isinstance(value, str) and value != "", line, f"{what} must be non-empty text")
    _require(not re.search(r"\s", value), line, f"{what} {value!r} contains whitespace")
    return value


def _event_from_record(raw, line) -> ParsedEvent:
    try:
        parts = tuple(ObjectRef(p.get("color"), p.get("shape"), p.get("material")) for p in raw["participants"])
        return ParsedEvent(raw["type"], Arity(raw["arity"]), parts)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedInput(line, f"bad event field: {exc}") from None


def record_to_ceg(record, line=None) -> Ceg:
    _require(isinstance(record, dict), line, "record must be an object")
    for key in ("video_id", "nodes", "edges"):
        _require(key in record, line, f"missing field {key!r}")
    video_id = _ident(record["video_id"], line, "video_id")
    _require(isinstance(record["nodes"], list), line, "nodes must be a list")
    _require(isinstance(record["edges"], list), line, "edges must be a list")
    nodes = []
    for raw in record["nodes"]:
        _require(isinstance(raw, dict), line, "node must be an object")
        nid = _ident(raw.get("id"), line, "node id")
        desc = raw.get("description")
        _require(isinstance(desc, str), line, f"node {nid}: description must be text")
        event = _event_from_record(raw["event"], line) if raw.get("event") is not None else None
        nodes.append(CegNode(nid, desc, event))
    ids = {n.id for n in nodes}
    _require(len(ids) == len(nodes), line, "duplicate node id")
    edges = []
    for raw in record["edges"]:
        _require(isinstance(raw, dict), line, "edge must be an object")
        src, dst, score = raw.get("src"), raw.get("dst"), raw.get("score")
        for end in (src, dst):
            if end not in ids:
                raise DanglingEdge(line, f"edge {src}->{dst} references unknown node {end!r}")
        ok = isinstance(score, int) and not isinstance(score, bool) and 1 <= score <= 5
        _require(ok, line, f"edge {src}->{dst}: score must be an integer 1-5")
        edges.append(CegEdge(src, dst, score))
    try:
        return Ceg(video_id, tuple(nodes), tuple(edges))
    except MalformedInput as exc:
        raise type(exc)(line, exc.reason) from None


def parse_ceg_file(path, adapter: Adapter | None = None) -> list[Ceg]:
    """Read CEGs in the canonical schema.

    ``.json`` files hold a single record or a list of records; anything else
    is read as JSON Lines (one record per line, blank lines skipped).
    ``adapter`` converts each raw upstream record into the canonical schema
    before validation.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    adapt = adapter or (lambda r: r)
    if path.suffix == ".json":
        if not text.strip():
            return []
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedInput(exc.lineno, f"invalid JSON: {exc.msg}") from None
        records = data if isinstance(data, list) else [data]
        return [record_to_ceg(adapt(r), None) for r in records]
    out = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedInput(lineno, f"invalid JSON: {exc.msg}") from None
        out.append(record_to_ceg(adapt(record), lineno))
    return out


def ceg_to_record(ceg: Ceg) -> dict:
    nodes = []
    for n in ceg.nodes:
        raw = {"id": n.id, "description": n.description}
        if n.event is not None:
            raw["event"] = {
                "type": n.event.event_type,
                "arity": n.event.arity.value,
                "participants": [
                    {"color": p.color, "shape": p.shape, "material": p.material} for p in n.event.participants
                ],
            }
        nodes.append(raw)
    edges = [{"src": e.src, "dst": e.dst, "score": e.score} for e in ceg.edges]
    return {"video_id": ceg.video_id, "nodes": nodes, "edges": edges}


def dumps_cegs(cegs: Iterable[Ceg]) -> str:
    return "".join(json.dumps(ceg_to_record(c), sort_keys=True) + "\n" for c in cegs)


def write_ceg_file(cegs: Iterable[Ceg], path) -> None:
    Path(path).write_text(dumps_cegs(cegs), encoding="utf-8", newline="\n")


# -- preprocessing steps --------------------------------------------------------


def drop_weak_edges(ceg: Ceg) -> Ceg:
    return Ceg(ceg.video_id, ceg.nodes, tuple(e for e in ceg.edges if e.score >= 2))


def break_cycles(ceg: Ceg) -> tuple[Ceg, list[CegEdge]]:
    """Remove every DFS back edge.

    Roots of the search are taken in lexicographic node order and neighbours
    are expanded in lexicographic order, so the result is reproducible.
    """
    succ: dict[str, list[CegEdge]] = {n.id: [] for n in ceg.nodes}
    for e in ceg.edges:
        succ[e.src].append(e)
    for lst in succ.values():
        lst.sort(key=lambda e: e.dst)

    WHITE, GRAY, BLACK = 0, 1, 2
    color = dict.fromkeys(succ, WHITE)
    removed: list[CegEdge] = []
    for start in sorted(succ):
        if color[start] != WHITE:
            continue
        color[start] = GRAY
        stack = [(start, iter(succ[start]))]
        while stack:
            node, it = stack[-1]
            edge = next(it, None)
            if edge is None:
                color[node] = BLACK
                stack.pop()
                continue
            c = color[edge.dst]
            if c == GRAY:
                removed.append(edge)
            elif c == WHITE:
                color[edge.dst] = GRAY
                stack.append((edge.dst, iter(succ[edge.dst])))
    if not removed:
        return ceg, []
    gone = set(removed)
    return Ceg(ceg.video_id, ceg.nodes, tuple(e for e in ceg.edges if e not in gone)), removed


def max_depth(ceg: Ceg) -> int:
    depths = graph_depths([n.id for n in ceg.nodes], ceg.pairs())
    return max(depths.values(), default=0)


def prune_shallow(cegs: Iterable[Ceg]) -> tuple[list[Ceg], IngestReport]:
    kept = []
    delta = IngestReport()
    for ceg in cegs:
        if not ceg.edges:
            delta.cegs_dropped_empty += 1
        elif max_depth(ceg) < 2:
            delta.cegs_dropped_shallow += 1
        else:
            kept.append(ceg)
    return kept, delta


def _extract_nodes(ceg: Ceg, lex: Lexicon, report: IngestReport) -> Ceg:
    nodes = []
    for n in ceg.nodes:
        result = extract_event(n.description, lex)
        if isinstance(result, ParsedEvent):
            nodes.append(CegNode(n.id, n.description, result))
        elif isinstance(result, Composite):
            report.nodes_dropped_composite += 1
        else:
            report.nodes_dropped_unparseable += 1
    keep = {n.id for n in nodes}
    edges = tuple(e for e in ceg.edges if e.src in keep and e.dst in keep)
    report.edges_dropped_node += len(ceg.edges) - len(edges)
    return Ceg(ceg.video_id, tuple(nodes), edges)


def _is_multi_root(ceg: Ceg) -> bool:
    touched = {x for e in ceg.edges for x in (e.src, e.dst)}
    return len(graph_roots(sorted(touched), ceg.pairs())) > 1


def preprocess_one(ceg: Ceg, lexicon: Lexicon | None = None) -> tuple[Ceg | None, IngestReport]:
    lex = lexicon or default_lexicon()
    report = IngestReport(cegs_in=1)
    strong = drop_weak_edges(ceg)
    report.edges_dropped_score1 = len(ceg.edges) - len(strong.edges)
    parsed = _extract_nodes(strong, lex, report)
    acyclic, removed = break_cycles(parsed)
    report.edges_dropped_cycle = len(removed)
    kept, delta = prune_shallow([acyclic])
    report = report.merge(delta)
    if not kept:
        return None, report
    report.cegs_out = 1
    report.cegs_multi_root = int(_is_multi_root(kept[0]))
    return kept[0], report


def preprocess(cegs: Iterable[Ceg], lexicon: Lexicon | None = None) -> tuple[list[Ceg], IngestReport]:
    """Run the full cleaning pipeline; failures are counted, never raised."""
    out = []
    report = IngestReport()
    for ceg in cegs:
        kept, rep = preprocess_one(ceg, lexicon)
        report = report.merge(rep)
        if kept is not None:
            out.append(kept)
    return out, report
