"""Synthetic CEG corpora with planted type-level causal rules.

Edges run from lower to higher node index, so every graph is acyclic by
construction. Rule edges connect a cause type to one of its successor types
and score 4-5; noise edges ignore the rules and score 2-3.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, Unsatisfiable
from .ingest import default_lexicon
from .model import Ceg, CegEdge, CegNode, ObjectRef, Relation, graph_depths

EVENT_ORDER = (
    "collide", "enter", "hit", "slide", "bump", "roll", "stop", "exit", "push", "move",
    "bounce", "spin", "strike", "fall", "nudge", "turn",
)
COLORS = ("blue", "red", "yellow", "green", "purple", "gray", "cyan", "brown")
SHAPES = ("sphere", "cube", "cylinder")
MATERIALS = ("metal", "rubber")


def default_rule_table(types, successors: int = 2) -> dict:
    """Each type causes the next ``successors`` types in a ring; the first
    successor is the strongest."""
    table = {}
    n = len(types)
    for i, cause in enumerate(types):
        for k in range(1, min(successors, n - 1) + 1):
            dist = {5: 0.8, 4: 0.2} if k == 1 else {4: 0.8, 5: 0.2}
            table[(cause, types[(i + k) % n])] = dist
    return table


@dataclass(frozen=True)
class SynthConfig:
    n_cegs: int = 200
    nodes_min: int = 5
    nodes_max: int = 9
    edge_probability: float = 0.3
    n_event_types: int = 6
    rule_table: dict | None = field(default=None, hash=False)
    noise_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.edge_probability < 1.0:
            raise ConfigError("edge_probability must lie in (0, 1)")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError("noise_rate must lie in [0, 1)")
        if not 3 <= self.nodes_min <= self.nodes_max:
            raise ConfigError("need 3 <= nodes_min <= nodes_max")
        if not 2 <= self.n_event_types <= len(EVENT_ORDER):
            raise ConfigError(f"n_event_types must lie in [2, {len(EVENT_ORDER)}]")

    @property
    def event_types(self) -> tuple[str, ...]:
        return EVENT_ORDER[: self.n_event_types]

    def rules(self) -> dict:
        return self.rule_table if self.rule_table is not None else default_rule_table(self.event_types)


def _draw_score(dist: dict, rng) -> int:
    scores = sorted(dist)
    probs = np.array([dist[s] for s in scores], dtype=float)
    return int(scores[rng.choice(len(scores), p=probs / probs.sum())])


def _describe(lemma: str, participants) -> str:
    form = lemma + ("es" if lemma.endswith(("sh", "ch", "s", "x")) else "s")

    def np_(o: ObjectRef):
        return "the " + " ".join(p for p in (o.color, o.material, o.shape) if p)

    if len(participants) == 1:
        return f"{np_(participants[0])} {form}"
    link = " with " if lemma == "collide" else " "
    return f"{np_(participants[0])} {form}{link}{np_(participants[1])}"


def _one_ceg(cfg: SynthConfig, index: int, rules: dict, succ: dict, lex) -> Ceg:
    rng = np.random.default_rng([cfg.seed, index])
    types = cfg.event_types
    for _ in range(100):
        k = int(rng.integers(cfg.nodes_min, cfg.nodes_max + 1))
        pairs = [(i, j) for j in range(k) for i in range(j) if rng.random() < cfg.edge_probability]
        noisy = {pr for pr in pairs if rng.random() < cfg.noise_rate}
        node_type: list[str] = []
        rule_edges = []
        for j in range(k):
            allowed = set(types)
            parents = []
            for i, jj in pairs:
                if jj != j or (i, j) in noisy:
                    continue
                narrowed = allowed & succ[node_type[i]]
                if narrowed:
                    allowed = narrowed
                    parents.append(i)
            options = sorted(allowed)
            node_type.append(options[int(rng.integers(len(options)))])
            rule_edges += [(i, j) for i in parents]
        edges = sorted(set(rule_edges) | noisy)
        depth = graph_depths(range(k), edges)
        if max(depth.values()) >= 2:
            break
    else:
        raise Unsatisfiable(f"could not reach depth 2 for CEG {index} in 100 attempts")

    objects = []
    while len(objects) < 4:
        o = ObjectRef(
            COLORS[int(rng.integers(len(COLORS)))],
            SHAPES[int(rng.integers(len(SHAPES)))],
            MATERIALS[int(rng.integers(len(MATERIALS)))],
        )
        if o not in objects:
            objects.append(o)
    first_parent = {}
    for i, j in sorted(rule_edges):
        first_parent.setdefault(j, i)
    participants: list[tuple] = []
    nodes = []
    for j in range(k):
        lemma = node_type[j]
        n_part = lex.events[lemma].n_participants
        if j in first_parent:
            lead = participants[first_parent[j]][-1]
        else:
            lead = objects[int(rng.integers(len(objects)))]
        chosen = [lead]
        while len(chosen) < n_part:
            o = objects[int(rng.integers(len(objects)))]
            if o not in chosen:
                chosen.append(o)
        participants.append(tuple(chosen))
        nodes.append(CegNode(f"n{j}", _describe(lemma, chosen)))

    ceg_edges = []
    for i, j in edges:
        if (i, j) in noisy:
            score = int(rng.integers(2, 4))
        else:
            score = _draw_score(rules[(node_type[i], node_type[j])], rng)
        ceg_edges.append(CegEdge(f"n{i}", f"n{j}", score))
    return Ceg(f"synth{cfg.seed}_{index:04d}", tuple(nodes), tuple(ceg_edges))


def generate(config: SynthConfig | None = None) -> list[Ceg]:
    """Deterministic corpus for ``config``; each CEG uses its own derived seed."""
    cfg = config or SynthConfig()
    rules = cfg.rules()
    succ = {t: set() for t in cfg.event_types}
    for (cause, effect), dist in rules.items():
        if cause not in succ or effect not in succ:
            raise ConfigError(f"rule {cause}->{effect} uses a type outside the configured types")
        if not dist or any(s not in (4, 5) for s in dist):
            raise ConfigError(f"rule {cause}->{effect} must score within 4-5")
        succ[cause].add(effect)
    for t, s in succ.items():
        if not s:
            raise ConfigError(f"type {t!r} has no successor in the rule table")
    lex = default_lexicon()
    return [_one_ceg(cfg, i, rules, succ, lex) for i in range(cfg.n_cegs)]


def type_weight_mutual_information(kg) -> float:
    """Exact mutual information (nats) between the (cause type, effect type)
    pair and the weight of each ``causes`` link."""
    types = {q.head: q.tail for q in kg if q.relation is Relation.RDF_TYPE}
    joint = Counter((types[q.head], types[q.tail], q.weight) for q in kg if q.relation is Relation.CAUSES)
    n = sum(joint.values())
    if n == 0:
        return 0.0
    pair = Counter()
    bucket = Counter()
    for (a, b, w), c in joint.items():
        pair[(a, b)] += c
        bucket[w] += c
    mi = 0.0
    for (a, b, w), c in joint.items():
        mi += c / n * math.log(c * n / (pair[(a, b)] * bucket[w]))
    return mi
