"""Train/validation/test splits for causal KGs and a leakage auditor.

Two strategies are provided. The random split shuffles quads 80:10:10. The
Markov split assigns whole CEGs to a train or test pool, then cuts every test
CEG at depth 1: links inside the side that is visible for the task go to
training, links inside the other side are held out, and links that cross the
cut are masked out of training entirely and supply the test queries.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .builder import SubgraphView, causal_quads, context_quads, network_quads, read_quads, view_quads, write_quads
from .errors import ConfigError, EmptyGraph, MalformedInput, ShallowCeg
from .model import CausalKG, CausalNetwork, Quad, Relation, check_acyclic, node_depths, sort_quads


class Strategy(str, enum.Enum):
    RANDOM = "random"
    MARKOV = "markov"


class Task(str, enum.Enum):
    EXPLANATION = "explanation"
    PREDICTION = "prediction"
    NONE = "none"

    @property
    def query_relation(self) -> Relation:
        if self is Task.PREDICTION:
            return Relation.CAUSES_TYPE
        if self is Task.EXPLANATION:
            return Relation.CAUSED_BY_TYPE
        raise ValueError("task 'none' has no query relation")


@dataclass(frozen=True)
class SplitBundle:
    train: tuple[Quad, ...]
    valid: tuple[Quad, ...]
    test: tuple[Quad, ...]
    seed: int
    strategy: Strategy
    task: Task = Task.NONE
    # held-out true links that are neither trained on nor queried
    support: tuple[Quad, ...] = ()
    crossing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("train", "valid", "test", "support"):
            object.__setattr__(self, name, tuple(sort_quads(getattr(self, name))))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "crossing", frozenset(self.crossing))
        if self.strategy is Strategy.MARKOV and self.task is Task.NONE:
            raise ConfigError("markov bundles need a task")

    def filter_set(self) -> set:
        """Keys of every known-true link, for filtered ranking."""
        return {q.key for part in (self.train, self.valid, self.test, self.support) for q in part}


@dataclass
class MarkovReport:
    cegs_train: int = 0
    cegs_test: int = 0
    crossing_edges: int = 0
    masked_quads: int = 0
    test_query_quads: int = 0
    dropped_unanswerable: int = 0
    support_quads: int = 0

    def items(self):
        return list(self.__dict__.items())


@dataclass(frozen=True)
class Violation:
    kind: str
    quad: Quad
    detail: str = ""


def _floor(n: int, ratio) -> int:
    # exact rational arithmetic so that e.g. 10 * 0.1 floors to 1, not 0
    return int(Fraction(str(ratio)) * n)


def _entities(q: Quad):
    return (q.head, q.tail)


class _Coverage:
    """Entity occurrence counts over the training part."""

    def __init__(self, quads):
        self.counts = Counter(e for q in quads for e in _entities(q))

    def missing(self, q) -> bool:
        return any(self.counts[e] == 0 for e in _entities(q))

    def removable(self, p, adding=None) -> bool:
        delta = Counter(_entities(p))
        if adding is not None:
            delta.subtract(_entities(adding))
        return all(self.counts[e] - d >= 1 for e, d in delta.items())

    def add(self, q):
        self.counts.update(_entities(q))

    def remove(self, q):
        self.counts.subtract(_entities(q))


def _cover(train: list, held: list, coverage: _Coverage) -> tuple[list, list]:
    """Swap held-out quads whose entities are unseen in train with train quads
    that can leave without orphaning anything. Moves the quad when no partner
    exists."""
    out = []
    cursor = len(train) - 1
    for q in held:
        if not coverage.missing(q):
            out.append(q)
            continue
        partner = None
        while cursor >= 0:
            p = train[cursor]
            cursor -= 1
            if coverage.removable(p, adding=q):
                partner = p
                break
        coverage.add(q)
        if partner is not None:
            coverage.remove(partner)
            train.remove(partner)
            out.append(partner)
        train.append(q)
    return train, out


def random_split(kg: CausalKG | Sequence[Quad], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitBundle:
    """Seeded 80:10:10 quad split with entity coverage of the held-out parts."""
    quads = list(kg.quads if isinstance(kg, CausalKG) else sort_quads(kg))
    if not quads:
        raise EmptyGraph("cannot split an empty graph")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(quads)
    n_valid, n_test = _floor(n, ratios[1]), _floor(n, ratios[2])
    n_train = n - n_valid - n_test
    rng = np.random.default_rng(seed)
    shuffled = [quads[i] for i in rng.permutation(n)]
    train = shuffled[:n_train]
    valid = shuffled[n_train:n_train + n_valid]
    test = shuffled[n_train + n_valid:]
    coverage = _Coverage(train)
    train, valid = _cover(train, valid, coverage)
    train, test = _cover(train, test, coverage)
    return SplitBundle(tuple(train), tuple(valid), tuple(test), seed, Strategy.RANDOM, Task.NONE)


def _carve(train: list, k: int, rng) -> tuple[list, list]:
    """Take ``k`` random train quads out without orphaning any entity."""
    order = [train[i] for i in rng.permutation(len(train))]
    coverage = _Coverage(order)
    taken, kept = [], []
    for q in order:
        if len(taken) < k and coverage.removable(q):
            coverage.remove(q)
            taken.append(q)
        else:
            kept.append(q)
    return kept, taken


def cut_network(net: CausalNetwork) -> tuple[set, set, list]:
    """Split ``net`` at depth 1: ``(upper, lower, crossing_edges)``."""
    depths = node_depths(net)
    upper = {n for n, d in depths.items() if d <= 1}
    lower = set(depths) - upper
    crossing = [(e.src, e.dst) for e in net.edges if (e.src in upper) != (e.dst in upper)]
    return upper, lower, crossing


def markov_split(
    networks: Iterable[CausalNetwork],
    task,
    ceg_ratio: float = 0.8,
    seed: int = 0,
    view=SubgraphView.CTP,
    valid_ratio: float = 0.1,
) -> tuple[SplitBundle, MarkovReport]:
    """CEG-level split with a depth-1 cut of every test-pool CEG.

    Parameters
    ----------
    networks
        Preprocessed causal networks, each acyclic with depth of at least 2.
    task
        ``prediction`` keeps the upper side for training and queries
        ``u causesType type(v)`` for crossing edges ``u -> v``;
        ``explanation`` keeps the lower side and queries
        ``v causedByType type(u)``.
    ceg_ratio
        Fraction of CEGs in the train pool. The test pool receives
        ``floor((1 - ceg_ratio) * n)`` CEGs.
    view
        Subgraph view applied to all generated quads.
    valid_ratio
        Fraction of training quads carved out for validation.
    """
    task = Task(task)
    if task is Task.NONE:
        raise ConfigError("markov split needs task 'prediction' or 'explanation'")
    view = SubgraphView(view)
    nets = sorted(networks, key=lambda n: n.video_id)
    for net in nets:
        if not check_acyclic(net):
            raise ShallowCeg(f"network {net.video_id!r} is cyclic")
        if max(node_depths(net).values(), default=0) < 2:
            raise ShallowCeg(f"network {net.video_id!r} has depth < 2")
    n = len(nets)
    n_test = _floor(n, 1 - Fraction(str(ceg_ratio)))
    perm = np.random.default_rng(seed).permutation(n)
    train_pool = [nets[i] for i in perm[: n - n_test]]
    test_pool = sorted((nets[i] for i in perm[n - n_test:]), key=lambda x: x.video_id)

    report = MarkovReport(cegs_train=len(train_pool), cegs_test=len(test_pool))
    train: dict = {}
    held: dict = {}
    queries: dict = {}
    crossing_all = set()

    def put(target, quads):
        for q in view_quads(quads, view):
            target[q.key] = q

    for net in train_pool:
        put(train, network_quads(net) + context_quads(net))

    for net in test_pool:
        upper, _, crossing = cut_network(net)
        crossing = set(crossing)
        crossing_all |= crossing
        report.crossing_edges += len(crossing)
        query_keys = set()
        for u, v in crossing:
            if task is Task.PREDICTION:
                query_keys.add((u, Relation.CAUSES_TYPE, net.node(v).event_type))
            else:
                query_keys.add((v, Relation.CAUSED_BY_TYPE, net.node(u).event_type))
        weights, prov = causal_quads(net)
        visible_upper = task is Task.PREDICTION
        train_side, hidden = [], []
        for key, w in weights.items():
            q = Quad(key[0], key[1], key[2], w)
            edges = prov[key]
            if edges & crossing:
                report.masked_quads += 1
                (queries if key in query_keys else held)[key] = q
            elif all(e[0] in upper for e in edges) == visible_upper:
                train_side.append(q)
            else:
                hidden.append(q)
        rdf = [q for q in network_quads(net) if q.relation is Relation.RDF_TYPE]
        put(train, train_side + rdf + context_quads(net))
        put(held, hidden)

    for key in list(train):
        if key in held or key in queries:
            del train[key]

    train_list, valid_list = _carve(
        sort_quads(train.values()), _floor(len(train), valid_ratio), np.random.default_rng([seed, 1])
    )
    seen = {e for q in train_list for e in _entities(q)}
    test = []
    for q in sort_quads(queries.values()):
        if q.head in seen:
            test.append(q)
        else:
            report.dropped_unanswerable += 1
            held[q.key] = q
    report.test_query_quads = len(test)
    report.support_quads = len(held)
    bundle = SplitBundle(
        tuple(train_list), tuple(valid_list), tuple(test), seed, Strategy.MARKOV, task,
        support=tuple(held.values()), crossing=frozenset(crossing_all),
    )
    return bundle, report


def leakage_audit(bundle: SplitBundle, provenance: dict | None = None) -> list[Violation]:
    """Report key overlaps between split parts and, for Markov bundles, any
    trained link generated by a masked crossing edge."""
    violations = []
    parts = {"train": bundle.train, "valid": bundle.valid, "test": bundle.test}
    owner: dict = {}
    for name, quads in parts.items():
        for q in quads:
            if q.key in owner:
                violations.append(Violation("overlap", q, f"in both {owner[q.key]} and {name}"))
            else:
                owner[q.key] = name
    if bundle.strategy is Strategy.MARKOV:
        prov = provenance or {}
        for q in bundle.train + bundle.valid:
            bad = prov.get(q.key, frozenset()) & bundle.crossing
            if bad:
                u, v = sorted(bad)[0]
                violations.append(Violation("crossing", q, f"generated by crossing edge {u}->{v}"))
    return violations


# -- files -------------------------------------------------------------------------

PARTS = ("train", "valid", "test", "support")


def write_split(bundle: SplitBundle, out_dir, extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in PARTS:
        write_quads(getattr(bundle, name), out / f"{name}.tsv")
    manifest = {"seed": bundle.seed, "strategy": bundle.strategy.value, "task": bundle.task.value}
    for name in PARTS:
        manifest[f"n_{name}"] = len(getattr(bundle, name))
    manifest.update(extra or {})
    text = "".join(f"{k}\t{v}\n" for k, v in manifest.items())
    (out / "split_manifest.tsv").write_text(text, encoding="utf-8", newline="\n")


def read_manifest(path) -> dict:
    out = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("\t")
        if not sep:
            raise MalformedInput(line_no, "expected key<TAB>value")
        out[key] = value
    return out


def read_split(split_dir) -> SplitBundle:
    d = Path(split_dir)
    manifest = read_manifest(d / "split_manifest.tsv")
    parts = {name: tuple(read_quads(d / f"{name}.tsv")) if (d / f"{name}.tsv").exists() else () for name in PARTS}
    return SplitBundle(
        parts["train"], parts["valid"], parts["test"], int(manifest.get("seed", 0)),
        Strategy(manifest.get("strategy", "random")), Task(manifest.get("task", "none")),
        support=parts["support"],
    )
