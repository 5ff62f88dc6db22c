"""Filtered ranking, MRR / Hits@k, and causal prediction / explanation queries."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding.scoring import score as raw_score
from .embedding.training import EmbeddingState
from .errors import EmptyTestSet
from .model import TYPE_RELATIONS, Quad, Relation

SIDE_POLICIES = ("auto", "tail", "both")
HITS_AT = (1, 3, 10)
_TYPE_SLOT = TYPE_RELATIONS | {Relation.RDF_TYPE}
_CHUNK = 200_000  # score-matrix cells per block


@dataclass(frozen=True)
class RankedQuery:
    quad: Quad
    corrupted_side: str
    rank: int
    candidates_considered: int

    def __post_init__(self):
        if not 1 <= self.rank <= self.candidates_considered:
            raise ValueError(f"rank {self.rank} outside [1, {self.candidates_considered}]")


@dataclass
class RankReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    n_queries: int
    per_relation: dict = field(default_factory=dict)

    def to_tsv(self) -> str:
        lines = [f"{k}\t{v:.6f}" for k, v in (("mrr", self.mrr), ("hits1", self.hits1),
                                              ("hits3", self.hits3), ("hits10", self.hits10))]
        lines.append(f"n_queries\t{self.n_queries}")
        for rel in sorted(self.per_relation):
            sub = self.per_relation[rel]
            lines.append("")
            lines.append(f"# relation\t{rel}")
            lines += [f"{rel}.{k}\t{getattr(sub, k):.6f}" for k in ("mrr", "hits1", "hits3", "hits10")]
            lines.append(f"{rel}.n_queries\t{sub.n_queries}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8", newline="\n")


def midpoint_rank(true_score: float, competitors) -> int:
    """1 + strictly better competitors + half the ties, rounded up."""
    competitors = np.asarray(competitors, dtype=float)
    better = int(np.count_nonzero(competitors > true_score))
    ties = int(np.count_nonzero(competitors == true_score))
    return 1 + better + (ties + 1) // 2


def _metrics(ranks: Sequence[int]):
    ranks = np.asarray(ranks, dtype=float)
    mrr = float(np.mean(1.0 / ranks))
    hits = [float(np.mean(ranks <= k)) for k in HITS_AT]
    return mrr, hits


def aggregate(ranked: Sequence[RankedQuery]) -> RankReport:
    if not ranked:
        raise EmptyTestSet("no ranked queries")
    mrr, (h1, h3, h10) = _metrics([q.rank for q in ranked])
    groups = defaultdict(list)
    for q in ranked:
        groups[q.quad.relation.value].append(q.rank)
    per = {}
    for rel, ranks in groups.items():
        m, (a, b, c) = _metrics(ranks)
        per[rel] = RankReport(m, a, b, c, len(ranks))
    return RankReport(mrr, h1, h3, h10, len(ranked), per)


def _keys(filter_set) -> set:
    out = set()
    for item in filter_set or ():
        if isinstance(item, Quad):
            out.add(item.key)
        else:
            h, r, t = item
            out.add((h, Relation(r), t))
    return out


def sides_for(relation, side_policy: str) -> tuple[str, ...]:
    if side_policy == "tail":
        return ("tail",)
    if side_policy == "both":
        return ("head", "tail")
    if side_policy != "auto":
        raise ValueError(f"side_policy must be one of {SIDE_POLICIES}")
    return ("tail",) if Relation(relation) in TYPE_RELATIONS else ("head", "tail")


def _block_scores(state: EmbeddingState, h_idx, r_idx, t_idx, side, cand_idx):
    """Scores of each query with its ``side`` slot replaced by every candidate:
    shape ``(len(h_idx), len(cand_idx))``."""
    E, R = state.entity_matrix, state.relation_matrix
    cand = E[cand_idx][None, :, :]
    out = np.empty((len(h_idx), len(cand_idx)))
    step = max(1, _CHUNK // max(1, len(cand_idx)))
    for s in range(0, len(h_idx), step):
        sl = slice(s, s + step)
        rv = R[r_idx[sl]][:, None, :]
        if side == "tail":
            out[sl] = raw_score(state.model, E[h_idx[sl]][:, None, :], rv, cand)
        else:
            out[sl] = raw_score(state.model, cand, rv, E[t_idx[sl]][:, None, :])
    return out


class _Ranker:
    def __init__(self, state: EmbeddingState, filter_set, type_domain=None, widen=False):
        self.state = state
        self.keys = _keys(filter_set)
        self.tails = defaultdict(set)
        self.heads = defaultdict(set)
        for h, r, t in self.keys:
            self.tails[(h, r)].add(t)
            self.heads[(r, t)].add(h)
        if type_domain is None:
            type_domain = {t for (_, r, t) in self.keys if r in _TYPE_SLOT}
        known = state.entity_index
        self.type_domain = np.array(sorted(known[e] for e in type_domain if e in known), dtype=np.int64)
        self.all_domain = np.arange(len(state.entities), dtype=np.int64)
        self.widen = widen

    def domain(self, relation, side, candidate_domain=None):
        if candidate_domain is not None:
            return np.array(sorted(self.state.eid(e) for e in candidate_domain), dtype=np.int64)
        if side == "tail" and relation in _TYPE_SLOT and not self.widen and len(self.type_domain):
            return self.type_domain
        return self.all_domain

    def rank_group(self, quads, relation, side, candidate_domain=None) -> list[RankedQuery]:
        st = self.state
        h_idx = np.array([st.eid(q.head) for q in quads], dtype=np.int64)
        t_idx = np.array([st.eid(q.tail) for q in quads], dtype=np.int64)
        r_idx = np.full(len(quads), st.rid(relation), dtype=np.int64)
        dom = self.domain(relation, side, candidate_domain)
        true_idx = t_idx if side == "tail" else h_idx
        # make sure each true entity is scored alongside the candidates
        dom = np.union1d(dom, true_idx)
        pos = {e: i for i, e in enumerate(dom.tolist())}
        scores = _block_scores(st, h_idx, r_idx, t_idx, side, dom)
        out = []
        for i, q in enumerate(quads):
            row = scores[i]
            true_col = pos[int(true_idx[i])]
            mask = np.ones(len(dom), dtype=bool)
            mask[true_col] = False
            known = self.tails[(q.head, relation)] if side == "tail" else self.heads[(relation, q.tail)]
            for e in known:
                j = pos.get(st.entity_index.get(e, -1))
                if j is not None:
                    mask[j] = False
            comp = row[mask]
            r = midpoint_rank(row[true_col], comp)
            out.append(RankedQuery(q, side, r, len(comp) + 1))
        return out


def rank(state: EmbeddingState, quad: Quad, side: str, filter_set=(), candidate_domain=None) -> RankedQuery:
    """Filtered midpoint rank of ``quad`` with its ``side`` slot corrupted.

    ``candidate_domain`` lists replacement entities; by default all entities
    are used, except type entities for the tail of type relations.
    """
    for e in (quad.head, quad.tail):
        state.eid(e)
    ranker = _Ranker(state, filter_set)
    return ranker.rank_group([quad], quad.relation, side, candidate_domain)[0]


def rank_all(state, quads, filter_set, side_policy="auto", type_domain=None, widen=False) -> list[RankedQuery]:
    ranker = _Ranker(state, filter_set, type_domain, widen)
    groups = defaultdict(list)
    for q in quads:
        for side in sides_for(q.relation, side_policy):
            groups[(q.relation, side)].append(q)
    ranked = []
    for (rel, side), group in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        ranked += ranker.rank_group(group, rel, side)
    return ranked


def evaluate(state, quads: Iterable[Quad], filter_set=(), side_policy="auto", type_domain=None, widen=False) -> RankReport:
    """MRR and Hits@{1,3,10} over the filtered ranks of ``quads``.

    ``side_policy='auto'`` corrupts only the tail of causesType/causedByType
    links and both slots of everything else.
    """
    quads = list(quads)
    if not quads:
        raise EmptyTestSet("test set is empty")
    return aggregate(rank_all(state, quads, filter_set, side_policy, type_domain, widen))


def _query(state, entity, relation, top_k, candidates):
    if top_k <= 0:
        state.eid(entity)
        return []
    e = state.eid(entity)
    cands = sorted(set(candidates)) if candidates is not None else list(state.entities)
    idx = np.array([state.eid(c) for c in cands], dtype=np.int64)
    r = state.rid(relation)
    s = raw_score(state.model, state.entity_matrix[e][None, :], state.relation_matrix[r][None, :],
                  state.entity_matrix[idx])
    ranked = sorted(zip(cands, s.tolist()), key=lambda cs: (-cs[1], cs[0]))
    return ranked[:top_k]


def query_predict(state, cause: str, top_k: int = 10, candidates=None) -> list[tuple[str, float]]:
    """Most plausible effect types of ``cause`` via ``causesType``."""
    return _query(state, cause, Relation.CAUSES_TYPE, top_k, candidates)


def query_explain(state, effect: str, top_k: int = 10, candidates=None) -> list[tuple[str, float]]:
    """Most plausible cause types of ``effect`` via ``causedByType``."""
    return _query(state, effect, Relation.CAUSED_BY_TYPE, top_k, candidates)


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("\t")
        out[k] = float(v)
    return out

