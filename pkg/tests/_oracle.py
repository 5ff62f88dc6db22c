"""Brute-force ranking: score every candidate one at a time and sort."""

import math

from causallp.embedding.training import score
from causallp.model import Relation


def oracle_rank(state, quad, side, filter_keys, domain):
    true = score(state, quad.head, quad.relation, quad.tail)
    listed = []
    for e in sorted(set(domain) | {quad.tail if side == "tail" else quad.head}):
        h, t = (quad.head, e) if side == "tail" else (e, quad.tail)
        if (h, t) == (quad.head, quad.tail):
            continue
        if (h, Relation(quad.relation), t) in filter_keys:
            continue
        listed.append(score(state, h, quad.relation, t))
    listed.sort(reverse=True)
    better = sum(1 for s in listed if s > true)
    ties = sum(1 for s in listed if s == true)
    return 1 + better + math.ceil(ties / 2), len(listed) + 1
