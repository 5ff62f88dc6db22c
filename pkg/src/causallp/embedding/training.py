"""Embedding state, negative sampling, weighted loss and the training loop.

In ``weighted`` mode every raw score ``s`` of a positive with causal weight
``w`` becomes ``alpha * softplus(s)`` with ``alpha = beta + (1 - beta) * w``;
its corruptions use ``alpha = beta + (1 - beta) * (1 - w)``. The structural
influence ``beta`` decays linearly from 1 to 0 during the first
``beta_decay_epochs`` epochs. ``base`` mode feeds raw scores to the loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, DivergedTraining, EmptyGraph, MalformedInput, UnknownEntity, UnknownRelation
from ..model import Quad
from .scoring import ModelKind, score_grad, sigmoid, softplus
from .scoring import score as _raw_score

log = logging.getLogger(__name__)

WEIGHT_MODES = ("base", "weighted")


@dataclass
class TrainConfig:
    model: str = "DistMult"
    dim: int = 100
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 512
    eta: int = 10
    weight_mode: str = "base"
    beta_decay_epochs: int | None = None  # None -> half of ``epochs``
    beta_fixed: float | None = None  # freeze beta, overriding the schedule
    l2: float = 1e-4
    seed: int = 0
    patience: int = 20
    eval_every: int = 5

    def __post_init__(self):
        self.model = ModelKind.parse(self.model).value
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")
        if self.dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("dim, epochs and batch_size must be positive")
        if self.eta < 1:
            raise ConfigError("eta must be at least 1")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise ConfigError("learning_rate must be > 0 and l2 >= 0")
        if self.beta_decay_epochs is not None and not 0 <= self.beta_decay_epochs <= self.epochs:
            raise ConfigError("beta_decay_epochs must lie in [0, epochs]")
        if self.beta_fixed is not None and not 0.0 <= self.beta_fixed <= 1.0:
            raise ConfigError("beta_fixed must lie in [0, 1]")

    @property
    def decay_epochs(self) -> int:
        return self.epochs // 2 if self.beta_decay_epochs is None else self.beta_decay_epochs

    def beta_at(self, epoch: int) -> float:
        if self.beta_fixed is not None:
            return float(self.beta_fixed)
        if self.decay_epochs == 0:
            return 0.0
        return max(0.0, 1.0 - epoch / self.decay_epochs)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EmbeddingState:
    model: ModelKind
    dim: int
    entities: list[str]
    relations: list[str]
    entity_matrix: np.ndarray
    relation_matrix: np.ndarray
    epoch: int = 0
    loss_history: list = field(default_factory=list)
    valid_history: list = field(default_factory=list)

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}

    @property
    def width(self) -> int:
        return self.model.width(self.dim)

    @property
    def entity_vectors(self) -> dict:
        return {e: self.entity_matrix[i] for e, i in self.entity_index.items()}

    @property
    def relation_vectors(self) -> dict:
        return {r: self.relation_matrix[i] for r, i in self.relation_index.items()}

    def eid(self, name) -> int:
        try:
            return self.entity_index[name]
        except KeyError:
            raise UnknownEntity(name) from None

    def rid(self, relation) -> int:
        key = getattr(relation, "value", relation)
        try:
            return self.relation_index[key]
        except KeyError:
            raise UnknownRelation(key) from None

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(
            self.model, self.dim, list(self.entities), list(self.relations),
            self.entity_matrix.copy(), self.relation_matrix.copy(), self.epoch,
            list(self.loss_history), list(self.valid_history),
        )

    def same_parameters(self, other: "EmbeddingState") -> bool:
        return (
            self.model is other.model and self.dim == other.dim and self.entities == other.entities
            and self.relations == other.relations
            and np.array_equal(self.entity_matrix, other.entity_matrix)
            and np.array_equal(self.relation_matrix, other.relation_matrix)
        )


def init_state(entities: Iterable[str], relations: Iterable, config: TrainConfig) -> EmbeddingState:
    """Uniform Glorot-style init on ``[-sqrt(6/d), sqrt(6/d)]``, seeded."""
    entities = sorted(set(entities))
    relations = sorted({getattr(r, "value", r) for r in relations})
    if not entities:
        raise EmptyGraph("no entities to embed")
    kind = ModelKind.parse(config.model)
    width = kind.width(config.dim)
    bound = math.sqrt(6.0 / config.dim)
    rng = np.random.default_rng(config.seed)
    ent = rng.uniform(-bound, bound, size=(len(entities), width))
    rel = rng.uniform(-bound, bound, size=(len(relations), width))
    return EmbeddingState(kind, config.dim, entities, relations, ent, rel)


def _normalize_rows(m):
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    np.divide(m, np.maximum(norms, 1e-12), out=m)


def score(state: EmbeddingState, h, r, t) -> float:
    hv = state.entity_matrix[state.eid(h)]
    rv = state.relation_matrix[state.rid(r)]
    tv = state.entity_matrix[state.eid(t)]
    return float(_raw_score(state.model, hv, rv, tv))


def modulate(raw, w, beta, polarity="positive"):
    """Weight-modulated score ``alpha * softplus(raw)``."""
    return _alpha(w, beta, polarity) * softplus(raw)


def _alpha(w, beta, polarity):
    w = np.asarray(w, dtype=float)
    if polarity == "positive":
        return beta + (1.0 - beta) * w
    if polarity == "negative":
        return beta + (1.0 - beta) * (1.0 - w)
    raise ValueError(f"polarity must be 'positive' or 'negative', got {polarity!r}")


# -- negative sampling -------------------------------------------------------------


def corrupt_indices(heads, tails, n_entities: int, eta: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """``eta`` corruptions per positive, replacing head or tail (fair coin)
    with a uniformly drawn *different* entity. Returns ``(heads, tails)``
    arrays of shape ``(B, eta)``."""
    heads = np.asarray(heads)[:, None]
    tails = np.asarray(tails)[:, None]
    shape = (heads.shape[0], eta)
    flip_head = rng.random(shape) < 0.5
    draw = rng.integers(0, n_entities - 1, size=shape)
    new_h = draw + (draw >= heads)
    new_t = draw + (draw >= tails)
    nh = np.where(flip_head, new_h, heads)
    nt = np.where(flip_head, tails, new_t)
    return nh, nt


def sample_negatives(quad: Quad, entities: Sequence[str], eta: int, rng) -> list[Quad]:
    """Corrupted copies of ``quad``; each keeps the positive's weight."""
    entities = list(entities)
    if len(entities) < 2:
        raise ValueError("need at least two entities to corrupt")
    if eta < 1:
        raise ValueError("eta must be at least 1")
    index = {e: i for i, e in enumerate(entities)}
    nh, nt = corrupt_indices([index[quad.head]], [index[quad.tail]], len(entities), eta, rng)
    return [
        Quad(entities[h], quad.relation, entities[t], quad.weight) for h, t in zip(nh[0], nt[0])
    ]


# -- loss --------------------------------------------------------------------------


def _scatter_rows(rows, vals, shape):
    """Sum ``vals`` rows into a zero matrix of ``shape`` at ``rows``, in a
    fixed order (one flat bincount, far faster than ``np.add.at``)."""
    n, width = shape
    flat = (np.asarray(rows, dtype=np.int64)[:, None] * width + np.arange(width)).ravel()
    return np.bincount(flat, weights=vals.ravel(), minlength=n * width).reshape(shape)


def loss_and_grad(kind, E, R, h, r, t, w, nh, nt, mode="base", beta=1.0, l2=0.0):
    """Multiclass NLL of each positive against its corruptions.

    ``h, r, t, w`` have shape ``(B,)``; ``nh, nt`` have shape ``(B, eta)``
    and share the positive's relation. Returns ``(loss, dE, dR)`` with
    gradients shaped like ``E`` and ``R``. The L2 term covers every entity
    and relation row the batch touches.
    """
    kind = ModelKind.parse(kind)
    B = len(h)
    hi = np.concatenate([np.asarray(h)[:, None], nh], axis=1)
    ti = np.concatenate([np.asarray(t)[:, None], nt], axis=1)
    s, dh, dr, dt = score_grad(kind, E[hi], R[np.asarray(r)][:, None, :], E[ti])
    if mode == "weighted":
        w = np.asarray(w, dtype=float)[:, None]
        alpha = np.empty_like(s)
        alpha[:, :1] = beta + (1.0 - beta) * w
        alpha[:, 1:] = beta + (1.0 - beta) * (1.0 - w)
        f = alpha * softplus(s)
        df_ds = alpha * sigmoid(s)
    elif mode == "base":
        f = s
        df_ds = None
    else:
        raise ConfigError(f"unknown loss mode {mode!r}")
    m = f.max(axis=1, keepdims=True)
    ex = np.exp(f - m)
    z = ex.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(z[:, 0])
    loss = float(np.mean(lse - f[:, 0]))
    g = ex / z
    g[:, 0] -= 1.0
    g /= B
    if df_ds is not None:
        g = g * df_ds
    g = g[..., None]
    width = E.shape[1]
    rows = np.concatenate([hi.ravel(), ti.ravel()])
    vals = np.concatenate([(g * dh).reshape(-1, width), (g * dt).reshape(-1, width)])
    dE = _scatter_rows(rows, vals, E.shape)
    dR = _scatter_rows(np.asarray(r), (g * dr).sum(axis=1), R.shape)
    if l2 > 0:
        ents = np.unique(np.concatenate([hi.ravel(), ti.ravel()]))
        rels = np.unique(r)
        loss += l2 * float(np.sum(E[ents] ** 2) + np.sum(R[rels] ** 2))
        dE[ents] += 2.0 * l2 * E[ents]
        dR[rels] += 2.0 * l2 * R[rels]
    return loss, dE, dR


class Adam:
    """Adam with bias correction over a list of dense arrays."""

    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training loop -------------------------------------------------------------------


def _encode(quads, state):
    h = np.array([state.entity_index[q.head] for q in quads], dtype=np.int64)
    r = np.array([state.relation_index[q.relation.value] for q in quads], dtype=np.int64)
    t = np.array([state.entity_index[q.tail] for q in quads], dtype=np.int64)
    w = np.array([q.weight for q in quads], dtype=float)
    return h, r, t, w


class _KnownNegatives:
    """Zero-weight links, used as corruptions of positives they share a slot with."""

    def __init__(self, h, r, t):
        self.by_hr: dict = {}
        self.by_rt: dict = {}
        for a, b, c in zip(h.tolist(), r.tolist(), t.tolist()):
            self.by_hr.setdefault((a, b), []).append(c)
            self.by_rt.setdefault((b, c), []).append(a)

    def apply(self, h, r, t, nh, nt):
        for i, (a, b, c) in enumerate(zip(h.tolist(), r.tolist(), t.tolist())):
            slots = [(a, x) for x in self.by_hr.get((a, b), ())] + [(x, c) for x in self.by_rt.get((b, c), ())]
            for j, (x, y) in enumerate(slots[: nh.shape[1]]):
                nh[i, j], nt[i, j] = x, y


def train(
    train_quads: Sequence[Quad],
    valid_quads: Sequence[Quad] = (),
    config: TrainConfig | None = None,
    entities: Iterable[str] | None = None,
    relations: Iterable | None = None,
    filter_keys=None,
) -> EmbeddingState:
    """Fit an embedding to ``train_quads``.

    Entities and relations default to those appearing in the train and
    validation quads. Validation MRR (filtered by ``filter_keys``, default
    train plus validation) is checked every ``eval_every`` epochs; training
    stops after ``patience`` epochs without improvement and the best state
    is returned.
    """
    from ..evaluation import evaluate  # deferred: evaluation imports this module

    cfg = config or TrainConfig()
    train_quads = list(train_quads)
    valid_quads = list(valid_quads)
    if entities is None:
        entities = {e for q in train_quads + valid_quads for e in (q.head, q.tail)}
    if relations is None:
        relations = {q.relation for q in train_quads + valid_quads}
    state = init_state(entities, relations, cfg)
    positives = [q for q in train_quads if q.weight > 0.0]
    zeros = [q for q in train_quads if q.weight == 0.0]
    if not positives:
        raise EmptyGraph("no positive training links")
    if len(state.entities) < 2:
        raise EmptyGraph("need at least two entities")
    h, r, t, w = _encode(positives, state)
    known = _KnownNegatives(*_encode(zeros, state)[:3]) if zeros else None
    if filter_keys is None:
        filter_keys = {q.key for q in train_quads + valid_quads}

    kind = state.model
    E, R = state.entity_matrix, state.relation_matrix
    opt = Adam([E, R], cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(positives)
    best_mrr, best, since_best = -1.0, None, 0
    for epoch in range(cfg.epochs):
        beta = cfg.beta_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bh, br, bt, bw = h[idx], r[idx], t[idx], w[idx]
            nh, nt = corrupt_indices(bh, bt, len(state.entities), cfg.eta, rng)
            if known is not None:
                known.apply(bh, br, bt, nh, nt)
            loss, dE, dR = loss_and_grad(kind, E, R, bh, br, bt, bw, nh, nt, cfg.weight_mode, beta, cfg.l2)
            if not math.isfinite(loss):
                raise DivergedTraining(f"loss became {loss} at epoch {epoch}")
            opt.step([E, R], [dE, dR])
            if kind is ModelKind.TRANSE:
                _normalize_rows(E)
            total += loss * len(idx)
        state.loss_history.append(total / n)
        state.epoch = epoch + 1
        if valid_quads and ((epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs):
            mrr = evaluate(state, valid_quads, filter_keys).mrr
            state.valid_history.append((epoch + 1, mrr))
            log.debug("epoch %d loss %.6f valid mrr %.4f", epoch + 1, total / n, mrr)
            if mrr > best_mrr:
                best_mrr, best, since_best = mrr, state.copy(), 0
            else:
                since_best += cfg.eval_every
                if since_best >= cfg.patience:
                    break
    if best is not None:
        best.loss_history = list(state.loss_history)
        best.valid_history = list(state.valid_history)
        return best
    return state


# -- checkpoints -----------------------------------------------------------------------


def save_checkpoint(state: EmbeddingState, path) -> None:
    lines = [f"model\t{state.model.value}\tdim\t{state.dim}\tepoch\t{state.epoch}"]
    for tag, names, mat in (("E", state.entities, state.entity_matrix), ("R", state.relations, state.relation_matrix)):
        for name, row in zip(names, mat):
            lines.append(f"{tag}\t{name}\t" + " ".join(repr(x) for x in row.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_checkpoint(path) -> EmbeddingState:
    text = Path(path).read_text(encoding="utf-8")
    rows = text.split("\n")
    head = rows[0].split("\t")
    if len(head) != 6 or head[0] != "model" or head[2] != "dim" or head[4] != "epoch":
        raise MalformedInput(1, "bad checkpoint header")
    kind = ModelKind.parse(head[1])
    dim, epoch = int(head[3]), int(head[5])
    width = kind.width(dim)
    ents, evecs, rels, rvecs = [], [], [], []
    for line_no, line in enumerate(rows[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[0] not in ("E", "R"):
            raise MalformedInput(line_no, "expected E|R<TAB>name<TAB>components")
        vec = [float(x) for x in parts[2].split(" ")]
        if len(vec) != width:
            raise MalformedInput(line_no, f"expected {width} components, got {len(vec)}")
        (ents if parts[0] == "E" else rels).append(parts[1])
        (evecs if parts[0] == "E" else rvecs).append(vec)
    return EmbeddingState(
        kind, dim, ents, rels,
        np.array(evecs, dtype=float).reshape(len(ents), width),
        np.array(rvecs, dtype=float).reshape(len(rels), width),
        epoch,
    )
