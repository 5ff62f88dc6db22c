"""Glue between split bundles, training and evaluation."""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .builder import SubgraphView, build_kg, project
from .embedding.training import EmbeddingState, TrainConfig, train
from .evaluation import RankReport, evaluate
from .model import TYPE_RELATIONS
from .split import SplitBundle, Strategy, Task, markov_split, random_split

PARTS = ("train", "valid", "test", "support")


def _task(bundle: SplitBundle, task) -> Task:
    return bundle.task if task is None else Task(task)


def task_quads(quads, task: Task):
    if task is Task.NONE:
        return list(quads)
    rel = task.query_relation
    return [q for q in quads if q.relation is rel]


def bundle_entities(bundle: SplitBundle) -> set:
    return {e for part in PARTS for q in getattr(bundle, part) for e in (q.head, q.tail)}


def bundle_relations(bundle: SplitBundle) -> set:
    return {q.relation for part in PARTS for q in getattr(bundle, part)}


def fit(bundle: SplitBundle, config: TrainConfig, task=None) -> EmbeddingState:
    """Train on ``bundle.train``; validation MRR covers only the task's query
    relation when a task is set, otherwise every validation link."""
    task = _task(bundle, task)
    return train(
        bundle.train,
        task_quads(bundle.valid, task),
        config,
        entities=bundle_entities(bundle),
        relations=bundle_relations(bundle),
        filter_keys=bundle.filter_set(),
    )


def score_split(state: EmbeddingState, bundle: SplitBundle, task=None, side_policy="auto") -> RankReport:
    """Filtered test metrics; the filter holds every known-true link of the bundle."""
    task = _task(bundle, task)
    return evaluate(state, task_quads(bundle.test, task), bundle.filter_set(), side_policy)


# -- weighted vs base comparison ----------------------------------------------------

TASKS = (Task.PREDICTION, Task.EXPLANATION)
MODES = ("base", "weighted")


@dataclasses.dataclass
class Comparison:
    """Test MRR per ``(model, strategy, task, mode)``, one value per seed."""

    mrr: dict = dataclasses.field(default_factory=dict)
    seconds: float = 0.0

    def add(self, model, strategy, task, mode, value):
        self.mrr.setdefault((model, strategy, Task(task).value, mode), []).append(value)

    def median(self, model, strategy, task, mode) -> float:
        return float(np.median(self.mrr[(model, strategy, Task(task).value, mode)]))

    def gaps(self, model) -> dict:
        """Median weighted MRR minus median base MRR per (strategy, task)."""
        out = {}
        for model_, strategy, task, mode in self.mrr:
            if model_ == model and mode == "base":
                out[(strategy, task)] = self.median(model, strategy, task, "weighted") - self.median(model, strategy, task, "base")
        return out

    def to_tsv(self) -> str:
        lines = ["model\tstrategy\ttask\tbase\tweighted\tgap\tseeds"]
        for (model, strategy, task, mode), values in sorted(self.mrr.items()):
            if mode != "base":
                continue
            b = self.median(model, strategy, task, "base")
            w = self.median(model, strategy, task, "weighted")
            lines.append(f"{model}\t{strategy}\t{task}\t{b:.6f}\t{w:.6f}\t{w - b:+.6f}\t{len(values)}")
        return "\n".join(lines) + "\n"


def compare_weighting(networks, models, seeds, config: TrainConfig, view=SubgraphView.CT, log=None) -> Comparison:
    """Train base and weighted embeddings under both split strategies.

    The random split is shared by the two tasks: one embedding per mode is
    scored on the ``causesType`` and the ``causedByType`` test links. The
    Markov split is built per task and gets its own embedding.
    """
    networks = list(networks)
    kg = project(build_kg(networks), view)
    start = time.perf_counter()
    out = Comparison()
    for model in models:
        for seed in seeds:
            rand = random_split(kg, seed=seed)
            bundles = [(Strategy.RANDOM, None, rand)]
            bundles += [(Strategy.MARKOV, t, markov_split(networks, t, seed=seed, view=view)[0]) for t in TASKS]
            for mode in MODES:
                cfg = dataclasses.replace(config, model=model, seed=seed, weight_mode=mode)
                for strategy, task, bundle in bundles:
                    if task is None:
                        valid = [q for q in bundle.valid if q.relation in TYPE_RELATIONS]
                        state = train(bundle.train, valid, cfg, entities=bundle_entities(bundle),
                                      relations=bundle_relations(bundle), filter_keys=bundle.filter_set())
                        scored = [(t, score_split(state, bundle, t).mrr) for t in TASKS]
                    else:
                        state = fit(bundle, cfg, task)
                        scored = [(task, score_split(state, bundle, task).mrr)]
                    for t, value in scored:
                        out.add(model, strategy.value, t, mode, value)
                        if log:
                            log(f"{model} seed {seed} {mode} {strategy.value} {t.value}: {value:.4f}")
    out.seconds = time.perf_counter() - start
    return out
