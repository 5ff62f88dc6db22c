import math

import numpy as np
import pytest
from _gradcheck import random_instance, relative_error
from hypothesis import given, settings
from hypothesis import strategies as st

from causallp.builder import build_kg
from causallp.errors import ConfigError, DivergedTraining, EmptyGraph, MalformedInput
from causallp.model import Quad
from causallp.embedding.scoring import ModelKind, softplus
from causallp.embedding.training import (
    TrainConfig,
    corrupt_indices,
    init_state,
    load_checkpoint,
    modulate,
    sample_negatives,
    save_checkpoint,
    score,
    train,
)

CHAIN = [Quad(f"e{i}", "causes", f"e{i + 1}", 1.0) for i in range(19)]


# -- config and init -----------------------------------------------------------------


def test_config_validation():
    for bad in (dict(eta=0), dict(learning_rate=0), dict(weight_mode="x"), dict(beta_decay_epochs=300),
                dict(dim=0), dict(beta_fixed=2.0)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    assert TrainConfig(epochs=10).decay_epochs == 5


def test_beta_schedule():
    cfg = TrainConfig(epochs=10, beta_decay_epochs=4)
    assert [cfg.beta_at(e) for e in range(6)] == [1.0, 0.75, 0.5, 0.25, 0.0, 0.0]
    assert TrainConfig(beta_fixed=1.0).beta_at(99) == 1.0


@pytest.mark.parametrize("kind", list(ModelKind))
def test_init_bound_width_and_determinism(kind):
    cfg = TrainConfig(model=kind, dim=4, seed=7)
    a = init_state(["x", "y", "z"], ["causes"], cfg)
    b = init_state(["z", "y", "x"], ["causes"], cfg)
    assert a.same_parameters(b)
    assert a.entity_matrix.shape == (3, 8 if kind is ModelKind.COMPLEX else 4)
    assert np.all(np.abs(a.entity_matrix) <= math.sqrt(6 / 4))
    assert not a.same_parameters(init_state(["x", "y", "z"], ["causes"], TrainConfig(model=kind, dim=4, seed=8)))
    with pytest.raises(EmptyGraph):
        init_state([], ["causes"], cfg)


# -- modulation ---------------------------------------------------------------------


def test_modulate_examples():
    assert modulate(0.3, 0.2, 1.0) == pytest.approx(softplus(0.3))
    assert modulate(0.3, 0.2, 1.0, "negative") == pytest.approx(softplus(0.3))
    assert modulate(1.2, 0.75, 0.0) == pytest.approx(0.75 * softplus(1.2))
    assert modulate(1.0, 1.0, 0.5) == pytest.approx(softplus(1.0))
    assert modulate(1.0, 1.0, 0.5, "negative") == pytest.approx(0.5 * softplus(1.0))
    with pytest.raises(ValueError):
        modulate(1.0, 1.0, 0.5, "neutral")


@given(st.floats(-20, 20), st.floats(0, 0.99), st.floats(0, 1), st.floats(0, 1))
def test_modulate_monotone_in_weight(raw, beta, w1, w2):
    lo, hi = sorted((w1, w2))
    if hi - lo < 1e-9:  # gaps below float resolution of alpha
        return
    assert modulate(raw, lo, beta) < modulate(raw, hi, beta)
    assert modulate(raw, lo, beta, "negative") > modulate(raw, hi, beta, "negative")


# -- negatives -----------------------------------------------------------------------


def test_two_entity_forced_choice(rng):
    q = Quad("a", "causes", "b", 0.5)
    for neg in sample_negatives(q, ["a", "b"], 50, rng):
        assert neg in (Quad("b", "causes", "b", 0.5), Quad("a", "causes", "a", 0.5))


def test_eta_count_and_weight(rng):
    q = Quad("a", "causes", "b", 0.25)
    negs = sample_negatives(q, list("abcdef"), 10, rng)
    assert len(negs) == 10 and all(n.weight == 0.25 and n.relation == q.relation for n in negs)


def test_corruptions_never_equal_original(rng):
    h = rng.integers(0, 7, size=1000)
    t = rng.integers(0, 7, size=1000)
    nh, nt = corrupt_indices(h, t, 7, 10, rng)
    changed_h = nh != h[:, None]
    changed_t = nt != t[:, None]
    assert np.all(changed_h ^ changed_t)
    assert 0.45 < changed_h.mean() < 0.55
    assert set(np.unique(nh)) == set(range(7))


# -- loss ------------------------------------------------------------------------------


@pytest.mark.parametrize("kind", list(ModelKind))
@pytest.mark.parametrize("mode", ["base", "weighted"])
def test_gradients_match_finite_differences(kind, mode):
    rng = np.random.default_rng(hash((kind.value, mode)) % 2**32)
    for _ in range(5):
        assert relative_error(kind, mode, random_instance(kind, rng)) < 1e-4


def synthetic_kg(weights_seed=None):
    from causallp.fixtures import synthetic_corpus
    from causallp.ingest import preprocess
    from causallp.builder import network_from_ceg

    cegs, _ = preprocess(synthetic_corpus(n_cegs=20))
    kg = [q for q in build_kg([network_from_ceg(c) for c in cegs]) if q.relation.name.startswith("CAUSE")]
    if weights_seed is None:
        return kg
    w = np.random.default_rng(weights_seed).permutation([q.weight for q in kg])
    return [Quad(q.head, q.relation, q.tail, float(x)) for q, x in zip(kg, w)]


def test_weights_ignored_at_beta_one():
    cfg = TrainConfig(model="HolE", dim=8, epochs=5, weight_mode="weighted", beta_fixed=1.0, batch_size=64)
    a = train(synthetic_kg(), (), cfg)
    b = train(synthetic_kg(weights_seed=3), (), cfg)
    assert a.loss_history == b.loss_history
    assert a.same_parameters(b)


def test_weighted_all_ones_beta_zero_is_softplus_loss(rng):
    from causallp.embedding.training import loss_and_grad
    inst = random_instance("DistMult", rng)
    ones = np.ones_like(inst["w"])
    args = (inst["h"], inst["r"], inst["t"], ones, inst["nh"], inst["nt"])
    lw = loss_and_grad("DistMult", inst["E"], inst["R"], *args, "weighted", 0.0, 0.0)[0]
    # alpha is 1 for positives and 0 for corruptions
    from causallp.embedding.scoring import score as raw
    s = raw("DistMult", inst["E"][inst["h"]], inst["R"][inst["r"]], inst["E"][inst["t"]])
    eta = inst["nh"].shape[1]
    expected = np.mean(np.log(np.exp(softplus(s)) + eta) - softplus(s))
    assert lw == pytest.approx(expected)


# -- training loop ---------------------------------------------------------------------


def test_chain_loss_decreases_early():
    """Epoch-10 loss below epoch-1 loss for at least 95% of 20 seeds."""
    ok = 0
    for seed in range(20):
        state = train(CHAIN, (), TrainConfig(model="TransE", dim=16, epochs=200, seed=seed))
        ok += state.loss_history[9] < state.loss_history[0]
    assert ok >= 19


def test_transe_entities_unit_norm():
    state = train(CHAIN, (), TrainConfig(model="TransE", dim=8, epochs=3))
    assert np.allclose(np.linalg.norm(state.entity_matrix, axis=1), 1.0)


def test_training_deterministic():
    cfg = TrainConfig(model="ComplEx", dim=4, epochs=4, weight_mode="weighted")
    assert train(CHAIN, (), cfg).same_parameters(train(CHAIN, (), cfg))


def test_early_stopping_returns_best():
    cfg = TrainConfig(model="DistMult", dim=8, epochs=200, eval_every=1, patience=3, learning_rate=0.05)
    state = train(CHAIN, CHAIN[:5], cfg)
    epochs = [e for e, _ in state.valid_history]
    best_epoch, best = max(state.valid_history, key=lambda x: (x[1], -x[0]))
    assert state.epoch == best_epoch
    assert epochs[-1] < 200 or best == 1.0


def test_zero_weight_links_are_not_positives():
    zero = Quad("e0", "causes", "e5", 0.0)
    with pytest.raises(EmptyGraph):
        train([zero], (), TrainConfig(dim=2, epochs=1))
    state = train(CHAIN + [zero], (), TrainConfig(dim=4, epochs=1))
    assert "e5" in state.entity_index


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    with pytest.raises(DivergedTraining):
        train(CHAIN, (), TrainConfig(model="DistMult", dim=4, epochs=5, learning_rate=1e200))


def test_checkpoint_round_trip(tmp_path):
    state = train(CHAIN, (), TrainConfig(model="ComplEx", dim=3, epochs=2))
    path = tmp_path / "model.ckpt"
    save_checkpoint(state, path)
    back = load_checkpoint(path)
    assert back.same_parameters(state) and back.epoch == state.epoch
    assert score(back, "e0", "causes", "e1") == score(state, "e0", "causes", "e1")
    assert path.read_text().splitlines()[0] == "model\tComplEx\tdim\t3\tepoch\t2"


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("nonsense\n")
    with pytest.raises(MalformedInput):
        load_checkpoint(path)
