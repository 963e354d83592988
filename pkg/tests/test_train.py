import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypkg.data import Dataset
from hypkg.diff import loss_and_gradients
from hypkg.errors import DomainError, NumericError
from hypkg.evaluation import evaluate, query_ranks
from hypkg.model import init_params, score
from hypkg.synthetic import chain
from hypkg.train import (
    FULL,
    OptimizerState,
    TrainConfig,
    all_entities,
    batch_loss,
    fit,
    optimizer_step,
    sample_negatives,
)


def chain_dataset():
    triples = chain(5)
    return Dataset.from_triples(triples, triples[:2], triples[2:])


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.max_epochs, cfg.patience, cfg.valid_every) == (500, 100, 5)

    @pytest.mark.parametrize(
        "kw",
        [{"dim": 3}, {"optimizer": "sgd"}, {"neg_samples": 0}, {"neg_samples": "most"}, {"patience": 600}, {"lr": 0.0}],
    )
    def test_invalid(self, kw):
        with pytest.raises((DomainError, ValueError)):
            TrainConfig(**kw)

    def test_full_spelling(self):
        assert TrainConfig(neg_samples="FULL").neg_samples == FULL
        assert TrainConfig(neg_samples="25").neg_samples == 25


class TestNegatives:
    def test_single_entity(self):
        assert not sample_negatives(np.zeros((4, 3), int), 6, 1, np.random.default_rng(0)).any()

    def test_uniform(self):
        counts = np.bincount(sample_negatives(np.zeros(3, int), 10**6, 10, np.random.default_rng(0)), minlength=10)
        sigma = np.sqrt(10**6 * 0.1 * 0.9)
        assert np.all(np.abs(counts - 10**5) < 3 * sigma)

    def test_seeded(self):
        a = sample_negatives(np.zeros((5, 3), int), 4, 100, np.random.default_rng(9))
        b = sample_negatives(np.zeros((5, 3), int), 4, 100, np.random.default_rng(9))
        assert a.shape == (5, 4) and np.array_equal(a, b)

    def test_full_mode_matrix(self):
        np.testing.assert_array_equal(all_entities(2, 3), [[0, 1, 2], [0, 1, 2]])


class TestLoss:
    def test_one_negative_at_zero_scores(self):
        p = init_params("roth", 3, 1, 2, np.random.default_rng(0), init_scale=0.0)
        assert batch_loss(p, [(0, 0, 1)], [[2]]) == pytest.approx(1.3862944, abs=1e-7)

    def test_saturated(self):
        p = init_params("rote", 3, 1, 2, np.random.default_rng(0), init_scale=0.0)
        p.bias[:] = [400.0, 400.0, -1600.0]
        assert batch_loss(p, [(0, 0, 1)], [[2]]) < 1e-300

    @given(st.integers(0, 2**32 - 1))
    def test_full_mode_is_explicit_sum(self, seed):
        rng = np.random.default_rng(seed)
        p = init_params("atth", 3, 2, 4, rng)
        p.entity = rng.normal(0, 0.3, p.entity.shape)
        p.bias = rng.normal(0, 1, 3)
        h, r, t = 1, 0, 2
        s = [score(p, h, r, u) for u in range(3)]
        want = np.log1p(np.exp(-s[t])) + sum(np.log1p(np.exp((-1 if u == t else 1) * s[u])) for u in range(3))
        assert batch_loss(p, [(h, r, t)], all_entities(1, 3)) == pytest.approx(want, rel=1e-12)

    def test_non_finite_raises(self):
        p = init_params("rote", 3, 1, 2, np.random.default_rng(0))
        p.bias[2] = np.inf
        with pytest.raises(NumericError):
            batch_loss(p, [(0, 0, 1)], [[2]])


def _grad_bundle(params, value):
    bundle = loss_and_gradients(params, [(0, 0, 1)], [[1]])
    for name in bundle.grads:
        bundle.grads[name] = np.full_like(bundle.grads[name], value)
    return bundle


class TestOptimizer:
    def test_adagrad_first_step(self):
        p = init_params("rote", 2, 1, 2, np.random.default_rng(0))
        before = p.bias.copy()
        state = OptimizerState.create(p, "adagrad")
        optimizer_step(p, state, _grad_bundle(p, 3.0), TrainConfig(model="rote", dim=2, lr=1.0, optimizer="adagrad"))
        np.testing.assert_allclose(p.bias - before, -3 / np.sqrt(9 + 1e-10), rtol=1e-15)

    def test_adam_first_step_is_lr_sign(self):
        p = init_params("roth", 2, 1, 2, np.random.default_rng(0))
        before = p.entity.copy()
        state = OptimizerState.create(p, "adam")
        cfg = TrainConfig(model="roth", dim=2, lr=0.01)
        bundle = _grad_bundle(p, 0.0)
        bundle.grads["entity"] = np.array([[0.5, -2.0], [1e-3, -7.0]])
        optimizer_step(p, state, bundle, cfg)
        np.testing.assert_allclose(p.entity - before, -0.01 * np.sign(bundle.grads["entity"]), rtol=1e-4)

    def test_zero_gradient_changes_nothing(self):
        p = init_params("atth", 2, 1, 2, np.random.default_rng(0))
        ref = p.copy()
        for kind in ("adam", "adagrad"):
            state = OptimizerState.create(p, kind)
            optimizer_step(p, state, _grad_bundle(p, 0.0), TrainConfig(model="atth", dim=2, optimizer=kind))
            assert p.equal(ref)
            assert not any(s.any() for s in state.steps.values())

    def test_sparse_rows_keep_their_moments(self):
        p = init_params("roth", 5, 1, 2, np.random.default_rng(0))
        state = OptimizerState.create(p, "adam")
        cfg = TrainConfig(model="roth", dim=2, lr=0.01)
        optimizer_step(p, state, loss_and_gradients(p, [(0, 0, 1)], [[2]]), cfg)
        assert list(state.steps["entity"]) == [1, 1, 1, 0, 0]
        assert not state.slots["entity"]["m"][3:].any()
        optimizer_step(p, state, loss_and_gradients(p, [(3, 0, 1)], [[1]]), cfg)
        assert list(state.steps["entity"]) == [1, 2, 1, 1, 0]


class TestFit:
    def test_zero_epochs(self):
        ds = chain_dataset()
        cfg = TrainConfig(model="rote", dim=4, max_epochs=0, patience=0)
        res = fit(ds, cfg)
        assert res.history == []
        ref = init_params("rote", ds.n_entities, ds.n_relations, 4, np.random.default_rng(0))
        assert res.params.equal(ref)

    def test_chain_memorised(self):
        ds = chain_dataset()
        cfg = TrainConfig(model="rote", dim=4, lr=0.05, batch_size=8, neg_samples="full", max_epochs=200, patience=200)
        res = fit(ds, cfg)
        ranks = query_ranks(res.params, ds.train, ds.filter_index)
        assert np.all(ranks == 1)

    def test_smoothed_loss_non_increasing(self):
        ds = chain_dataset()
        cfg = TrainConfig(model="rote", dim=4, lr=0.05, batch_size=8, neg_samples="full", max_epochs=200, patience=200)
        losses = np.array([rec.loss for rec in fit(ds, cfg).history])
        smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
        assert np.all(np.diff(smooth) <= 1e-12)

    def test_reproducible(self):
        ds = chain_dataset()
        cfg = TrainConfig(model="atth", dim=4, lr=0.02, batch_size=4, neg_samples=3, max_epochs=15, patience=15)
        a, b = fit(ds, cfg), fit(ds, cfg)
        assert [(r.epoch, r.loss, r.valid_mrr) for r in a.history] == [(r.epoch, r.loss, r.valid_mrr) for r in b.history]
        assert a.params.equal(b.params)

    def test_returns_best_not_last(self):
        ds = chain_dataset()
        # a huge learning rate makes validation MRR bounce around
        cfg = TrainConfig(model="roth", dim=4, lr=2.0, batch_size=2, neg_samples=2, max_epochs=60, patience=60, valid_every=1)
        seen = []
        res = fit(ds, cfg, callbacks=[seen.append])
        mrrs = [r.valid_mrr for r in seen]
        assert res.best_epoch < len(seen), "validation MRR should peak before the last epoch"
        assert res.best_valid_mrr == max(mrrs)
        assert res.best_epoch == 1 + int(np.argmax(mrrs))
        assert evaluate(res.params, ds.valid, ds.filter_index, ds.n_base_relations).mrr == res.best_valid_mrr

    def test_early_stop(self):
        ds = chain_dataset()
        cfg = TrainConfig(model="rote", dim=4, lr=1e-9, max_epochs=100, patience=10, valid_every=5)
        res = fit(ds, cfg)
        assert len(res.history) == res.best_epoch + 10 < 100

    def test_needs_validation(self):
        triples = chain(4)
        with pytest.raises(DomainError):
            fit(Dataset.from_triples(triples), TrainConfig(model="rote", dim=2))
