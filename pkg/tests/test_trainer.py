"""Tests for gradient clipping, Adam, evaluation, and the training loop."""

from __future__ import annotations

import copy

import numpy as np
import pytest
from numpy.testing import assert_allclose

from listcont.corpus import make_splits, synthesize_corpus, build_vocabulary, encode_lists
from listcont.masker import MaskPolicy
from listcont.model import ModelConfig, init_params
from listcont.scheduler import make_schedule
from listcont.trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    clip_gradients,
    evaluate,
    train,
)


def tiny_training_setup(seed=0, num_lists=60):
    lists, truth = synthesize_corpus(
        num_items=30, num_categories=3, num_lists=num_lists,
        len_min=6, len_max=10, pattern_strength=0.9, seed=seed,
    )
    vocab = build_vocabulary(lists)
    labels = np.array([truth[tok] for tok in vocab.tokens])
    vocab.assign_categories(labels, 3)
    encoded = encode_lists(lists, vocab)
    splits = make_splits(encoded, ratios=(8, 1, 1), seed=seed + 1)
    cfg = ModelConfig(
        dim=8, num_layers=1, num_heads=2, classifier="vanilla",
        max_seq_len=32, dropout=0.0, dtype="float64",
    )
    params = init_params(cfg, vocab, np.random.default_rng(seed + 2))
    return vocab, splits, cfg, params


def test_train_config_metric_parsing():
    """Metric strings decompose into a name, a cutoff, and a direction."""
    tc = TrainConfig(metric="ndcg@10")
    assert tc.metric_name == "ndcg" and tc.metric_k == 10 and tc.higher_is_better
    tc = TrainConfig(metric="hr@5")
    assert tc.metric_name == "hr" and tc.metric_k == 5 and tc.higher_is_better
    tc = TrainConfig(metric="loss")
    assert tc.metric_name == "loss" and not tc.higher_is_better

    with pytest.raises(ValueError):
        TrainConfig(metric="accuracy@3")
    with pytest.raises(ValueError):
        TrainConfig(metric="hr@0")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)


def test_clip_gradients_scales_to_max_norm():
    """Oversized gradients shrink onto the clip sphere; small ones pass through."""
    grads = {"a": np.array([3.0, 4.0]), "b": np.array([[12.0]])}
    norm = clip_gradients(grads, max_norm=6.5)
    assert norm == pytest.approx(13.0)  # sqrt(9 + 16 + 144)
    clipped = np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    assert clipped == pytest.approx(6.5)
    assert_allclose(grads["a"], [1.5, 2.0])

    grads = {"a": np.array([0.3, 0.4])}
    norm = clip_gradients(grads, max_norm=6.5)
    assert norm == pytest.approx(0.5)
    assert_allclose(grads["a"], [0.3, 0.4])

    grads = {"a": np.array([30.0])}
    norm = clip_gradients(grads, max_norm=0.0)  # disabled
    assert norm == pytest.approx(30.0)
    assert grads["a"][0] == 30.0


def test_adam_step_matches_hand_computation():
    """Two Adam updates reproduce the bias-corrected reference values."""
    tc = TrainConfig(lr=0.1, beta1=0.9, beta2=0.999, adam_eps=1e-8)
    params = {"w": np.array([1.0])}
    state = AdamState.for_params(params)

    g1 = np.array([0.5])
    adam_step(params, {"w": g1}, state, tc)
    m1 = 0.1 * 0.5
    v1 = 0.001 * 0.25
    mhat = m1 / (1 - 0.9)
    vhat = v1 / (1 - 0.999)
    want1 = 1.0 - 0.1 * mhat / (np.sqrt(vhat) + 1e-8)
    assert params["w"][0] == pytest.approx(want1, rel=1e-12)

    g2 = np.array([-0.25])
    adam_step(params, {"w": g2}, state, tc)
    m2 = 0.9 * m1 + 0.1 * (-0.25)
    v2 = 0.999 * v1 + 0.001 * 0.0625
    mhat2 = m2 / (1 - 0.9**2)
    vhat2 = v2 / (1 - 0.999**2)
    want2 = want1 - 0.1 * mhat2 / (np.sqrt(vhat2) + 1e-8)
    assert params["w"][0] == pytest.approx(want2, rel=1e-12)
    assert state.t == 2


def test_adam_state_shapes():
    """Moment buffers mirror the parameter shapes and start at zero."""
    params = {"a": np.zeros((2, 3)), "b": np.zeros(5)}
    state = AdamState.for_params(params)
    assert state.m["a"].shape == (2, 3)
    assert state.v["b"].shape == (5,)
    assert state.t == 0
    assert np.all(state.m["a"] == 0.0)


def test_evaluate_returns_mean_metrics():
    """evaluate reports hr/ndcg at every requested cutoff in [0, 1]."""
    vocab, splits, cfg, params = tiny_training_setup(seed=5)
    scores = evaluate(params, cfg, vocab, splits.test, ks=(3, 5), mode="nar")
    assert set(scores) == {"hr@3", "hr@5", "ndcg@3", "ndcg@5"}
    assert all(0.0 <= v <= 1.0 for v in scores.values())

    capped = evaluate(params, cfg, vocab, splits.test, ks=(3,), max_pairs=2)
    assert set(capped) == {"hr@3", "ndcg@3"}
    with pytest.raises(ValueError):
        evaluate(params, cfg, vocab, [], ks=(3,))


def test_train_early_stopping_contract():
    """Patience counts strictly non-improving epochs and restores the best."""
    vocab, splits, cfg, params = tiny_training_setup(seed=6)
    canned = iter([0.10, 0.12, 0.11, 0.11, 0.11, 0.50, 0.60])
    snapshots = []

    def eval_fn(p):
        snapshots.append(copy.deepcopy(p))
        return next(canned)

    tc = TrainConfig(lr=1e-3, batch_size=16, max_epochs=50, patience=3, metric="ndcg@10", seed=0)
    schedule = make_schedule("naive", steps=1, total_epochs=50)
    result = train(params, cfg, vocab, splits, tc, MaskPolicy(), schedule, eval_fn=eval_fn)

    # Epochs 2, 3, 4 fail to beat 0.12 -> stop after epoch 4 (5 epochs total).
    assert len(result.history) == 5
    assert result.stopped_early
    assert result.best_epoch == 1
    assert result.best_metric == pytest.approx(0.12)
    # Both the result and the in-place params hold the epoch-1 weights.
    for key in params:
        assert np.array_equal(params[key], snapshots[1][key]), key
        assert np.array_equal(result.params[key], snapshots[1][key]), key
    improved_flags = [row["improved"] for row in result.history]
    assert improved_flags == [True, True, False, False, False]


def test_train_patience_zero_runs_all_epochs():
    """patience=0 disables early stopping entirely."""
    vocab, splits, cfg, params = tiny_training_setup(seed=7)
    canned = iter([0.5, 0.4, 0.3, 0.2, 0.1])  # strictly worsening
    tc = TrainConfig(lr=1e-3, batch_size=16, max_epochs=5, patience=0, metric="hr@5", seed=0)
    schedule = make_schedule("naive", steps=1, total_epochs=5)
    result = train(
        params, cfg, vocab, splits, tc, MaskPolicy(), schedule,
        eval_fn=lambda p: next(canned),
    )
    assert len(result.history) == 5
    assert not result.stopped_early
    assert result.best_epoch == 0
    assert result.best_metric == pytest.approx(0.5)


def test_train_loss_metric_prefers_lower():
    """With metric='loss' the best epoch minimizes the validation value."""
    vocab, splits, cfg, params = tiny_training_setup(seed=8)
    canned = iter([5.0, 4.0, 4.5, 4.4])
    tc = TrainConfig(lr=1e-3, batch_size=16, max_epochs=4, patience=0, metric="loss", seed=0)
    schedule = make_schedule("naive", steps=1, total_epochs=4)
    result = train(
        params, cfg, vocab, splits, tc, MaskPolicy(), schedule,
        eval_fn=lambda p: next(canned),
    )
    assert result.best_epoch == 1
    assert result.best_metric == pytest.approx(4.0)


def test_train_epoch_count_capped_by_schedule():
    """The epoch count is min(max_epochs, len(schedule))."""
    vocab, splits, cfg, params = tiny_training_setup(seed=9)
    tc = TrainConfig(lr=1e-3, batch_size=16, max_epochs=10, patience=0, metric="loss", seed=0)
    schedule = make_schedule("stepwise", steps=2, total_epochs=3)
    counter = iter(range(100))
    result = train(
        params, cfg, vocab, splits, tc, MaskPolicy(), schedule,
        eval_fn=lambda p: float(next(counter)),
    )
    assert len(result.history) == 3
    assert [row["difficulty"] for row in result.history] == [0.5, 1.0, 1.0]


def test_train_reduces_training_loss():
    """A few epochs of optimization lower the epoch-mean training loss."""
    vocab, splits, cfg, params = tiny_training_setup(seed=10, num_lists=80)
    tc = TrainConfig(lr=0.01, batch_size=16, max_epochs=4, patience=0, metric="loss", seed=3)
    schedule = make_schedule("naive", steps=1, total_epochs=4)
    rows = []
    result = train(
        params, cfg, vocab, splits, tc, MaskPolicy(), schedule,
        eval_fn=lambda p: 0.0, log_fn=rows.append,
    )
    assert len(rows) == 4
    losses = [row["train_loss"] for row in result.history]
    assert losses[-1] < losses[0]
    assert all(np.isfinite(l) for l in losses)
    assert all(set(row) == {"epoch", "difficulty", "train_loss", "valid_metric",
                            "improved", "seconds"} for row in result.history)


def test_train_is_deterministic():
    """Identical seeds give bitwise-identical trained parameters."""
    results = []
    for _ in range(2):
        vocab, splits, cfg, params = tiny_training_setup(seed=11)
        tc = TrainConfig(lr=0.01, batch_size=16, max_epochs=2, patience=0,
                         metric="loss", seed=4)
        schedule = make_schedule("stepwise", steps=2, total_epochs=2)
        results.append(
            train(params, cfg, vocab, splits, tc, MaskPolicy(), schedule)
        )
    a, b = results
    assert a.best_metric == b.best_metric
    assert a.best_epoch == b.best_epoch
    for key in a.params:
        assert np.array_equal(a.params[key], b.params[key]), key
