import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwrules.classifier import (
    Batch,
    LabeledSet,
    ModelConfig,
    ModelState,
    TrainConfig,
    TrainLog,
    backward,
    cosine_lr,
    forward,
    load_checkpoint,
    masked_bce_loss,
    mcc,
    predict,
    predict_proba,
    save_checkpoint,
    sigmoid,
    train,
)
from pwrules.classifier.checkpoint import decode, encode
from pwrules.errors import DivergenceError, FormatError, ShapeError

from support import gradient_check, toy_batch, toy_state


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(embed_dim=10, n_heads=4)
    with pytest.raises(ValueError):
        ModelConfig(n_fragments=0)
    assert ModelConfig(embed_dim=8, ff_dim=None).ff == 32


# -- forward ---------------------------------------------------------------


def test_zero_head_gives_half():
    s = toy_state(0, d=8, f=5)
    s.params["head.w2"][:] = 0.0
    s.params["head.b2"][:] = 0.0
    p = predict(s, np.random.default_rng(0).normal(size=(3, 8)))
    assert np.allclose(p, 0.5)


def test_identical_words_permutation():
    s = toy_state(1, d=8, f=3)
    rng = np.random.default_rng(1)
    a, other = rng.normal(size=8), rng.normal(size=8)
    x1 = np.stack([a, other, a])
    x2 = np.stack([a, a, other])
    assert np.allclose(predict(s, x1), predict(s, x2), atol=1e-12)


def test_batch_consistency():
    s = toy_state(2, d=8, f=4)
    rng = np.random.default_rng(2)
    w1, w2 = rng.normal(size=(3, 8)), rng.normal(size=(2, 8))
    both, _ = forward(s, Batch.from_words([w1, w2], 3))
    one, _ = forward(s, Batch.from_words([w1], 3))
    two, _ = forward(s, Batch.from_words([w2], 3))
    assert np.allclose(both, np.vstack([one, two]), atol=1e-9)


def test_predict_is_singleton_forward():
    s = toy_state(3, d=8, f=4)
    x = np.random.default_rng(3).normal(size=(2, 8))
    p = predict(s, x)
    assert np.array_equal(p, predict_proba(s, Batch.from_words([x], 3))[0])
    assert np.all((p > 0) & (p < 1))
    assert np.array_equal(p, predict(s, x))


def test_shape_errors():
    s = toy_state(4, d=8, f=2)
    with pytest.raises(ShapeError):
        predict(s, np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        forward(s, Batch(np.zeros((1, 2, 8)), np.ones((1, 3))))


def test_sigmoid_strictly_inside():
    p = sigmoid(np.array([-800.0, 0.0, 800.0]))
    assert p[0] > 0 and p[2] < 1 and p[1] == 0.5


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_padding_invariance(seed, extra):
    s = toy_state(seed % 50, d=4, f=3)
    rng = np.random.default_rng(seed)
    words = rng.normal(size=(int(rng.integers(1, 4)), 4))
    base, _ = forward(s, Batch.from_words([words], None))
    n = len(words)
    x = np.concatenate([words, rng.normal(size=(extra, 4)) * 100.0])[None]
    mask = np.concatenate([np.ones(n), np.zeros(extra)])[None]
    padded, _ = forward(s, Batch(x, mask))
    assert np.max(np.abs(base - padded)) <= 1e-9


# -- loss ------------------------------------------------------------------


def test_loss_examples():
    loss, _ = masked_bce_loss(np.array([[0.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    loss, _ = masked_bce_loss(np.array([[20.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert loss == pytest.approx(2.06e-9, rel=1e-2)
    z = np.array([[0.3, -1.2, 5.0, 7.0]])
    y = np.array([[1.0, 0.0, 0.0, 1.0]])
    obs = np.array([[1.0, 1.0, 0.0, 0.0]])
    a, _ = masked_bce_loss(z[:, :1], y[:, :1], obs[:, :1])
    b, _ = masked_bce_loss(z[:, 1:2], y[:, 1:2], obs[:, 1:2])
    loss, _ = masked_bce_loss(z, y, obs)
    assert loss == pytest.approx((a + b) / 2, abs=1e-15)


def test_loss_no_overflow():
    loss, grad = masked_bce_loss(np.array([[1000.0, -1000.0]]), np.array([[0.0, 1.0]]), np.ones((1, 2)))
    assert loss == pytest.approx(1000.0) and np.all(np.isfinite(grad))


def test_all_na_batch_warns():
    with pytest.warns(RuntimeWarning):
        loss, grad = masked_bce_loss(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)))
    assert loss == 0.0 and not grad.any()


@given(
    st.lists(st.tuples(st.floats(-30, 30), st.sampled_from([0.0, 1.0])), min_size=1, max_size=10),
    st.lists(st.tuples(st.floats(-30, 30), st.sampled_from([0.0, 1.0])), max_size=10),
)
def test_na_entries_do_not_change_loss(observed, na):
    z = np.array([[v for v, _ in observed + na]])
    y = np.array([[l for _, l in observed + na]])
    mask = np.array([[1.0] * len(observed) + [0.0] * len(na)])
    full, _ = masked_bce_loss(z, y, mask)
    only, _ = masked_bce_loss(z[:, : len(observed)], y[:, : len(observed)], mask[:, : len(observed)])
    assert full == pytest.approx(only, rel=1e-12, abs=1e-15)


# -- gradients -------------------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
def test_gradient_check(seed):
    s = toy_state(seed)
    assert gradient_check(s, toy_batch(s, seed)) <= 1e-4


def test_masked_label_column_gets_zero_grad():
    s = toy_state(11, d=4, f=3)
    b = toy_batch(s, 11)
    b.observed[:, 1] = 0.0
    logits, _ = forward(s, b)
    _, d = masked_bce_loss(logits, b.y, b.observed)
    assert np.all(d[:, 1] == 0.0)


def test_padded_word_gets_zero_grad():
    s = toy_state(12, d=4, f=2)
    b = toy_batch(s, 12)
    logits, cache = forward(s, b)
    _, d = masked_bce_loss(logits, b.y, b.observed)
    _, dx = backward(s, cache, d)
    assert np.all(dx[1, -1] == 0.0)
    assert np.any(dx[0, -1] != 0.0)


# -- schedule / metrics ----------------------------------------------------


def test_cosine_endpoints():
    cfg = TrainConfig()
    assert cosine_lr(0, cfg) == 1e-3
    assert cosine_lr(cfg.t_max, cfg) == pytest.approx(0.0, abs=1e-18)
    cfg2 = TrainConfig(min_lr=1e-5)
    assert cosine_lr(cfg2.t_max, cfg2) == pytest.approx(1e-5)
    assert cosine_lr(2 * cfg.t_max, cfg) == pytest.approx(1e-3)


def test_mcc_values():
    assert mcc([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0
    assert mcc([0, 1, 0, 1], [1, 0, 1, 0]) == -1.0
    assert mcc([1, 1, 1], [1, 0, 1]) == 0.0


# -- training --------------------------------------------------------------


def one_protein_set(dim=4):
    emb = [np.random.default_rng(0).normal(size=(2, dim))]
    return LabeledSet(["p"], emb, np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))


def test_capacity_sanity():
    s = toy_state(20, d=4, f=2)
    log = TrainLog()
    train(s, one_protein_set(), None, TrainConfig(max_epochs=10, batch_size=1, lr=1e-2), log)
    losses = [row[2] for row in log.rows]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def _small_task(seed=0, n=24, dim=4):
    rng = np.random.default_rng(seed)
    signal = rng.normal(size=dim)
    embs, y = [], []
    for i in range(n):
        k = int(rng.integers(1, 4))
        w = rng.normal(size=(k, dim))
        pos = i % 2 == 0
        if pos:
            w[0] = signal + 0.1 * rng.normal(size=dim)
        embs.append(w)
        y.append([1.0 if pos else 0.0, float(rng.random() < 0.5)])
    y = np.array(y)
    obs = np.ones_like(y)
    obs[::3, 1] = 0.0
    return LabeledSet([f"p{i}" for i in range(n)], embs, y, obs)


def test_training_deterministic_and_selects_best():
    data = _small_task()
    val = _small_task(seed=1)
    cfg = TrainConfig(max_epochs=15, batch_size=4, lr=5e-3, patience=5)
    s0 = ModelState.initial(ModelConfig(embed_dim=4, n_layers=1, n_heads=2, n_fragments=2, max_words=3, dropout=0.1, seed=3))
    log1, log2 = TrainLog(), TrainLog()
    a = train(s0, data, {"novel_protein": val}, cfg, log1)
    b = train(s0, data, {"novel_protein": val}, cfg, log2)
    assert encode(a) == encode(b)
    assert log1.to_tsv() == log2.to_tsv()
    header = log1.to_tsv().splitlines()[0].split("\t")
    assert header == ["epoch", "lr", "train_loss", "val_mcc_novel_protein"]
    best = max(r[3] for r in log1.rows)
    best_epoch = next(r[0] for r in log1.rows if r[3] == best)
    assert a.epoch == best_epoch + 1


def test_early_stopping():
    data = _small_task()
    s0 = toy_state(5, d=4, f=2)
    log = TrainLog()
    train(s0, data, {"v": data}, TrainConfig(max_epochs=500, patience=3, lr=0.0, min_lr=0.0, batch_size=8), log)
    assert len(log.rows) == 4


def test_divergence_error():
    data = _small_task()
    s0 = toy_state(6, d=4, f=2)
    s0.params["head.b2"][:] = np.nan
    with pytest.raises(DivergenceError):
        train(s0, data, None, TrainConfig(max_epochs=2, batch_size=8))


def test_empty_train_set():
    with pytest.raises(ValueError):
        train(toy_state(0, d=4, f=2), LabeledSet([], [], np.zeros((0, 2)), np.zeros((0, 2))))


# -- checkpoints -----------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    s = toy_state(7)
    s.adam_m = {k: np.ones_like(v) for k, v in s.params.items()}
    s.adam_v = {k: np.full_like(v, 2.0) for k, v in s.params.items()}
    s.epoch, s.step = 4, 17
    # the file stores float32; round to that first so equality is exact
    s.params = {k: v.astype(np.float32).astype(np.float64) for k, v in s.params.items()}
    path = tmp_path / "m.pwck"
    save_checkpoint(path, s, {"fragments": ["frag_1"]})
    back, meta = load_checkpoint(path)
    assert meta["fragments"] == ["frag_1"]
    assert back.config == s.config and (back.epoch, back.step) == (4, 17)
    for k in s.params:
        assert np.array_equal(back.params[k], s.params[k])
        assert np.array_equal(back.adam_v[k], s.adam_v[k])
    save_checkpoint(tmp_path / "m2.pwck", back, meta)
    assert path.read_bytes() == (tmp_path / "m2.pwck").read_bytes()


def test_checkpoint_format_errors():
    data = encode(toy_state(8, d=4, f=2))
    with pytest.raises(FormatError):
        decode(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        decode(data[:-5])
