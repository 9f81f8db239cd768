import numpy as np
import pytest

from acanmt.autodiff import Tensor
from acanmt.data import Vocab, gen_synthetic, split_pairs
from acanmt.model import ModelConfig, Seq2Seq
from acanmt.training import AdamState, NonFiniteLoss, TrainConfig, adam_step, clip_gradients, make_batches, train


def small_cfg(**kw):
    base = dict(src_vocab=24, tgt_vocab=24, embed_dim=16, hidden=16, enc_layers=1, dec_layers=1, dropout=0.0, dtype="float64")
    base.update(kw)
    return ModelConfig(**base)


def copy_ids(n, seed=0):
    vocab = Vocab([str(i) for i in range(20)])
    pairs = gen_synthetic("copy", n, 20, (5, 10), seed=seed)
    return [(vocab.encode(s.split()), vocab.encode(t.split())) for s, t in pairs]


def test_clip_examples():
    (g,) = clip_gradients([np.array([3.0, 4.0])], 10)
    np.testing.assert_array_equal(g, [3.0, 4.0])
    (g,) = clip_gradients([np.array([30.0, 40.0])], 10)
    np.testing.assert_allclose(g, [6.0, 8.0], rtol=1e-15)
    (g,) = clip_gradients([np.zeros(3)], 10)
    np.testing.assert_array_equal(g, 0.0)


def test_clip_uses_joint_norm():
    a, b = clip_gradients([np.array([30.0]), np.array([40.0])], 10)
    np.testing.assert_allclose([a[0], b[0]], [6.0, 8.0], rtol=1e-15)


def test_adam_first_step():
    p = Tensor(np.array([0.5, 0.5, 2.0]), requires_grad=True)
    adam_step([p], [np.array([1.0, 1.0, 0.0])], AdamState.for_params([p]), TrainConfig())
    assert p.value[0] == pytest.approx(0.5 - 0.001 / (1 + 1e-8), abs=1e-15)
    assert p.value[0] == p.value[1]
    assert p.value[2] == 2.0


def test_adam_counts_steps_and_checks_shapes():
    p = Tensor(np.zeros(2), requires_grad=True)
    st = AdamState.for_params([p])
    adam_step([p], [np.ones(2)], st, TrainConfig())
    adam_step([p], [np.ones(2)], st, TrainConfig())
    assert st.t == 2
    with pytest.raises(ValueError):
        adam_step([p], [np.ones(3)], st, TrainConfig())


def test_batches_cover_every_pair_once():
    pairs = copy_ids(300)
    batches = make_batches(pairs, 64, np.random.default_rng(0), window=2)
    idx = np.concatenate([b.index for b in batches])
    assert sorted(idx.tolist()) == list(range(300))
    assert max(len(b) for b in batches) == 64


def test_zero_learning_rate_leaves_parameters_unchanged():
    pairs = copy_ids(200)
    cfg = small_cfg()
    model = Seq2Seq(cfg, seed=0)
    before = {k: t.value.copy() for k, t in model.params.items()}
    train(cfg, TrainConfig(lr=0.0, epochs=1, batch_size=32), pairs, pairs[:10], model=model)
    for k, t in model.params.items():
        np.testing.assert_array_equal(t.value, before[k])


def test_training_is_deterministic_and_logs(tmp_path):
    pairs = copy_ids(200)
    runs = [
        train(small_cfg(), TrainConfig(epochs=2, batch_size=32, seed=3), pairs, pairs[:20], out_dir=tmp_path / str(k))
        for k in range(2)
    ]
    assert runs[0].step_losses == runs[1].step_losses
    lines = (tmp_path / "0" / "metrics.tsv").read_text().splitlines()
    assert len(lines) == 2 and lines[0].split("\t")[:2] == ["1", "7"]
    assert sorted(p.name for p in (tmp_path / "0").glob("*.ckpt")) == ["model.e1.s7.ckpt", "model.e2.s14.ckpt"]


def test_loss_descends_on_copy_task():
    pairs = copy_ids(5000)
    res = train(small_cfg(hidden=32, embed_dim=32), TrainConfig(epochs=1, seed=0), pairs, pairs[:50])
    first = res.step_losses[0]
    assert np.mean(res.step_losses[-10:]) < first


def test_non_finite_loss_reports_step_and_batch():
    model = Seq2Seq(small_cfg(), seed=0)
    model.params["out.b_o"].value[0] = np.nan
    with pytest.raises(NonFiniteLoss, match=r"step 1; batch pairs \["):
        train(small_cfg(), TrainConfig(epochs=1), copy_ids(50), copy_ids(5), model=model)


def test_config_and_input_validation():
    with pytest.raises(ValueError):
        TrainConfig(clip_norm=0)
    with pytest.raises(ValueError):
        train(small_cfg(), TrainConfig(), [], copy_ids(5))
