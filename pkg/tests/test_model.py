import math

import numpy as np
import pytest

from acanmt import autodiff as ad
from acanmt.model import BOS, EOS, ModelConfig, Seq2Seq, decoder_step, load_checkpoint, nll_loss, param_shapes
from reference_impl import baseline_logprobs


def tiny(use_aca=True, seed=0, scale=0.5, **kw):
    cfg = dict(src_vocab=9, tgt_vocab=8, embed_dim=5, hidden=6, enc_layers=2, dec_layers=2,
               dropout=0.0, use_aca=use_aca, dtype="float64")
    cfg.update(kw)
    m = Seq2Seq(ModelConfig(**cfg), seed=seed)
    rng = np.random.default_rng(seed + 100)
    for t in m.tensors():
        t.value[...] = rng.normal(scale=scale, size=t.shape)
    return m


def teacher_forced(m, src, tin):
    enc = m.encode(np.asarray(src)[None])
    st = m.initial_state(enc)
    rows = []
    for y in tin:
        lp, st = m.decoder_step([y], st, enc)
        rows.append(lp.value)
    return np.concatenate(rows)


def test_param_names_depend_on_variant():
    aca = param_shapes(ModelConfig(9, 8, 5, 6, 2, 2, use_aca=True))
    base = param_shapes(ModelConfig(9, 8, 5, 6, 2, 2, use_aca=False))
    assert "aca.G_u.W" in aca and "out.W_v" not in aca
    assert aca["aca.G_u.W"] == (12, 12)
    assert "out.W_v" in base and not any(k.startswith("aca.") for k in base)


def test_zero_output_layer_is_uniform():
    m = tiny()
    m.params["out.W_o"].value[...] = 0
    m.params["out.b_o"].value[...] = 0
    lp = teacher_forced(m, [4, 5, 6], [BOS, 4])
    np.testing.assert_allclose(lp, -math.log(8), rtol=1e-14)
    loss = nll_loss([[4, 5, 6]], [[4, 5]], m)
    assert float(loss.value[0]) == pytest.approx(math.log(8), rel=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_baseline_matches_reference_bitwise(seed):
    m = tiny(use_aca=False, seed=seed)
    P = {k: t.value for k, t in m.params.items()}
    src, tin = [4, 7, 5, 8], [BOS, 4, 6, 6]
    np.testing.assert_array_equal(teacher_forced(m, src, tin), baseline_logprobs(P, src, tin, 6, 2, 2))


def test_memory_changes_every_step():
    m = tiny()
    enc = m.encode(np.array([[4, 5, 6]]))
    st = m.initial_state(enc)
    assert st.m is st.layers[-1].h
    seen = [st.m.value.copy()]
    for y in (BOS, 4, 5):
        _, st = m.decoder_step([y], st, enc)
        assert not any(np.array_equal(st.m.value, old) for old in seen)
        seen.append(st.m.value.copy())


def test_confident_output_has_near_zero_loss():
    m = tiny()
    m.params["out.W_o"].value[...] = 0
    m.params["out.b_o"].value[...] = -40.0
    m.params["out.b_o"].value[EOS] = 40.0
    assert float(nll_loss([[4, 5]], [[]], m).value[0]) < 1e-6


def test_batch_loss_is_token_weighted_sum():
    m = tiny()
    pairs = [([4, 5, 6], [7, 4]), ([8, 4], [5, 5, 6, 7])]
    n = [len(t) + 1 for _, t in pairs]
    single = [float(nll_loss([s], [t], m).value[0]) for s, t in pairs]
    both = float(nll_loss([s for s, _ in pairs], [t for _, t in pairs], m).value[0])
    assert both == pytest.approx((single[0] * n[0] + single[1] * n[1]) / sum(n), rel=1e-12)
    swapped = float(nll_loss([s for s, _ in pairs[::-1]], [t for _, t in pairs[::-1]], m).value[0])
    assert swapped == pytest.approx(both, rel=1e-12)


def test_open_update_gate_reduces_to_baseline():
    base = tiny(use_aca=False)
    aca = tiny(use_aca=True)
    for k, t in base.params.items():
        if k in aca.params:
            aca.params[k].value[...] = t.value
    H = 6
    W_u, b_u = aca.params["aca.G_u.W"], aca.params["aca.G_u.b"]
    W_u.value[...] = 0
    b_u.value[...] = 30.0
    # baseline multiplies [c; s], the gated output [s; c_hat]
    W_v = base.params["out.W_v"].value
    aca.params["aca.G_o.W"].value[...] = np.concatenate([W_v[:, 2 * H:], W_v[:, :2 * H]], axis=1)
    aca.params["aca.G_o.b"].value[...] = base.params["out.b_v"].value
    src, tin = [4, 5, 6, 7], [BOS, 5, 6]
    np.testing.assert_allclose(teacher_forced(aca, src, tin), teacher_forced(base, src, tin), atol=1e-3)


def test_single_sentence_decoder_step():
    m = tiny()
    enc = m.encode(np.array([[4, 5]]))
    lp, _ = decoder_step(BOS, m.initial_state(enc), enc, m)
    assert lp.shape == (8,)
    assert abs(np.exp(lp.value).sum() - 1) < 1e-12
    with pytest.raises(IndexError):
        decoder_step(8, m.initial_state(enc), enc, m)


def test_checkpoint_round_trip(tmp_path):
    m = tiny(dtype="float32")
    path = tmp_path / "m.ckpt"
    m.save(path)
    back = Seq2Seq.load(path)
    assert back.cfg == m.cfg
    assert list(back.params) == list(m.params)
    for k in m.params:
        np.testing.assert_array_equal(back.params[k].value, m.params[k].value)
    src, tin = [4, 5, 6], [BOS, 4]
    np.testing.assert_array_equal(teacher_forced(back, src, tin), teacher_forced(m, src, tin))
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_rejects_damage(tmp_path):
    path = tmp_path / "m.ckpt"
    tiny().save(path)
    data = path.read_bytes()
    (tmp_path / "short.ckpt").write_bytes(data[:-3])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(tmp_path / "short.ckpt")
    (tmp_path / "v9.ckpt").write_bytes(b"\x09" + data[1:])
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(tmp_path / "v9.ckpt")


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(9, 8, dropout=1.0)
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"src_vocab": 9, "tgt_vocab": 8, "colour": 1})


def test_stacked_model_gradients_match_finite_differences():
    # deeper stacks have coordinates with gradients near 1e-9 where central
    # differences are dominated by roundoff; compare those in absolute terms
    m = tiny(seed=4, scale=1.0, hidden=3, embed_dim=3)
    params = m.tensors()

    def f():
        return nll_loss([[4, 5, 6]], [[7, 4]], m)

    loss = f()
    analytic = {id(p): g.copy() for p, g in ad.backward(loss).items()}
    m.zero_grad()
    eps = 1e-5
    worst = 0.0
    for p in params:
        a = analytic[id(p)]
        flat = p.value.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            up = float(f().value[0])
            flat[k] = old - eps
            down = float(f().value[0])
            flat[k] = old
            num = (up - down) / (2 * eps)
            ak = a.reshape(-1)[k]
            err = abs(ak - num) / abs(ak) if abs(ak) > 1e-6 else abs(ak - num)
            worst = max(worst, err)
    assert worst < 1e-4


def test_open_gate_bias_matches_ungated_context():
    m = Seq2Seq(ModelConfig(9, 8, 5, 6, 2, 2, dropout=0.0, dtype="float64"), seed=2)
    ref = m.copy()
    m.params["aca.G_u.b"].value[...] = 10.0
    # u rounds to exactly 1, so c_hat is c itself
    ref.params["aca.G_u.b"].value[...] = 1e4
    src, tin = [4, 5, 6, 7], [BOS, 5, 6, 7]
    np.testing.assert_allclose(teacher_forced(m, src, tin), teacher_forced(ref, src, tin), atol=1e-3)


def test_baseline_has_no_memory():
    m = tiny(use_aca=False)
    enc = m.encode(np.array([[4, 5]]))
    st = m.initial_state(enc)
    for y in (BOS, 4):
        _, st = m.decoder_step([y], st, enc)
        assert st.m is None
