import numpy as np
import pytest

from acanmt.decoding import beam_search, beam_steps, greedy, greedy_batch, greedy_steps, model_stepper
from acanmt.model import BOS, EOS, ModelConfig, Seq2Seq
from reference_impl import enumerate_best


def toy_model(seed, V=5, scale=1.0, use_aca=None):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(src_vocab=6, tgt_vocab=V, embed_dim=4, hidden=4, enc_layers=1, dec_layers=1,
                      dropout=0.0, dtype="float64", use_aca=bool(seed % 2) if use_aca is None else use_aca)
    m = Seq2Seq(cfg, seed=seed)
    for t in m.tensors():
        t.value[...] = rng.normal(scale=scale, size=t.shape)
    return m, rng.integers(0, 6, size=int(rng.integers(1, 5)))


class Rows:
    """Stateless stand-in for a decoder state."""

    def select(self, rows):
        return self


def markov(table):
    """Step function whose log-probs depend only on the previous token."""
    logp = np.log(np.asarray(table, dtype=np.float64))
    return lambda prev, st: (logp[prev], st)


def test_forced_eos_gives_empty_output():
    m, src = toy_model(0)
    m.params["out.W_o"].value[...] = 0
    m.params["out.b_o"].value[...] = 0
    m.params["out.b_o"].value[EOS] = 20
    assert greedy(src, m) == []
    assert beam_search(src, m, beam=3) == []


def test_greedy_follows_a_fixed_cycle_to_max_len():
    # 3 -> 4 -> 3 -> ... never emits </s>
    table = np.full((5, 5), 0.01)
    table[BOS, 3] = table[3, 4] = table[4, 3] = 0.96
    assert greedy_steps(markov(table), Rows(), 5) == [3, 4, 3, 4, 3]


def test_beam_two_recovers_what_greedy_misses():
    # first step: 3 (0.6) beats 4 (0.4); after 3 everything is flat, after 4 </s> is certain
    table = np.full((5, 5), 1e-9)
    table[BOS, 3], table[BOS, 4] = 0.6, 0.4
    table[3] = 0.2
    table[4, EOS] = 1.0
    step = markov(table)
    assert greedy_steps(step, Rows(), 2) == [3, 0]
    best, _ = beam_steps(step, Rows(), 2, 2)
    assert best == [4, EOS]
    assert best == enumerate_best(step, Rows(), 5, 2)[0]


def test_argument_checks():
    with pytest.raises(ValueError):
        beam_steps(markov(np.ones((5, 5)) / 5), Rows(), 0, 3)
    with pytest.raises(ValueError):
        greedy_steps(markov(np.ones((5, 5)) / 5), Rows(), 0)


@pytest.mark.parametrize("seed", range(50))
def test_beam_one_equals_greedy(seed):
    m, src = toy_model(seed, V=8)
    assert beam_search(src, m, beam=1, max_len=6) == greedy(src, m, max_len=6)


@pytest.mark.parametrize("seed", range(40))
def test_full_beam_is_exact_for_two_steps(seed):
    m, src = toy_model(seed)
    step, state, _ = model_stepper(m, src)
    assert beam_steps(step, state, 5, 2)[0] == enumerate_best(step, state, 5, 2)[0]


def test_wider_beams_never_score_lower():
    for seed in range(100):
        m, src = toy_model(500 + seed)
        step, state, _ = model_stepper(m, src)
        L = 1 + seed % 4
        scores = [beam_steps(step, state, b, L)[1][0].normalized for b in range(1, 6)]
        assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:])), (seed, scores)
        assert scores[-1] <= enumerate_best(step, state, 5, L)[1] + 1e-12


def test_batched_greedy_matches_single_sentences():
    m, _ = toy_model(3, V=9)
    srcs = [[1, 2, 3], [4], [5, 0, 1, 2, 3]]
    src = np.zeros((3, 5), dtype=np.int64)
    for k, s in enumerate(srcs):
        src[k, :len(s)] = s
    assert greedy_batch(m, src, [3, 1, 5]) == [greedy(s, m) for s in srcs]
