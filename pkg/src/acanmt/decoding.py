"""Greedy and beam-search inference."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from .autodiff import Tensor, no_grad
from .encoder import EncoderOutput
from .model import BOS, EOS, DecoderState, Seq2Seq, decode_limit

# (previous token ids (k,), state with k rows) -> (log-probs (k, V), next state)
StepFn = Callable[[np.ndarray, Any], "tuple[np.ndarray, Any]"]


@dataclass
class BeamHypothesis:
    tokens: tuple[int, ...]  # generated ids, excluding <s>
    score: float  # cumulative log-likelihood
    finished: bool
    row: int  # row of this hypothesis in the batched decoder state

    @property
    def normalized(self) -> float:
        return self.score / max(1, len(self.tokens))


def _tile(enc: EncoderOutput, k: int) -> EncoderOutput:
    if enc.H.shape[0] == k:
        return enc
    return EncoderOutput(
        Tensor(np.repeat(enc.H.value, k, axis=0)),
        np.repeat(enc.mask, k, axis=0),
        np.repeat(enc.lengths, k, axis=0),
        enc.final_states,
    )


def model_stepper(model: Seq2Seq, src_ids) -> tuple[StepFn, DecoderState, int]:
    """Step function, initial state and default length limit for one sentence."""
    src_ids = np.asarray(src_ids, dtype=np.int64)
    with no_grad():
        enc = model.encode(src_ids[None, :])
        state = model.initial_state(enc)

    def step(prev: np.ndarray, st: DecoderState):
        with no_grad():
            logp, new = model.decoder_step(prev, st, _tile(enc, len(prev)))
        return logp.value.astype(np.float64), new

    return step, state, decode_limit(model.cfg, len(src_ids))


def greedy_steps(step: StepFn, state, max_len: int, eos: int = EOS, bos: int = BOS) -> list[int]:
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    out: list[int] = []
    prev = np.array([bos])
    for _ in range(max_len):
        logp, state = step(prev, state)
        tok = int(np.argmax(logp[0]))  # first maximum: lowest id wins ties
        out.append(tok)
        if tok == eos:
            break
        prev = np.array([tok])
    return out


def beam_steps(
    step: StepFn, state, beam: int, max_len: int, eos: int = EOS, bos: int = BOS
) -> tuple[list[int], list[BeamHypothesis]]:
    """Beam search over a generic step function.

    Returns the best token sequence (``</s>`` included when generated) and the
    final candidate pool sorted best first. Candidates are ranked within a
    step by cumulative log-likelihood and, at the end, by cumulative
    log-likelihood divided by length; ties go to the smaller id sequence.

    Each step keeps up to ``beam`` unfinished hypotheses and sets aside up to
    ``beam`` newly finished ones. Search stops at ``max_len``, or once at
    least ``beam`` hypotheses have finished and the step's best candidate
    was itself finished. Unfinished hypotheses alive at ``max_len`` stay in
    the pool.
    """
    if beam < 1:
        raise ValueError(f"beam must be at least 1, got {beam}")
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    active = [BeamHypothesis((), 0.0, False, 0)]
    finished: list[BeamHypothesis] = []
    prev = np.array([bos])
    for t in range(max_len):
        logp, state = step(prev, state)
        V = logp.shape[1]
        cands = [
            (h.score + float(logp[k, v]), h.tokens + (v,), k)
            for k, h in enumerate(active)
            for v in range(V)
        ]
        cands.sort(key=lambda c: (-c[0], c[1]))
        survivors: list[BeamHypothesis] = []
        added = 0
        for score, tokens, row in cands:
            if tokens[-1] == eos:
                finished.append(BeamHypothesis(tokens, score, True, row))
                added += 1
                if added >= beam:
                    break
            else:
                survivors.append(BeamHypothesis(tokens, score, False, row))
                if len(survivors) >= beam:
                    break
        if t == max_len - 1:
            # out of length: unfinished survivors compete as they are
            active = survivors
            break
        if not survivors or (len(finished) >= beam and cands[0][1][-1] == eos):
            active = []
            break
        rows = [h.row for h in survivors]
        state = state.select(rows)
        active = [replace(h, row=k) for k, h in enumerate(survivors)]
        prev = np.array([h.tokens[-1] for h in active])
    pool = finished + active
    pool.sort(key=lambda h: (-h.normalized, h.tokens))
    return list(pool[0].tokens), pool


def strip_eos(tokens: list[int], eos: int = EOS) -> list[int]:
    return tokens[:-1] if tokens and tokens[-1] == eos else tokens


def greedy(src_ids, model: Seq2Seq, max_len: int | None = None) -> list[int]:
    """Argmax decoding of one sentence; the result excludes ``</s>``."""
    step, state, limit = model_stepper(model, src_ids)
    return strip_eos(greedy_steps(step, state, limit if max_len is None else max_len))


def beam_search(src_ids, model: Seq2Seq, beam: int = 10, max_len: int | None = None) -> list[int]:
    """Length-normalised beam search for one sentence; the result excludes ``</s>``."""
    step, state, limit = model_stepper(model, src_ids)
    best, _ = beam_steps(step, state, beam, limit if max_len is None else max_len)
    return strip_eos(best)


def greedy_batch(model: Seq2Seq, src: np.ndarray, lengths: np.ndarray, max_len: int | None = None) -> list[list[int]]:
    """Greedy decoding of a padded batch at once; outputs exclude ``</s>``."""
    src = np.asarray(src, dtype=np.int64)
    B = src.shape[0]
    lengths = np.asarray(lengths)
    limits = [max_len if max_len is not None else decode_limit(model.cfg, int(n)) for n in lengths]
    out = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    with no_grad():
        enc = model.encode(src, lengths)
        state = model.initial_state(enc)
        prev = np.full(B, BOS)
        for t in range(max(limits)):
            logp, state = model.decoder_step(prev, state, enc)
            tok = np.argmax(logp.value, axis=1)
            for b in np.flatnonzero(~done):
                if tok[b] == EOS:
                    done[b] = True
                else:
                    out[b].append(int(tok[b]))
                    done[b] = t + 1 >= limits[b]
            if done.all():
                break
            prev = tok
    return out
