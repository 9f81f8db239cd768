"""Stacked bidirectional LSTM encoder and the encoder-to-decoder bridge."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nn import LstmCellParams, LstmState, affine, dropout, embed, lstm_step_projected


@dataclass
class EncoderOutput:
    """Concatenated forward/backward states for every source position.

    ``H`` is (batch, n, 2*hidden); ``mask`` is True on real tokens. Positions
    past a row's length hold copies of the last real state and must be masked.
    ``final_states`` maps ``(direction, layer)`` to that direction's last state.
    """

    H: Tensor
    mask: np.ndarray
    lengths: np.ndarray
    final_states: dict[tuple[str, int], LstmState] = field(default_factory=dict)

    @property
    def src_len(self) -> np.ndarray:
        return self.lengths

    def top_forward(self) -> LstmState:
        top = max(layer for d, layer in self.final_states if d == "fwd")
        return self.final_states[("fwd", top)]


@dataclass
class EncoderParams:
    embedding: Tensor
    layers: list[dict[str, LstmCellParams]]

    def tensors(self) -> list[Tensor]:
        out = [self.embedding]
        for layer in self.layers:
            out += layer["fwd"].tensors() + layer["bwd"].tensors()
        return out


def reverse_index(lengths: np.ndarray, width: int) -> np.ndarray:
    """Per-row index reversing the first ``length`` positions and fixing the rest."""
    t = np.arange(width)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def _run_direction(X: Tensor, lengths: np.ndarray, cell: LstmCellParams) -> tuple[list[Tensor], LstmState]:
    """Left-to-right pass; rows stop updating once past their length."""
    B, n, D = X.shape
    H = cell.hidden
    if D != cell.input_size:
        raise ShapeError(f"encoder: input width {D} does not match cell input {cell.input_size}")
    W_x_T = ad.transpose(ad.slice_cols(cell.W, 0, D))
    W_h_T = ad.transpose(ad.slice_cols(cell.W, D, D + H))
    proj = ad.matmul(X, W_x_T)
    zeros = Tensor(np.zeros((B, H), dtype=X.dtype))
    state = LstmState(zeros, zeros)
    outs = []
    min_len = int(lengths.min())
    for t in range(n):
        new = lstm_step_projected(ad.select_time(proj, t), state, W_h_T, cell.b)
        if t >= min_len:
            live = np.broadcast_to((lengths > t)[:, None], (B, H)).astype(X.dtype)
            keep, hold = Tensor(live), Tensor(1.0 - live)
            new = LstmState(
                ad.add(ad.mul(new.h, keep), ad.mul(state.h, hold)),
                ad.add(ad.mul(new.C, keep), ad.mul(state.C, hold)),
            )
        state = new
        outs.append(state.h)
    return outs, state


def encode(
    src_ids,
    params: EncoderParams,
    lengths=None,
    *,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> EncoderOutput:
    """Encode a batch of source id rows (or one id sequence) into ``EncoderOutput``."""
    ids = np.asarray(src_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.size == 0 or ids.shape[1] == 0:
        raise ValueError("encode: empty source sequence")
    B, n = ids.shape
    lengths = np.full(B, n) if lengths is None else np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (B,) or lengths.min() < 1 or lengths.max() > n:
        raise ValueError(f"encode: lengths {lengths.tolist()} invalid for width {n}")
    mask = np.arange(n)[None, :] < lengths[:, None]

    X = dropout(embed(ids, params.embedding), dropout_rate, train, rng)
    rev = reverse_index(lengths, n)
    finals: dict[tuple[str, int], LstmState] = {}
    for k, layer in enumerate(params.layers):
        f_outs, f_final = _run_direction(X, lengths, layer["fwd"])
        b_outs, b_final = _run_direction(ad.gather_time(X, rev), lengths, layer["bwd"])
        fwd = ad.stack_time(f_outs)
        bwd = ad.gather_time(ad.stack_time(b_outs), rev)
        finals[("fwd", k)] = f_final
        finals[("bwd", k)] = b_final
        X = dropout(ad.concat([fwd, bwd]), dropout_rate, train, rng)
    return EncoderOutput(X, mask, lengths, finals)


@dataclass
class BridgeParams:
    W_h: Tensor
    b_h: Tensor
    W_C: Tensor
    b_C: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.W_h, self.b_h, self.W_C, self.b_C]


def bridge(enc: EncoderOutput, p: BridgeParams, dec_layers: int) -> tuple[list[LstmState], Tensor]:
    """Map the top forward final state to every decoder layer's initial state.

    Returns ``(states, m0)`` where ``m0`` is the very tensor used as the
    initial top-layer hidden state.
    """
    top = enc.top_forward()
    h0 = ad.tanh(affine(top.h, p.W_h, p.b_h))
    C0 = ad.tanh(affine(top.C, p.W_C, p.b_C))
    states = [LstmState(h0, C0) for _ in range(dec_layers)]
    return states, h0
