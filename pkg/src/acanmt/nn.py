"""Shared neural building blocks: embedding, affine maps, dropout, LSTM cell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

INIT_SCALE = 0.08


def uniform_init(rng: np.random.Generator, shape, dtype=np.float64, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


@dataclass
class LstmState:
    h: Tensor
    C: Tensor

    def __post_init__(self):
        if self.h.shape != self.C.shape:
            raise ShapeError(f"LstmState: h {self.h.shape} and C {self.C.shape} differ")


@dataclass
class LstmCellParams:
    """Weights of one LSTM cell.

    The four gate matrices are stored stacked in the order f, i, o, C~ so a
    single product computes every pre-activation. ``W`` is
    (4*hidden, input+hidden) and multiplies ``[x; h_prev]``.
    """

    W: Tensor
    b: Tensor

    def __post_init__(self):
        rows = self.W.shape[0]
        if self.W.value.ndim != 2 or rows % 4 or rows == 0:
            raise ShapeError(f"LstmCellParams: W must be (4*hidden, in+hidden), got {self.W.shape}")
        if self.b.shape != (rows,):
            raise ShapeError(f"LstmCellParams: b must be ({rows},), got {self.b.shape}")
        if self.W.shape[1] <= self.hidden:
            raise ShapeError("LstmCellParams: W has no input columns")

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Views of one gate's (W, b); name in f, i, o, C."""
        k = "fioC".index(name)
        H = self.hidden
        return self.W.value[k * H:(k + 1) * H], self.b.value[k * H:(k + 1) * H]

    @classmethod
    def from_gates(cls, W_f, W_i, W_o, W_C, b_f, b_i, b_o, b_C, dtype=np.float64, name: str = "lstm"):
        Ws = [np.atleast_2d(np.asarray(w, dtype=dtype)) for w in (W_f, W_i, W_o, W_C)]
        bs = [np.atleast_1d(np.asarray(b, dtype=dtype)) for b in (b_f, b_i, b_o, b_C)]
        if len({w.shape for w in Ws}) != 1 or len({b.shape for b in bs}) != 1:
            raise ShapeError("LstmCellParams: gate weights or biases disagree in shape")
        return cls(
            Tensor(np.concatenate(Ws), requires_grad=True, name=f"{name}.W"),
            Tensor(np.concatenate(bs), requires_grad=True, name=f"{name}.b"),
        )

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden: int, dtype=np.float64, name: str = "lstm"):
        return cls(
            Tensor(uniform_init(rng, (4 * hidden, input_size + hidden), dtype), requires_grad=True, name=f"{name}.W"),
            Tensor(np.zeros(4 * hidden, dtype=dtype), requires_grad=True, name=f"{name}.b"),
        )

    def tensors(self) -> list[Tensor]:
        return [self.W, self.b]


def _gates_to_state(z: Tensor, prev_C: Tensor, hidden: int) -> LstmState:
    H = hidden
    f = ad.sigmoid(ad.slice_last(z, 0, H))
    i = ad.sigmoid(ad.slice_last(z, H, 2 * H))
    o = ad.sigmoid(ad.slice_last(z, 2 * H, 3 * H))
    cand = ad.tanh(ad.slice_last(z, 3 * H, 4 * H))
    C = ad.add(ad.mul(f, prev_C), ad.mul(i, cand))
    h = ad.mul(o, ad.tanh(C))
    return LstmState(h, C)


def lstm_cell_step(x: Tensor, prev: LstmState, p: LstmCellParams) -> LstmState:
    """One LSTM step on ``[x; h_prev]``; works on vectors or (batch, dim) rows."""
    if x.shape[-1] + prev.h.shape[-1] != p.W.shape[1] or prev.h.shape[-1] != p.hidden:
        raise ShapeError(
            f"lstm_cell_step: input {x.shape} and state {prev.h.shape} do not fit W {p.W.shape}"
        )
    xh = ad.concat([x, prev.h])
    z = ad.add(ad.matmul(xh, ad.transpose(p.W)), p.b)
    return _gates_to_state(z, prev.C, p.hidden)


def lstm_step_projected(x_proj: Tensor, prev: LstmState, W_h_T: Tensor, b: Tensor) -> LstmState:
    """LSTM step when the input half of the product was computed in advance.

    ``x_proj`` is ``x @ W[:, :input].T`` and ``W_h_T`` is ``W[:, input:].T``;
    the sum equals the concatenated form.
    """
    z = ad.add(ad.add(x_proj, ad.matmul(prev.h, W_h_T)), b)
    return _gates_to_state(z, prev.C, W_h_T.shape[0])


def embed(ids, E: Tensor) -> Tensor:
    """Look up rows of ``E``; an empty id sequence gives an empty (0, dim) result."""
    return ad.embedding(E, ids)


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``W x + b`` on vectors, or row-wise on (batch, in) inputs. ``W`` is (out, in)."""
    if W.value.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: input {x.shape} does not fit W {W.shape}")
    y = ad.matmul(x, ad.transpose(W))
    if b is not None:
        if b.shape != (W.shape[0],):
            raise ShapeError(f"affine: bias {b.shape} does not fit W {W.shape}")
        y = ad.add(y, b)
    return y


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return ad.mul(x, Tensor(keep))
