"""Adaptive control of attention: a recurrent memory that gates the context.

Per decoding step, with decoder output ``s`` and attention context ``c``::

    r = sigmoid(G_r [s; c])              remove gate
    f = sigmoid(G_f [s; c])              feed gate
    m = r * m_prev + f * tanh(G_i [s; c])
    u = sigmoid(G_u [m; s])              update gate, sized like c
    c_hat = u * c
    v_hat = tanh(G_o [s; c_hat])         replaces the baseline output vector

Every ``G_*`` is an affine map (weights plus bias).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nn import affine, uniform_init


@dataclass
class AcaParams:
    G_r: tuple[Tensor, Tensor]
    G_f: tuple[Tensor, Tensor]
    G_i: tuple[Tensor, Tensor]
    G_u: tuple[Tensor, Tensor]
    G_o: tuple[Tensor, Tensor]

    def __post_init__(self):
        shapes = {self.G_r[0].shape, self.G_f[0].shape, self.G_i[0].shape}
        if len(shapes) != 1:
            raise ShapeError(f"AcaParams: G_r/G_f/G_i disagree: {sorted(shapes)}")
        hidden, sc = self.G_r[0].shape
        ctx = sc - hidden
        if self.G_u[0].shape != (ctx, 2 * hidden):
            raise ShapeError(f"AcaParams: G_u must be ({ctx}, {2 * hidden}), got {self.G_u[0].shape}")
        if self.G_o[0].shape != (hidden, sc):
            raise ShapeError(f"AcaParams: G_o must be ({hidden}, {sc}), got {self.G_o[0].shape}")

    @property
    def hidden(self) -> int:
        return self.G_r[0].shape[0]

    @property
    def context(self) -> int:
        return self.G_r[0].shape[1] - self.hidden

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, context: int, dtype=np.float64):
        def g(name, out, inp):
            return (
                Tensor(uniform_init(rng, (out, inp), dtype), requires_grad=True, name=f"aca.{name}.W"),
                Tensor(np.zeros(out, dtype=dtype), requires_grad=True, name=f"aca.{name}.b"),
            )

        sc = hidden + context
        return cls(
            g("G_r", hidden, sc),
            g("G_f", hidden, sc),
            g("G_i", hidden, sc),
            g("G_u", context, 2 * hidden),
            g("G_o", hidden, sc),
        )

    def tensors(self) -> list[Tensor]:
        return [t for pair in (self.G_r, self.G_f, self.G_i, self.G_u, self.G_o) for t in pair]


def _check(s: Tensor, c: Tensor, p: AcaParams) -> None:
    if s.shape[-1] != p.hidden or c.shape[-1] != p.context or s.shape[:-1] != c.shape[:-1]:
        raise ShapeError(f"aca: s {s.shape} and c {c.shape} do not fit hidden={p.hidden}, context={p.context}")


def gates(s: Tensor, c: Tensor, p: AcaParams) -> tuple[Tensor, Tensor]:
    """Remove and feed gates from ``[s; c]``."""
    _check(s, c, p)
    sc = ad.concat([s, c])
    r = ad.sigmoid(affine(sc, *p.G_r))
    f = ad.sigmoid(affine(sc, *p.G_f))
    return r, f


def memory_update(m_prev: Tensor, r: Tensor, f: Tensor, s: Tensor, c: Tensor, p: AcaParams) -> Tensor:
    _check(s, c, p)
    if not (m_prev.shape == r.shape == f.shape == s.shape):
        raise ShapeError(f"memory_update: m {m_prev.shape}, r {r.shape}, f {f.shape}, s {s.shape} differ")
    candidate = ad.tanh(affine(ad.concat([s, c]), *p.G_i))
    return ad.add(ad.mul(r, m_prev), ad.mul(f, candidate))


def gated_output(m: Tensor, s: Tensor, c: Tensor, p: AcaParams) -> tuple[Tensor, Tensor, Tensor]:
    """Update gate ``u``, gated context ``c_hat`` and output vector ``v_hat``."""
    _check(s, c, p)
    if m.shape != s.shape:
        raise ShapeError(f"gated_output: memory {m.shape} and s {s.shape} differ")
    u = ad.sigmoid(affine(ad.concat([m, s]), *p.G_u))
    c_hat = ad.mul(u, c)
    v_hat = ad.tanh(affine(ad.concat([s, c_hat]), *p.G_o))
    return u, c_hat, v_hat


def aca_step(m_prev: Tensor, s: Tensor, c: Tensor, p: AcaParams) -> tuple[Tensor, Tensor]:
    """Full memory update and gated output; returns ``(m, v_hat)``."""
    r, f = gates(s, c, p)
    m = memory_update(m_prev, r, f, s, c, p)
    _, _, v_hat = gated_output(m, s, c, p)
    return m, v_hat
