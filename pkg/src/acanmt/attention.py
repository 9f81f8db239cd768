"""Global attention with bilinear scores."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

MASK_PENALTY = -1e9


def mask_bias(mask: np.ndarray, dtype=np.float64) -> np.ndarray:
    return np.where(mask, 0.0, MASK_PENALTY).astype(dtype)


def attend(s: Tensor, H: Tensor, mask, W_a: Tensor) -> tuple[Tensor, Tensor]:
    """Attention weights and context for decoder query ``s``.

    Batched shapes: ``s`` (B, hidden), ``H`` (B, n, 2*hidden), ``mask`` (B, n)
    boolean, ``W_a`` (hidden, 2*hidden). Unbatched inputs (``s`` a vector,
    ``H`` an (n, D) matrix) are also accepted and return unbatched results.
    Scores are ``s^T W_a h_i``; masked positions get a large negative score.
    """
    single = s.value.ndim == 1
    if single:
        s = ad.reshape(s, (1,) + s.shape)
        H = ad.reshape(H, (1,) + H.shape)
        mask = np.asarray(mask, dtype=bool)[None, :]
    mask = np.asarray(mask, dtype=bool)
    if W_a.value.ndim != 2 or s.shape[-1] != W_a.shape[0] or H.shape[-1] != W_a.shape[1]:
        raise ShapeError(f"attend: query {s.shape}, keys {H.shape} do not fit W_a {W_a.shape}")
    if mask.shape != H.shape[:2]:
        raise ShapeError(f"attend: mask {mask.shape} does not match keys {H.shape}")
    if not mask.any(axis=1).all():
        raise ValueError("attend: every source position is masked")
    q = ad.matmul(s, W_a)
    e = ad.add(ad.bilinear_scores(H, q), Tensor(mask_bias(mask, H.dtype)))
    alpha = ad.softmax(e)
    c = ad.weighted_sum(alpha, H)
    if single:
        alpha = ad.reshape(alpha, alpha.shape[1:])
        c = ad.reshape(c, c.shape[1:])
    return alpha, c
