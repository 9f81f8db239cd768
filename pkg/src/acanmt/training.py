"""Adam, global-norm clipping and the epoch loop with validation checkpoints."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch, Vocab, make_batch
from .decoding import greedy_batch
from .evaluation import corpus_bleu
from .model import ModelConfig, Seq2Seq

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 64
    clip_norm: float = 10.0
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    valid_every: int = 0  # steps between validations; 0 means once per epoch
    sort_window: int = 100  # batches per length-sorted shuffle window
    max_valid: int | None = None  # cap on validation sentences decoded

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")


class NonFiniteLoss(RuntimeError):
    pass


# -- optimiser ----------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.value) for p in params], [np.zeros_like(p.value) for p in params])


def global_norm(grads: Sequence[np.ndarray | None]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads if g is not None))


def clip_gradients(grads: list[np.ndarray | None], max_norm: float) -> list[np.ndarray | None]:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    k = max_norm / norm
    return [None if g is None else g * k for g in grads]


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState, cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``; missing grads count as zero."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params, grads and state disagree in length")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if cfg.lr == 0.0:
            continue
        update = cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.value -= update.astype(p.value.dtype)
    return state


# -- batching ---------------------------------------------------------------------


def make_batches(
    pairs: Sequence[tuple[list[int], list[int]]], batch_size: int, rng: np.random.Generator, window: int = 100
) -> list[Batch]:
    """Shuffle, sort by source length inside windows of ``window`` batches, then shuffle batch order."""
    order = rng.permutation(len(pairs))
    span = batch_size * window
    batches = []
    for start in range(0, len(order), span):
        chunk = order[start:start + span]
        chunk = chunk[np.argsort([len(pairs[k][0]) for k in chunk], kind="stable")]
        for b in range(0, len(chunk), batch_size):
            idx = chunk[b:b + batch_size]
            batches.append(make_batch([pairs[k] for k in idx], idx))
    return [batches[k] for k in rng.permutation(len(batches))]


# -- loop ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: Seq2Seq
    log: list[tuple[int, int, float, float]] = field(default_factory=list)
    best_bleu: float = -1.0
    best_checkpoint: Path | None = None
    best_params: dict[str, np.ndarray] | None = None
    step_losses: list[float] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        return [f"{e}\t{s}\t{loss:.6f}\t{bleu:.4f}" for e, s, loss, bleu in self.log]


def validation_bleu(model: Seq2Seq, pairs: Sequence[tuple[list[int], list[int]]], tgt_vocab: Vocab | None = None, batch_size: int = 64) -> float:
    hyps, refs = [], []
    for k in range(0, len(pairs), batch_size):
        chunk = pairs[k:k + batch_size]
        b = make_batch(chunk)
        for out, (_, ref) in zip(greedy_batch(model, b.src, b.src_lengths), chunk):
            hyps.append(_ids_to_text(out, tgt_vocab))
            refs.append(_ids_to_text(ref, tgt_vocab))
    return corpus_bleu(hyps, refs).score


def _ids_to_text(ids, vocab: Vocab | None) -> str:
    return " ".join(vocab.decode(ids)) if vocab is not None else " ".join(map(str, ids))


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    corpus: Sequence[tuple[list[int], list[int]]],
    valid: Sequence[tuple[list[int], list[int]]],
    out_dir: str | Path | None = None,
    tgt_vocab: Vocab | None = None,
    model: Seq2Seq | None = None,
    on_validate: Callable[[Seq2Seq, int, int], None] | None = None,
) -> TrainResult:
    """Train on id pairs; validate with greedy BLEU and keep the best parameters.

    When ``out_dir`` is given, each validation writes ``model.e{epoch}.s{step}.ckpt``
    and appends a line to ``metrics.tsv`` (``epoch step train_loss valid_bleu``).
    """
    if not corpus:
        raise ValueError("train: empty training corpus")
    if not valid:
        raise ValueError("train: empty validation set")
    rng = np.random.default_rng(train_cfg.seed)
    model = model if model is not None else Seq2Seq(model_cfg, seed=train_cfg.seed)
    params = model.tensors()
    opt = AdamState.for_params(params)
    result = TrainResult(model)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.tsv").write_text("", encoding="utf-8")
    valid = list(valid)[: train_cfg.max_valid] if train_cfg.max_valid else list(valid)

    step = 0
    running: list[float] = []

    def validate(epoch: int) -> None:
        mean_loss = float(np.mean(running)) if running else float("nan")
        bleu = validation_bleu(model, valid, tgt_vocab)
        result.log.append((epoch, step, mean_loss, bleu))
        logger.info("epoch %d step %d loss %.4f valid BLEU %.2f", epoch, step, mean_loss, bleu)
        if out is not None:
            ckpt = out / f"model.e{epoch}.s{step}.ckpt"
            model.save(ckpt)
            with open(out / "metrics.tsv", "a", encoding="utf-8") as fh:
                fh.write(result.log_lines()[-1] + "\n")
        if bleu > result.best_bleu:
            result.best_bleu = bleu
            result.best_params = {k: t.value.copy() for k, t in model.params.items()}
            result.best_checkpoint = ckpt if out is not None else None
        running.clear()
        if on_validate is not None:
            on_validate(model, epoch, step)

    for epoch in range(1, train_cfg.epochs + 1):
        for batch in make_batches(corpus, train_cfg.batch_size, rng, train_cfg.sort_window):
            model.zero_grad()
            loss = model.batch_loss(batch, train=True, rng=rng)
            value = float(loss.value[0])
            if not math.isfinite(value):
                raise NonFiniteLoss(
                    f"non-finite loss {value} at epoch {epoch} step {step + 1}; batch pairs {batch.index.tolist()}"
                )
            ad.backward(loss)
            grads = clip_gradients([p.grad for p in params], train_cfg.clip_norm)
            adam_step(params, grads, opt, train_cfg)
            step += 1
            running.append(value)
            result.step_losses.append(value)
            if train_cfg.valid_every and step % train_cfg.valid_every == 0:
                validate(epoch)
        if not train_cfg.valid_every:
            validate(epoch)
    model.zero_grad()
    return result


def restore_best(result: TrainResult) -> Seq2Seq:
    """Load the best-validation parameters back into the trained model."""
    if result.best_params is not None:
        for k, v in result.best_params.items():
            result.model.params[k].value[...] = v
    return result.model
