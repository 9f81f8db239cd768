"""Attention-based encoder-decoder, optionally with adaptive attention control."""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .aca import AcaParams, aca_step
from .attention import attend
from .autodiff import Tensor
from .encoder import BridgeParams, EncoderOutput, EncoderParams, bridge, encode
from .nn import LstmCellParams, LstmState, affine, dropout, embed, lstm_cell_step, uniform_init

PAD, BOS, EOS, UNK = 0, 1, 2, 3

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    embed_dim: int = 512
    hidden: int = 512
    enc_layers: int = 3
    dec_layers: int = 2
    dropout: float = 0.2
    use_aca: bool = True
    max_decode_len: int | None = None  # None: 2 * source length + 10
    # "current" attends with this step's decoder output, "previous" with the last one
    attention_query: str = "current"
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.src_vocab, self.tgt_vocab) <= EOS:
            raise ValueError("vocabularies must hold the reserved tokens")
        if min(self.embed_dim, self.hidden, self.enc_layers, self.dec_layers) < 1:
            raise ValueError("dimensions and layer counts must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.attention_query not in ("current", "previous"):
            raise ValueError(f"attention_query must be 'current' or 'previous', got {self.attention_query!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class DecoderState:
    layers: list[LstmState]
    m: Tensor | None = None

    @property
    def s(self) -> Tensor:
        return self.layers[-1].h

    def select(self, rows) -> "DecoderState":
        """Rows of a batched state as constant tensors (used by beam search)."""
        rows = np.asarray(rows)
        pick = lambda t: Tensor(t.value[rows])  # noqa: E731
        return DecoderState(
            [LstmState(pick(l.h), pick(l.C)) for l in self.layers],
            None if self.m is None else pick(self.m),
        )


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every learnable tensor, in checkpoint order."""
    H, E = cfg.hidden, cfg.embed_dim
    shapes: dict[str, tuple[int, ...]] = {
        "src_embed": (cfg.src_vocab, E),
        "tgt_embed": (cfg.tgt_vocab, E),
    }
    for k in range(cfg.enc_layers):
        inp = E if k == 0 else 2 * H
        for d in ("fwd", "bwd"):
            shapes[f"enc.{k}.{d}.W"] = (4 * H, inp + H)
            shapes[f"enc.{k}.{d}.b"] = (4 * H,)
    shapes.update({"bridge.W_h": (H, H), "bridge.b_h": (H,), "bridge.W_C": (H, H), "bridge.b_C": (H,)})
    for k in range(cfg.dec_layers):
        shapes[f"dec.{k}.W"] = (4 * H, (E if k == 0 else H) + H)
        shapes[f"dec.{k}.b"] = (4 * H,)
    shapes["attn.W_a"] = (H, 2 * H)
    if cfg.use_aca:
        for name, out in (("G_r", H), ("G_f", H), ("G_i", H), ("G_u", 2 * H), ("G_o", H)):
            shapes[f"aca.{name}.W"] = (out, 2 * H if name == "G_u" else 3 * H)
            shapes[f"aca.{name}.b"] = (out,)
    else:
        shapes["out.W_v"] = (H, 3 * H)
        shapes["out.b_v"] = (H,)
    shapes["out.W_o"] = (cfg.tgt_vocab, H)
    shapes["out.b_o"] = (cfg.tgt_vocab,)
    return shapes


def decode_limit(cfg: ModelConfig, src_len: int) -> int:
    return cfg.max_decode_len if cfg.max_decode_len is not None else 2 * src_len + 10


class Seq2Seq:
    """Model parameters plus the forward computations over them.

    ``params`` maps stable names to leaf tensors; the same names are used in
    checkpoints. ACA tensors exist only when ``cfg.use_aca`` is set.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        if params is None:
            params = self._init_params(np.random.default_rng(seed))
        self.params = params
        self._bind()

    # -- parameters ---------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> dict[str, Tensor]:
        params = {}
        for name, shape in param_shapes(self.cfg).items():
            # vectors are biases: zero; matrices uniform
            value = np.zeros(shape, dtype=self.dtype) if len(shape) == 1 else uniform_init(rng, shape, self.dtype)
            params[name] = Tensor(value, requires_grad=True, name=name)
        return params

    def _bind(self) -> None:
        p, cfg = self.params, self.cfg
        self.encoder = EncoderParams(
            p["src_embed"],
            [
                {d: LstmCellParams(p[f"enc.{k}.{d}.W"], p[f"enc.{k}.{d}.b"]) for d in ("fwd", "bwd")}
                for k in range(cfg.enc_layers)
            ],
        )
        self.bridge = BridgeParams(p["bridge.W_h"], p["bridge.b_h"], p["bridge.W_C"], p["bridge.b_C"])
        self.dec_cells = [LstmCellParams(p[f"dec.{k}.W"], p[f"dec.{k}.b"]) for k in range(cfg.dec_layers)]
        self.aca = None
        if cfg.use_aca:
            self.aca = AcaParams(*[(p[f"aca.{g}.W"], p[f"aca.{g}.b"]) for g in ("G_r", "G_f", "G_i", "G_u", "G_o")])

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        ad.zero_grad(self.tensors())

    # -- forward ------------------------------------------------------------

    def encode(self, src_ids, lengths=None, train: bool = False, rng=None) -> EncoderOutput:
        return encode(src_ids, self.encoder, lengths, dropout_rate=self.cfg.dropout, train=train, rng=rng)

    def initial_state(self, enc: EncoderOutput) -> DecoderState:
        layers, m0 = bridge(enc, self.bridge, self.cfg.dec_layers)
        return DecoderState(layers, m0 if self.cfg.use_aca else None)

    def output_vector(self, s: Tensor, c: Tensor, m: Tensor | None) -> tuple[Tensor, Tensor | None]:
        """The vector fed to the vocabulary projection, and the new memory."""
        if self.cfg.use_aca:
            return aca_step(m, s, c, self.aca)[::-1]
        p = self.params
        return ad.tanh(affine(ad.concat([c, s]), p["out.W_v"], p["out.b_v"])), m

    def step_logits(
        self, prev_ids, state: DecoderState, enc: EncoderOutput, train: bool = False, rng=None
    ) -> tuple[Tensor, DecoderState]:
        """Unnormalised vocabulary scores for one batched decoder step."""
        p, cfg = self.params, self.cfg
        ids = np.asarray(prev_ids, dtype=np.int64)
        x = dropout(embed(ids, p["tgt_embed"]), cfg.dropout, train, rng)
        new_layers = []
        for cell, prev in zip(self.dec_cells, state.layers):
            st = lstm_cell_step(x, prev, cell)
            new_layers.append(st)
            x = dropout(st.h, cfg.dropout, train, rng)
        s = x
        query = state.layers[-1].h if cfg.attention_query == "previous" else s
        _, c = attend(query, enc.H, enc.mask, p["attn.W_a"])
        v, m = self.output_vector(s, c, state.m)
        logits = affine(v, p["out.W_o"], p["out.b_o"])
        return logits, DecoderState(new_layers, m)

    def decoder_step(self, prev_ids, state: DecoderState, enc: EncoderOutput, train: bool = False, rng=None):
        """Log-probabilities over the target vocabulary and the next state."""
        logits, new_state = self.step_logits(prev_ids, state, enc, train, rng)
        return ad.log_softmax(logits), new_state

    def nll_loss(self, src, src_lengths, tgt, tgt_lengths=None, train: bool = False, rng=None) -> Tensor:
        """Teacher-forced negative log-likelihood per non-pad target token.

        ``tgt`` rows are ``<s> y_1 ... y_T </s>`` padded with ``<pad>``; every
        position after ``<s>`` up to and including ``</s>`` is predicted.
        """
        tgt = np.asarray(tgt, dtype=np.int64)
        if tgt.ndim == 1:
            tgt = tgt[None, :]
        if tgt.shape[0] == 0:
            raise ValueError("nll_loss: empty batch")
        enc = self.encode(src, src_lengths, train=train, rng=rng)
        state = self.initial_state(enc)
        gold = tgt[:, 1:]
        weights = (gold != PAD).astype(self.dtype)
        n_tokens = weights.sum()
        if n_tokens == 0:
            raise ValueError("nll_loss: no target tokens")
        terms = []
        for t in range(gold.shape[1]):
            if not weights[:, t].any():
                break
            logits, state = self.step_logits(tgt[:, t], state, enc, train, rng)
            terms.append(ad.nll(logits, gold[:, t], weights[:, t]))
        loss = terms[0]
        for term in terms[1:]:
            loss = ad.add(loss, term)
        return ad.scale(loss, 1.0 / n_tokens)

    def batch_loss(self, batch, train: bool = False, rng=None) -> Tensor:
        return self.nll_loss(batch.src, batch.src_lengths, batch.tgt, batch.tgt_lengths, train, rng)

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, self.cfg, self.params)

    @classmethod
    def load(cls, path) -> "Seq2Seq":
        cfg, arrays = load_checkpoint(path)
        dt = np.dtype(cfg.dtype)
        params = {k: Tensor(v.astype(dt), requires_grad=True, name=k) for k, v in arrays.items()}
        expected = param_shapes(cfg)
        if set(params) != set(expected):
            missing, extra = set(expected) - set(params), set(params) - set(expected)
            raise ValueError(f"checkpoint does not match its config: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"checkpoint tensor {name} has shape {params[name].shape}, config implies {shape}")
        return cls(cfg, params=params)

    def copy(self) -> "Seq2Seq":
        return Seq2Seq(
            self.cfg,
            params={k: Tensor(v.value.copy(), requires_grad=True, name=k) for k, v in self.params.items()},
        )


# single-sentence conveniences -------------------------------------------------


def decoder_step(prev_token_id: int, state: DecoderState, enc: EncoderOutput, model: Seq2Seq, train: bool = False, rng=None):
    """One decoder step for a single sentence; returns a (V,) log-prob tensor."""
    if not 0 <= prev_token_id < model.cfg.tgt_vocab:
        raise IndexError(f"token id {prev_token_id} out of range for vocabulary of {model.cfg.tgt_vocab}")
    logp, new_state = model.decoder_step([prev_token_id], state, enc, train, rng)
    return ad.reshape(logp, logp.shape[1:]), new_state


def nll_loss(src_batch, tgt_batch, model: Seq2Seq, train: bool = False, rng=None) -> Tensor:
    """Loss over lists of id sequences; pads and wraps targets itself."""
    from .data import pad_rows

    if not src_batch:
        raise ValueError("nll_loss: empty batch")
    src, src_len = pad_rows(src_batch)
    tgt, tgt_len = pad_rows([[BOS, *t, EOS] for t in tgt_batch])
    return model.nll_loss(src, src_len, tgt, tgt_len, train, rng)


# checkpoint format --------------------------------------------------------------
#
#   u8   version
#   u32  config byte length, then the config as UTF-8 JSON
#   u32  entry count, then per entry:
#        u32 name length, UTF-8 name, u32 rank, rank x i64 dims, float32 values
# all integers little-endian


def save_checkpoint(path, cfg: ModelConfig, params: dict[str, Tensor]) -> None:
    path = Path(path)
    cfg_bytes = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    chunks = [struct.pack("<B", CHECKPOINT_VERSION), struct.pack("<I", len(cfg_bytes)), cfg_bytes]
    chunks.append(struct.pack("<I", len(params)))
    for name, t in params.items():
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<I", t.value.ndim))
        chunks.append(struct.pack(f"<{t.value.ndim}q", *t.value.shape))
        chunks.append(np.ascontiguousarray(t.value, dtype="<f4").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ValueError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (version,) = take("<B")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (n,) = take("<I")
    cfg = ModelConfig.from_dict(json.loads(data[pos:pos + n].decode("utf-8")))
    pos += n
    (count,) = take("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = take("<I")
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = take("<I")
        dims = take(f"<{rank}q")
        size = int(np.prod(dims)) * 4
        if pos + size > len(data):
            raise ValueError(f"{path}: truncated checkpoint")
        arrays[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).reshape(dims).copy()
        pos += size
    return cfg, arrays
