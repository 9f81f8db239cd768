"""Attention-based seq2seq translation with adaptive attention control, in numpy."""

from .data import Vocab, build_vocab, encode_batch, gen_synthetic
from .decoding import beam_search, greedy
from .evaluation import bucketed_bleu, corpus_bleu, duplicate_rate
from .model import ModelConfig, Seq2Seq, decoder_step, nll_loss
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "Seq2Seq",
    "TrainConfig",
    "Vocab",
    "beam_search",
    "bucketed_bleu",
    "build_vocab",
    "corpus_bleu",
    "decoder_step",
    "duplicate_rate",
    "encode_batch",
    "gen_synthetic",
    "greedy",
    "nll_loss",
    "train",
]
