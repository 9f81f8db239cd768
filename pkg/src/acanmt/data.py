"""Corpora, vocabularies, padded batches and synthetic parallel tasks."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import BOS, EOS, PAD, UNK

RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
TASKS = ("copy", "reverse", "repeat-trap")


class Vocab:
    """Token <-> id map with the four reserved ids first."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary tokens must be distinct")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int], strip_special: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD, BOS, EOS):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        _atomic_write(path, "".join(t + "\n" for t in self.itos))

    @classmethod
    def load(cls, path) -> "Vocab":
        tokens = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError(f"{path}: vocabulary file must start with {' '.join(RESERVED)}")
        return cls(tokens[4:])


def build_vocab(lines: Iterable[str], max_size: int) -> Vocab:
    """Keep the ``max_size - 4`` most frequent whitespace tokens.

    Ties go to the token seen first.
    """
    if max_size <= len(RESERVED):
        raise ValueError(f"max_size must exceed {len(RESERVED)}, got {max_size}")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for line in lines:
        for tok in line.split():
            counts[tok] += 1
            first.setdefault(tok, len(first))
    if not counts:
        raise ValueError("build_vocab: empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocab([t for t in ranked if t not in RESERVED][: max_size - len(RESERVED)])


@dataclass
class Batch:
    src: np.ndarray  # (B, max_src_len)
    src_lengths: np.ndarray
    tgt: np.ndarray  # (B, max_tgt_len), rows are <s> ... </s> then <pad>
    tgt_lengths: np.ndarray  # including <s> and </s>
    index: np.ndarray  # positions of the pairs in the input list

    def __len__(self) -> int:
        return self.src.shape[0]


def pad_rows(rows: Sequence[Sequence[int]], pad: int = PAD) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    out = np.full((len(rows), max(1, int(lengths.max(initial=0)))), pad, dtype=np.int64)
    for k, r in enumerate(rows):
        out[k, : len(r)] = r
    return out, lengths


def make_batch(pairs: Sequence[tuple[Sequence[int], Sequence[int]]], index=None) -> Batch:
    src, src_len = pad_rows([s for s, _ in pairs])
    tgt, tgt_len = pad_rows([[BOS, *t, EOS] for _, t in pairs])
    index = np.arange(len(pairs)) if index is None else np.asarray(index)
    return Batch(src, src_len, tgt, tgt_len, index)


def encode_batch(
    pairs: Sequence[tuple[str, str]],
    vocab_src: Vocab,
    vocab_tgt: Vocab,
    batch_size: int = 64,
) -> list[Batch]:
    """Consecutive batches of at most ``batch_size`` pairs, in input order."""
    if not pairs:
        raise ValueError("encode_batch: no pairs")
    ids = [(vocab_src.encode(s.split()), vocab_tgt.encode(t.split())) for s, t in pairs]
    return [
        make_batch(ids[k:k + batch_size], np.arange(k, min(k + batch_size, len(ids))))
        for k in range(0, len(ids), batch_size)
    ]


# -- synthetic tasks ------------------------------------------------------------


def _stutter(target: list[str], rng: np.random.Generator, lo: int, hi: int) -> list[str]:
    return [t for t in target for _ in range(int(rng.integers(lo, hi + 1)))]


def gen_synthetic(
    task: str,
    count: int,
    vocab_size: int,
    len_range: tuple[int, int],
    seed: int = 0,
) -> list[tuple[str, str]]:
    """Generate ``count`` (source, target) line pairs over tokens ``"0"..str(vocab_size-1)``.

    copy: target equals source. reverse: target is the reversed source.
    repeat-trap: every target token is stuttered 1-3 times in the source
    (adjacent target tokens always differ), so the target is the source
    with runs collapsed. ``len_range`` bounds the source length inclusively.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    lo, hi = len_range
    if vocab_size < 5 or not 1 <= lo <= hi:
        raise ValueError(f"invalid synthetic settings: vocab_size={vocab_size}, len_range={len_range}")
    rng = np.random.default_rng(seed)
    vocab = [str(i) for i in range(vocab_size)]
    pairs = []
    for _ in range(count):
        n = int(rng.integers(lo, hi + 1))
        if task == "repeat-trap":
            src: list[str] = []
            tgt: list[str] = []
            while len(src) < n:
                tok = vocab[int(rng.integers(vocab_size))]
                while tgt and tok == tgt[-1]:
                    tok = vocab[int(rng.integers(vocab_size))]
                run = min(int(rng.integers(1, 4)), n - len(src))
                tgt.append(tok)
                src.extend([tok] * run)
        else:
            src = [vocab[int(i)] for i in rng.integers(vocab_size, size=n)]
            tgt = src if task == "copy" else src[::-1]
        pairs.append((" ".join(src), " ".join(tgt)))
    return pairs


def collapse_runs(tokens: Sequence[str]) -> list[str]:
    return [t for k, t in enumerate(tokens) if k == 0 or t != tokens[k - 1]]


def split_of(source_line: str) -> str:
    """train / valid / test assignment (90/5/5) from a SHA-256 of the source line."""
    bucket = int.from_bytes(hashlib.sha256(source_line.encode("utf-8")).digest()[:8], "little") % 100
    if bucket < 90:
        return "train"
    return "valid" if bucket < 95 else "test"


def split_pairs(pairs: Iterable[tuple[str, str]]) -> dict[str, list[tuple[str, str]]]:
    out: dict[str, list[tuple[str, str]]] = {"train": [], "valid": [], "test": []}
    for pair in pairs:
        out[split_of(pair[0])].append(pair)
    return out


def synthetic_splits(
    task: str,
    n_train: int,
    vocab_size: int,
    len_range: tuple[int, int],
    seed: int = 0,
) -> dict[str, list[tuple[str, str]]]:
    """Generate pairs until the train split holds ``n_train``; valid/test get what fell their way."""
    splits: dict[str, list[tuple[str, str]]] = {"train": [], "valid": [], "test": []}
    chunk_seed = seed
    while len(splits["train"]) < n_train:
        need = n_train - len(splits["train"])
        for name, part in split_pairs(
            gen_synthetic(task, max(16, need + need // 8), vocab_size, len_range, seed=chunk_seed)
        ).items():
            splits[name].extend(part)
        chunk_seed += 1_000_003
    splits["train"] = splits["train"][:n_train]
    return splits


# -- files ------------------------------------------------------------------------


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def write_lines(path, lines: Iterable[str]) -> None:
    _atomic_write(path, "".join(line + "\n" for line in lines))


def read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def write_corpus(directory, splits: dict[str, list[tuple[str, str]]]) -> None:
    """Write ``{split}.src`` / ``{split}.tgt`` line-aligned files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, pairs in splits.items():
        write_lines(directory / f"{name}.src", (s for s, _ in pairs))
        write_lines(directory / f"{name}.tgt", (t for _, t in pairs))


def read_parallel(src_path, tgt_path) -> list[tuple[str, str]]:
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    if len(src) != len(tgt):
        raise ValueError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    return list(zip(src, tgt))
