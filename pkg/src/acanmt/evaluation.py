"""Corpus BLEU, per-sentence duplicate n-gram rates and length-bucketed BLEU."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

DEFAULT_THRESHOLDS = (0, 10, 20, 30, 40, 50, 60)


@dataclass
class BleuReport:
    score: float  # percent
    precisions: list[float]  # modified n-gram precisions, n = 1..4
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_refs(ref) -> list[str]:
    return [ref] if isinstance(ref, str) else list(ref)


def corpus_bleu(hyps: Sequence[str], refs: Sequence, max_n: int = 4) -> BleuReport:
    """Case-insensitive corpus BLEU over whitespace tokens.

    ``refs[i]`` is one reference string or a list of them. Clipped n-gram
    matches and totals are summed over the corpus; the reference length for
    the brevity penalty is, per sentence, the reference length closest to
    the hypothesis length (shorter wins ties).
    """
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        h = hyp.lower().split()
        rs = [r.lower().split() for r in _as_refs(ref)]
        hyp_len += len(h)
        ref_len += min((abs(len(r) - len(h)), len(r)) for r in rs)[1]
        for n in range(1, max_n + 1):
            counts = _ngrams(h, n)
            best: Counter = Counter()
            for r in rs:
                best |= _ngrams(r, n)
            matches[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            totals[n - 1] += max(0, len(h) - n + 1)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if hyp_len == 0:
        bp = 0.0
    else:
        bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuReport(score, precisions, bp, hyp_len, ref_len, matches, totals)


def duplicate_fraction(tokens: Sequence[str], n: int) -> float:
    """``(total - distinct) / total`` over the sentence's n-grams; 0 if it has none."""
    grams = [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]
    if not grams:
        return 0.0
    return (len(grams) - len(set(grams))) / len(grams)


def duplicate_rate(sentences: Sequence[str], n: int) -> float:
    """Mean per-sentence duplicate n-gram fraction."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not sentences:
        raise ValueError("duplicate_rate: empty corpus")
    return sum(duplicate_fraction(s.split(), n) for s in sentences) / len(sentences)


def bucketed_bleu(
    hyps: Sequence[str], refs: Sequence, thresholds: Sequence[int] = DEFAULT_THRESHOLDS
) -> list[tuple[int, float]]:
    """BLEU on pairs whose (first) reference has at least ``L`` tokens, per threshold.

    Thresholds with no qualifying pairs are left out.
    """
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be ascending")
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")
    lengths = [len(_as_refs(r)[0].split()) for r in refs]
    out = []
    for L in thresholds:
        keep = [k for k, n in enumerate(lengths) if n >= L]
        if keep:
            out.append((L, corpus_bleu([hyps[k] for k in keep], [refs[k] for k in keep]).score))
    return out


def evaluate(hyps: Sequence[str], refs: Sequence, thresholds: Sequence[int] = DEFAULT_THRESHOLDS) -> dict[str, float]:
    """Every metric as a flat ``key -> value`` map (bleu, p1..p4, bp, dup1..dup4, bleu_lenL)."""
    rep = corpus_bleu(hyps, refs)
    out: dict[str, float] = {"bleu": rep.score}
    for n, p in enumerate(rep.precisions, 1):
        out[f"p{n}"] = p
    out["bp"] = rep.brevity_penalty
    out["hyp_len"] = rep.hyp_len
    out["ref_len"] = rep.ref_len
    if hyps:
        for n in range(1, 5):
            out[f"dup{n}"] = duplicate_rate(hyps, n)
    for L, score in bucketed_bleu(hyps, refs, thresholds):
        out[f"bleu_len{L}"] = score
    return out


def format_keyvalue(metrics: dict[str, float]) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in metrics.items())


def format_text(metrics: dict[str, float]) -> str:
    width = max(len(k) for k in metrics)
    return "".join(f"{k:<{width}}  {_fmt(v)}\n" for k, v in metrics.items())


def _fmt(v: float) -> str:
    return str(v) if isinstance(v, int) else f"{v:.4f}"
