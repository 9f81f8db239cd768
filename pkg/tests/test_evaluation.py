import json
from pathlib import Path

import pytest

from acanmt.evaluation import bucketed_bleu, corpus_bleu, duplicate_rate, evaluate, format_keyvalue

FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "bleu_fixture.json").read_text())


def test_spec_style_example():
    r = corpus_bleu(["a b c d e"], ["a b c d f"])
    assert r.precisions == [4 / 5, 3 / 4, 2 / 3, 1 / 2]
    assert r.brevity_penalty == 1.0
    assert r.score == pytest.approx(100 * 0.2 ** 0.25, abs=1e-12)
    assert round(r.score, 2) == 66.87


def test_clipped_unigram_precision():
    r = corpus_bleu(["the the the the the the the"], ["the cat is on the mat"])
    assert r.precisions[0] == 2 / 7
    assert r.precisions[1:] == [0.0, 0.0, 0.0]
    assert r.score == 0.0


def test_identity_scores_100():
    lines = ["a b c d e f", "the cat is on the mat", "x y z w v"]
    assert corpus_bleu(lines, lines).score == 100.0


def test_case_insensitive():
    assert corpus_bleu(["A B C D E"], ["a b c d f"]).score == corpus_bleu(["a b c d e"], ["a b c d f"]).score


@pytest.mark.parametrize("case", FIXTURE["pairs"], ids=lambda c: c["hyp"][:20])
def test_frozen_fixture_pair(case):
    r = corpus_bleu([case["hyp"]], [case["ref"]])
    assert (r.matches, r.totals, r.hyp_len, r.ref_len) == (case["matches"], case["totals"], case["hyp_len"], case["ref_len"])
    assert r.score == pytest.approx(case["score"], abs=1e-9)
    assert r.brevity_penalty == pytest.approx(case["bp"], abs=1e-12)


def test_frozen_fixture_corpus():
    c = FIXTURE["corpus"]
    r = corpus_bleu([p["hyp"] for p in FIXTURE["pairs"]], [p["ref"] for p in FIXTURE["pairs"]])
    assert (r.matches, r.totals) == (c["matches"], c["totals"])
    assert r.score == pytest.approx(c["score"], abs=1e-9)


def test_multiple_references_use_closest_length():
    r = corpus_bleu(["a b c d e f"], [["a b c d e f g h", "a b c d e", "x"]])
    # lengths 8, 5, 1 against 6: 5 is closest
    assert r.ref_len == 5
    assert r.score == 100.0


def test_line_count_mismatch():
    with pytest.raises(ValueError):
        corpus_bleu(["a"], ["a", "b"])


def test_duplicate_rate_examples():
    assert duplicate_rate(["a b c"], 1) == 0.0
    assert duplicate_rate(["a b a b"], 2) == 1 / 3
    assert duplicate_rate(["a a", "b c"], 1) == 0.25
    assert duplicate_rate(["a"], 2) == 0.0


def test_duplicate_rate_properties():
    k = 50
    assert duplicate_rate([" ".join(["z"] * k)], 1) == (k - 1) / k
    half = "p q r s t"
    for n in range(1, 6):
        assert duplicate_rate([half + " " + half], n) > duplicate_rate([half], n)
    with pytest.raises(ValueError):
        duplicate_rate([], 1)
    with pytest.raises(ValueError):
        duplicate_rate(["a"], 0)


def test_buckets():
    short = ("a b c d e", "a b c d e")
    long_ = ("1 2 3 4 5 6 7 8 9 10 11 12 13 14 15", "1 2 3 4 5 6 7 8 9 10 11 12 13 14 16")
    hyps, refs = [short[0], long_[0]], [short[1], long_[1]]
    out = dict(bucketed_bleu(hyps, refs))
    assert set(out) == {0, 10}
    assert out[0] == corpus_bleu(hyps, refs).score
    assert out[10] == corpus_bleu([long_[0]], [long_[1]]).score
    assert bucketed_bleu([short[0]], [short[1]], thresholds=[10]) == []
    with pytest.raises(ValueError):
        bucketed_bleu(hyps, refs, thresholds=[10, 0])


def test_evaluate_keys():
    m = evaluate(["a b c d e"], ["a b c d f"])
    assert {"bleu", "p1", "p4", "bp", "dup1", "dup4", "bleu_len0"} <= set(m)
    assert "bleu=66.8740\n" in format_keyvalue(m)
