"""
The evaluation metrics by hand
==============================
"""

# %%
from acanmt.evaluation import bucketed_bleu, corpus_bleu, duplicate_rate, evaluate, format_text

# four of five unigrams match, three of four bigrams, ... -> 100 * 0.2 ** 0.25
r = corpus_bleu(["a b c d e"], ["a b c d f"])
print(r.precisions, round(r.score, 2))

# %%
# clipping: "the" appears twice in the reference, so only 2 of 7 count
r = corpus_bleu(["the the the the the the the"], ["the cat is on the mat"])
print(r.precisions[0], r.score)

# %%
# duplicate rate: 1 - distinct/total n-grams per sentence, averaged
print(duplicate_rate(["a b a b"], 2), duplicate_rate(["a a", "b c"], 1))

# %%
hyps = ["1 2 3 4 5", " ".join(map(str, range(15)))]
refs = ["1 2 3 4 5", " ".join(map(str, range(14))) + " 99"]
print(bucketed_bleu(hyps, refs, thresholds=[0, 10]))
print(format_text(evaluate(hyps, refs, thresholds=[0, 10])))
