"""
Repetition on the repeat-trap task
==================================

Sources stutter each target token one to three times ("4 4 9 9 9 2" -> "4 9 2"),
so a model that loses track of what it already emitted shows it as
duplicate n-grams. Compares duplicate rates of the two models for one seed.
"""

# %%
from acanmt.data import gen_synthetic

for src, tgt in gen_synthetic("repeat-trap", 3, 30, (8, 16), seed=0):
    print(src, "->", tgt)

# %%
from acanmt.experiments import run_task

base = run_task("repeat-trap", False, seed=0, n_pairs=10_000, vocab_size=30, len_range=(8, 16), epochs=15, beam=10)
aca = run_task("repeat-trap", True, seed=0, n_pairs=10_000, vocab_size=30, len_range=(8, 16), epochs=15, beam=10)

# %%
print(f"{'':10}{'BLEU':>8}" + "".join(f"{'dup' + str(n):>9}" for n in (1, 2, 3, 4)))
for name, r in (("baseline", base), ("aca", aca)):
    print(f"{name:10}{r.test_bleu:8.2f}" + "".join(f"{r.dup[n]:9.4f}" for n in (1, 2, 3, 4)))
