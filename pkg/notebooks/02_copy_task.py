"""
Learning to copy
================

Trains the baseline and the ACA model on the copy task and compares greedy
token accuracy on held-out pairs. Takes a couple of minutes on one CPU.
"""

# %%
from acanmt.experiments import run_task

reports = {}
for use_aca in (False, True):
    r = run_task("copy", use_aca, seed=0, n_pairs=5000, vocab_size=20, len_range=(5, 10),
                 epochs=10, count_train_only=True)
    reports[use_aca] = r
    print(r.summary())

# %%
# both should be well above 95% token accuracy
for use_aca, r in reports.items():
    print("aca" if use_aca else "baseline", f"{r.token_accuracy:.2%}", f"valid BLEU {r.valid_bleu:.1f}")
