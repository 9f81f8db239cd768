"""
Gradients and attention on a toy model
======================================

Builds a tiny ACA model, checks its gradients against central differences,
and looks at where one decoder step attends.
"""

# %%
import numpy as np

from acanmt import autodiff as ad
from acanmt.model import BOS, ModelConfig, Seq2Seq, nll_loss
from acanmt.attention import attend

cfg = ModelConfig(src_vocab=8, tgt_vocab=8, embed_dim=4, hidden=4, enc_layers=1, dec_layers=1,
                  dropout=0.0, use_aca=True, dtype="float64")
model = Seq2Seq(cfg, seed=0)
print({name: t.shape for name, t in model.params.items()})

# %%
# analytic vs numeric gradients over every parameter
rng = np.random.default_rng(0)
for t in model.tensors():
    t.value[...] = rng.uniform(-1, 1, size=t.shape)

err = ad.finite_difference_check(lambda: nll_loss([[4, 5, 6]], [[6, 5, 4]], model), model.tensors())
print("max relative error", err)

# %%
# one decoder step: attention weights over the three source positions
enc = model.encode(np.array([[4, 5, 6]]))
state = model.initial_state(enc)
_, state = model.decoder_step([BOS], state, enc)
alpha, c = attend(state.s, enc.H, enc.mask, model.params["attn.W_a"])
print("alpha", alpha.value.round(3), "sum", alpha.value.sum())

# %%
# the ACA memory moves every step; the baseline has none
print("memory after one step", state.m.value.round(3))
