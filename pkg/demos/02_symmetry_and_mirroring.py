"""Tied query/key weights make the logit matrix symmetric.

Only blocks on or above the diagonal get scored; each lower block takes the
transposed mask of its mirror. ``audit_mirror`` re-scores the lower blocks
directly and counts disagreements.
"""

import numpy as np

from bspf import BspfConfig, ConvKernel, fixture_tokens, fixture_weights, project, run_bspf

N, D, OMEGA = 32, 8, 8
x = fixture_tokens(1, N, D)
proj = project(x, fixture_weights(1, D, shared_qk=True))

logits = proj.q @ proj.k.T
print("max |L - L^T| =", np.max(np.abs(logits - logits.T)))

for name, kernel in (("uniform", ConvKernel.uniform()), ("lopsided", ConvKernel([0, 5, 0, 0, 1, 0, 0, 0, 0]))):
    cfg = BspfConfig(chunk_size=OMEGA, keep_ratio=0.5, shared_qk=True, kernel=kernel, audit_mirror=True)
    res = run_bspf(proj, cfg)
    print(f"{name:9s} kernel symmetric={kernel.is_symmetric!s:5s} "
          f"mirror disagreements={res.stats.mirror_mask_disagreement}")

# An asymmetric kernel breaks the shortcut: the transposed mask is no longer
# the mask a direct scoring pass would choose.
upper = res.splits[(0, 1)].mask.astype(int)
print("\nmask of block (0, 1):\n", upper)
print("mask of block (1, 0):\n", res.splits[(1, 0)].mask.astype(int))
