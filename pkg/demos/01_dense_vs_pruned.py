"""Pruned attention next to dense attention on a small random problem.

Run with ``python3 demos/01_dense_vs_pruned.py``.
"""

import numpy as np

from bspf import BspfConfig, bspf_attention, dense_attention, fixture_tokens, fixture_weights

N, D, OMEGA = 64, 16, 8
x = fixture_tokens(0, N, D)
w = fixture_weights(0, D, shared_qk=False)
dense = dense_attention(x, w)

print(f"{N} tokens, width {D}, chunks of {OMEGA}")
print(f"{'keep':>5} {'retained':>9} {'max |diff|':>11} {'rel. error':>11}")
for keep in (1.0, 0.75, 0.5, 0.25):
    out, stats = bspf_attention(x, w, BspfConfig(chunk_size=OMEGA, keep_ratio=keep))
    diff = np.abs(out - dense)
    rel = np.linalg.norm(out - dense) / np.linalg.norm(dense)
    print(f"{keep:5.2f} {stats.retained_fraction:9.4f} {diff.max():11.3e} {rel:11.3e}")

# keep_ratio = 1 keeps every entry, so the result is dense attention up to rounding
