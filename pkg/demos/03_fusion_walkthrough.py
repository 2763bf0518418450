"""One block through scoring, top-k, matching and fusion."""

import numpy as np

from bspf import ConvKernel, best_match, fixture_tokens, fixture_weights, fuse_block, project, smooth_scores, split_topk
from bspf.attention import block_logits, make_partition

np.set_printoptions(precision=3, suppress=True, linewidth=110)

D, OMEGA = 4, 4
proj = project(fixture_tokens(2, 2 * OMEGA, D), fixture_weights(2, D, shared_qk=False))
part = make_partition(2 * OMEGA, OMEGA)
blk = block_logits(proj, part, 0, 1)
print("logits of block (0, 1):\n", blk.logits)

scores = smooth_scores(blk, ConvKernel.uniform())
split = split_topk(blk, scores, 0.5)
print("\nsmoothed scores:\n", scores)
print("\nkeep mask (8 of 16):\n", split.mask.astype(int))

matches = best_match(proj.q[part.span(0)], "cosine")
for i, (b, rho) in enumerate(zip(matches.best, matches.rho)):
    print(f"query {i}: best match {b}, similarity {rho:+.3f}")

for source in ("matched_row", "self_row"):
    fused, events = fuse_block(split, matches, source=source)
    print(f"\n{source}: {events} entries changed, max shift {np.max(np.abs(fused - split.reserved)):.3e}")

# matched_row reads pruned logits from the same row as the positive guard;
# the two supports are disjoint, so that source never changes anything.
