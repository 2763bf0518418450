"""Operation counts for a DeiT-Small layer stack across keep ratios."""

from bspf import DEIT_S, DEIT_T, BspfConfig, flops_vit

for dims, name in ((DEIT_S, "DeiT-S"), (DEIT_T, "DeiT-T")):
    print(f"{name} dense: {flops_vit(dims).total / 1e9:.3f} G")

print(f"\n{'keep':>5} {'symmetric':>10} {'total G':>9} {'vs dense':>9}")
for shared in (False, True):
    for keep in (0.4, 0.5, 0.7, 1.0):
        rep = flops_vit(DEIT_S, BspfConfig(chunk_size=8, keep_ratio=keep, shared_qk=shared))
        print(f"{keep:5.2f} {shared!s:>10} {rep.total / 1e9:9.3f} {rep.ratio_vs_dense:9.4f}")

rep = flops_vit(DEIT_S, BspfConfig(chunk_size=8, keep_ratio=0.5, shared_qk=True))
print("\nstages (G):")
for stage, ops in rep.stages.items():
    print(f"  {stage:22s} {ops / 1e9:8.4f}")
for note in rep.notes:
    print("note:", note)
