"""Explore a cluster edge by edge and watch the fluctuation martingale.

Run: python3 demos/04_ghost_exploration.py
"""
import numpy as np

from lrperc import Ensemble, GoodWeight, Kernel, TorusBox, build_clusters, sample_configuration
from lrperc.ghost import TorusModel, explore_cluster, fluctuation, two_ghost_audit

kernel = Kernel(1, 0.5).normalized()
box = TorusBox(1, 1024)
beta = 1.2
model = TorusModel.build(kernel, beta, GoodWeight.from_kernel(kernel, box))

z = []
for r in range(400):
    cfg = sample_configuration(box, kernel, beta, seed=5, replica_index=r)
    tr = explore_cluster(cfg, 0, model)
    z.append(tr.Z_T)
    if r == 0:
        f = build_clusters(cfg)
        print(f"|K_0| = {f.cluster_size_of(0)}, {tr.T} edges queried, Z_T = {tr.Z_T:.6f}, "
              f"closed form {fluctuation(f, cfg.edges, model, [0])[0]:.6f}, Q_T = {tr.Q_T:.4f}")
z = np.array(z)
print(f"mean Z_T over {z.size} clusters: {z.mean():.4f} +- {z.std(ddof=1) / np.sqrt(z.size):.4f}")

# Two-arm probabilities against the two-ghost bounds
ens = Ensemble(box, kernel, beta, seed=6, n_replicas=100)
for variant in ("improved", "weighted", "kernel"):
    for a in two_ghost_audit(ens, [16, 64, 256], variant):
        print(f"{variant:9s} n={a.n:5.0f}  lhs {a.lhs:.3e}  rhs {a.rhs:.3e}  margin {a.margin:.3g}")
