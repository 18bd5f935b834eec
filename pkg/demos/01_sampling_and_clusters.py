"""Sample long-range percolation on a ring and look at its clusters.

Run: python3 demos/01_sampling_and_clusters.py
"""
import numpy as np

from lrperc import Kernel, TorusBox, build_clusters, sample_configuration, window_stats
from lrperc.clusters import corner_window, size_tail, two_point_profile
from lrperc.kernel import class_probabilities, displacement_classes

# J(x) = |x|^-1.5 on Z, rescaled so that sum_{x != 0} J(x) = 1
kernel = Kernel(d=1, alpha=0.5).normalized()
box = TorusBox(d=1, L=2 ** 14)

# The expected number of open edges is a sum over displacement classes.
classes = displacement_classes(box)
for beta in (0.5, 1.0, 1.4, 2.0):
    expected = float(np.dot(classes.mult, class_probabilities(kernel, beta, classes)))
    cfg = sample_configuration(box, kernel, beta, seed=1)
    f = build_clusters(cfg)
    print(f"beta={beta:4.1f}  open edges {cfg.n_edges:6d} (expected {expected:8.1f})  "
          f"largest cluster {f.largest:6d}  clusters {len(f.sizes):6d}")

# The coupled sampler reuses one uniform per edge, so raising beta only adds edges.
lo = sample_configuration(box, kernel, 1.0, seed=1)
hi = sample_configuration(box, kernel, 1.4, seed=1)
lo_set = set(map(tuple, lo.edges.tolist()))
print("edges at beta=1.0 all open at beta=1.4:", lo_set <= set(map(tuple, hi.edges.tolist())))

# Window observables and the averaged two-point sum
f = build_clusters(hi)
win = corner_window(box, 1024)
s = window_stats(f, win)
print(f"|K_max(window)| = {s.max_in_window}, |K_0| = {s.origin_cluster_size}")
S = two_point_profile(f, 64)
for r in (1, 4, 16, 64):
    print(f"r={r:3d}  average of P(0 <-> x) over |x| <= r: {S[r] / (box.N * (2 * r + 1)):.4f}")
print("vertex-averaged P(|K| >= n):",
      {n: round(float(p), 4) for n, p in zip([1, 10, 100, 1000], size_tail(f, [1, 10, 100, 1000]))})
