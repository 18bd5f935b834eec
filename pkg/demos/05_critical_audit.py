"""Locate a pseudo-critical beta and compare fitted exponents with the proven bounds.

Run: python3 demos/05_critical_audit.py   (about a minute)
"""
import math

import numpy as np

from lrperc import Ensemble, Kernel, TorusBox, beta_c_search, bound_audit, exponent_bounds, exponent_fit
from lrperc.estimators import fit_window, tail_estimate, two_point_avg_estimate

for alpha in (0.5, 1.5):
    bc = beta_c_search(Kernel(1, alpha), [2 ** 10, 2 ** 11, 2 ** 12, 2 ** 13], n_replicas=100,
                       expand_to=64.0)
    print(f"alpha={alpha}: crossings " + ", ".join(f"{c.beta:.3f}" for c in bc.crossings)
          + f"  drift/doubling {bc.drift_per_doubling:+.3f}  flags {bc.flags}")

bc = beta_c_search(Kernel(1, 0.5), [2 ** 10, 2 ** 12, 2 ** 13], n_replicas=200)
L = 2 ** 13
ens = Ensemble(TorusBox(1, L), Kernel(1, 0.5).normalized(), bc.beta_hat, 1, 200, store=False)
ns = np.unique(np.round(np.logspace(0, math.log10(L), 60)).astype(int))
tail = tail_estimate(ens, ns)
tfit = exponent_fit(ns, [r.estimate for r in tail], fit_window(L), stderr=[r.stderr for r in tail])
rs = np.arange(1, int(fit_window(L)[1]) + 1)
tp = two_point_avg_estimate(ens, rs)
pfit = exponent_fit(rs, [r.estimate for r in tp], fit_window(L), stderr=[r.stderr for r in tp])

b = exponent_bounds(1, 0.5)
print(f"tail exponent {tfit.exponent:.3f} (bound {b.theta}, prediction {b.inverse_delta_predicted:.3f})")
print(f"two-point decay {pfit.exponent:.3f} (bound {b.two_point_decay:.3f})")
print("audit passed:", bound_audit(1, 0.5, tfit, pfit).passed)
