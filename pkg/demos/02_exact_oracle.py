"""Exact probabilities on tiny graphs, and the inequalities they must satisfy.

Run: python3 demos/02_exact_oracle.py
"""
from lrperc.oracle import (TinyGraph, disjoint_occurrence_exact, event_from_predicate, exact_tables,
                           probability, random_graphs, run_suite)

# A path on three vertices with fair coins: 4 configurations
g = TinyGraph(3, [(0, 1), (1, 2)], 0.5)
t = exact_tables(g)
print("P(|K_max| >= 2) =", t.tail_max(2), " P(|K_max| >= 3) =", t.tail_max(3))
print("typical maximum M =", t.typical_max())

# Disjoint occurrence: "some edge is open" twice needs two different open edges
some = event_from_predicate(g, lambda m: m != 0)
print("P(A) =", probability(g, some), " P(A o A) =", disjoint_occurrence_exact(g, [some, some]),
      " P(A)^2 =", probability(g, some) ** 2)

# The full corpus takes under a minute; here a small random sample
rep = run_suite(random_graphs(40, seed=1))
print(rep.summary())
