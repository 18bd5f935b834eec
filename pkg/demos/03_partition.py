"""Cut a tree into connected pieces that each hold a fixed share of a vertex set.

Run: python3 demos/03_partition.py
"""
import networkx as nx

from lrperc import partition_k, split_two, verify_partition

tree = list(nx.random_labeled_tree(40, seed=3).edges())
A = list(range(0, 40, 2))            # 20 marked vertices

e1, e2 = split_two(tree, A)
count = lambda piece: len({v for e in piece for v in e} & set(A))
print(f"two pieces: {len(e1)} + {len(e2)} edges, marked counts {count(e1)} and {count(e2)} of {len(A)}")

for k in (1, 2):
    res = partition_k(tree, A, k)
    print(f"k={k}: {res.m} pieces with counts {sorted(res.counts)}; "
          f"window [{len(A) / 3 ** k:.2f}, {len(A) / 3 ** (k - 1):.2f}); "
          f"valid: {bool(verify_partition(tree, A, k, res))}")
