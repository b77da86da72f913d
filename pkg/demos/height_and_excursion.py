"""Size-conditioned binary trees seen through their height process.

Samples trees of growing size, rescales the height process by a_n and
compares the law of its maximum with the maximum of sqrt(2) e, where e
is a normalized Brownian excursion.
"""
import numpy as np

from cactuslab.coding import coding_triple, lukasiewicz
from cactuslab.limits import sample_height_limit
from cactuslab.offspring import make_critical_law, scaling_sequences
from cactuslab.stats import ks_statistic
from cactuslab.trees import sample_gw_conditioned_size

law = make_critical_law("binary")
rng = np.random.default_rng(1)

# a small tree and its three codings
t = sample_gw_conditioned_size(law, 7, rng)
ct = coding_triple(t)
print("children per vertex  ", t.counts.tolist())
print("Lukasiewicz path     ", lukasiewicz(t).tolist())
print("height process       ", ct.H.y.tolist())
print("contour (integers)   ", ct.C.y.astype(int).tolist())

R = 400
limit_max = np.array([sample_height_limit(law, 1025, rng).max() for _ in range(R)])
print(f"\nlimit: E max = {limit_max.mean():.3f}  (sqrt(pi/2) * sqrt(2) = {np.sqrt(np.pi):.3f})")
for n in (101, 1001, 10001):
    a_n = scaling_sequences(law, n).a_n
    mx = np.array([sample_gw_conditioned_size(law, n, rng).depth.max() / a_n for _ in range(R)])
    print(f"n = {n:6d}  E max/a_n = {mx.mean():.3f}  KS to limit = {ks_statistic(mx, limit_max):.3f}")
