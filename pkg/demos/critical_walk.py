"""The critically biased walk and its harmonic coordinates.

On an invariant environment the walk moves to the parent with weight
lam = m and to each child with weight 1.  The harmonic coordinate S
turns it into a martingale whose increments are Gaussian on the
sqrt(n) scale with variance sigma_nu^2 per unit time.
"""
import numpy as np

from cactuslab.harmonic import martingale_residual, phi2_average, truncated_weights
from cactuslab.offspring import make_supercritical_law, sigma_nu_sq
from cactuslab.stats import AD_CRIT_1PCT, normality_test
from cactuslab.trees import sample_environment
from cactuslab.walks import green_formula, return_prob_formula, run_walk

nu = make_supercritical_law(pmf=[0, 0.5, 0.5])
env = sample_environment(nu, 800, 900, "invariant", rng=np.random.default_rng(5))
w = truncated_weights(env, 16)
lam = nu.mean
print(f"m = {lam}, sigma_nu^2 = {sigma_nu_sq(nu):.4f}")

# the one-step martingale identity holds exactly at unclipped vertices
xs = env.materialize(env.spine[3], 3)
print("max |martingale residual| near the point:", max(abs(martingale_residual(w, x)) for x in xs))

# at lam = 2 the walk is transient and the point has explicit return quantities
print(f"lam = 2: return probability {return_prob_formula(env, env.o, 2.0):.4f}, "
      f"G(o, o) = {green_formula(env, env.o, env.o, 2.0):.4f}")

# ergodic estimate of sigma_nu^2 from exact conditional variances along one long walk
wk = run_walk(env, env.o, lam, 50000, np.random.default_rng(6))
print(f"ergodic average of phi^2: {phi2_average(w, wk):.4f}")

# rescaled increments of S between times n/2 and n
n, inc = 4000, []
for r in range(600):
    wk = run_walk(env, env.o, lam, n, np.random.default_rng([7, r]))
    if not wk.touched_top:
        inc.append((w.S(wk.vertices[-1]) - w.S(wk.vertices[n // 2])) / np.sqrt(n))
inc = np.array(inc)
A2 = normality_test(inc, 0.0, 0.5 * sigma_nu_sq(nu))
print(f"{len(inc)} increments: var = {inc.var():.4f} vs {0.5 * sigma_nu_sq(nu):.4f}, "
      f"A^2 = {A2:.3f} (1% point {AD_CRIT_1PCT})")
