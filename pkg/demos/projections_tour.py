"""
Projecting a nominal distribution onto a cost half-space
========================================================

Each divergence answers the same question: how far must the nominal
distribution move before its expected cost drops to the threshold?
"""

import numpy as np

from phirmdp import DivergenceKind, ProjectionQuery, project, random_projection_instance

# A two-state case small enough to check by hand: the only feasible point
# with cost 0.25 on b = (0, 1) that is closest to (1/2, 1/2) is (3/4, 1/4).
query = ProjectionQuery(np.array([0.5, 0.5]), np.array([0.0, 1.0]), 0.25, 1e-9)
for kind in DivergenceKind:
    res = project(kind, query)
    print(f"{kind.value:>9}  value={res.value:.9f}  alpha={res.alpha:.6f}  status={res.status.value}")

# KL and Burg are solved by bisection and return a certified interval;
# variation and chi-square are exact so the interval collapses.
big = random_projection_instance(3000, seed=7, delta=1e-6)
for kind in DivergenceKind:
    res = project(kind, big)
    print(f"{kind.value:>9}  [{res.lower:.8f}, {res.upper:.8f}]  iterations={res.iterations}")

# The two degenerate branches
easy = ProjectionQuery(big.nominal, big.cost, float(big.nominal @ big.cost) + 0.1)
print("threshold above the nominal cost:", project("kl", easy).status.value)
hard = ProjectionQuery(big.nominal, big.cost + 0.5, 0.25)
print("threshold below the cheapest entry:", project("chi2", hard).status.value)
