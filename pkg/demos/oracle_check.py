"""
Checking the fast solvers against brute force
=============================================

On two or three states the feasible simplex can be enumerated on a lattice,
which gives an upper bound; scanning the dual gives a lower bound. The fast
interval should sit between the two.
"""

import numpy as np

from phirmdp import DivergenceKind, project, random_projection_instance, random_rmdp, robust_bellman_state
from phirmdp.oracle import grid_slack, oracle_bellman, oracle_dual_scan, oracle_project_grid

h = 1 / 200
for kind in DivergenceKind:
    q = random_projection_instance(3, seed=5, delta=1e-10)
    res = project(kind, q)
    lo = oracle_dual_scan(kind, q)
    hi = oracle_project_grid(kind, q, h)
    print(f"{kind.value:>9}  dual scan {lo:.6f} <= fast {res.value:.6f} <= grid {hi:.6f} (+{grid_slack(kind, q, h):.3f})")

# The same idea one level up: bracket a single robust Bellman update
inst = random_rmdp(2, 2, seed=3, kind="chi2")
v = np.array([4.0, 9.0])
for s in range(2):
    out = robust_bellman_state(inst, v, s, 1e-3)
    lo, hi = oracle_bellman(inst, v, s)
    print(f"state {s}: oracle [{lo:.4f}, {hi:.4f}]  fast {out.value:.4f}  ({out.termination.name})")
