"""
Robust value iteration on a random instance
===========================================

The budget kappa limits how far, in total divergence, the adversary may push
the transition rows of one state. Zero budget recovers the classical MDP.
"""

import numpy as np

from phirmdp import (
    classical_value_iteration,
    evaluate_policy_robust,
    extract_policy,
    random_rmdp,
    robust_value_iteration,
)

inst = random_rmdp(6, 3, seed=11, discount=0.9, kind="kl")
print("budget", round(inst.kappa, 4), "discount", inst.discount)

classic = classical_value_iteration(inst, 1e-4)
print("nominal values", np.round(classic.values, 3))

# more budget, lower values
for kappa in (0.0, 0.1, 0.5, 2.0):
    rep = robust_value_iteration(inst.replace(kappa=kappa), 1e-4)
    print(f"kappa={kappa:<4} iterations={rep.iterations:<4} values={np.round(rep.values, 3)}")

# The residual decays geometrically at the discount rate
rep = robust_value_iteration(inst, 1e-4)
print("first residuals", np.round(rep.history[:6], 4))

# A robust policy may randomize; its robust value matches the optimum closely
pi = extract_policy(inst, rep.values, 1e-4)
print("policy\n", np.round(pi, 3))
ev = evaluate_policy_robust(inst, pi, 1e-4)
print("policy value minus optimum", np.round(ev.values - rep.values, 5))
