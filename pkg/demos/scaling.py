"""
How the runtime grows
=====================

A small version of the benchmark the CLI runs. Projections should be close
to linear in the number of states; a full Bellman sweep with S = A grows
roughly like S^3.
"""

import numpy as np

from phirmdp import DivergenceKind
from phirmdp.cli import records_csv, run_bench

sizes = [1000, 2000, 3000]
for kind in DivergenceKind:
    recs = run_bench("projection", [kind], sizes, trials=10, seed=0, tol=1e-6)
    slope = np.polyfit(np.log(sizes), np.log([r.p50_ms for r in recs]), 1)[0]
    print(f"{kind.value:>9} projection slope {slope:.2f}")

recs = run_bench("bellman", [DivergenceKind.VARIATION], [40, 80], trials=3, seed=0, tol=1e-3)
print(records_csv(recs))
