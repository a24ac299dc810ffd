"""Walk through the deforming weight on the toy circle tree.

Builds the level-4 space, the covers at n = 2, 3, 4, calibrates the
constants, and prints per-scale diagnostics: the shortest curve, the
sup norm, the p-volume, and where the non-trivial factors sit.

    python demos/toy_weights.py
"""

import time

import numpy as np

from cdimlab.cover import build_cover
from cdimlab.space import build_space, toy_spec
from cdimlab.weights import (BRANCH_NAMES, WeightParams, build_paper_weight, calibrate,
                             verify_admissibility, volume_diagnostics)

P = 1.5

t = time.perf_counter()
space = build_space(toy_spec(4), 4)
print(f"space: {space.n_circles} circles, {space.n_nodes} nodes "
      f"({time.perf_counter() - t:.1f}s)")
covers = {n: build_cover(space, n) for n in (2, 3, 4)}
for n, c in covers.items():
    print(f"  n={n}: {c.size} sets, degree bound {c.degree_bound()}")

params, log = calibrate(space, covers, WeightParams(a=3, delta=0.5, delta_prime=0.5, p=P))
print(f"calibrated: E1={params.E1:.4g} E2={params.E2:.4g} E3={params.E3:.4g} "
      f"(projection constant {log[0]['K7']:.3g})")

print(f"{'n':>2} {'min length':>10} {'max':>9} {'n*max':>7} {'Vol_p':>9}  factor branches")
for n, c in covers.items():
    w = build_paper_weight(space, c, params)
    adm = verify_admissibility(w, params.delta_prime)
    vd = volume_diagnostics(w, P)
    counts = np.bincount(w.factor_branch, minlength=len(BRANCH_NAMES))
    branches = ", ".join(f"{BRANCH_NAMES[b]} {k}" for b, k in enumerate(counts) if k)
    print(f"{n:>2} {adm.min_length:>10.4f} {w.values.max():>9.4g} {n * w.values.max():>7.3f} "
          f"{vd.vol:>9.4g}  {branches}")
