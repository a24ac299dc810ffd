"""Tree of cylinders for the amalgam of two free groups over a cyclic
group sent to a commutator and to the square of a commutator.

    python demos/cylinders.py [depth] [cap]
"""

import sys

from cdimlab.gog import (compute_cylinders, confdim_formula, expand_bass_serre,
                         figure3_example, tree_of_cylinders)

depth = int(sys.argv[1]) if len(sys.argv) > 1 else 2
cap = int(sys.argv[2]) if len(sys.argv) > 2 else 3

gog = figure3_example()
t = expand_bass_serre(gog, "A", depth, cap)
toc = tree_of_cylinders(t, compute_cylinders(t))
print(t.edge_list_text())
print(toc.edge_list_text())
print("orbit classes:", toc.orbit_classes())
for i in range(len(toc.V1)):
    print(f"cylinder {i}: neighbours {dict(toc.neighbour_types(i))}")
print("checks:", toc.checks())
print("conformal dimension of the boundary:", confdim_formula(gog))
