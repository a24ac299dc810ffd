"""The simplified volume recursion for a few exponents and copy constants.

    python demos/recursion_table.py
"""

from cdimlab.weights import eventually_nonincreasing, toy_recursion

for p in (1.2, 1.5, 2.0):
    for C in (1.0, 2.0, 4.0):
        r = toy_recursion(p, 8, C=C)
        seq = " ".join(f"{x:7.3f}" for x in r.a)
        flag = "decays" if eventually_nonincreasing(r.a) else "grows "
        print(f"p={p:<4} C={C:<4} {flag} C'={r.C_prime:6.3f} | {seq}")
