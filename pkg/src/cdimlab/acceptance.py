"""Desk-scale acceptance checks.

Each check returns a :class:`CheckResult`; :func:`run_all` runs every check
and is what ``python -m cdimlab report --acceptance`` and the test suite call.
The toy-model checks share one level-4 space, its covers and the calibrated
weights through :func:`toy_context`.
"""

from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field

import numpy as np

from .cover import build_cover
from .gog import compute_cylinders, expand_bass_serre, figure3_example, tree_of_cylinders
from .metric import metric_estimates_report, porosity_estimate
from .modulus import EndpointSeparation, ExplicitList, brute_force_modulus, solve_modulus
from .space import build_space, toy_spec
from .weights import (WeightParams, build_paper_weight, calibrate, eventually_nonincreasing,
                      lemma34_check, toy_recursion, verify_admissibility, verify_max_bound,
                      volume_diagnostics)

TOY_NS = (2, 3, 4)
TOY_P = 1.5


@dataclass
class CheckResult:
    key: str
    name: str
    passed: bool
    detail: str
    seconds: float
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.key} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        t = time.perf_counter()
        res = fn(*args, **kw)
        if isinstance(res, CheckResult):
            res.seconds = time.perf_counter() - t
        return res
    return wrapper


def random_instances(seed: int = 0, count: int = 50, max_sets: int = 12, max_curves: int = 40,
                     ps=(1.2, 2.0, 3.0)):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        N = int(rng.integers(2, max_sets + 1))
        m = int(rng.integers(1, max_curves + 1))
        curves = [sorted(rng.choice(N, int(rng.integers(1, N + 1)), replace=False).tolist())
                  for _ in range(m)]
        out.append((N, curves, ps[i % len(ps)]))
    return out


@_timed
def check_oracle_equivalence(seed: int = 0) -> CheckResult:
    worst = 0.0
    t = time.perf_counter()
    for N, curves, p in random_instances(seed):
        a = solve_modulus(N, ExplicitList(curves), p, tol=1e-6).value
        b = brute_force_modulus(curves, N, p)
        worst = max(worst, abs(a - b) / b)
    dt = time.perf_counter() - t
    ok = worst <= 1e-4 and dt < 10.0
    return CheckResult("1", "solver vs dense oracle", ok,
                       f"max relative error {worst:.2e} over 50 instances in {dt:.1f}s", 0.0,
                       {"worst": worst, "seconds": dt})


@_timed
def check_analytic_modulus() -> CheckResult:
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        for k in range(1, 33):
            v = solve_modulus(k, ExplicitList([list(range(k))]), p, tol=1e-8).value
            worst = max(worst, abs(v - k ** (1 - p)))
    worst_union = 0.0
    for p in (1.5, 2.0, 3.0):
        for sizes in ((5, 5, 5), (1, 4, 9), (2, 3, 7, 11)):
            curves, start = [], 0
            for s in sizes:
                curves.append(list(range(start, start + s)))
                start += s
            v = solve_modulus(start, ExplicitList(curves), p, tol=1e-8).value
            worst_union = max(worst_union, abs(v - sum(s ** (1 - p) for s in sizes)))
    ok = worst <= 1e-6 and worst_union <= 1e-6
    return CheckResult("2", "single-curve and disjoint-union modulus", ok,
                       f"single-curve error {worst:.1e}, union error {worst_union:.1e}", 0.0,
                       {"single": worst, "union": worst_union})


@_timed
def check_recursion(C: float = 2.0) -> CheckResult:
    r = toy_recursion(1.5, 6, C=C)
    holds = all(r.a[n] <= r.C_prime / n ** 0.5 * r.a[:n].max() * (1 + 1e-12) for n in range(2, 7))
    ok = r.a[0] == 1.0 and np.isfinite(r.C_prime) and holds and eventually_nonincreasing(r.a)
    return CheckResult("3", "simplified volume recursion", ok,
                       f"a = {np.array2string(r.a, precision=4)}, C' = {r.C_prime:.4f}", 0.0,
                       {"a": r.a.tolist(), "C_prime": r.C_prime})


@functools.lru_cache(maxsize=2)
def toy_context(level: int = 4, ns=TOY_NS, p: float = TOY_P, delta: float = 0.5):
    """Space, covers, calibrated parameters and weights shared by the
    toy-model checks."""
    t = time.perf_counter()
    space = build_space(toy_spec(level), level)
    covers = {n: build_cover(space, n) for n in ns}
    params, log = calibrate(space, covers, WeightParams(a=space.a, delta=delta,
                                                       delta_prime=delta, p=p))
    weights = {n: build_paper_weight(space, covers[n], params) for n in ns}
    return {"space": space, "covers": covers, "params": params, "calibration": log,
            "weights": weights, "seconds": time.perf_counter() - t}


@_timed
def check_weight_pillars() -> list:
    t = time.perf_counter()
    ctx = toy_context()
    params, weights = ctx["params"], ctx["weights"]
    adm = {n: verify_admissibility(w, params.delta_prime) for n, w in weights.items()}
    mb = verify_max_bound([weights[n] for n in TOY_NS])
    vols = [volume_diagnostics(weights[n], TOY_P).vol for n in TOY_NS]
    dt = time.perf_counter() - t
    ok_i = all(a.admissible for a in adm.values())
    ratio = max(vols) / min(vols)
    rising_tail = vols[-1] > vols[-2]
    ok_iii = ratio <= 10.0 and not rising_tail
    in_time = dt < 300.0
    res = [
        CheckResult("4(i)", "paper weights admissible", ok_i and in_time,
                    "min lengths " + ", ".join(f"n={n}: {a.min_length:.4f}" for n, a in adm.items())
                    + f"; E1={params.E1:.4g}, E2={params.E2:.4g}, E3={params.E3:.4g}", 0.0,
                    {"min_length": {n: a.min_length for n, a in adm.items()}}),
        CheckResult("4(ii)", "n * max weight bounded", mb.bounded and in_time,
                    "n*||rho_n|| = " + ", ".join(f"{x:.4f}" for x in mb.n_sup)
                    + f", max/min {mb.ratio:.3f}", 0.0, {"n_sup": mb.n_sup}),
        CheckResult("4(iii)", "p-volume bounded", ok_iii and in_time,
                    "Vol = " + ", ".join(f"{v:.4g}" for v in vols)
                    + f", max/min {ratio:.2f}, last step {'rising' if rising_tail else 'not rising'}",
                    0.0, {"vol": vols, "ratio": ratio}),
    ]
    for r in res:
        r.seconds = dt
    return res


@_timed
def check_modulus_trend(tol: float = 0.02, batch: int = 2000) -> CheckResult:
    ctx = toy_context()
    fam = EndpointSeparation(ctx["params"].delta_prime)
    rows = []
    for n in TOY_NS:
        sol = solve_modulus(ctx["covers"][n], fam, TOY_P, tol=tol, batch=batch, max_iters=300)
        vol = volume_diagnostics(ctx["weights"][n], TOY_P).vol
        rows.append({"n": n, "value": sol.value, "low": sol.certificate_low,
                     "high": sol.certificate_high, "status": sol.status, "vol": vol})
    decreasing = all(rows[i + 1]["high"] < rows[i]["low"] for i in range(len(rows) - 1))
    coupling = all(r["low"] <= r["vol"] for r in rows)
    converged = all(r["status"] == "converged" for r in rows)
    ok = decreasing and coupling and converged
    detail = "; ".join(f"n={r['n']}: Mod in [{r['low']:.4g}, {r['high']:.4g}], Vol {r['vol']:.4g}"
                       for r in rows)
    return CheckResult("5", "modulus decreases and stays below the paper volume", ok, detail,
                       0.0, {"rows": rows})


@_timed
def check_tree_of_cylinders() -> CheckResult:
    t = expand_bass_serre(figure3_example(), "A", depth=2, branching_cap=4)
    toc = tree_of_cylinders(t, compute_cylinders(t))
    classes = toc.orbit_classes()
    n_classes = len(classes["V0"]) + len(classes["V1"])
    tripods = all(sorted(toc.neighbour_types(i).items()) == [("A", 2), ("B", 1)]
                  for i in range(len(toc.V1)))
    chk = toc.checks()
    ok = n_classes == 3 and tripods and all(chk.values())
    return CheckResult("6", "tree of cylinders for the two-vertex example", ok,
                       f"classes {classes}, tripods {tripods}, checks {chk}", 0.0,
                       {"classes": classes, "checks": chk})


@_timed
def check_metric_suite() -> CheckResult:
    reports = {}
    for level in (2, 3):
        s = build_space(toy_spec(level), level)
        reports[level] = metric_estimates_report(s)
    k2, k3 = reports[2].K1, reports[3].K1
    stable = k2 > 0 and k3 > 0 and abs(k3 - k2) <= 0.2 * max(k2, k3)
    nesting = all(r.nesting_ok for r in reports.values())
    s = build_space(toy_spec(3), 3, resolution=3.0 ** -4 / 4)
    v = int(np.flatnonzero(s.circle_level == 2)[0])
    scales = [3.0 ** -k for k in range(0, 5)]
    por = porosity_estimate(s.nodes_of(v), s, scales)
    porous = por.c > 0 and all(c > 0 for c in por.per_scale.values())
    ok = stable and nesting and porous
    return CheckResult("7", "metric estimates", ok,
                       f"nesting {nesting}; K1 level 2 {k2:.4f}, level 3 {k3:.4f}; "
                       f"porosity c={por.c:.4f} on circle {v}", 0.0,
                       {"K1": [k2, k3], "porosity": por.c,
                        "porosity_per_scale": {str(k): c for k, c in por.per_scale.items()}})


@_timed
def check_lemma34() -> CheckResult:
    ctx = toy_context()
    worst = -np.inf
    ok = True
    count = 0
    for w in ctx["weights"].values():
        for eps in (0.1, 0.5):
            lhs, rhs, good = lemma34_check(w.values, TOY_P, eps)
            ok &= good
            worst = max(worst, lhs / rhs)
            count += 1
    return CheckResult("8", "higher-exponent volume inequality", ok,
                       f"{count} cases, max lhs/rhs {worst:.4f}", 0.0, {"worst": worst})


CHECKS = {
    "1": check_oracle_equivalence,
    "2": check_analytic_modulus,
    "3": check_recursion,
    "4": check_weight_pillars,
    "5": check_modulus_trend,
    "6": check_tree_of_cylinders,
    "7": check_metric_suite,
    "8": check_lemma34,
}


def run_all(keys=None, echo=print) -> list:
    results = []
    for k, fn in CHECKS.items():
        if keys is not None and k not in keys:
            continue
        out = fn()
        for r in out if isinstance(out, list) else [out]:
            results.append(r)
            if echo is not None:
                echo(r.line())
    return results
