"""Combinatorial p-modulus of curve families on a cover.

A curve is represented by the cover sets it meets; its rho-length is the sum
of rho over those sets, each counted once.  The modulus is

    Mod_p = inf { sum_A rho(A)**p : rho >= 0, l_rho(gamma) >= 1 for all gamma }.

:func:`solve_modulus` runs constraint generation.  The restricted problem
over the active curves is solved through its concave dual

    g(lam) = sum(lam) - (p - 1) * sum(rho(lam)**p),
    rho(lam) = ((C.T @ lam) / p) ** (1 / (p - 1)),

by accelerated projected gradient ascent on ``lam >= 0`` (the gradient is
``1 - C @ rho(lam)``).  ``g`` is a lower bound for the modulus of the whole
family, and ``rho / min l_rho`` is exactly admissible, which gives the
two-sided certificate.  New curves come from a shortest-path oracle on the
nerve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

from . import _kernels
from .cover import Cover

log = logging.getLogger(__name__)

ROUNDING = 1e-12

# ---------------------------------------------------------------------------
# Families and weights


@dataclass(frozen=True)
class JoinPoints:
    """Curves joining two space points (defaults: x- and x+)."""

    x_minus: int | None = None
    x_plus: int | None = None
    kind = "JoinPoints"


@dataclass(frozen=True)
class EndpointSeparation:
    """Curves whose endpoints are at distance ``>= delta_prime``; realized as
    nerve paths between cover sets whose centers are that far apart."""

    delta_prime: float
    kind = "EndpointSeparation"

    def __post_init__(self):
        if not self.delta_prime > 0:
            raise ValueError("delta_prime must be positive")

    @classmethod
    def from_delta(cls, delta: float, ratio: float = 0.25) -> "EndpointSeparation":
        return cls(delta * ratio)


@dataclass(frozen=True)
class ExplicitList:
    """A finite list of curves, each given by the set indices it meets."""

    paths: tuple
    kind = "ExplicitList"

    def __init__(self, paths):
        object.__setattr__(self, "paths", tuple(tuple(int(i) for i in c) for c in paths))


@dataclass
class WeightFunction:
    """Nonnegative values on the sets of a cover (or on ``len(values)``
    abstract sets when ``cover`` is None)."""

    values: np.ndarray
    cover: Cover | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("weights must be finite and nonnegative")
        if self.cover is not None and self.cover.size != self.values.shape[0]:
            raise ValueError("weights do not match the cover size")

    @property
    def num_sets(self) -> int:
        return self.values.shape[0]

    def sup(self) -> float:
        return float(self.values.max()) if self.num_sets else 0.0


def _values(rho) -> np.ndarray:
    return rho.values if isinstance(rho, WeightFunction) else np.asarray(rho, dtype=float)


def rho_length(rho, path) -> float:
    """Sum of ``rho`` over the distinct sets met by ``path``."""
    v = _values(rho)
    idx = np.unique(np.asarray(list(path), dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= v.shape[0]):
        raise ValueError("path uses a set outside the weight's cover")
    return float(v[idx].sum())


def vol_p(rho, p: float) -> float:
    """p-volume ``sum rho**p``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    v = _values(rho)
    return float(np.sum(v ** p))


def incidence(curves, num_sets: int) -> sparse.csr_matrix:
    """Curves x sets 0/1 matrix (repeated sets collapse)."""
    rows, cols = [], []
    for i, c in enumerate(curves):
        s = np.unique(np.asarray(c, dtype=np.int64))
        if s.size and (s[0] < 0 or s[-1] >= num_sets):
            raise ValueError("curve uses a set index out of range")
        rows.append(np.full(s.size, i))
        cols.append(s)
    if not rows:
        return sparse.csr_matrix((0, num_sets))
    r, c = np.concatenate(rows), np.concatenate(cols)
    return sparse.csr_matrix((np.ones(r.size), (r, c)), shape=(len(curves), num_sets))


# ---------------------------------------------------------------------------
# Violation oracle


@dataclass
class Admissibility:
    admissible: bool
    min_length: float
    witness: list | None = None
    unreachable: int = 0

    def __bool__(self):
        return self.admissible


def _check_family(family, cover, num_sets):
    if family.kind == "ExplicitList":
        for c in family.paths:
            if any(i < 0 or i >= num_sets for i in c):
                raise ValueError("explicit curve uses a set index out of range")
            if cover is not None and len(set(c)) > 1:
                sub = cover.nerve[list(set(c))][:, list(set(c))]
                ncomp = sparse.csgraph.connected_components(sub, directed=False)[0]
                if ncomp != 1:
                    raise ValueError("explicit curve is not connected in the nerve")
        return
    if cover is None:
        raise ValueError(f"{family.kind} families need a cover")
    if family.kind == "EndpointSeparation" and family.delta_prime > 1.0:
        raise ValueError("delta_prime exceeds the diameter of the space")


def _nerve_arrays(cover):
    if "nerve_arrays" not in cover._cache:
        ip, ix, _ = _kernels.csr_arrays(cover.nerve)
        cover._cache["nerve_arrays"] = (ip, ix)
    return cover._cache["nerve_arrays"]


def _nerve_step(cover) -> float:
    """Largest metric distance between the centers of adjacent sets."""
    if "nerve_step" not in cover._cache:
        coo = sparse.triu(cover.nerve, k=1).tocoo()
        args = cover.space.tree_arrays()
        c = cover.centers
        step = max((_kernels.tree_distance(int(c[i]), int(c[j]), *args)
                    for i, j in zip(coo.row, coo.col)), default=0.0)
        cover._cache["nerve_step"] = float(step) * (1 + 1e-9)
    return cover._cache["nerve_step"]


def _shortest_from(cover, w, sources, target, limit):
    ip, ix = _nerve_arrays(cover)
    dist, pred = _kernels.node_weighted_tree(ip, ix, w, np.asarray(sources, dtype=np.int64),
                                             float(limit))
    return dist[target], _kernels.trace(pred, target)


def violations(rho, family, cover: Cover | None = None, k: int = 1, limit: float = np.inf,
               stop_below: float = -np.inf, order=None, scratch: dict | None = None):
    """Shortest curves of ``family`` under ``rho``.

    Returns ``(min_length, curves, unreachable)`` where ``curves`` holds up
    to ``k`` pairs ``(length, set path)`` in increasing length (distinct
    sources for path families).  Lengths at or above ``limit`` are not
    searched for; ``min_length`` is then reported as ``limit``.

    For endpoint-separation families the sources are scanned in ``order``
    (all sets by default) and the scan stops early once ``k`` curves shorter
    than ``stop_below`` are found; ``min_length`` is then the minimum over
    the scanned sources only (still below ``stop_below``).  When ``scratch``
    is a dict, the per-source costs are stored in ``scratch["best"]`` (``nan``
    for sources the scan skipped).
    """
    w = _values(rho).astype(np.float64)
    if family.kind == "ExplicitList":
        if not family.paths:
            return np.inf, [], 0
        C = incidence(family.paths, w.shape[0])
        lengths = C @ w
        order = np.lexsort((np.arange(lengths.size), lengths))[:k]
        return float(lengths.min()), [(float(lengths[i]), list(family.paths[i])) for i in order], 0

    ip, ix = _nerve_arrays(cover)
    if family.kind == "JoinPoints":
        sp = cover.space
        xm = sp.x_minus if family.x_minus is None else family.x_minus
        xp = sp.x_plus if family.x_plus is None else family.x_plus
        src = cover.sets_containing(int(xm)).astype(np.int64)
        tgt = cover.sets_containing(int(xp)).astype(np.int64)
        dist, pred = _kernels.node_weighted_tree(ip, ix, w, src, np.inf)
        d = dist[tgt]
        if not np.isfinite(d).any():
            return np.inf, [], 1
        order = np.lexsort((tgt, d))[:k]
        curves = [(float(d[i]), _kernels.trace(pred, tgt[i])) for i in order if np.isfinite(d[i])]
        return float(d.min()), curves, 0

    if family.kind == "EndpointSeparation":
        sources = (np.arange(cover.size, dtype=np.int64) if order is None
                   else np.asarray(order, dtype=np.int64))
        best, target = _kernels.nearest_far(ip, ix, w, sources, cover.centers.astype(np.int64),
                                            family.delta_prime * (1 - 1e-12), float(limit),
                                            max(int(k), 1), _nerve_step(cover), float(stop_below),
                                            *cover.space.tree_arrays())
        if scratch is not None:
            full = np.full(cover.size, np.nan)
            full[sources] = np.where(target == -3, np.nan, best)
            scratch["best"] = full
        finite = np.isfinite(best)
        unreachable = int((target == -1).sum())
        if not finite.any():
            return (float(limit) if np.isfinite(limit) else np.inf), [], unreachable
        ranked = np.lexsort((sources, best))[:k]
        curves = []
        for i in ranked:
            if not finite[i]:
                break
            d, path = _shortest_from(cover, w, [sources[i]], target[i], best[i])
            curves.append((float(d), path))
        return float(best[finite].min()), curves, unreachable
    raise ValueError(f"unknown family kind {family.kind!r}")


def admissibility_check(rho, family, cover: Cover | None = None) -> Admissibility:
    """Is every curve of ``family`` at least 1 long under ``rho``?

    For path families the minimum over the family is an exact node-weighted
    shortest path in the nerve; a violating minimizer is returned as witness.
    Endpoint pairs that the nerve does not connect are counted in
    ``unreachable`` and impose no constraint.  Lengths are compared with
    a relative slack of 1e-12 to absorb floating-point rounding.
    """
    if isinstance(rho, WeightFunction) and cover is None:
        cover = rho.cover
    w = _values(rho)
    _check_family(family, cover, w.shape[0])
    m, curves, unreachable = violations(w, family, cover, k=1)
    if m >= 1 - ROUNDING:
        return Admissibility(True, m, None, unreachable)
    return Admissibility(False, m, curves[0][1], unreachable)


# ---------------------------------------------------------------------------
# Solver


@dataclass
class ModulusSolution:
    value: float
    weights: WeightFunction
    active_curves: list
    iterations: int
    status: str
    min_length: float
    certificate_low: float
    certificate_high: float
    p: float
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _dual_ascent(C, CT, p, lam, tol, max_iter):
    """Maximize the dual ``g`` over ``lam >= 0``; returns ``(lam, g, rho, gap)``."""
    e = 1.0 / (p - 1.0)

    def evaluate(x):
        rho = (np.maximum(CT @ x, 0.0) / p) ** e
        return x.sum() - (p - 1.0) * np.sum(rho ** p), 1.0 - C @ rho, rho

    def gap_of(gval, rho):
        s = (C @ rho).min()
        if s <= 0:
            return np.inf
        primal = np.sum(rho ** p) / s ** p
        return (primal - gval) / max(primal, 1e-300)

    # quasi-Newton phase on the bound-constrained dual; the accelerated
    # gradient loop below only runs if the gap is still above ``tol``
    def neg(x):
        g, grad, _ = evaluate(x)
        return -g, -grad

    calls = [0]

    def stop_at_gap(intermediate_result):
        calls[0] += 1
        if calls[0] % 5 == 0:
            g, _, r = evaluate(np.maximum(intermediate_result.x, 0.0))
            if gap_of(g, r) <= tol:
                raise StopIteration

    res = optimize.minimize(neg, lam, jac=True, method="L-BFGS-B", callback=stop_at_gap,
                            bounds=optimize.Bounds(0.0, np.inf),
                            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": max_iter,
                                     "maxcor": 30})
    if -res.fun >= evaluate(lam)[0]:
        lam = np.maximum(res.x, 0.0)

    m = lam.shape[0]
    L = float(max(np.abs(C).sum(axis=1).max(), 1.0))
    gx, grad_x, rho = evaluate(lam)
    y, gy, grad_y = lam, gx, grad_x
    x_prev = lam
    t = 1.0
    gap = gap_of(gx, rho)
    for it in range(max_iter):
        if gap <= tol:
            break
        while True:
            x_new = np.maximum(y + grad_y / L, 0.0)
            g_new, grad_new, rho_new = evaluate(x_new)
            dx = x_new - y
            if g_new >= gy + grad_y @ dx - 0.5 * L * (dx @ dx) - 1e-15 * abs(gy):
                break
            L *= 2.0
        if g_new < gx:
            # function-value restart of the momentum
            t = 1.0
            y, gy, grad_y = lam, gx, grad_x
            L *= 2.0
            continue
        x_prev, lam, gx, grad_x, rho = lam, x_new, g_new, grad_new, rho_new
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = np.maximum(lam + ((t - 1.0) / t_new) * (lam - x_prev), 0.0)
        t = t_new
        gy, grad_y, _ = evaluate(y)
        L = max(L / 1.2, 1e-12)
        if it % 5 == 4:
            gap = gap_of(gx, rho)
    gap = gap_of(gx, rho)
    return lam, gx, rho, gap


def solve_modulus(cover, family, p: float, tol: float = 1e-3, max_iters: int = 200,
                  batch: int = 1, inner_max: int = 20000, inner_tol: float | None = None,
                  warm_start: WeightFunction | None = None) -> ModulusSolution:
    """Combinatorial p-modulus by constraint generation.

    Parameters
    ----------
    cover : Cover or int
        The cover, or the number of abstract sets for explicit families.
    family : JoinPoints, EndpointSeparation or ExplicitList
    p : float
        Exponent, ``p > 1``.
    tol : float
        Stop once every curve has rho-length ``>= 1 - tol``.
    batch : int
        Number of most-violated curves added per outer round.

    Oracle searches stop at rho-length 1: only violated curves matter, and
    when none exist the current weight is already admissible, so the
    reported ``min_length`` is capped at 1.
    """
    if not p > 1:
        raise ValueError("solve_modulus needs p > 1")
    if not 0 < tol <= 0.1:
        raise ValueError("tol must lie in (0, 0.1]")
    if isinstance(cover, Cover):
        num_sets, cov = cover.size, cover
    else:
        num_sets, cov = int(cover), None
    _check_family(family, cov, num_sets)
    inner_tol = tol / 10.0 if inner_tol is None else inner_tol

    active, seen = [], set()
    lam = np.zeros(0)
    rho = np.zeros(num_sets) if warm_start is None else _values(warm_start).copy()
    glow = 0.0
    history = []
    status = "iteration-capped"
    m_full = 0.0
    it = 0
    # sources are rescanned most-violated first, and a round stops scanning
    # once ``batch`` violated curves are in hand; a converged round has
    # scanned every source, so the convergence test stays exact
    priority = np.zeros(num_sets)
    scratch = {}
    for it in range(1, max_iters + 1):
        order = np.lexsort((np.arange(num_sets), priority))
        m_full, curves, _ = violations(rho, family, cov, k=batch, limit=1.0,
                                       stop_below=1.0 - tol, order=order, scratch=scratch)
        if "best" in scratch:
            priority = np.where(np.isnan(scratch["best"]), priority, scratch["best"])
        history.append({"iteration": it, "min_length": m_full, "active": len(active),
                        "dual": glow, "volume": vol_p(rho, p)})
        log.info("round %d: min length %.6g, %d active curves, dual %.6g",
                 it, m_full, len(active), glow)
        if m_full >= 1.0 - tol and (active or m_full == np.inf):
            status = "converged"
            break
        added = 0
        for _, c in curves:
            key = tuple(sorted(set(c)))
            if key not in seen:
                seen.add(key)
                active.append(key)
                added += 1
        if added == 0:
            inner_tol /= 10.0
        lam = np.concatenate([lam, np.zeros(len(active) - lam.shape[0])])
        C = incidence(active, num_sets)
        CT = C.T.tocsr()
        lam, glow, rho, _ = _dual_ascent(C, CT, p, lam, inner_tol, inner_max)
    else:
        m_full, _, _ = violations(rho, family, cov, k=1, limit=1.0)
        status = "converged" if m_full >= 1.0 - tol else "iteration-capped"

    # the dual value converges much faster than rho(lam) itself; returning the
    # exactly admissible rescaling makes the value an upper bound within the
    # duality gap of the modulus
    if 0 < m_full < np.inf:
        rho = rho / m_full
    value = vol_p(rho, p)
    high = value if m_full > 0 else np.inf
    lengths = incidence(active, num_sets) @ rho if active else np.zeros(0)
    tight = [list(c) for c, l in zip(active, lengths) if abs(l - 1.0) <= tol]
    return ModulusSolution(value=value, weights=WeightFunction(rho, cov), active_curves=tight,
                           iterations=it, status=status, min_length=float(m_full),
                           certificate_low=float(min(max(glow, 0.0), value)),
                           certificate_high=float(high), p=p, history=history)


def brute_force_modulus(curves, num_sets: int, p: float, tol: float = 1e-9,
                        max_incidences: int = 1000) -> float:
    """Modulus of an explicit family with every constraint present.

    Solves the primal program directly with SLSQP and returns the volume of
    the exactly admissible rescaling ``rho / min l_rho``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    C = incidence(curves, num_sets)
    if C.nnz > max_incidences:
        raise ValueError(f"instance too large for the dense oracle ({C.nnz} incidences)")
    if C.shape[0] == 0:
        return 0.0
    A = C.toarray()
    if np.any(A.sum(axis=1) == 0):
        return np.inf
    x0 = np.full(num_sets, 1.0 / A.sum(axis=1).min())
    res = optimize.minimize(
        lambda x: np.sum(np.abs(x) ** p), x0,
        jac=lambda x: p * np.sign(x) * np.abs(x) ** (p - 1),
        constraints=[{"type": "ineq", "fun": lambda x: A @ x - 1.0, "jac": lambda x: A}],
        bounds=[(0.0, None)] * num_sets, method="SLSQP",
        options={"ftol": min(tol, 1e-10) ** 1.5, "maxiter": 2000})
    x = np.maximum(res.x, 0.0)
    s = (A @ x).min()
    return float(np.sum(x ** p) / s ** p)


# ---------------------------------------------------------------------------
# Critical exponent


@dataclass
class CriticalExponent:
    rows: list
    fits: dict
    p_c: float | None
    threshold: float

    def describe(self) -> str:
        if self.p_c is None:
            return f"> {max(self.fits)} (no certified decay on the grid)"
        return f"{self.p_c}"


def fit_decay(ns, values):
    """Least-squares fit of ``log value = a + b n``; returns slope, its standard
    error and the residual RMS."""
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    A = np.stack([np.ones_like(ns), ns], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(ns.size - 2, 1)
    s2 = resid @ resid / dof
    se = np.sqrt(s2 / np.sum((ns - ns.mean()) ** 2))
    return float(coef[1]), float(se), float(np.sqrt(np.mean(resid ** 2)))


def critical_exponent_estimate(cover_for, family, p_grid, n_range, tol: float = 1e-3,
                               min_decay: float = 0.05, **solver_kw) -> CriticalExponent:
    """Tabulate ``Mod_p`` over ``p_grid x n_range`` and estimate the critical
    exponent as the smallest ``p`` whose fitted log-slope in ``n`` is below
    ``-max(min_decay, 2 * standard error)``.

    ``cover_for(n)`` returns the cover at scale ``n``.  Never extrapolates:
    if no grid value decays, ``p_c`` is None.
    """
    n_range = list(n_range)
    if len(n_range) < 3:
        raise ValueError("need at least 3 scales to fit a decay rate")
    covers = {n: cover_for(n) for n in n_range}
    rows, fits = [], {}
    p_c = None
    for p in sorted(p_grid):
        vals = []
        for n in n_range:
            sol = solve_modulus(covers[n], family, p, tol=tol, **solver_kw)
            rows.append({"p": p, "n": n, "value": sol.value, "iterations": sol.iterations,
                         "certificate_low": sol.certificate_low,
                         "certificate_high": sol.certificate_high, "status": sol.status})
            vals.append(sol.value)
        slope, se, resid = fit_decay(n_range, vals)
        decays = slope < -max(min_decay, 2 * se)
        fits[p] = {"slope": slope, "stderr": se, "residual": resid, "decays": bool(decays)}
        if decays and p_c is None:
            p_c = p
    return CriticalExponent(rows, fits, p_c, min_decay)


# ---------------------------------------------------------------------------
# Text round trip


def instance_to_text(curves, num_sets: int, p: float, tol: float) -> str:
    lines = ["# modulus instance", f"sets {num_sets}", f"p {p!r}", f"tol {tol!r}",
             f"curves {len(curves)}"]
    lines += [" ".join(str(int(i)) for i in c) for c in curves]
    return "\n".join(lines) + "\n"


def instance_from_text(text: str):
    """Inverse of :func:`instance_to_text`: ``(curves, num_sets, p, tol)``."""
    lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
    head = {}
    for l in lines[:4]:
        k, v = l.split()
        head[k] = v
    ncurves = int(head["curves"])
    curves = [[int(x) for x in l.split()] for l in lines[4:4 + ncurves]]
    if len(curves) != ncurves:
        raise ValueError("truncated instance")
    return curves, int(head["sets"]), float(head["p"]), float(head["tol"])


def solution_to_text(sol: ModulusSolution) -> str:
    lines = ["# modulus solution", f"value {sol.value!r}", f"status {sol.status}",
             f"iterations {sol.iterations}", f"certificate {sol.certificate_low!r} "
             f"{sol.certificate_high!r}", "weights " + " ".join(repr(float(x))
                                                               for x in sol.weights.values),
             f"active {len(sol.active_curves)}"]
    lines += [" ".join(str(i) for i in c) for c in sol.active_curves]
    return "\n".join(lines) + "\n"


def solution_from_text(text: str) -> dict:
    lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
    out = {}
    for l in lines[:6]:
        k, *v = l.split()
        out[k] = v
    nact = int(lines[6].split()[1])
    return {"value": float(out["value"][0]), "status": out["status"][0],
            "iterations": int(out["iterations"][0]),
            "certificate": tuple(float(x) for x in out["certificate"]),
            "weights": np.array([float(x) for x in out["weights"]]),
            "active": [[int(x) for x in l.split()] for l in lines[7:7 + nact]]}
