"""The explicit deforming weight on circle-tree model spaces.

Every circle ``v`` of the gluing tree is a vertex-group limit set with
diameter ``D_v``; its model map ``h_v`` is the identity rescaled by
``1 / D_v`` onto a unit-diameter circle.  For a cover set ``A`` with tree
projection ``pi(A)``, each circle ``v`` on the path from the root to
``pi(A)`` contributes a factor

    rho_v(A) = 1                                  if A is within E2 a^-n of
                                                  U_<-v, or m_v <= 1,
             = (diam h_v W / diam W) E3 D_v / f_v(W)   otherwise,

with ``W`` the glue pair of the next circle on the path (or the radius
``a^-n`` ball ``B_A`` at ``pi(A)`` itself), and

    f_v(W) = 1                   if d_v(h_v W, h_v Lambda_e_v) <= a^-m_v
                                 or v is in T_delta',
           = m_v d_v(h_v W, h_v Lambda_e_v)    otherwise.

Then ``rho_n(A) = E1 a^-n prod_v rho_v(A)``.  Far from the parent glue pair
``f_v`` is large and the weight shrinks; close to it the weight is stretched,
turning geometric annuli around the cut pair into arithmetic ones.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cover import Cover
from .modulus import EndpointSeparation, WeightFunction, admissibility_check, vol_p
from .space import ModelSpace, log_base

# branch codes recorded per factor
NEAR, SMALL_M, IN_T, CLOSE, SCALED = 0, 1, 2, 3, 4
BRANCH_NAMES = {NEAR: "near-parent", SMALL_M: "m<=1", IN_T: "in-T", CLOSE: "close", SCALED: "scaled"}


@dataclass
class WeightParams:
    """Constants of the construction.  ``Q`` is the regularity exponent of
    the vertex models; ``tau, lam`` are their bi-Hoelder constants."""

    a: int = 3
    delta: float = 0.5
    delta_prime: float = 0.5
    E1: float = 1.0
    E2: float = 3.0
    E3: float = 1.0
    p: float = 1.5
    Q: float = 1.0
    tau: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.a < 2:
            raise ValueError("a must be >= 2")
        if not 0 < self.delta_prime <= self.delta:
            raise ValueError("need 0 < delta' <= delta")
        if min(self.E1, self.E3) < 1 or self.E2 < 0:
            raise ValueError("need E1, E3 >= 1 and E2 >= 0")
        if not self.p > max(self.Q, 1.0):
            raise ValueError("p must exceed max(Q, 1)")
        if not (0 < self.tau <= 1 and self.lam >= 1):
            raise ValueError("need 0 < tau <= 1 <= lam")

    def replace(self, **kw) -> "WeightParams":
        d = asdict(self)
        d.update(kw)
        return WeightParams(**d)

    def to_json(self, space_key: str | None = None) -> str:
        d = asdict(self)
        if space_key is not None:
            d["space_key"] = space_key
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WeightParams":
        d = json.loads(text)
        d.pop("space_key", None)
        return cls(**d)


def m_value(D: float, n: int, a: float, tau: float = 1.0, lam: float = 1.0) -> int:
    """``max(floor(tau (n + log_a D) - log_a(2 lam)), 0)``."""
    x = tau * (n + log_base(D, a)) - log_base(2.0 * lam, a)
    return max(int(math.floor(x + 1e-12)), 0)


@dataclass
class VertexContext:
    """Per-circle data at scale ``n``."""

    n: int
    D: np.ndarray
    m: np.ndarray
    in_T: np.ndarray
    params: WeightParams


def compute_context(space: ModelSpace, params: WeightParams, n: int) -> VertexContext:
    """Diameters, ``m_v`` and membership in ``T_delta'`` for every circle.

    ``T_delta'`` is the convex hull of the root and the circles of diameter
    above ``delta'``; it is built by closing that set under parents.
    """
    D = space.diam.astype(float)
    m = np.array([m_value(d, n, params.a, params.tau, params.lam) for d in D], dtype=np.int64)
    in_T = D > params.delta_prime
    in_T[0] = True
    # convex hull with the root: close under parents
    for c in np.flatnonzero(in_T):
        w = space.parent[c]
        while w >= 0 and not in_T[w]:
            in_T[w] = True
            w = space.parent[w]
    return VertexContext(n, D, m, in_T, params)


def f_v(dist_rel: float, m: int, in_T: bool, a: float) -> float:
    """Scale-transforming denominator from the relative distance
    ``d_v(h_v W, h_v Lambda_e_v)``."""
    if in_T or dist_rel <= float(a) ** -m:
        return 1.0
    return m * dist_rel


def f_branch(dist_rel: float, m: int, in_T: bool, a: float):
    if in_T:
        return 1.0, IN_T
    if dist_rel <= float(a) ** -m:
        return 1.0, CLOSE
    return m * dist_rel, SCALED


# ---------------------------------------------------------------------------
# Tree projection


def _lift(space: ModelSpace, x: int):
    """Distances from node ``x`` to the two glue points of each circle on the
    way from its owner up to the root.

    Returns ``{circle: (coord0, d0, coord1, d1)}`` where ``coord_k`` is the
    coordinate *on the parent* of the circle's glue point ``k`` and ``d_k``
    the distance from ``x`` to it.
    """
    owner, coord, parent, depth, diam, pcoord = space.tree_arrays()
    c = int(owner[x])
    pts = [(float(coord[x]), 0.0)]
    out = {}
    while c > 0:
        D = diam[c]
        e = [min(d + float(space.arc_distance(c, s, k * D)) for s, d in pts) for k in (0, 1)]
        out[c] = (pcoord[c, 0], e[0], pcoord[c, 1], e[1])
        pts = [(pcoord[c, 0], e[0]), (pcoord[c, 1], e[1])]
        c = int(parent[c])
    return out


def tree_projection(cover: Cover, i: int) -> int:
    """Circle closest to the root in the hull of the circles met by set ``i``."""
    met = cover.circles_met()
    circles = met.indices[met.indptr[i]:met.indptr[i + 1]]
    if circles.size == 0:
        raise ValueError("cover set meets no circle")
    return cover.space.lca(circles)


def projection_report(cover: Cover, i: int) -> dict:
    """``pi(A)``, the nearest point of ``Lambda_pi(A)`` to the center and its
    distance, and the distances from the center to each path vertex's parent
    glue pair."""
    sp = cover.space
    x = int(cover.centers[i])
    v = tree_projection(cover, i)
    chain = sp.ancestors(v)
    lift = _lift(sp, x)
    owner = int(sp.node_owner[x])
    if owner == v:
        near_coord, near_dist = float(sp.node_coord[x]), 0.0
    else:
        w = sp.ancestors(owner)[len(chain)]
        c0, d0, c1, d1 = lift[w]
        near_coord, near_dist = (c0, d0) if d0 <= d1 else (c1, d1)
    to_pair = {u: min(lift[u][1], lift[u][3]) for u in chain[1:]}
    return {"projection": v, "chain": chain, "near_coord": near_coord,
            "near_dist": near_dist, "to_parent_pair": to_pair}


def measure_K7(covers) -> float:
    """Smallest K with ``diam Lambda_pi(A) >= a^-n / K`` and
    ``d(center, Lambda_pi(A)) <= K a^-n`` over all sets of the covers."""
    K = 1.0
    for cov in covers:
        r = cov.r
        for i in range(cov.size):
            rep = projection_report(cov, i)
            K = max(K, r / cov.space.diam[rep["projection"]], rep["near_dist"] / r)
    return K


# ---------------------------------------------------------------------------
# Construction


@dataclass
class PaperWeight:
    """Weight values plus their provenance.

    ``factor_ptr`` indexes, per set, the factors ``(vertex, branch, value,
    f, dist_rel)`` along the path from the root to ``projection[i]``.
    """

    weight: WeightFunction
    projection: np.ndarray
    factor_ptr: np.ndarray
    factor_vertex: np.ndarray
    factor_branch: np.ndarray
    factor_value: np.ndarray
    factor_f: np.ndarray
    factor_dist: np.ndarray
    w_kind: np.ndarray
    params: WeightParams
    context: VertexContext
    n: int

    @property
    def values(self) -> np.ndarray:
        return self.weight.values

    @property
    def cover(self) -> Cover:
        return self.weight.cover

    def factors(self, i: int) -> list:
        s = slice(self.factor_ptr[i], self.factor_ptr[i + 1])
        return [(int(v), BRANCH_NAMES[int(b)], float(x)) for v, b, x in
                zip(self.factor_vertex[s], self.factor_branch[s], self.factor_value[s])]

    def replay(self, i: int) -> float:
        s = slice(self.factor_ptr[i], self.factor_ptr[i + 1])
        return _combine(self.params.E1, self.params.a, self.n, self.factor_value[s])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set", "value", "projection", "branches"])
            for i in range(self.values.shape[0]):
                s = slice(self.factor_ptr[i], self.factor_ptr[i + 1])
                codes = "".join(str(int(b)) for b in self.factor_branch[s])
                w.writerow([i, repr(float(self.values[i])), int(self.projection[i]), codes])


def _combine(E1, a, n, factors) -> float:
    out = E1 * float(a) ** -n
    for x in factors:
        out *= float(x)
    return out


def build_paper_weight(space: ModelSpace, cover: Cover, params: WeightParams,
                       context: VertexContext | None = None) -> PaperWeight:
    """Evaluate the deforming weight on every set of ``cover``."""
    if cover.space is not space:
        raise ValueError("cover was built on a different space")
    if params.a != space.a:
        raise ValueError("parameter base differs from the space's scale base")
    n = cover.n
    ctx = compute_context(space, params, n) if context is None else context
    if ctx.n != n:
        raise ValueError("context was computed for a different scale")
    a = float(params.a)
    r = cover.r
    near_limit = params.E2 * r
    proj = np.empty(cover.size, dtype=np.int64)
    ptr = [0]
    fv, fb, fx, ff, fd, wk = [], [], [], [], [], []
    values = np.empty(cover.size)
    for i in range(cover.size):
        rep = projection_report(cover, i)
        chain = rep["chain"]
        proj[i] = chain[-1]
        facs = []
        for k, v in enumerate(chain):
            D = ctx.D[v]
            # W: next glue pair on the path, or B_A at the projection
            if k + 1 < len(chain):
                w = chain[k + 1]
                wc = space.node_coord[space.glue_nodes[w]]
                if v == 0:
                    dist = np.inf
                else:
                    dist = float(space.arc_distance(v, wc[:, None], np.array([0.0, D])[None, :]).min())
                kind = 0
            else:
                th = rep["near_coord"]
                dist = np.inf if v == 0 else max(0.0, float(min(
                    space.arc_distance(v, th, 0.0), space.arc_distance(v, th, D))) - r)
                kind = 1
            d_rel = dist / D
            d_back = np.inf if v == 0 else max(rep["to_parent_pair"][v] - r, 0.0)
            if d_back <= near_limit:
                branch, f, val = NEAR, np.nan, 1.0
            elif ctx.m[v] <= 1:
                branch, f, val = SMALL_M, np.nan, 1.0
            else:
                f, branch = f_branch(d_rel, int(ctx.m[v]), bool(ctx.in_T[v]), a)
                # h_v is the identity rescaled by 1/D_v, so the distortion
                # ratio diam h_v(W) / diam W is 1/D_v
                val = (1.0 / D) * params.E3 * D / f
            fv.append(v)
            fb.append(branch)
            fx.append(val)
            ff.append(f)
            fd.append(d_rel)
            wk.append(kind)
            facs.append(val)
        values[i] = _combine(params.E1, a, n, facs)
        ptr.append(len(fv))
    cover.projection = proj
    return PaperWeight(WeightFunction(values, cover), proj, np.array(ptr), np.array(fv),
                       np.array(fb), np.array(fx), np.array(ff), np.array(fd), np.array(wk),
                       params, ctx, n)


def uniform_weight(cover: Cover, value: float) -> WeightFunction:
    return WeightFunction(np.full(cover.size, float(value)), cover)


# ---------------------------------------------------------------------------
# Verification


@dataclass
class MaxBound:
    ns: list
    sup: list
    n_sup: list
    C: float
    ratio: float
    bounded: bool


def verify_max_bound(weights, ratio_limit: float = 10.0) -> MaxBound:
    """``||rho_n||_inf`` over the scales of ``weights`` and the sequence
    ``n ||rho_n||_inf``; bounded when its max/min ratio stays within
    ``ratio_limit``."""
    if len(weights) < 3:
        raise ValueError("need at least 3 scales")
    ns = [w.n for w in weights]
    sup = [float(w.values.max()) for w in weights]
    nsup = [n * s for n, s in zip(ns, sup)]
    ratio = max(nsup) / min(nsup) if min(nsup) > 0 else np.inf
    return MaxBound(ns, sup, nsup, max(nsup), ratio, bool(ratio <= ratio_limit))


@dataclass
class AdmissibilityReport:
    admissible: bool
    min_length: float
    witness: list | None
    provenance: list | None


def verify_admissibility(weight, delta_prime: float) -> AdmissibilityReport:
    """Check admissibility for curves with endpoints ``delta_prime`` apart."""
    if isinstance(weight, PaperWeight):
        wf = weight.weight
    else:
        wf = weight
    res = admissibility_check(wf, EndpointSeparation(delta_prime), wf.cover)
    prov = None
    if not res.admissible and isinstance(weight, PaperWeight):
        prov = [(i, float(weight.values[i]), weight.factors(i)) for i in res.witness]
    return AdmissibilityReport(res.admissible, res.min_length, res.witness, prov)


@dataclass
class VolumeDiagnostics:
    vol: float
    vol_tree: float
    V: np.ndarray
    t: np.ndarray
    V_hat: dict


def volume_diagnostics(weight: PaperWeight, p: float, t0: int | None = None) -> VolumeDiagnostics:
    """``Vol_p`` two ways, the subtree volumes ``V_n(v)`` and ``V_hat_t``.

    ``V_n(v) = E1^p a^-np sum_{A: pi(A) below v} prod_{w below v} rho_w(A)^p``
    accumulates bottom-up through the partition of ``S_n(v)`` into sets
    projecting to ``v`` and those below its children.
    """
    sp = weight.cover.space
    prm = weight.params
    n = weight.n
    base = (prm.E1 * float(prm.a) ** -n) ** p
    V = np.zeros(sp.n_circles)
    for i in range(weight.projection.shape[0]):
        s = slice(weight.factor_ptr[i], weight.factor_ptr[i + 1])
        verts = weight.factor_vertex[s]
        vals = weight.factor_value[s] ** p
        # suffix products: the factor product over the part of the path at or
        # below each vertex
        suffix = np.cumprod(vals[::-1])[::-1]
        V[verts] += base * suffix
    vol = vol_p(weight.weight, p)
    t = np.floor(n + np.log(sp.diam) / np.log(prm.a) + 1e-12).astype(np.int64)
    V_hat = {}
    outside = ~weight.context.in_T
    for v in np.flatnonzero(outside):
        x = V[v] / sp.diam[v] ** p
        tv = int(t[v])
        if t0 is not None and tv < t0:
            V_hat[tv] = 1.0
            continue
        V_hat[tv] = max(V_hat.get(tv, 0.0), x)
    return VolumeDiagnostics(vol, float(V[0]), V, t, dict(sorted(V_hat.items())))


def lemma34_check(values, p: float, eps: float) -> tuple:
    """``Vol_{p+eps} <= ||rho||_inf^eps Vol_p``; returns ``(lhs, rhs, ok)``."""
    v = np.asarray(values, dtype=float)
    lhs = float(np.sum(v ** (p + eps)))
    rhs = float(v.max() ** eps * np.sum(v ** p)) if v.size else 0.0
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


# ---------------------------------------------------------------------------
# Calibration


def calibrate(space: ModelSpace, covers: dict, params: WeightParams, train=None,
              E3_grid=(1.0, 1.5, 2.0, 3.0), E1_step: float = 2 ** 0.25, E1_max: float = 1e4):
    """Fix ``E2 = K7 + 2`` from the measured projection constant, then raise
    ``(E3, E1)`` along a grid until the weight is admissible on the training
    scales (all scales of ``covers`` by default).

    The weight is linear in ``E1``, so for each ``E3`` the shortest curve at
    ``E1 = 1`` fixes the smallest admissible ``E1``, which is then rounded up
    to the grid ``E1_step**k``.  Returns the frozen parameters and a log.
    """
    train = sorted(covers) if train is None else list(train)
    K7 = measure_K7([covers[n] for n in train])
    prm = params.replace(E2=K7 + 2.0)
    log = [{"K7": K7, "E2": prm.E2, "train": train}]
    for E3 in E3_grid:
        shortest = np.inf
        for n in train:
            w = build_paper_weight(space, covers[n], prm.replace(E1=1.0, E3=E3))
            res = verify_admissibility(w, prm.delta_prime)
            shortest = min(shortest, res.min_length)
            log.append({"E3": E3, "n": n, "min_length_at_E1=1": res.min_length})
        if not 0 < shortest < np.inf:
            continue
        E1 = 1.0
        while E1 * shortest < 1.0:
            E1 *= E1_step
        log.append({"E3": E3, "E1": E1, "min_length": E1 * shortest})
        if E1 <= E1_max:
            return prm.replace(E1=E1, E3=E3), log
    raise RuntimeError("calibration failed on the parameter grid")


# ---------------------------------------------------------------------------
# Simplified recursion


@dataclass
class Recursion:
    a: np.ndarray
    C_prime: float
    C: float
    p: float


def toy_recursion(p: float, depth: int, C: float = 2.0, base: int = 3) -> Recursion:
    """The simplified weights on the circle-gluing toy, as a volume recursion.

    Annuli of geometric width ``base**-i`` around the two marked points are
    sent to arithmetic width ``1/(2n)``; the at most ``C base**(j-i)``
    copies of ``X_{n-j}`` in annulus ``i`` get scale factor
    ``1 / (base**(j-i) n)``, so

        a_n = C sum_{i<n} sum_{i<j<=n} base**(j-i) a_{n-j} / (base**(j-i) n)**p,

    with ``a_0 = 1``.  ``C_prime`` is the smallest constant with
    ``a_n <= C_prime / n**(p-1) * max(a_0..a_{n-1})`` for ``2 <= n <= depth``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if depth < 2:
        raise ValueError("depth must be >= 2")
    seq = [1.0]
    for n in range(1, depth + 1):
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n + 1):
                k = float(base) ** (j - i)
                total += k * seq[n - j] / (k * n) ** p
        seq.append(C * total)
    seq = np.array(seq)
    Cp = max(seq[n] * n ** (p - 1) / seq[:n].max() for n in range(2, depth + 1))
    return Recursion(seq, float(Cp), C, p)


def eventually_nonincreasing(seq, start: int | None = None) -> bool:
    """True if the sequence is nonincreasing from some index on, with that
    index at most ``len - 2`` (so at least one step is checked)."""
    seq = np.asarray(seq)
    k = len(seq) - 2 if start is None else start
    while k > 0 and seq[k] >= seq[k + 1] and seq[k - 1] >= seq[k]:
        k -= 1
    return bool(np.all(np.diff(seq[k:]) <= 0)) if k <= len(seq) - 2 else False
