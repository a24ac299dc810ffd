"""Measured metric constants of circle-tree spaces: relative distances,
diameter nesting, scale ratios, uniform perfectness and porosity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .space import ModelSpace


def _as_nodes(U) -> np.ndarray:
    U = np.unique(np.asarray(U, dtype=np.int64).ravel())
    if U.size == 0:
        raise ValueError("point set is empty")
    return U


def set_diameter(space: ModelSpace, U, sweeps: int = 4) -> float:
    """Diameter of a node set.

    Exact for up to 400 points; larger sets use repeated farthest-point
    sweeps, which give a lower bound that is exact on trees and in practice
    on trees of circles.
    """
    U = _as_nodes(U)
    args = space.tree_arrays()
    if U.size == 1:
        return 0.0
    if U.size <= 400:
        return float(max(_kernels.distances_to(int(x), U, *args).max() for x in U))
    x = int(U[0])
    best = 0.0
    for _ in range(sweeps):
        d = _kernels.distances_to(x, U, *args)
        k = int(np.argmax(d))
        if d[k] <= best:
            break
        best = float(d[k])
        x = int(U[k])
    return best


def set_distance(space: ModelSpace, U, V) -> float:
    U, V = _as_nodes(U), _as_nodes(V)
    if U.size > V.size:
        U, V = V, U
    args = space.tree_arrays()
    return float(min(_kernels.distances_to(int(x), V, *args).min() for x in U))


def relative_distance(space: ModelSpace, U, V) -> float:
    """``d(U, V) / min(diam U, diam V)``; ``inf`` when the smaller diameter
    is zero and the sets are apart, ``0`` when they meet."""
    d = set_distance(space, U, V)
    if d == 0:
        return 0.0
    m = min(set_diameter(space, U), set_diameter(space, V))
    return np.inf if m == 0 else d / m


def glue_pair_separation(space: ModelSpace):
    """Minimum relative distance over distinct glue pairs, with the pair of
    circles attaining it."""
    circles = np.arange(1, space.n_circles)
    if circles.size < 2:
        raise ValueError("need at least two glue pairs")
    pairs = space.glue_nodes[circles].astype(np.int64)
    val, i, j = _kernels.min_pair_ratio(pairs, space.diam[circles].astype(float),
                                        *space.tree_arrays())
    return float(val), (int(circles[i]), int(circles[j]))


def circle_diameter(space: ModelSpace, c: int) -> float:
    """Measured diameter of circle ``c``: farthest node from its first node
    (exact, since each circle contains the antipode of its first node)."""
    nodes = space.nodes_of(c).astype(np.int64)
    return float(_kernels.distances_to(int(nodes[0]), nodes, *space.tree_arrays()).max())


def subtree_nodes(space: ModelSpace, v: int) -> np.ndarray:
    return np.flatnonzero(space.subtree_node_mask(v))


@dataclass
class MetricReport:
    K1: float
    K1_pair: tuple
    K4: float
    K5_min: float
    K5_max: float
    perfectness: float
    nesting_ok: bool
    rows: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"K1": self.K1, "K4": self.K4, "K5_min": self.K5_min, "K5_max": self.K5_max,
                "perfectness": self.perfectness, "nesting_ok": self.nesting_ok}


def uniform_perfectness(space: ModelSpace, samples, radii) -> float:
    """Largest ``r / sup{d(x, y) : d(x, y) < r}`` over sampled centers and
    radii: the smallest ``C`` with ``B(x, r) \\ B(x, r/C)`` nonempty at every
    sample."""
    worst = 1.0
    diam = 1.0 * space.diam[0]
    for x in np.asarray(samples, dtype=np.int64):
        d = space.distances([int(x)])[0]
        for r in radii:
            if r > diam:
                continue
            inside = d[d < r]
            far = inside.max() if inside.size else 0.0
            worst = max(worst, r / far if far > 0 else np.inf)
    return float(worst)


def metric_estimates_report(space: ModelSpace, max_subtree_level: int | None = None,
                            samples: int = 24) -> MetricReport:
    """Measured analogs of the relative-distance, diameter-comparison and
    scale-ratio constants, per-vertex nesting, and uniform perfectness.

    ``diam U_{v->}`` is measured for every circle whose level is at most
    ``max_subtree_level`` (all circles by default).
    """
    if space.n_circles < 2:
        raise ValueError("degenerate space: a single circle")
    K1, pair = glue_pair_separation(space)
    a = float(space.a)
    rows = []
    K4 = 0.0
    K5 = []
    nesting = True
    for v in range(space.n_circles):
        Dv = circle_diameter(space, v)
        if v > 0:
            De = float(space.point_distance(*space.glue_nodes[v]))
            p = int(space.parent[v])
            ratio = (Dv / circle_diameter(space, p)) / a ** -(int(space.circle_level[v])
                                                              - int(space.circle_level[p]))
            K5.append(ratio)
        else:
            De = 0.0
        row = {"circle": v, "diam_edge": De, "diam_circle": Dv}
        if max_subtree_level is None or space.circle_level[v] <= max_subtree_level:
            DU = max(set_diameter(space, subtree_nodes(space, v)), Dv)
            row["diam_subtree"] = DU
            tol = 1e-12
            ok = De <= Dv + tol and Dv <= DU + tol
            nesting &= ok
            if v > 0:
                K4 = max(K4, DU / De)
        else:
            ok = De <= Dv + 1e-12
            nesting &= ok
        row["nested"] = ok
        rows.append(row)
    rng = np.random.default_rng(0)
    pts = rng.choice(space.n_nodes, size=min(samples, space.n_nodes), replace=False)
    radii = [2.0 ** -k for k in range(0, 12) if 2.0 ** -k >= 4 * space.resolution]
    perf = uniform_perfectness(space, pts, radii)
    return MetricReport(K1, pair, K4, float(min(K5)), float(max(K5)), perf, bool(nesting), rows)


@dataclass
class Porosity:
    c: float
    per_scale: dict


def porosity_estimate(Y, space: ModelSpace, scales, steps: int = 10,
                      max_samples: int = 400) -> Porosity:
    """Largest ``c`` (bisection, ``steps`` halvings of ``[0, 1]``) such that
    for every sampled ``y`` in ``Y`` and every radius ``r`` in ``scales``
    some node ``x`` has ``B(x, c r)`` inside ``B(y, r)`` and disjoint from
    ``Y``.

    In a length space ``B(x, c r) ⊆ B(y, r)`` when ``d(x, y) + c r <= r``
    and ``B(x, c r)`` misses ``Y`` iff ``d(x, Y) >= c r``.  Also returns the
    same bisection run separately at each scale.
    """
    Y = _as_nodes(Y)
    scales = [float(r) for r in scales]
    if min(scales) < 4 * space.resolution * (1 - 1e-12):
        raise ValueError("scales must stay above the resolution floor")
    dY = space.distances(Y).min(axis=0) if Y.size < 64 else _multi_source(space, Y)
    if Y.size > max_samples:
        samples = Y[np.linspace(0, Y.size - 1, max_samples).astype(np.int64)]
    else:
        samples = Y
    rmax = max(scales)
    dy = space.distances(samples, limit=rmax)

    def ok(c, rs):
        for i in range(samples.size):
            for r in rs:
                if not np.any((dy[i] + c * r <= r) & (dY >= c * r)):
                    return False
        return True

    def bisect(rs):
        lo, hi = 0.0, 1.0
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if ok(mid, rs):
                lo = mid
            else:
                hi = mid
        return lo

    per = {r: bisect([r]) for r in scales}
    return Porosity(bisect(scales), per)


def _multi_source(space: ModelSpace, Y) -> np.ndarray:
    from scipy.sparse import csgraph
    return csgraph.dijkstra(space.graph, directed=False, indices=Y, min_only=True)
