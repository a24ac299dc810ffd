"""Scale covers of a model space: separated nets, balls and their nerve."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels
from .space import ModelSpace


@dataclass
class Cover:
    """The family of radius ``a**-n`` balls around a maximal separated net.

    Attributes
    ----------
    centers : ndarray of int
        Graph nodes of the net, in selection order (``centers[0]`` is x-).
    nerve : scipy.sparse.csr_matrix
        Symmetric 0/1 adjacency; sets ``i, j`` are adjacent iff their centers
        are closer than ``2 r`` (the balls intersect in a length space) or a
        graph edge joins a node of one ball to a node of the other (so every
        graph path traces a nerve path, even across arc segments that the
        node-level net leaves uncovered).
    ball_ptr, ball_nodes, ball_dist : ndarray
        CSR listing of the nodes strictly inside each ball and their distance
        to the center.
    coverage : ndarray
        Distance from every node to the nearest center.
    """

    space: ModelSpace
    n: int
    r: float
    centers: np.ndarray
    nerve: sparse.csr_matrix
    ball_ptr: np.ndarray
    ball_nodes: np.ndarray
    ball_dist: np.ndarray
    coverage: np.ndarray
    min_separation: float
    projection: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def ball(self, i: int) -> np.ndarray:
        return self.ball_nodes[self.ball_ptr[i]:self.ball_ptr[i + 1]]

    def degree_bound(self) -> int:
        return int(np.diff(self.nerve.indptr).max()) if self.size else 0

    def center_index(self) -> np.ndarray:
        """Map node -> set index (``-1`` for non-centers)."""
        if "center_index" not in self._cache:
            idx = np.full(self.space.n_nodes, -1, dtype=np.int64)
            idx[self.centers] = np.arange(self.size)
            self._cache["center_index"] = idx
        return self._cache["center_index"]

    def sets_containing(self, node: int) -> np.ndarray:
        """Indices of sets whose open ball contains ``node``."""
        m = self.membership()
        return m.indices[m.indptr[node]:m.indptr[node + 1]]

    def membership(self) -> sparse.csr_matrix:
        """node x set incidence of the balls."""
        if "membership" not in self._cache:
            sets = np.repeat(np.arange(self.size), np.diff(self.ball_ptr))
            m = sparse.csr_matrix((np.ones(sets.shape[0], dtype=np.int8), (self.ball_nodes, sets)),
                                  shape=(self.space.n_nodes, self.size))
            m.sort_indices()
            self._cache["membership"] = m
        return self._cache["membership"]

    def circles_met(self) -> sparse.csr_matrix:
        """set x circle incidence: circles containing a point of the ball.

        The point of a circle nearest to any node is either on the node's own
        circle or one of the circle's glue nodes, so scanning ball nodes is
        exact.
        """
        if "circles_met" not in self._cache:
            nc = self.space.node_circles()
            m = (self.membership().T.astype(np.int32) @ nc.astype(np.int32)).tocsr()
            m.data[:] = 1
            m.sort_indices()
            self._cache["circles_met"] = m
        return self._cache["circles_met"]

    def check(self) -> dict:
        """Post-hoc verification of separation, covering and nerve symmetry."""
        return {
            "separated": bool(self.min_separation >= self.r * (1 - 1e-12)),
            "covering": bool(self.coverage.max() < self.r),
            "nerve_symmetric": bool((self.nerve != self.nerve.T).nnz == 0),
            "degree_bound": self.degree_bound(),
        }

    def write_csv(self, centers_path, nerve_path) -> None:
        sp = self.space
        with open(centers_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set", "node", "circle", "coord"])
            for i, c in enumerate(self.centers):
                w.writerow([i, int(c), int(sp.node_owner[c]), repr(float(sp.node_coord[c]))])
        coo = sparse.triu(self.nerve, k=1).tocoo()
        with open(nerve_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set_a", "set_b"])
            for i, j in sorted(zip(coo.row.tolist(), coo.col.tolist())):
                w.writerow([i, j])


def scale_floor(space: ModelSpace) -> int:
    """Largest ``n`` with ``a**-n >= 4 * resolution``."""
    n = 0
    while float(space.a) ** -(n + 1) >= 4.0 * space.resolution * (1 - 1e-12):
        n += 1
    return n


def build_cover(space: ModelSpace, n: int) -> Cover:
    """Greedy farthest-point cover of ``space`` at scale ``a**-n``.

    The net starts at x- and repeatedly adds the node farthest from the
    chosen centers until every node is closer than ``r``; the result is
    ``r``-separated and maximal among nodes.
    """
    r = float(space.a) ** -n
    if n < 0 or r < 4.0 * space.resolution * (1 - 1e-12):
        raise ValueError(f"scale a^-{n} is below the resolution floor 4*{space.resolution}")
    ip, ix, w = _kernels.csr_arrays(space.graph)
    centers, coverage = _kernels.farthest_point_net(ip, ix, w,
                                                    np.int64(space.x_minus), r)
    is_center = np.zeros(space.n_nodes, dtype=np.bool_)
    is_center[centers] = True
    index = np.full(space.n_nodes, -1, dtype=np.int64)
    index[centers] = np.arange(centers.shape[0])

    ptr, nodes, dist = _kernels.bounded_searches(ip, ix, w, centers,
                                                 2.0 * r, is_center)
    src = np.repeat(np.arange(centers.shape[0]), np.diff(ptr))
    dst = index[nodes]
    off = src != dst
    nerve = sparse.csr_matrix((np.ones(off.sum(), dtype=np.int8), (src[off], dst[off])),
                              shape=(centers.shape[0],) * 2)
    nerve.sort_indices()
    sep = float(dist[off].min()) if off.any() else np.inf

    everything = np.ones(space.n_nodes, dtype=np.bool_)
    bptr, bnodes, bdist = _kernels.bounded_searches(ip, ix, w, centers,
                                                    r, everything)
    cover = Cover(space=space, n=n, r=r, centers=centers, nerve=nerve, ball_ptr=bptr,
                  ball_nodes=bnodes, ball_dist=bdist, coverage=coverage, min_separation=sep)
    m = cover.membership().astype(np.int32)
    linked = (m.T @ ((space.graph > 0).astype(np.int32) @ m)).tocsr()
    linked = ((linked + nerve.astype(np.int32)) > 0).astype(np.int8).tocsr()
    linked.setdiag(0)
    linked.eliminate_zeros()
    linked.sort_indices()
    cover.nerve = linked
    return cover
