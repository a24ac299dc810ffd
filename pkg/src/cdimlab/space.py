"""Finite realizations of the iterated circle-gluing space.

The space at level ``N`` is a root circle of diameter 1 (length metric,
circumference 2).  A circle whose scale exponent is ``k`` carries, for every
``j = 1 .. N - k``, ``copies[j-1]`` child circles of diameter ``a**-(k+j)``.
Each child touches its parent in exactly one pair of points: the child's
antipodal points ``0`` and ``D_child`` are identified with two points of the
parent at arc distance ``D_child``.  Since that pair separation equals the
child's antipodal distance, no detour through a child is shorter than the
parent arc it spans, and the subspace metric on every circle is its intrinsic
arc metric.

All glue points are graph nodes and arcs are subdivided with exact lengths, so
graph distances between nodes equal the length metric of the glued space.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

CACHE_VERSION = 1


@dataclass(frozen=True)
class CircleTreeSpec:
    """Combinatorics and layout of a circle-tree space.

    Parameters
    ----------
    a : int
        Scale base; a copy at relative scale ``a**-j`` is ``j`` levels down.
    copies : tuple of int
        ``copies[j-1]`` is the number of copies glued at relative scale
        ``a**-j``.  Missing entries count as zero.
    max_level : int
        Deepest level that may be built.
    offsets : tuple of float, optional
        Per-family angular offset, as a fraction of the family spacing.
        Defaults to a fixed deterministic rule.
    """

    a: int = 3
    copies: tuple = (12,)
    max_level: int = 3
    offsets: tuple | None = None

    def __post_init__(self):
        if int(self.a) != self.a or self.a < 2:
            raise ValueError(f"scale base must be an integer >= 2, got {self.a}")
        if self.max_level < 0:
            raise ValueError("max_level must be nonnegative")
        if any(int(c) != c or c < 0 for c in self.copies):
            raise ValueError("copies must be nonnegative integers")
        object.__setattr__(self, "copies", tuple(int(c) for c in self.copies))
        if self.offsets is not None:
            object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))

    def count(self, j: int) -> int:
        return self.copies[j - 1] if j - 1 < len(self.copies) else 0

    def offset(self, j: int) -> float:
        if self.offsets is not None and j - 1 < len(self.offsets):
            return self.offsets[j - 1]
        # irrational-looking rational so glue points of different families
        # never coincide for the schedules we use
        return 0.5 / (j + 1) + 0.137 * j

    def to_dict(self) -> dict:
        return {"a": self.a, "copies": list(self.copies), "max_level": self.max_level,
                "offsets": None if self.offsets is None else list(self.offsets)}

    @classmethod
    def from_dict(cls, d: dict) -> "CircleTreeSpec":
        offsets = d.get("offsets")
        return cls(a=int(d["a"]), copies=tuple(d["copies"]), max_level=int(d["max_level"]),
                   offsets=None if offsets is None else tuple(offsets))


def toy_spec(max_level: int = 4, a: int = 3, first: int = 12) -> CircleTreeSpec:
    """The doubled-surface toy: ``first`` copies at scale 1/a, then the
    smallest admissible count ``a**(j-1)`` at every deeper relative scale."""
    copies = (first,) + tuple(a ** (j - 1) for j in range(2, max_level + 1))
    return CircleTreeSpec(a=a, copies=copies, max_level=max_level)


def family_layout(spec: CircleTreeSpec, j: int) -> np.ndarray:
    """Glue coordinates of family ``j`` on a unit-diameter circle.

    Returns an array of shape ``(copies_j, 2)``; coordinates live in ``[0, 2)``.
    """
    c = spec.count(j)
    if c == 0:
        return np.zeros((0, 2))
    sep = float(spec.a) ** -j
    spacing = 2.0 / (c + 1)
    first = (np.arange(c) + spec.offset(j)) * spacing
    first = np.mod(first, 2.0)
    return np.stack([first, np.mod(first + sep, 2.0)], axis=1)


def circle_layout(spec: CircleTreeSpec, remaining: int) -> list:
    """Families ``(j, glue coords)`` on a unit-diameter circle with ``remaining``
    levels below it.  Checks that all glue points are distinct."""
    fams = [(j, family_layout(spec, j)) for j in range(1, remaining + 1) if spec.count(j)]
    pts = np.concatenate([np.array([0.0, 1.0])] + [g.ravel() for _, g in fams])
    s = np.sort(pts)
    gaps = np.diff(np.append(s, s[0] + 2.0))
    if gaps.min() < 1e-9:
        raise ValueError("layout places two glue points at the same position; "
                         "choose different offsets")
    return fams


@dataclass
class ModelSpace:
    """Weighted-graph realization of ``X_level``.

    Circle arrays are indexed by circle id in breadth-first order (root 0);
    node arrays by graph node.  ``circle_nodes[circle_ptr[c]:circle_ptr[c+1]]``
    lists the nodes on circle ``c`` in increasing coordinate order, with
    coordinates (in ``[0, 2 D_c)``) in ``circle_coords``.
    """

    spec: CircleTreeSpec
    level: int
    resolution: float
    parent: np.ndarray
    circle_level: np.ndarray
    depth: np.ndarray
    diam: np.ndarray
    glue_nodes: np.ndarray
    node_owner: np.ndarray
    node_coord: np.ndarray
    node_pair: np.ndarray
    circle_ptr: np.ndarray
    circle_nodes: np.ndarray
    circle_coords: np.ndarray
    graph: sparse.csr_matrix
    x_minus: int = 0
    x_plus: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def a(self) -> int:
        return self.spec.a

    @property
    def n_nodes(self) -> int:
        return self.node_owner.shape[0]

    @property
    def n_circles(self) -> int:
        return self.parent.shape[0]

    def nodes_of(self, c: int) -> np.ndarray:
        return self.circle_nodes[self.circle_ptr[c]:self.circle_ptr[c + 1]]

    def coords_of(self, c: int) -> np.ndarray:
        return self.circle_coords[self.circle_ptr[c]:self.circle_ptr[c + 1]]

    def children(self, c: int) -> np.ndarray:
        if "children" not in self._cache:
            order = np.argsort(self.parent[1:], kind="stable") + 1
            ptr = np.searchsorted(self.parent[order], np.arange(self.n_circles + 1))
            self._cache["children"] = (order, ptr)
        order, ptr = self._cache["children"]
        return order[ptr[c]:ptr[c + 1]]

    def euler(self):
        """Preorder entry/exit times; ``w`` is in the subtree of ``v`` iff
        ``tin[v] <= tin[w] < tout[v]``."""
        if "euler" not in self._cache:
            n = self.n_circles
            tin = np.zeros(n, dtype=np.int64)
            tout = np.zeros(n, dtype=np.int64)
            t = 0
            stack = [(0, False)]
            while stack:
                c, done = stack.pop()
                if done:
                    tout[c] = t
                    continue
                tin[c] = t
                t += 1
                stack.append((c, True))
                for ch in self.children(c)[::-1]:
                    stack.append((int(ch), False))
            self._cache["euler"] = (tin, tout)
        return self._cache["euler"]

    def is_descendant(self, w, v) -> np.ndarray:
        tin, tout = self.euler()
        w = np.asarray(w)
        return (tin[v] <= tin[w]) & (tin[w] < tout[v])

    def ancestors(self, c: int) -> list:
        """Circles on the gluing-tree path from the root to ``c`` (inclusive)."""
        path = [int(c)]
        while self.parent[path[-1]] >= 0:
            path.append(int(self.parent[path[-1]]))
        return path[::-1]

    def lca(self, circles) -> int:
        circles = list({int(c) for c in circles})
        if len(circles) == 1:
            return circles[0]
        paths = [self.ancestors(c) for c in circles]
        k = 0
        while all(len(p) > k for p in paths) and len({p[k] for p in paths}) == 1:
            k += 1
        return paths[0][k - 1]

    def node_circles(self):
        """CSR mapping node -> circles containing it (glue nodes lie on two)."""
        if "node_circles" not in self._cache:
            counts = np.diff(self.circle_ptr)
            circ = np.repeat(np.arange(self.n_circles), counts)
            m = sparse.csr_matrix((np.ones_like(circ), (self.circle_nodes, circ)),
                                  shape=(self.n_nodes, self.n_circles))
            self._cache["node_circles"] = m
        return self._cache["node_circles"]

    def subtree_node_mask(self, v: int) -> np.ndarray:
        """Nodes of ``U_{v->}``: points whose owning circle descends from ``v``,
        together with the glue pair of ``v`` (the closure)."""
        mask = self.is_descendant(self.node_owner, v)
        if v != 0:
            mask[self.glue_nodes[v]] = True
        return mask

    def distances(self, sources, limit: float = np.inf) -> np.ndarray:
        """Exact length-metric distances from ``sources`` to every node."""
        return csgraph.dijkstra(self.graph, directed=False, indices=sources, limit=limit)

    def arc_distance(self, c: int, s, t) -> np.ndarray:
        """Intrinsic distance between coordinates on circle ``c``."""
        circ = 2.0 * self.diam[c]
        d = np.abs(np.mod(np.asarray(s) - np.asarray(t), circ))
        return np.minimum(d, circ - d)

    def tree_arrays(self):
        """Arrays consumed by the compiled closed-form metric:
        ``(owner, coord, parent, depth, diam, pcoord)``."""
        if "tree_arrays" not in self._cache:
            pcoord = np.zeros((self.n_circles, 2))
            pcoord[1:] = self.node_coord[self.glue_nodes[1:]]
            self._cache["tree_arrays"] = (self.node_owner, self.node_coord, self.parent,
                                          self.depth, self.diam, pcoord)
        return self._cache["tree_arrays"]

    def point_distance(self, x: int, y: int) -> float:
        """Length-metric distance between two nodes without a graph search."""
        from ._kernels import tree_distance
        return float(tree_distance(int(x), int(y), *self.tree_arrays()))

    def total_length(self) -> float:
        return float(self.graph.sum() / 2.0)

    def content_hash(self) -> str:
        return space_key(self.spec, self.level, self.resolution)

    def edge_list_text(self) -> str:
        coo = sparse.triu(self.graph).tocoo()
        lines = [f"# circle-tree space level={self.level} resolution={self.resolution!r}",
                 f"# nodes={self.n_nodes} edges={coo.nnz}"]
        lines += [f"{i} {j} {w:.17g}" for i, j, w in zip(coo.row, coo.col, coo.data)]
        return "\n".join(lines) + "\n"


def space_key(spec: CircleTreeSpec, level: int, resolution: float) -> str:
    payload = json.dumps({"v": CACHE_VERSION, "spec": spec.to_dict(), "level": int(level),
                          "resolution": float(resolution)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_space(spec: CircleTreeSpec, level: int, resolution: float | None = None) -> ModelSpace:
    """Realize ``X_level`` as a weighted graph.

    ``resolution`` is the maximal arc-segment length; it defaults to
    ``a**-level / 4`` and may not exceed it.
    """
    if level < 0 or level > spec.max_level:
        raise ValueError(f"level {level} outside 0..{spec.max_level}")
    floor = float(spec.a) ** -level / 4.0
    if resolution is None:
        resolution = floor
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if resolution > floor * (1 + 1e-12):
        raise ValueError(f"resolution {resolution} too coarse for level {level}; "
                         f"need <= a^-level/4 = {floor}")
    a = spec.a
    layouts = {r: circle_layout(spec, r) for r in range(level + 1)}

    parent = [-1]
    clevel = [0]
    depth = [0]
    glue_coord = [(0.0, 1.0)]
    # breadth-first, so every parent precedes its children
    head = 0
    while head < len(parent):
        c = head
        k = clevel[c]
        D = float(a) ** -k
        for j, g in layouts[level - k]:
            for pair in g:
                parent.append(c)
                clevel.append(k + j)
                depth.append(depth[c] + 1)
                glue_coord.append((pair[0] * D, pair[1] * D))
        head += 1

    parent = np.array(parent, dtype=np.int64)
    clevel = np.array(clevel, dtype=np.int64)
    depth = np.array(depth, dtype=np.int64)
    glue_coord = np.array(glue_coord)
    nc = parent.shape[0]
    diam = np.power(float(a), -clevel.astype(float))

    # children of each circle, in creation order
    order = np.argsort(parent[1:], kind="stable") + 1
    cptr = np.searchsorted(parent[order], np.arange(nc + 1))

    node_owner = []
    node_coord = []
    glue_nodes = np.full((nc, 2), -1, dtype=np.int64)
    node_pair = []
    circ_nodes = []
    circ_coords = []
    rows, cols, wts = [], [], []
    next_node = 0
    for c in range(nc):
        D = diam[c]
        kids = order[cptr[c]:cptr[c + 1]]
        if c == 0:
            own = []
            for x in (0.0, D):
                node_owner.append(0)
                node_coord.append(x)
                node_pair.append(-1)
                own.append(next_node)
                next_node += 1
            glue_nodes[0] = own
        special_x = [0.0, D]
        special_id = [int(glue_nodes[c, 0]), int(glue_nodes[c, 1])]
        for ch in kids:
            ids = []
            for x in glue_coord[ch]:
                node_owner.append(c)
                node_coord.append(x)
                node_pair.append(ch)
                ids.append(next_node)
                special_x.append(x)
                special_id.append(next_node)
                next_node += 1
            glue_nodes[ch] = ids
        sx = np.array(special_x)
        sid = np.array(special_id, dtype=np.int64)
        o = np.argsort(sx, kind="stable")
        sx, sid = sx[o], sid[o]
        gaps = np.diff(np.append(sx, sx[0] + 2.0 * D))
        nseg = np.maximum(np.ceil(gaps / resolution - 1e-9).astype(np.int64), 1)
        ring_x = []
        ring_id = []
        for i in range(sx.shape[0]):
            ring_x.append(sx[i])
            ring_id.append(sid[i])
            m = int(nseg[i])
            if m > 1:
                xs = sx[i] + gaps[i] * np.arange(1, m) / m
                ids = np.arange(next_node, next_node + m - 1)
                next_node += m - 1
                node_owner.extend([c] * (m - 1))
                node_coord.extend(xs.tolist())
                node_pair.extend([-1] * (m - 1))
                ring_x.extend(xs.tolist())
                ring_id.extend(ids.tolist())
        ring_x = np.array(ring_x)
        ring_id = np.array(ring_id, dtype=np.int64)
        seg = np.diff(np.append(ring_x, ring_x[0] + 2.0 * D))
        rows.append(ring_id)
        cols.append(np.roll(ring_id, -1))
        wts.append(seg)
        circ_nodes.append(ring_id)
        circ_coords.append(ring_x)

    n = next_node
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    wts = np.concatenate(wts)
    g = sparse.coo_matrix((np.concatenate([wts, wts]), (np.concatenate([rows, cols]),
                          np.concatenate([cols, rows]))), shape=(n, n)).tocsr()
    circle_ptr = np.zeros(nc + 1, dtype=np.int64)
    circle_ptr[1:] = np.cumsum([x.shape[0] for x in circ_nodes])
    return ModelSpace(
        spec=spec, level=level, resolution=float(resolution), parent=parent,
        circle_level=clevel, depth=depth, diam=diam, glue_nodes=glue_nodes,
        node_owner=np.array(node_owner, dtype=np.int64), node_coord=np.array(node_coord),
        node_pair=np.array(node_pair, dtype=np.int64), circle_ptr=circle_ptr,
        circle_nodes=np.concatenate(circ_nodes), circle_coords=np.concatenate(circ_coords),
        graph=g, x_minus=int(glue_nodes[0, 0]), x_plus=int(glue_nodes[0, 1]),
    )


_ARRAYS = ("parent", "circle_level", "depth", "diam", "glue_nodes", "node_owner",
           "node_coord", "node_pair", "circle_ptr", "circle_nodes", "circle_coords")


def save_space(space: ModelSpace, path) -> None:
    """Write the versioned binary cache (``.npz``) for ``space``."""
    g = space.graph
    meta = json.dumps({"version": CACHE_VERSION, "key": space.content_hash(),
                       "spec": space.spec.to_dict(), "level": space.level,
                       "resolution": space.resolution})
    np.savez_compressed(path, meta=np.array(meta), g_data=g.data, g_indices=g.indices,
                        g_indptr=g.indptr, **{k: getattr(space, k) for k in _ARRAYS})


def load_space(path, expected_key: str | None = None) -> ModelSpace:
    """Load a cached space; raises ``ValueError`` on version or key mismatch."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CACHE_VERSION:
            raise ValueError("cache version mismatch")
        spec = CircleTreeSpec.from_dict(meta["spec"])
        key = space_key(spec, meta["level"], meta["resolution"])
        if key != meta["key"] or (expected_key is not None and key != expected_key):
            raise ValueError("cache key mismatch")
        arrays = {k: z[k] for k in _ARRAYS}
        n = arrays["node_owner"].shape[0]
        g = sparse.csr_matrix((z["g_data"], z["g_indices"], z["g_indptr"]), shape=(n, n))
    return ModelSpace(spec=spec, level=int(meta["level"]), resolution=float(meta["resolution"]),
                      graph=g, x_minus=int(arrays["glue_nodes"][0, 0]),
                      x_plus=int(arrays["glue_nodes"][0, 1]), **arrays)


def expected_total_length(spec: CircleTreeSpec, level: int) -> float:
    """Total circle length of ``X_level`` from the schedule alone."""
    lengths = [2.0]
    for L in range(1, level + 1):
        lengths.append(2.0 + sum(spec.count(j) * float(spec.a) ** -j * lengths[L - j]
                                 for j in range(1, L + 1)))
    return lengths[level]


def circle_count(spec: CircleTreeSpec, level: int) -> int:
    counts = [1]
    for L in range(1, level + 1):
        counts.append(1 + sum(spec.count(j) * counts[L - j] for j in range(1, L + 1)))
    return counts[level]


def log_base(x: float, a: float) -> float:
    return math.log(x) / math.log(a)
