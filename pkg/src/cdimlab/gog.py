"""Graphs of groups over elementary edge groups, truncated Bass--Serre trees,
cylinders and the tree of cylinders, plus the conformal-dimension formulas.

Nothing here does group-element arithmetic.  Vertex and edge groups are
tags, inclusion indices are numbers (or infinity), and commensurability of
edge stabilizers is declared through per-endpoint *multiplicities*: at an
endpoint with multiplicity ``m`` the index slots ``0..`` of that edge fall in
blocks ``slot // m`` whose stabilizers share one maximal two-ended subgroup.
For the amalgam with ``c -> a`` and ``c -> b**2`` the multiplicity is 1 at
the ``A`` end and 2 at the ``B`` end, which pairs up the edges at each
``B``-vertex.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field

INF = math.inf
VIRTUALLY_FREE = "virtually-free"

FINITE, TWO_ENDED, NON_ELEMENTARY = "Finite", "TwoEnded", "NonElementary"


@dataclass(frozen=True)
class GroupTag:
    """Coarse description of a vertex or edge group."""

    kind: str
    order: int | None = None
    confdim: float | None = None
    attains_confdim: bool = False
    virtually_fuchsian: bool = False

    def __post_init__(self):
        if self.kind not in (FINITE, TWO_ENDED, NON_ELEMENTARY):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.kind == FINITE:
            if self.order is None or int(self.order) != self.order or self.order < 1:
                raise ValueError("Finite tags need a positive integer order")
        elif self.order is not None:
            raise ValueError(f"{self.kind} tags carry no order")
        if self.kind == NON_ELEMENTARY:
            if self.confdim is None or self.confdim < 1:
                raise ValueError("NonElementary tags need confdim >= 1")
            if self.virtually_fuchsian and self.confdim != 1:
                raise ValueError("virtually Fuchsian groups have confdim 1")
        elif self.confdim is not None:
            raise ValueError(f"{self.kind} tags carry no confdim")

    @property
    def elementary(self) -> bool:
        return self.kind != NON_ELEMENTARY

    @property
    def infinite(self) -> bool:
        return self.kind != FINITE

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.order is not None:
            d["order"] = self.order
        if self.confdim is not None:
            d["confdim"] = self.confdim
        if self.attains_confdim:
            d["attains_confdim"] = True
        if self.virtually_fuchsian:
            d["virtually_fuchsian"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroupTag":
        return cls(kind=d["kind"], order=d.get("order"), confdim=d.get("confdim"),
                   attains_confdim=bool(d.get("attains_confdim", False)),
                   virtually_fuchsian=bool(d.get("virtually_fuchsian", False)))


def _index(x):
    if x in ("inf", "infinity", "∞", None) or x == INF:
        return INF
    if int(x) != x or x < 1:
        raise ValueError(f"inclusion index must be a positive integer or inf, got {x!r}")
    return int(x)


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    tag: GroupTag
    index: tuple = (1, 1)
    multiplicity: tuple = (1, 1)


@dataclass
class GraphOfGroups:
    """Finite connected graph of groups.

    ``edges[k].index[s]`` is the index of the edge group's image in the
    vertex group at end ``s`` (0 = source, 1 = target).
    """

    vertices: dict
    edges: list
    check: bool = True

    def __post_init__(self):
        self.edges = [Edge(e.id, e.source, e.target, e.tag, tuple(_index(i) for i in e.index),
                           tuple(int(m) for m in e.multiplicity)) for e in self.edges]
        if self.check:
            self.validate()

    def validate(self) -> None:
        if not self.vertices:
            raise ValueError("graph of groups has no vertices")
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate edge ids")
        for e in self.edges:
            for s, v in enumerate((e.source, e.target)):
                if v not in self.vertices:
                    raise ValueError(f"edge {e.id} references unknown vertex {v!r}")
                vt = self.vertices[v]
                if vt.kind == FINITE and (e.index[s] == INF or vt.order % e.index[s]):
                    raise ValueError(f"index of {e.id} in finite group {v} must divide {vt.order}")
                if e.multiplicity[s] < 1:
                    raise ValueError("multiplicities must be positive")
            if not e.tag.elementary:
                raise ValueError(f"edge {e.id} has a non-elementary edge group")
        seen = {next(iter(self.vertices))}
        todo = list(seen)
        while todo:
            v = todo.pop()
            for e in self.edges:
                for a, b in ((e.source, e.target), (e.target, e.source)):
                    if a == v and b not in seen:
                        seen.add(b)
                        todo.append(b)
        if len(seen) != len(self.vertices):
            raise ValueError("underlying graph is not connected")

    def ends_at(self, v: str) -> list:
        """Edge ends ``(edge, side)`` incident to ``v`` in input order."""
        out = []
        for e in self.edges:
            if e.source == v:
                out.append((e, 0))
            if e.target == v:
                out.append((e, 1))
        return out

    def to_dict(self) -> dict:
        def enc(i):
            return "inf" if i == INF else i
        return {"vertices": [{"id": k, "tag": t.to_dict()} for k, t in self.vertices.items()],
                "edges": [{"id": e.id, "source": e.source, "target": e.target,
                           "tag": e.tag.to_dict(), "index": [enc(i) for i in e.index],
                           "multiplicity": list(e.multiplicity)} for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict, check: bool = True) -> "GraphOfGroups":
        verts = {}
        for v in d["vertices"]:
            if v["id"] in verts:
                raise ValueError(f"duplicate vertex id {v['id']!r}")
            verts[v["id"]] = GroupTag.from_dict(v["tag"])
        edges = [Edge(e["id"], e["source"], e["target"], GroupTag.from_dict(e["tag"]),
                      tuple(e.get("index", (1, 1))), tuple(e.get("multiplicity", (1, 1))))
                 for e in d["edges"]]
        return cls(verts, edges, check=check)


def load_gog(path) -> GraphOfGroups:
    with open(path) as fh:
        return GraphOfGroups.from_dict(json.load(fh))


def figure3_example(confdim_a: float = 1.0, confdim_b: float = 1.0) -> GraphOfGroups:
    """``A *_C B`` with free groups ``A, B`` of rank 2 and ``C = <c>`` mapped to a
    commutator in ``A`` and to the square of a commutator in ``B``."""
    fa = GroupTag(NON_ELEMENTARY, confdim=confdim_a)
    fb = GroupTag(NON_ELEMENTARY, confdim=confdim_b)
    return GraphOfGroups({"A": fa, "B": fb},
                         [Edge("c", "A", "B", GroupTag(TWO_ENDED), (INF, INF), (1, 2))])


# ---------------------------------------------------------------------------
# Bass--Serre truncation


class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a != b:
            self.p[max(a, b)] = min(a, b)


@dataclass
class BassSerreTruncation:
    """Rooted finite subtree of the Bass--Serre tree.

    Vertex ``i`` has orbit ``orbit[i]`` (a vertex of the graph of groups),
    coset token ``token[i]`` (the root-to-vertex string of edge choices),
    parent ``parent[i]`` and depth.  Tree edge ``k`` joins ``edge_ends[k]``,
    lies over graph edge ``edge_orbit[k]`` and carries ``axis[k]``.
    """

    gog: GraphOfGroups
    base: str
    depth_limit: int
    orbit: list
    token: list
    parent: list
    depth: list
    pruned: list
    edge_ends: list
    edge_orbit: list
    axis: list

    @property
    def n_vertices(self) -> int:
        return len(self.orbit)

    @property
    def n_edges(self) -> int:
        return len(self.edge_ends)

    def degree(self, v: int) -> int:
        return sum(v in ends for ends in self.edge_ends)

    def edge_list_text(self) -> str:
        lines = [f"# truncated Bass-Serre tree base={self.base} depth={self.depth_limit}"]
        for i in range(self.n_vertices):
            lines.append(f"v {i} {self.orbit[i]} {self.token[i] or '.'}")
        for k, (u, v) in enumerate(self.edge_ends):
            lines.append(f"e {u} {v} {self.edge_orbit[k]} {self.axis[k]}")
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        out = ["graph bass_serre {"]
        for i in range(self.n_vertices):
            out.append(f'  v{i} [label="{self.orbit[i]}:{self.token[i] or "root"}"];')
        for k, (u, v) in enumerate(self.edge_ends):
            out.append(f'  v{u} -- v{v} [label="{self.axis[k]}"];')
        out.append("}")
        return "\n".join(out) + "\n"


def expand_bass_serre(gog: GraphOfGroups, base: str, depth: int,
                      branching_cap: int) -> BassSerreTruncation:
    """Breadth-first truncation of the Bass--Serre tree around ``base``.

    A tree vertex over ``v`` has ``min(index, cap)`` edges for every edge end
    at ``v``; at non-root vertices slot 0 of the end it was reached through
    is the edge to its parent.  Edges sharing a stabilizer's commensurability
    class get the same axis label: edges in one multiplicity block at a
    vertex, all two-ended edges at a two-ended vertex, and all edges at a
    vertex where some inclusion index is 1 (the edge group is the whole
    vertex group).  Finite edge groups are never identified.
    """
    if base not in gog.vertices:
        raise ValueError(f"unknown base vertex {base!r}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if branching_cap < 1:
        raise ValueError("branching_cap must be positive")

    orbit, token, parent, vdepth, pruned = [base], [""], [-1], [0], [False]
    edge_ends, edge_orbit = [], []
    incident = [[]]  # per vertex: (edge end name, slot, tree edge, multiplicity, tag)
    arrival = [None]
    queue = deque([0])
    while queue:
        u = queue.popleft()
        v = orbit[u]
        for e, side in gog.ends_at(v):
            idx = e.index[side]
            cap = min(idx, branching_cap)
            if idx > branching_cap:
                pruned[u] = True
            end = f"{e.id}{'+-'[side]}"
            for slot in range(int(cap)):
                if arrival[u] == (end, 0) and slot == 0:
                    continue
                if vdepth[u] >= depth:
                    continue
                w = len(orbit)
                other = e.target if side == 0 else e.source
                orbit.append(other)
                token.append(f"{token[u]}/{end}{slot}" if token[u] else f"{end}{slot}")
                parent.append(u)
                vdepth.append(vdepth[u] + 1)
                pruned.append(False)
                k = len(edge_ends)
                edge_ends.append((u, w))
                edge_orbit.append(e.id)
                incident[u].append((end, slot, k, e.multiplicity[side], e.tag, idx))
                other_end = f"{e.id}{'+-'[1 - side]}"
                incident.append([(other_end, 0, k, e.multiplicity[1 - side], e.tag,
                                  e.index[1 - side])])
                arrival.append((other_end, 0))
                queue.append(w)

    uf = _UnionFind(len(edge_ends))
    for u, inc in enumerate(incident):
        vt = gog.vertices[orbit[u]]
        infinite = [x for x in inc if x[4].kind == TWO_ENDED]
        if vt.kind == TWO_ENDED or any(x[5] == 1 for x in infinite):
            for x in infinite[1:]:
                uf.union(infinite[0][2], x[2])
            continue
        blocks = {}
        for end, slot, k, m, tag, _ in infinite:
            key = (end, slot // m)
            if key in blocks:
                uf.union(blocks[key], k)
            else:
                blocks[key] = k
    roots = [uf.find(k) for k in range(len(edge_ends))]
    names = {}
    axis = []
    for r in roots:
        if r not in names:
            names[r] = f"ax{len(names)}"
        axis.append(names[r])
    return BassSerreTruncation(gog, base, depth, orbit, token, parent, vdepth, pruned,
                               edge_ends, edge_orbit, axis)


# ---------------------------------------------------------------------------
# Cylinders and the tree of cylinders


@dataclass
class CylinderPartition:
    """Cylinder id of each tree edge and the edge set of each cylinder."""

    edge_cylinder: list
    cylinders: list
    labels: list

    def vertices_of(self, t: BassSerreTruncation, c: int) -> set:
        return {x for k in self.cylinders[c] for x in t.edge_ends[k]}


def _connected(t: BassSerreTruncation, edges) -> bool:
    edges = list(edges)
    adj = {}
    for k in edges:
        u, v = t.edge_ends[k]
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    start = next(iter(adj))
    seen = {start}
    todo = [start]
    while todo:
        x = todo.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return len(seen) == len(adj)


def compute_cylinders(t: BassSerreTruncation) -> CylinderPartition:
    """Partition tree edges by axis label; each class is checked to be a
    subtree."""
    order = {}
    for lab in t.axis:
        order.setdefault(lab, len(order))
    cylinders = [[] for _ in order]
    edge_cyl = []
    for k, lab in enumerate(t.axis):
        cylinders[order[lab]].append(k)
        edge_cyl.append(order[lab])
    for c in cylinders:
        if not _connected(t, c):
            raise ValueError("a cylinder is not connected; axis labels are inconsistent")
    return CylinderPartition(edge_cyl, cylinders, list(order))


@dataclass
class TreeOfCylinders:
    """Bipartite tree: ``V0`` holds tree vertices (indices into the
    truncation), ``V1`` holds cylinders; ``edges`` are ``(i0, i1)`` pairs of
    positions in those lists."""

    truncation: BassSerreTruncation
    partition: CylinderPartition
    V0: list
    V1: list
    edges: list
    tags: dict = field(default_factory=dict)

    def orbit_of(self, side: int, i: int) -> str:
        if side == 0:
            return self.truncation.orbit[self.V0[i]]
        ks = self.partition.cylinders[self.V1[i]]
        return "cyl[" + ",".join(sorted({self.truncation.edge_orbit[k] for k in ks})) + "]"

    def orbit_classes(self) -> dict:
        return {"V0": sorted({self.orbit_of(0, i) for i in range(len(self.V0))}),
                "V1": sorted({self.orbit_of(1, i) for i in range(len(self.V1))})}

    def neighbour_types(self, i1: int) -> Counter:
        """Orbit multiset of the V0 neighbours of cylinder node ``i1``."""
        return Counter(self.orbit_of(0, a) for a, b in self.edges if b == i1)

    def checks(self) -> dict:
        t = self.truncation
        n = len(self.V0) + len(self.V1)
        adj = {("0", i): [] for i in range(len(self.V0))}
        adj.update({("1", i): [] for i in range(len(self.V1))})
        for a, b in self.edges:
            adj[("0", a)].append(("1", b))
            adj[("1", b)].append(("0", a))
        start = next(iter(adj)) if adj else None
        seen = {start} if start else set()
        todo = [start] if start else []
        while todo:
            x = todo.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
        tags = t.gog.vertices
        nonel = {i for i in range(t.n_vertices) if tags[t.orbit[i]].kind == NON_ELEMENTARY}
        v0 = set(self.V0)
        labels = [self.partition.labels[c] for c in self.V1]
        edge_tags = {t.gog.edges[[e.id for e in t.gog.edges].index(t.edge_orbit[k])].tag.kind
                     for c in self.V1 for k in self.partition.cylinders[c]}
        return {
            "bipartite": all(0 <= a < len(self.V0) and 0 <= b < len(self.V1) for a, b in self.edges),
            "acyclic": len(seen) == n and len(self.edges) == n - 1,
            "V0_non_elementary": all(tags[t.orbit[i]].kind == NON_ELEMENTARY for i in self.V0),
            "V1_two_ended": edge_tags <= {TWO_ENDED},
            "V1_distinct_axes": len(set(labels)) == len(labels),
            "non_elementary_kept": nonel <= v0,
        }

    def edge_list_text(self) -> str:
        lines = ["# tree of cylinders"]
        for i, v in enumerate(self.V0):
            lines.append(f"v0 {i} {self.orbit_of(0, i)} {self.truncation.token[v] or '.'}")
        for i, c in enumerate(self.V1):
            lines.append(f"v1 {i} {self.orbit_of(1, i)} {self.partition.labels[c]}")
        lines += [f"e {a} {b}" for a, b in self.edges]
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        out = ["graph tree_of_cylinders {"]
        for i in range(len(self.V0)):
            out.append(f'  a{i} [label="{self.orbit_of(0, i)}", shape=circle];')
        for i in range(len(self.V1)):
            out.append(f'  c{i} [label="{self.orbit_of(1, i)}", shape=box];')
        out += [f"  a{a} -- c{b};" for a, b in self.edges]
        out.append("}")
        return "\n".join(out) + "\n"


def tree_of_cylinders(t: BassSerreTruncation, part: CylinderPartition) -> TreeOfCylinders:
    """Replace each cylinder by the cone on its boundary.

    ``V0`` = tree vertices lying in at least two cylinders, together with
    every vertex over a non-elementary group; ``V1`` = cylinders; a vertex is
    joined to each cylinder containing it.  The result is checked to be a
    bipartite tree.
    """
    if len(part.edge_cylinder) != t.n_edges or sorted(
            k for c in part.cylinders for k in c) != list(range(t.n_edges)):
        raise ValueError("partition does not match the truncation's edges")
    member = [set() for _ in range(t.n_vertices)]
    for k, c in enumerate(part.edge_cylinder):
        for x in t.edge_ends[k]:
            member[x].add(c)
    tags = t.gog.vertices
    V0 = [i for i in range(t.n_vertices)
          if len(member[i]) >= 2 or tags[t.orbit[i]].kind == NON_ELEMENTARY]
    pos0 = {v: i for i, v in enumerate(V0)}
    V1 = list(range(len(part.cylinders)))
    edges = sorted((pos0[v], c) for v in V0 for c in member[v])
    toc = TreeOfCylinders(t, part, V0, V1, edges,
                          tags={"V1": TWO_ENDED})
    chk = toc.checks()
    if t.n_edges and not (chk["bipartite"] and chk["acyclic"]):
        raise ValueError("tree of cylinders is not a bipartite tree")
    return toc


# ---------------------------------------------------------------------------
# Formulas


def confdim_formula(gog: GraphOfGroups, virtually_free: bool = False):
    """Conformal dimension of the boundary from the decomposition.

    Returns :data:`VIRTUALLY_FREE` for virtually free groups (dimension 0).
    With some two-ended edge group the value is
    ``max(1, confdim of non-elementary vertex groups)``; with only finite
    edge groups it is the maximum over infinite vertex groups (two-ended ones
    contributing 0), and 0 if there are none.
    """
    for e in gog.edges:
        if not e.tag.elementary:
            raise ValueError(f"edge {e.id} has a non-elementary edge group")
    if virtually_free:
        return VIRTUALLY_FREE
    dims = [t.confdim for t in gog.vertices.values() if t.kind == NON_ELEMENTARY]
    if any(e.tag.kind == TWO_ENDED for e in gog.edges):
        return float(max([1.0] + dims))
    infinite = dims + [0.0 for t in gog.vertices.values() if t.kind == TWO_ENDED]
    return float(max(infinite, default=0.0))


@dataclass(frozen=True)
class Attainment:
    kind: str
    vertex: str | None = None

    def __str__(self):
        return f"{self.kind}({self.vertex})" if self.vertex else self.kind


def attainment_classification(gog: GraphOfGroups, two_ended: bool = False,
                              virtually_cocompact_fuchsian: bool = False,
                              equals_single_vertex: str | None = None,
                              virtually_free: bool = False) -> Attainment:
    """Decide whether the conformal dimension is attained.

    The whole-group properties are inputs.  Attained iff the dimension is 0
    and the group is two-ended, or it is 1 and the group is virtually
    cocompact Fuchsian, or the group is a vertex group attaining a dimension
    above 1.
    """
    tags = gog.vertices
    if two_ended:
        if any(t.kind == NON_ELEMENTARY for t in tags.values()):
            raise ValueError("a two-ended group has no non-elementary vertex groups")
        if virtually_cocompact_fuchsian:
            raise ValueError("a two-ended group is not cocompact Fuchsian")
        return Attainment("Attained0")
    if equals_single_vertex is not None and equals_single_vertex not in tags:
        raise ValueError(f"unknown vertex {equals_single_vertex!r}")
    cd = confdim_formula(gog, virtually_free)
    if cd == VIRTUALLY_FREE:
        if virtually_cocompact_fuchsian:
            raise ValueError("virtually free groups are not cocompact Fuchsian")
        return Attainment("NotAttained")
    if virtually_cocompact_fuchsian:
        if cd != 1:
            raise ValueError("cocompact Fuchsian groups have conformal dimension 1")
        return Attainment("Attained1")
    if equals_single_vertex is not None:
        t = tags[equals_single_vertex]
        if t.kind == NON_ELEMENTARY and t.attains_confdim and t.confdim > 1:
            return Attainment("AttainedByVertex", equals_single_vertex)
    return Attainment("NotAttained")
