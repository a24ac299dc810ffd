import json

import pytest
from hypothesis import given, settings, strategies as st

from cdimlab.gog import (FINITE, INF, NON_ELEMENTARY, TWO_ENDED, VIRTUALLY_FREE, Edge,
                         GraphOfGroups, GroupTag, attainment_classification,
                         compute_cylinders, confdim_formula, expand_bass_serre,
                         figure3_example, load_gog, tree_of_cylinders)

NE = lambda q=1.0, **kw: GroupTag(NON_ELEMENTARY, confdim=q, **kw)  # noqa: E731
Z = GroupTag(TWO_ENDED)


def _toc(gog, base, depth=2, cap=4):
    t = expand_bass_serre(gog, base, depth, cap)
    return t, tree_of_cylinders(t, compute_cylinders(t))


def test_two_vertex_example_tripods():
    t, toc = _toc(figure3_example(), "A")
    classes = toc.orbit_classes()
    assert classes == {"V0": ["A", "B"], "V1": ["cyl[c]"]}
    for i in range(len(toc.V1)):
        assert dict(toc.neighbour_types(i)) == {"A": 2, "B": 1}
    assert all(toc.checks().values())


def test_example_truncation_shape():
    t = expand_bass_serre(figure3_example(), "A", 1, 4)
    # root over A with 4 kept cosets of <c>, each leading to a B vertex
    assert t.n_vertices == 5 and t.n_edges == 4
    assert t.pruned[0]
    assert sorted(t.orbit[1:]) == ["B"] * 4


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.sampled_from(["A", "B"]))
def test_tree_of_cylinders_is_bipartite_tree(depth, cap, base):
    t, toc = _toc(figure3_example(), base, depth, cap)
    chk = toc.checks()
    assert chk["bipartite"] and chk["acyclic"] and chk["V1_distinct_axes"]
    assert chk["non_elementary_kept"]
    # every tree edge lies in exactly one cylinder
    part = toc.partition
    assert sorted(k for c in part.cylinders for k in c) == list(range(t.n_edges))


def test_finite_edges_are_singleton_cylinders():
    g = GraphOfGroups({"A": NE(), "B": NE()},
                      [Edge("f", "A", "B", GroupTag(FINITE, order=1), (INF, INF))])
    t, toc = _toc(g, "A", 2, 3)
    assert all(len(c) == 1 for c in toc.partition.cylinders)


def test_index_one_edge_merges_all_edges_at_vertex():
    # B is the two-ended edge group itself: all edges at a B vertex share its axis
    g = GraphOfGroups({"A": NE(), "B": Z}, [Edge("c", "A", "B", Z, (INF, 1))])
    t = expand_bass_serre(g, "B", 1, 3)
    assert len(set(t.axis)) == 1


def test_json_roundtrip(tmp_path):
    g = figure3_example(1.5, 2.0)
    p = tmp_path / "g.json"
    p.write_text(json.dumps(g.to_dict()))
    back = load_gog(p)
    assert back.to_dict() == g.to_dict()


def test_validation():
    with pytest.raises(ValueError):
        GroupTag(FINITE)
    with pytest.raises(ValueError):
        GroupTag(NON_ELEMENTARY, confdim=0.5)
    with pytest.raises(ValueError):
        GroupTag(NON_ELEMENTARY, confdim=2.0, virtually_fuchsian=True)
    with pytest.raises(ValueError):
        GraphOfGroups({"A": NE()}, [Edge("e", "A", "X", Z)])
    with pytest.raises(ValueError):
        GraphOfGroups({"A": NE(), "B": NE()}, [])
    with pytest.raises(ValueError):
        GraphOfGroups({"A": GroupTag(FINITE, order=4), "B": NE()},
                      [Edge("e", "A", "B", GroupTag(FINITE, order=1), (3, 1))])
    with pytest.raises(ValueError):
        GraphOfGroups({"A": NE(), "B": NE()}, [Edge("e", "A", "B", NE())])
    with pytest.raises(ValueError):
        expand_bass_serre(figure3_example(), "C", 2, 2)


def test_confdim_formula():
    assert confdim_formula(figure3_example(1.0, 1.0)) == 1.0
    assert confdim_formula(figure3_example(1.3, 2.5)) == 2.5
    fin = GroupTag(FINITE, order=1)
    g = GraphOfGroups({"A": NE(1.7), "B": Z}, [Edge("f", "A", "B", fin, (INF, INF))])
    assert confdim_formula(g) == 1.7
    g = GraphOfGroups({"A": Z, "B": Z}, [Edge("f", "A", "B", fin, (INF, INF))])
    assert confdim_formula(g) == 0.0
    g = GraphOfGroups({"A": GroupTag(FINITE, order=2), "B": GroupTag(FINITE, order=3)},
                      [Edge("f", "A", "B", fin, (2, 3))])
    assert confdim_formula(g, virtually_free=True) == VIRTUALLY_FREE


def test_attainment():
    g = figure3_example(1.0, 1.0)
    assert str(attainment_classification(g)) == "NotAttained"
    assert str(attainment_classification(g, virtually_cocompact_fuchsian=True)) == "Attained1"
    g2 = GraphOfGroups({"A": NE(2.0, attains_confdim=True), "B": Z},
                       [Edge("c", "A", "B", Z, (INF, 1))])
    assert str(attainment_classification(g2, equals_single_vertex="A")) == "AttainedByVertex(A)"
    zz = GraphOfGroups({"A": Z, "B": Z}, [Edge("f", "A", "B", GroupTag(FINITE, order=1),
                                                (INF, INF))])
    assert str(attainment_classification(zz, two_ended=True)) == "Attained0"
    with pytest.raises(ValueError):
        attainment_classification(g, two_ended=True)
