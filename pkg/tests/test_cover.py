import numpy as np
import pytest
from scipy.sparse import csgraph

from cdimlab.cover import build_cover, scale_floor


@pytest.mark.parametrize("n", [1, 2, 3])
def test_net_is_separated_and_covering(covers3, space3, n):
    c = covers3[n]
    chk = c.check()
    assert chk["separated"] and chk["covering"] and chk["nerve_symmetric"]
    # independent recomputation of coverage by Dijkstra from all centers
    d = csgraph.dijkstra(space3.graph, directed=False, indices=c.centers, min_only=True)
    assert np.allclose(d, c.coverage, atol=1e-12)
    assert d.max() < c.r


def test_centers_pairwise_separated(covers3, space3):
    c = covers3[2]
    D = space3.distances(c.centers)[:, c.centers]
    np.fill_diagonal(D, np.inf)
    assert D.min() >= c.r * (1 - 1e-12)


def test_first_center_is_x_minus(covers3, space3):
    for c in covers3.values():
        assert c.centers[0] == space3.x_minus


def test_nerve_contains_intersecting_balls(covers3, space3):
    c = covers3[2]
    D = space3.distances(c.centers)[:, c.centers]
    close = (D < 2 * c.r) & ~np.eye(c.size, dtype=bool)
    nerve = c.nerve.toarray() > 0
    assert not (close & ~nerve).any()


def test_nerve_connected_and_traces_graph_edges(covers3, space3):
    for c in covers3.values():
        assert csgraph.connected_components(c.nerve, directed=False)[0] == 1
        # every graph edge joins nodes lying in equal or adjacent sets
        m = c.membership()
        g = space3.graph.tocoo()
        A = (c.nerve.toarray() > 0) | np.eye(c.size, dtype=bool)
        for u, v in list(zip(g.row, g.col))[:2000]:
            su = m[u].indices
            sv = m[v].indices
            assert A[np.ix_(su, sv)].any()


def test_ball_listing_matches_distances(covers3, space3):
    c = covers3[2]
    for i in (0, 5, c.size - 1):
        d = space3.distances([int(c.centers[i])])[0]
        expect = np.flatnonzero(d < c.r)
        assert np.array_equal(np.sort(c.ball(i)), expect)


def test_set_counts_grow_with_scale(covers3):
    sizes = [covers3[n].size for n in (1, 2, 3)]
    assert sizes == sorted(sizes) and sizes[0] < sizes[-1]


def test_deterministic(space3):
    a, b = build_cover(space3, 2), build_cover(space3, 2)
    assert np.array_equal(a.centers, b.centers)
    assert (a.nerve != b.nerve).nnz == 0


def test_resolution_floor(space3):
    with pytest.raises(ValueError):
        build_cover(space3, scale_floor(space3) + 1)


def test_csv_export(tmp_path, covers3):
    c = covers3[1]
    c.write_csv(tmp_path / "c.csv", tmp_path / "n.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "set,node,circle,coord" and len(rows) == c.size + 1
    assert len((tmp_path / "n.csv").read_text().splitlines()) == c.nerve.nnz // 2 + 1
