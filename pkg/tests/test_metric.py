import numpy as np
import pytest

from cdimlab.metric import (circle_diameter, glue_pair_separation, metric_estimates_report,
                            porosity_estimate, relative_distance, set_diameter, set_distance,
                            subtree_nodes, uniform_perfectness)


def _brute_diameter(space, U):
    D = space.distances(U)[:, U]
    return D.max()


def test_set_diameter_exact_small(space2, rng):
    U = rng.choice(space2.n_nodes, 50, replace=False)
    assert set_diameter(space2, U) == pytest.approx(_brute_diameter(space2, U), abs=1e-12)


def test_set_diameter_sweeps_large(space3):
    U = subtree_nodes(space3, 1)
    assert U.size > 400
    assert set_diameter(space3, U) == pytest.approx(_brute_diameter(space3, U), abs=1e-12)


def test_set_distance_and_relative(space2, rng):
    U = rng.choice(space2.n_nodes, 10, replace=False)
    V = rng.choice(space2.n_nodes, 12, replace=False)
    d = space2.distances(U)[:, V].min()
    assert set_distance(space2, U, V) == pytest.approx(d)
    if d > 0:
        m = min(_brute_diameter(space2, U), _brute_diameter(space2, V))
        assert relative_distance(space2, U, V) == pytest.approx(d / m)
    assert relative_distance(space2, U, U) == 0.0
    with pytest.raises(ValueError):
        set_diameter(space2, [])


def test_circle_diameter_is_level_scale(space2):
    for c in range(0, space2.n_circles, 11):
        assert circle_diameter(space2, c) == pytest.approx(space2.diam[c], rel=1e-12)


def test_glue_pair_separation_brute(space2):
    val, (i, j) = glue_pair_separation(space2)
    best = np.inf
    g = space2.glue_nodes
    for u in range(1, space2.n_circles):
        for v in range(u + 1, space2.n_circles):
            d = space2.distances(g[u])[:, g[v]].min()
            best = min(best, d / min(space2.diam[u], space2.diam[v]))
    assert val == pytest.approx(best, rel=1e-12) and val > 0
    assert i != j


def test_report_level2(space2):
    rep = metric_estimates_report(space2)
    assert rep.nesting_ok
    assert rep.K5_min == pytest.approx(1.0) and rep.K5_max == pytest.approx(1.0)
    assert rep.K4 >= 1.0
    assert 1.0 <= rep.perfectness < 2.0
    assert set(rep.as_dict()) >= {"K1", "K4", "perfectness", "nesting_ok"}


def test_uniform_perfectness_on_circle(space2):
    # far from glue points the space looks like a circle, where the
    # annulus B(x, r) \\ B(x, r/C) is nonempty for C a little above 1
    pts = space2.nodes_of(0)[:5]
    assert uniform_perfectness(space2, pts, [0.5, 0.25]) < 1.2


def test_porosity_positive_on_circle(space3):
    v = int(np.flatnonzero(space3.circle_level == 2)[0])
    por = porosity_estimate(space3.nodes_of(v), space3, [1.0, 1 / 3, 1 / 9], steps=8)
    assert por.c > 0
    assert por.c <= min(por.per_scale.values()) + 1e-12


def test_porosity_whole_space_is_zero(space2):
    por = porosity_estimate(np.arange(space2.n_nodes), space2, [1 / 3], steps=6)
    assert por.c == 0.0


def test_porosity_resolution_floor(space2):
    with pytest.raises(ValueError):
        porosity_estimate(space2.nodes_of(1), space2, [space2.resolution])
