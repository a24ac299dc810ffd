import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse
from scipy.sparse import csgraph

from cdimlab.modulus import (EndpointSeparation, ExplicitList, JoinPoints, WeightFunction,
                             admissibility_check, brute_force_modulus, critical_exponent_estimate,
                             fit_decay, incidence, instance_from_text, instance_to_text,
                             rho_length, solution_from_text, solution_to_text, solve_modulus,
                             violations, vol_p)


def _node_weighted_oracle(cover, w, delta):
    """Shortest node-weighted nerve path between sets whose centers are at
    least ``delta`` apart, by plain Dijkstra on the directed edge-weighted
    graph ``i -> j`` of cost ``w[j]``."""
    N = cover.nerve.tocoo()
    G = sparse.csr_matrix((w[N.col] + 1e-300, (N.row, N.col)), shape=N.shape)
    D = csgraph.dijkstra(G, directed=True) + w[:, None]
    C = cover.space.distances(cover.centers)[:, cover.centers]
    return D[C >= delta * (1 - 1e-12)].min()


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("k", [1, 2, 7, 32])
def test_single_curve(p, k):
    sol = solve_modulus(k, ExplicitList([list(range(k))]), p, tol=1e-8)
    assert sol.value == pytest.approx(k ** (1 - p), abs=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_overlapping_pair_closed_form(p):
    # curves {0,1}, {1,2}: rho = (x, y, x) with x + y = 1 and y = 2^(1/(p-1)) x
    x = 1.0 / (1.0 + 2.0 ** (1.0 / (p - 1.0)))
    expect = 2 * x ** p + (1 - x) ** p
    sol = solve_modulus(3, ExplicitList([[0, 1], [1, 2]]), p, tol=1e-8)
    assert sol.value == pytest.approx(expect, rel=1e-6)
    assert brute_force_modulus([[0, 1], [1, 2]], 3, p) == pytest.approx(expect, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.sampled_from([1.5, 2.0, 3.0]))
def test_disjoint_union_adds(sizes, p):
    curves, s = [], 0
    for k in sizes:
        curves.append(list(range(s, s + k)))
        s += k
    sol = solve_modulus(s, ExplicitList(curves), p, tol=1e-8)
    assert sol.value == pytest.approx(sum(k ** (1 - p) for k in sizes), abs=1e-6)


curve_lists = st.integers(2, 8).flatmap(lambda N: st.tuples(
    st.just(N), st.lists(st.lists(st.integers(0, N - 1), min_size=1, max_size=N, unique=True),
                         min_size=1, max_size=10)))


@settings(max_examples=30, deadline=None)
@given(curve_lists, st.sampled_from([1.2, 2.0, 3.0]))
def test_agrees_with_dense_oracle(inst, p):
    N, curves = inst
    a = solve_modulus(N, ExplicitList(curves), p, tol=1e-6)
    b = brute_force_modulus(curves, N, p)
    assert a.value == pytest.approx(b, rel=1e-4)
    assert a.certificate_low <= b * (1 + 1e-4) and b <= a.certificate_high * (1 + 1e-4)


@settings(max_examples=30, deadline=None)
@given(curve_lists, st.sampled_from([1.5, 2.0]))
def test_monotone_in_family(inst, p):
    N, curves = inst
    sub = solve_modulus(N, ExplicitList(curves[:1]), p, tol=1e-6).value
    full = solve_modulus(N, ExplicitList(curves), p, tol=1e-6).value
    assert sub <= full * (1 + 1e-4)


@settings(max_examples=30, deadline=None)
@given(curve_lists, st.sampled_from([1.5, 2.0]))
def test_longer_curves_lower_modulus(inst, p):
    # adding a fresh set to every curve can only decrease the modulus
    N, curves = inst
    longer = [c + [N] for c in curves]
    a = solve_modulus(N, ExplicitList(curves), p, tol=1e-6).value
    b = solve_modulus(N + 1, ExplicitList(longer), p, tol=1e-6).value
    assert b <= a * (1 + 1e-4)


def test_solution_weights_admissible():
    curves = [[0, 1, 2], [2, 3], [1, 4, 5], [0, 5]]
    sol = solve_modulus(6, ExplicitList(curves), 2.0, tol=1e-6)
    assert min(rho_length(sol.weights, c) for c in curves) >= 1 - 1e-12
    assert sol.value == pytest.approx(vol_p(sol.weights, 2.0))


def test_endpoint_separation_on_cover(covers3):
    cov = covers3[2]
    fam = EndpointSeparation(0.5)
    sol = solve_modulus(cov, fam, 1.5, tol=0.02, batch=200)
    assert sol.converged
    assert sol.certificate_low <= sol.value <= sol.certificate_high
    # the returned weight is admissible for the whole family (independent check)
    assert _node_weighted_oracle(cov, sol.weights.values, 0.5) >= 1 - 1e-9
    assert admissibility_check(sol.weights, fam).admissible


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.3, 0.5, 0.8]))
def test_oracle_matches_dijkstra(covers3, seed, delta):
    cov = covers3[2]
    w = np.random.default_rng(seed).uniform(0.01, 1.0, cov.size)
    m, curves, unreachable = violations(w, EndpointSeparation(delta), cov, k=3)
    assert unreachable == 0
    assert m == pytest.approx(_node_weighted_oracle(cov, w, delta), rel=1e-10)
    lengths = [l for l, _ in curves]
    assert lengths == sorted(lengths)
    for l, path in curves:
        assert rho_length(w, path) == pytest.approx(l, rel=1e-10)


def test_join_points(covers3):
    cov = covers3[2]
    sol = solve_modulus(cov, JoinPoints(), 2.0, tol=0.01, batch=50)
    assert sol.converged and sol.value > 0
    sep = solve_modulus(cov, EndpointSeparation(0.5), 2.0, tol=0.01, batch=200)
    # curves from x- to x+ have endpoints 1 apart, so they form a subfamily
    assert sol.value <= sep.certificate_high * (1 + 1e-9)


def test_text_roundtrip():
    curves = [[0, 1], [1, 2, 3]]
    assert instance_from_text(instance_to_text(curves, 4, 2.0, 1e-6)) == (curves, 4, 2.0, 1e-6)
    sol = solve_modulus(4, ExplicitList(curves), 2.0, tol=1e-6)
    back = solution_from_text(solution_to_text(sol))
    assert back["value"] == sol.value
    assert np.array_equal(back["weights"], sol.weights.values)


def test_input_validation(covers3):
    with pytest.raises(ValueError):
        solve_modulus(3, ExplicitList([[0, 1]]), 1.0)
    with pytest.raises(ValueError):
        solve_modulus(3, ExplicitList([[0, 5]]), 2.0)
    with pytest.raises(ValueError):
        WeightFunction([1.0, -1.0])
    with pytest.raises(ValueError):
        EndpointSeparation(0.0)
    with pytest.raises(ValueError):
        solve_modulus(covers3[1], EndpointSeparation(2.0), 2.0)
    with pytest.raises(ValueError):
        incidence([[0, 3]], 2)


def test_fit_decay_recovers_slope():
    ns = np.arange(5)
    slope, se, resid = fit_decay(ns, 3.0 * np.exp(-0.7 * ns))
    assert slope == pytest.approx(-0.7) and resid < 1e-12


def test_critical_exponent_never_extrapolates(covers3):
    res = critical_exponent_estimate(lambda n: covers3[n], EndpointSeparation(0.5), [1.5],
                                     [1, 2, 3], tol=0.05, batch=200)
    assert res.p_c in (None, 1.5)
    assert len(res.rows) == 3


def test_early_stop_scans_in_order(covers3):
    cov = covers3[2]
    w = np.full(cov.size, 0.01)
    order = np.arange(cov.size)[::-1]
    scratch = {}
    m, curves, _ = violations(w, EndpointSeparation(0.5), cov, k=5, limit=1.0,
                              stop_below=0.99, order=order, scratch=scratch)
    assert len(curves) == 5 and m < 0.99
    scanned = ~np.isnan(scratch["best"])
    # the scan stopped early, and only a prefix of the order was visited
    assert 5 <= scanned.sum() < cov.size
    assert scanned[order[:scanned.sum()]].all()
    full, _, _ = violations(w, EndpointSeparation(0.5), cov, k=1)
    assert full <= m
