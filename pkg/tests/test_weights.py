import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdimlab.weights import (CLOSE, IN_T, NEAR, SCALED, SMALL_M, WeightParams,
                             build_paper_weight, calibrate, compute_context,
                             eventually_nonincreasing, f_branch, f_v, lemma34_check, m_value,
                             measure_K7, toy_recursion, tree_projection, uniform_weight,
                             verify_admissibility, verify_max_bound, volume_diagnostics)


@pytest.fixture(scope="module")
def calibrated(space3, covers3):
    covers = {n: covers3[n] for n in (1, 2, 3)}
    params, log = calibrate(space3, covers, WeightParams(a=3, delta=0.5, delta_prime=0.5, p=1.5))
    weights = {n: build_paper_weight(space3, covers[n], params) for n in covers}
    return params, log, weights


def _recursion_oracle(p, depth, C, base=3):
    # direct transcription with exact annulus sums, no shared code
    a = [1.0]
    for n in range(1, depth + 1):
        s = 0.0
        for i in range(n):
            for j in range(i + 1, n + 1):
                s += base ** (j - i) * a[n - j] * (base ** (j - i) * n) ** (-p)
        a.append(C * s)
    return a


def test_recursion_first_terms_by_hand():
    r = toy_recursion(1.5, 6, C=2.0)
    # a_1 = 2 * 3 / 3**1.5 = 2 / sqrt(3)
    assert r.a[0] == 1.0
    assert r.a[1] == pytest.approx(2 / math.sqrt(3), rel=1e-14)
    # a_2 = (2/2**1.5) * (3 a_1 / 3**1.5 + 9 a_0 / 9**1.5 + 3 a_0 / 3**1.5)
    a2 = 2 / 2 ** 1.5 * (r.a[1] / math.sqrt(3) + 1 / 3 + 1 / math.sqrt(3))
    assert r.a[2] == pytest.approx(a2, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.1, 3.0), st.integers(2, 8), st.floats(0.5, 4.0))
def test_recursion_matches_oracle_and_bound(p, depth, C):
    r = toy_recursion(p, depth, C=C)
    assert np.allclose(r.a, _recursion_oracle(p, depth, C), rtol=1e-12)
    for n in range(2, depth + 1):
        assert r.a[n] <= r.C_prime / n ** (p - 1) * r.a[:n].max() * (1 + 1e-12)


def test_recursion_default_eventually_nonincreasing():
    r = toy_recursion(1.5, 6)
    assert eventually_nonincreasing(r.a)
    assert np.isfinite(r.C_prime)


def test_eventually_nonincreasing():
    assert eventually_nonincreasing([1, 3, 2, 1])
    assert not eventually_nonincreasing([1, 2, 3])
    assert eventually_nonincreasing([1, 1, 1])


def test_m_value():
    assert m_value(1.0, 4, 3) == max(math.floor(4 - math.log(2, 3)), 0) == 3
    assert m_value(1 / 9, 2, 3) == 0
    assert m_value(1 / 3, 4, 3) == 2


@settings(max_examples=100)
@given(st.floats(0, 2), st.integers(0, 6), st.booleans())
def test_f_v_branches(d, m, in_T):
    f, b = f_branch(d, m, in_T, 3)
    assert f == f_v(d, m, in_T, 3)
    if in_T:
        assert (f, b) == (1.0, IN_T)
    elif d <= 3.0 ** -m:
        assert (f, b) == (1.0, CLOSE)
    else:
        assert b == SCALED and f == pytest.approx(m * d)


def test_T_is_root_hull(space3):
    ctx = compute_context(space3, WeightParams(delta=0.5, delta_prime=0.5), 2)
    assert ctx.in_T[0] and ctx.in_T.sum() == 1
    ctx = compute_context(space3, WeightParams(delta=0.5, delta_prime=0.2), 2)
    assert set(np.flatnonzero(ctx.in_T)) == {0} | set(np.flatnonzero(space3.circle_level == 1))


def test_projection_is_lca_of_met_circles(covers3, space3):
    cov = covers3[2]
    for i in range(0, cov.size, 7):
        v = tree_projection(cov, i)
        ball = cov.ball(i)
        owners = set(space3.node_owner[ball].tolist())
        anc = set(space3.ancestors(v))
        for o in owners:
            assert v in space3.ancestors(o) or o == v
        assert v in anc


def test_weight_replay_and_formula(calibrated, space3):
    params, _, weights = calibrated
    for n, w in weights.items():
        for i in range(w.values.size):
            assert w.replay(i) == pytest.approx(w.values[i], rel=1e-13)
        # independent evaluation of each factor from its recorded branch
        for k in range(w.factor_vertex.size):
            b = w.factor_branch[k]
            if b in (NEAR, SMALL_M):
                assert w.factor_value[k] == 1.0
            else:
                assert w.factor_value[k] == pytest.approx(params.E3 / w.factor_f[k])
        assert np.all(w.values > 0)


def test_root_factor_is_E3_when_m_large(calibrated):
    params, _, weights = calibrated
    w = weights[3]
    root = w.factor_ptr[:-1]
    assert np.all(w.factor_vertex[root] == 0)
    vals = w.factor_value[root]
    assert set(np.round(vals, 12)) <= {1.0, round(params.E3, 12)}


def test_calibrated_weights_admissible(calibrated):
    params, log, weights = calibrated
    assert params.E2 == pytest.approx(log[0]["K7"] + 2)
    for w in weights.values():
        rep = verify_admissibility(w, params.delta_prime)
        assert rep.admissible, rep.provenance


def test_scaling_E1_is_linear(space3, covers3):
    p1 = WeightParams(E1=1.0, E3=1.5)
    p2 = p1.replace(E1=2.5)
    w1 = build_paper_weight(space3, covers3[2], p1)
    w2 = build_paper_weight(space3, covers3[2], p2)
    assert np.allclose(w2.values, 2.5 * w1.values, rtol=1e-14)


def test_volume_two_ways(calibrated):
    params, _, weights = calibrated
    for w in weights.values():
        vd = volume_diagnostics(w, params.p)
        assert vd.vol_tree == pytest.approx(vd.vol, rel=1e-12)
        assert np.all(vd.V >= 0)
        # a circle no set projects below carries no volume
        sp = w.cover.space
        below = np.zeros(sp.n_circles, dtype=bool)
        for v in w.factor_vertex:
            below[v] = True
        assert np.all(vd.V[~below] == 0)


def test_lemma34_on_weights(calibrated):
    _, _, weights = calibrated
    for w in weights.values():
        for eps in (0.1, 0.5):
            assert lemma34_check(w.values, 1.5, eps)[2]


@settings(max_examples=200)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=50),
       st.floats(1.0, 4.0), st.floats(0.0, 2.0))
def test_lemma34_property(values, p, eps):
    lhs, rhs, ok = lemma34_check(values, p, eps)
    assert ok


def test_max_bound(calibrated):
    _, _, weights = calibrated
    mb = verify_max_bound([weights[n] for n in (1, 2, 3)])
    assert mb.n_sup == pytest.approx([n * weights[n].values.max() for n in (1, 2, 3)])
    with pytest.raises(ValueError):
        verify_max_bound([weights[1]])


def test_uniform_weight_not_admissible_when_small(covers3):
    w = uniform_weight(covers3[2], 1e-3)
    assert not verify_admissibility(w, 0.5).admissible


def test_K7_at_least_one(covers3):
    assert measure_K7([covers3[2]]) >= 1.0


def test_params_validation_and_json():
    p = WeightParams(E1=3.0, E3=2.0)
    assert WeightParams.from_json(p.to_json("abc")) == p
    with pytest.raises(ValueError):
        WeightParams(delta=0.3, delta_prime=0.5)
    with pytest.raises(ValueError):
        WeightParams(p=1.0)
    with pytest.raises(ValueError):
        WeightParams(E1=0.5)


def test_weight_rejects_foreign_cover(space2, covers3):
    with pytest.raises(ValueError):
        build_paper_weight(space2, covers3[2], WeightParams())
