import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estkit.errors import InvalidParam, NoClosedForm, NoRepresentation, Unbounded, ZeroVector
from estkit.sets import (
    SetDescriptor,
    convex_hull_descriptor,
    hard_threshold,
    make_set,
    project_l1_ball,
)


def ball(n, r=1.0):
    return make_set("EuclideanBall", n=n, radius=r)


def l1(n, r=1.0):
    return make_set("L1Ball", n=n, radius=r)


# -- construction -------------------------------------------------------------

def test_make_l1_ball():
    K = l1(3)
    assert K.kind == "L1Ball" and K.n == 3


@pytest.mark.parametrize(
    "kind, n, params",
    [
        ("SparseCone", 3, {"s": 5}),
        ("EuclideanBall", 3, {"radius": 0.0}),
        ("L1Ball", 3, {"radius": -1.0}),
        ("LowRankCone", 4, {"r": 3, "d1": 2, "d2": 2}),
        ("NuclearBall", 5, {"radius": 1.0, "d1": 2, "d2": 2}),
        ("Nonsense", 3, {}),
    ],
)
def test_make_set_rejects(kind, n, params):
    with pytest.raises(InvalidParam):
        make_set(kind, n=n, **params)


def test_dictionary_column_norm_rejected():
    D = np.array([[1.5, 0.0], [0.0, 1.0]])
    with pytest.raises(InvalidParam):
        make_set("DictionaryHull", n=2, D=D, radius=1.0)


def test_descriptor_json_roundtrip_dictionary():
    D = np.array([[1.0, 0.0, 0.6], [0.0, 1.0, 0.8]])
    K = make_set("DictionaryHull", n=2, D=D, radius=2.0)
    text = K.descriptor.to_json()
    obj = json.loads(text)
    # column-major: first column comes first
    assert obj["params"]["D"][:2] == [1.0, 0.0]
    K2 = make_set(text)
    assert np.array_equal(K2.D, D)
    assert K2.radius == 2.0


def test_descriptor_rejects_unknown_keys():
    with pytest.raises(InvalidParam):
        SetDescriptor.from_dict({"kind": "L1Ball", "n": 2, "params": {"radius": 1}, "extra": 1})


# -- support ------------------------------------------------------------------

def test_support_l1():
    res = l1(3).support(np.array([1.0, -2.0, 3.0]))
    assert res.value == 3.0
    assert np.array_equal(res.argmax, [0.0, 0.0, 1.0])


def test_support_nuclear_identity():
    K = make_set("NuclearBall", n=4, radius=1.0, d1=2, d2=2)
    assert K.support(np.eye(2).reshape(-1)).value == pytest.approx(1.0, abs=1e-12)


def _brute_sparse_support(eta, s):
    # best unit vector on each s-subset is eta restricted and normalized
    return max(np.linalg.norm(eta[list(c)]) for c in itertools.combinations(range(eta.size), s))


def test_support_sparse_unit_brute_force():
    eta = np.array([3.0, -1.0, 2.0, 0.5])
    K = make_set("SparseUnitSet", n=4, s=2)
    assert K.support(eta).value == pytest.approx(np.sqrt(13), abs=1e-12)
    assert _brute_sparse_support(eta, 2) == pytest.approx(np.sqrt(13), abs=1e-12)


def test_support_cone_unbounded():
    K = make_set("SparseCone", n=3, s=1)
    with pytest.raises(Unbounded):
        K.support(np.array([1.0, 0.0, 0.0]))
    assert K.support(np.zeros(3)).value == 0.0


def test_support_dictionary_hull():
    D = np.column_stack([[1.0, 0.0], [0.0, 1.0], np.array([1.0, 1.0]) / np.sqrt(2)])
    K = make_set("DictionaryHull", n=2, D=D, radius=1.0)
    eta = np.array([1.0, 1.0])
    assert K.support(eta).value == pytest.approx(np.sqrt(2), abs=1e-12)


def test_support_finite_set():
    K = make_set("FiniteSet", n=2, points=[[1.0, 0.0], [0.0, 2.0]])
    res = K.support(np.array([1.0, 1.0]))
    assert res.value == 2.0
    assert np.array_equal(res.argmax, [0.0, 2.0])


# -- gauge --------------------------------------------------------------------

def test_gauge_l1():
    assert l1(2).gauge(np.array([0.5, 0.5])) == pytest.approx(1.0)


def test_gauge_nuclear():
    K = make_set("NuclearBall", n=4, radius=1.0, d1=2, d2=2)
    assert K.gauge(np.eye(2).reshape(-1)) == pytest.approx(2.0, abs=1e-12)


def test_gauge_dictionary_lp():
    D = np.column_stack([[1.0, 0.0], [0.0, 1.0], np.array([1.0, 1.0]) / np.sqrt(2)])
    K = make_set("DictionaryHull", n=2, D=D, radius=1.0)
    x = np.array([1.0, 1.0]) / np.sqrt(2)
    # brute force over the vertices: single atom (e1+e2)/sqrt2 gives 1, e1,e2 gives sqrt2
    assert K.gauge(x) == pytest.approx(1.0, abs=1e-9)


def test_gauge_dictionary_no_representation():
    D = np.array([[1.0], [0.0]])
    K = make_set("DictionaryHull", n=2, D=D, radius=1.0)
    with pytest.raises(NoRepresentation):
        K.gauge(np.array([0.0, 1.0]))


def test_gauge_convex_sparse():
    K = make_set("ConvexSparse", n=4, s=4, radius=1.0)
    x = np.full(4, 0.5)
    # ||x||_1 / sqrt(s) = 1 = ||x||_2
    assert K.gauge(x) == pytest.approx(1.0)


# -- projection ---------------------------------------------------------------

def test_project_sparse_cone():
    K = make_set("SparseCone", n=4, s=2)
    assert np.array_equal(K.project(np.array([3.0, -1.0, 2.0, 0.5])), [3.0, 0.0, 2.0, 0.0])


def test_project_ball_radial():
    assert np.allclose(ball(2).project(np.array([3.0, 4.0])), [0.6, 0.8])


def test_project_l1_grid_oracle():
    x = np.array([1.0, 1.0])
    p = l1(2).project(x)
    # brute-force grid over the l1 ball boundary and interior
    t = np.linspace(-1, 1, 2001)
    U, V = np.meshgrid(t, t)
    inside = np.abs(U) + np.abs(V) <= 1
    d = np.hypot(U - 1, V - 1)[inside]
    assert np.linalg.norm(p - x) <= d.min() + 1e-9
    assert np.allclose(p, [0.5, 0.5])


def test_hard_threshold_ties_lowest_index():
    assert np.array_equal(hard_threshold(np.array([1.0, -1.0, 1.0]), 2), [1.0, -1.0, 0.0])


def test_lowrank_projection_is_truncated_svd():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 3))
    K = make_set("LowRankCone", n=12, r=1, d1=4, d2=3)
    U, s, Vt = np.linalg.svd(X)
    assert np.allclose(K.project(X.reshape(-1)).reshape(4, 3), s[0] * np.outer(U[:, 0], Vt[0]))


def test_project_l1_ball_inside_unchanged():
    x = np.array([0.2, -0.3])
    assert np.array_equal(project_l1_ball(x, 1.0), x)


# -- contains -----------------------------------------------------------------

def test_contains_examples():
    assert l1(3).contains(np.array([0.3, 0.3, 0.3]), tol=0)
    assert make_set("SparseCone", n=2, s=1).contains(np.array([1.0, 1e-12]), tol=1e-9)
    K = make_set("LowRankCone", n=4, r=1, d1=2, d2=2)
    assert not K.contains(np.diag([1.0, 0.5]).reshape(-1), tol=1e-9)


# -- hulls and difference gauges ----------------------------------------------

def test_hull_convex_is_self():
    K = l1(3)
    assert convex_hull_descriptor(K) is K


def test_hull_finite_set():
    K = make_set("FiniteSet", n=2, points=[[1, 0], [-1, 0], [0, 1], [0, -1]])
    H = convex_hull_descriptor(K)
    assert H.kind == "DictionaryHull"
    assert np.array_equal(H.D, np.eye(2))
    assert H.radius == 1.0


def test_hull_sparse_unit():
    H = convex_hull_descriptor(make_set("SparseUnitSet", n=128, s=4))
    assert H.kind == "ConvexSparse" and H.s == 4 and H.radius == 1.0


def test_hull_cone_has_none():
    with pytest.raises(NoClosedForm):
        convex_hull_descriptor(make_set("SparseCone", n=3, s=1))


def test_difference_gauge_examples():
    assert l1(2).difference_gauge(np.array([2.0, 0.0])) == pytest.approx(1.0)
    assert ball(2).difference_gauge(np.array([0.0, 4.0])) == pytest.approx(2.0)
    K = make_set("ConvexSparse", n=4, s=2, radius=1.0)
    assert K.difference_gauge(np.eye(4)[0]) == pytest.approx(0.5)
    with pytest.raises(ZeroVector):
        K.difference_gauge(np.zeros(4))


# -- property tests -----------------------------------------------------------

def _bounded_sets(n):
    rng = np.random.default_rng(n)
    D = rng.standard_normal((n, 2 * n))
    D /= np.linalg.norm(D, axis=0)
    d1 = 2 if n % 2 == 0 else 1
    sets = [
        ball(n, 1.5),
        l1(n, 0.7),
        make_set("Hypercube", n=n, halfwidth=0.4),
        make_set("ConvexSparse", n=n, s=max(1, n // 3), radius=1.2),
        make_set("DictionaryHull", n=n, D=D, radius=1.0),
        make_set("NuclearBall", n=n, radius=1.0, d1=d1, d2=n // d1),
    ]
    return sets


vectors = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.sampled_from([2, 4, 6])


def _members(K, rng, count):
    """Random points of K: scaled projections of Gaussian draws."""
    if K.kind == "DictionaryHull":
        # direct sampling of radius * D alpha with ||alpha||_1 <= 1
        a = rng.standard_normal((count, K.D.shape[1]))
        a *= rng.uniform(0, 1, size=(count, 1)) / np.abs(a).sum(axis=1, keepdims=True)
        return K.radius * a @ K.D.T
    Z = rng.standard_normal((count, K.n)) * rng.uniform(0.1, 3.0, size=(count, 1))
    return np.array([K.project(z) for z in Z])


@settings(max_examples=25, deadline=None)
@given(n=dims, seed=vectors)
def test_support_gauge_duality(n, seed):
    rng = np.random.default_rng(seed)
    for K in _bounded_sets(n):
        x = rng.standard_normal(n)
        g = K.gauge(x)
        if not np.isfinite(g) or g == 0:
            continue
        x = x / g
        eta = rng.standard_normal(n)
        assert eta @ x <= K.support(eta).value + 1e-9


@settings(max_examples=25, deadline=None)
@given(n=dims, seed=vectors)
def test_argmax_consistency(n, seed):
    rng = np.random.default_rng(seed)
    for K in _bounded_sets(n) + [make_set("SparseUnitSet", n=n, s=1)]:
        eta = rng.standard_normal(n)
        res = K.support(eta)
        assert eta @ res.argmax == pytest.approx(res.value, abs=1e-9)
        assert K.contains(res.argmax, tol=1e-9)


@settings(max_examples=15, deadline=None)
@given(n=dims, seed=vectors)
def test_projection_optimality(n, seed):
    rng = np.random.default_rng(seed)
    for K in _bounded_sets(n):
        x = 2 * rng.standard_normal(n)
        p = K.project(x)
        Z = _members(K, rng, 100)
        assert np.linalg.norm(x - p) <= np.linalg.norm(x - Z, axis=1).min() + 1e-9


@settings(max_examples=25, deadline=None)
@given(n=dims, seed=vectors)
def test_projection_idempotent(n, seed):
    rng = np.random.default_rng(seed)
    cones = [make_set("SparseCone", n=n, s=1), make_set("SparseUnitSet", n=n, s=2)]
    for K in _bounded_sets(n) + cones:
        if K.kind == "DictionaryHull":
            continue  # iterative projection, checked below at its own tolerance
        p = K.project(2 * rng.standard_normal(n))
        assert np.allclose(K.project(p), p, atol=1e-12, rtol=0)


@settings(max_examples=10, deadline=None)
@given(seed=vectors)
def test_dictionary_projection_idempotent(seed):
    rng = np.random.default_rng(seed)
    K = _bounded_sets(4)[4]
    p = K.project(2 * rng.standard_normal(4))
    assert np.allclose(K.project(p), p, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(n=dims, seed=vectors, a=st.sampled_from([0.5, 2.0, 10.0]))
def test_gauge_homogeneity(n, seed, a):
    rng = np.random.default_rng(seed)
    for K in _bounded_sets(n):
        x = rng.standard_normal(n)
        assert K.gauge(a * x) == pytest.approx(a * K.gauge(x), rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(n=dims, seed=vectors)
def test_generic_prox_matches_closed_form(n, seed):
    rng = np.random.default_rng(seed)
    K = l1(n)
    v = 2 * rng.standard_normal(n)
    tau = float(rng.uniform(0.05, 1.0))
    closed = K.prox_gauge(v, tau)
    generic = type(K).__mro__[1].prox_gauge(K, v, tau)
    assert np.allclose(closed, generic, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=vectors)
def test_convex_sparse_prox_minimizes(n, seed):
    rng = np.random.default_rng(seed)
    s = int(rng.integers(1, n + 1))
    K = make_set("ConvexSparse", n=n, s=s, radius=float(rng.uniform(0.3, 2.0)))
    v = 3 * rng.standard_normal(n)
    tau = float(rng.uniform(0.01, 2.0))

    def f(x):
        return tau * K.gauge(x) + 0.5 * np.sum((x - v) ** 2)

    p = K.prox_gauge(v, tau)
    generic = type(K).__mro__[1].prox_gauge(K, v, tau)
    assert f(p) <= f(generic) + 1e-10
    for _ in range(20):
        assert f(p) <= f(p + 0.01 * rng.standard_normal(n)) + 1e-12
