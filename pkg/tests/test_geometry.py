import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from scipy.special import gammaln

from estkit.errors import InvalidParam, NoClosedForm, Unbounded, ZeroMatrix, ZeroVector
from estkit.geometry import (
    analytic_width_bounds,
    descent_cone_distances,
    descent_cone_width_l1,
    effective_rank,
    effective_sparsity,
    escape_probability_bound,
    expected_gaussian_norm,
    gaussian_draws as _draw_chunks,
    local_mean_width_mc,
    local_width_samples,
    mean_width_mc,
    width_samples,
)
from estkit.sets import make_set


def gaussian_draws(seed, trials, n):
    return np.vstack([G for _, G in _draw_chunks(seed, trials, n)])


def chi_mean(n):
    return math.sqrt(2) * math.exp(gammaln((n + 1) / 2) - gammaln(n / 2))


def test_expected_gaussian_norm_closed_form():
    for n in (1, 2, 5, 100):
        assert expected_gaussian_norm(n) == pytest.approx(chi_mean(n), rel=1e-12)


def test_ball_width_n2():
    est = mean_width_mc(make_set("EuclideanBall", n=2, radius=1.0), 100_000, 11)
    assert abs(est.mean - 2 * math.sqrt(math.pi / 2)) <= 3 * est.stderr
    assert est.kind == "global" and est.trials == 100_000


def test_width_estimate_stderr_definition():
    K = make_set("L1Ball", n=5, radius=1.0)
    samples = width_samples(K, 50, 3)
    est = mean_width_mc(K, 50, 3)
    assert est.mean == pytest.approx(samples.mean())
    assert est.stderr == pytest.approx(samples.std(ddof=1) / math.sqrt(50))


def test_width_needs_two_trials():
    with pytest.raises(InvalidParam):
        mean_width_mc(make_set("L1Ball", n=3, radius=1.0), 1, 0)


def test_singleton_width_zero():
    est = mean_width_mc(make_set("FiniteSet", n=3, points=[[1.0, 2.0, 3.0]]), 100, 0)
    assert est.mean == 0.0


def test_width_cone_unbounded():
    with pytest.raises(Unbounded):
        mean_width_mc(make_set("SparseCone", n=4, s=1), 10, 0)


def test_convex_sparse_analytic_band():
    K = make_set("ConvexSparse", n=128, s=4, radius=1.0)
    lo, hi = analytic_width_bounds(K)
    est = mean_width_mc(K, 2000, 1)
    assert lo <= est.mean <= hi


def test_width_determinism():
    K = make_set("ConvexSparse", n=32, s=3, radius=1.0)
    assert mean_width_mc(K, 300, 5) == mean_width_mc(K, 300, 5)


def test_common_random_numbers_across_chunks():
    # the first rows of a longer run equal a shorter run with the same seed
    a = gaussian_draws(4, 10, 3)
    b = gaussian_draws(4, 3000, 3)
    assert np.array_equal(a, b[:10])


def test_local_width_large_radius_equals_global():
    K = make_set("EuclideanBall", n=3, radius=1.0)
    g = mean_width_mc(K, 2000, 2)
    loc = local_mean_width_mc(K, 10.0, 2000, 2)
    assert loc.mean == pytest.approx(g.mean, rel=1e-12)


def test_local_width_small_radius_ball():
    est = local_mean_width_mc(make_set("EuclideanBall", n=2, radius=1.0), 0.1, 20000, 3)
    assert abs(est.mean - 0.1 * chi_mean(2)) <= 3 * est.stderr


def test_local_width_sanity_cap():
    K = make_set("L1Ball", n=20, radius=1.0)
    r = 0.3
    loc = local_width_samples(K, r, 500, 8)
    glob = width_samples(K, 500, 8)
    G = gaussian_draws(8, 500, 20)
    assert np.all(loc <= glob + 1e-9)
    assert np.all(loc <= r * np.linalg.norm(G, axis=1) + 1e-9)


def test_local_width_generic_matches_brute_force():
    # (K - K) ∩ rB for K = L1Ball in 2-D: maximize over a fine polar grid
    K = make_set("L1Ball", n=2, radius=1.0)
    r = 0.8
    vals = local_width_samples(K, r, 20, 9)
    G = gaussian_draws(9, 20, 2)
    th = np.linspace(0, 2 * np.pi, 20001)
    U = np.column_stack([np.cos(th), np.sin(th)])
    # radial extent of 2 B_1 ∩ r B_2 along each direction
    rad = np.minimum(2.0 / np.abs(U).sum(axis=1), r)
    brute = (G @ (U * rad[:, None]).T).max(axis=1)
    assert np.allclose(vals, brute, atol=1e-6)


def test_lowrank_local_width_bound():
    K = make_set("LowRankCone", n=36, r=1, d1=6, d2=6)
    est = local_mean_width_mc(K, 1.0, 500, 4)
    assert est.mean <= 2 * math.sqrt(2 * 1 * 12)


def test_local_width_rejects_bad_radius():
    with pytest.raises(InvalidParam):
        local_mean_width_mc(make_set("L1Ball", n=2, radius=1.0), 0.0, 10, 0)


def test_analytic_bounds_examples():
    lo, hi = analytic_width_bounds(make_set("NuclearBall", n=2500, radius=1.0, d1=50, d2=50))
    assert hi == pytest.approx(4 * math.sqrt(50))
    assert analytic_width_bounds(make_set("FiniteSet", n=2, points=[[1.0, 0.0]])) == (0.0, 0.0)
    lo, hi = analytic_width_bounds(make_set("EuclideanBall", n=100, radius=1.0))
    assert hi == pytest.approx(20.0) and lo == pytest.approx(20 / math.sqrt(2))
    with pytest.raises(NoClosedForm):
        analytic_width_bounds(make_set("DictionaryHull", n=2, D=np.eye(2), radius=1.0))


def test_effective_sparsity_and_rank():
    assert effective_sparsity(np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert effective_sparsity(np.ones(4)) == pytest.approx(4.0)
    assert effective_sparsity(np.array([1.0, 0.1, 0.1])) == pytest.approx(1.44 / 1.02)
    assert effective_rank(np.diag([1.0, 0.0])) == pytest.approx(1.0)
    assert effective_rank(np.eye(3)) == pytest.approx(3.0)
    assert effective_rank(np.diag([2.0, 1.0])) == pytest.approx(1.8)
    with pytest.raises(ZeroVector):
        effective_sparsity(np.zeros(3))
    with pytest.raises(ZeroMatrix):
        effective_rank(np.zeros((2, 2)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=12))
@example([4.40585450051434e-277])
def test_effective_sparsity_range(vals):
    a = np.array(vals)
    if not np.any(a):
        return
    e = effective_sparsity(a)
    assert 1 - 1e-9 <= e <= np.count_nonzero(a) + 1e-9


def test_descent_cone_dense_vector():
    est = descent_cone_width_l1(np.array([1.0, 1.0]), 4000, 0)
    assert 0 <= est.mean <= chi_mean(2)


def test_descent_cone_band_n128():
    x = np.zeros(128)
    x[:4] = 1.0
    est = descent_cone_width_l1(x, 2000, 1)
    base = math.sqrt(4 * math.log(2 * 128 / 4))
    assert base / 3 <= est.mean <= 3 * base
    assert est.kind == "cone"


def test_descent_cone_mesh_oracle_2d():
    # D(K, x) for x = e1 in 2-D is {u : u1 + |u2| <= 0 ... } scaled; use a mesh of the sphere
    x = np.array([1.0, 0.0])
    G = gaussian_draws(5, 400, 2)
    exact = descent_cone_distances(x, G)
    th = np.linspace(0, 2 * np.pi, 200001)
    U = np.column_stack([np.cos(th), np.sin(th)])
    # u is a descent direction iff ||x + t u||_1 <= ||x||_1 for small t > 0
    in_cone = U[:, 0] + np.abs(U[:, 1]) <= 1e-12
    brute = np.maximum((G @ U[in_cone].T).max(axis=1), 0.0)
    assert abs(exact.mean() - brute.mean()) <= 1e-2
    assert np.allclose(exact, brute, atol=1e-3)


def test_descent_cone_zero_vector():
    with pytest.raises(ZeroVector):
        descent_cone_width_l1(np.zeros(3), 10, 0)


def test_escape_bound_formula():
    val = escape_probability_bound(100, 5.0)
    assert val == pytest.approx(1 - 2.5 * math.exp(-((100 / math.sqrt(101) - 5) ** 2) / 18), rel=1e-14)
    assert val == pytest.approx(0.35928, abs=1e-5)
    assert escape_probability_bound(100, 10.0) == 0.0
    seq = [escape_probability_bound(m, 3.0) for m in (50, 100, 400, 1600, 6400)]
    assert all(a <= b for a, b in zip(seq, seq[1:]))
    assert seq[-1] > 0.999


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), shift=st.floats(-5, 5))
def test_translation_invariance(seed, shift):
    # K + v has the same K - K; support of the shifted finite set per draw
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((6, 3))
    K = make_set("FiniteSet", n=3, points=P)
    Kv = make_set("FiniteSet", n=3, points=P + shift)
    a = width_samples(K, 50, seed % 1000)
    b = width_samples(Kv, 50, seed % 1000)
    assert np.allclose(a, b, atol=1e-9)


def test_monotonicity_per_draw():
    a = width_samples(make_set("EuclideanBall", n=5, radius=1.0), 200, 3)
    b = width_samples(make_set("EuclideanBall", n=5, radius=2.0), 200, 3)
    assert np.all(a <= b)


def test_ball_gaussian_vs_spherical_width():
    # ball: spherical width is 2 (every direction), so w = E||g|| * 2
    n = 10
    est = mean_width_mc(make_set("EuclideanBall", n=n, radius=1.0), 20000, 6)
    assert abs(est.mean - 2 * chi_mean(n)) <= 3 * est.stderr
