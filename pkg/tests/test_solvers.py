import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estkit.errors import EmptyIntersection, InvalidParam
from estkit.sets import make_set
from estkit.solvers import (
    gauge_min,
    l1_min,
    operator_norm,
    pocs_intersect,
    project_l1_tube,
    truncated_svd,
    tube_gap,
)


def rand(seed, *shape):
    return np.random.default_rng(seed).standard_normal(shape)


# -- tube projection ----------------------------------------------------------

def test_tube_feasible_point_unchanged():
    A, x = rand(0, 10, 4), rand(1, 4)
    y = A @ x + 0.01
    out = project_l1_tube(A, y, 0.05, x, 100)
    assert out is x or np.array_equal(out, x)


def test_tube_square_invertible():
    A, y = rand(2, 5, 5), rand(3, 5)
    out = project_l1_tube(A, y, 0.0, np.zeros(5), 500)
    assert np.allclose(out, np.linalg.solve(A, y), atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), eps=st.floats(0.0, 0.5))
def test_tube_output_feasible(seed, eps):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((15, 8))
    # nonempty tube: y within the l1 budget of the range of A
    nu = rng.uniform(-1, 1, 15)
    nu *= eps / max(np.abs(nu).mean(), 1e-300)
    y = A @ rng.standard_normal(8) + nu
    out = project_l1_tube(A, y, eps, rng.standard_normal(8), 2000)
    assert np.abs(A @ out - y).mean() - eps <= 1e-8


# -- POCS ---------------------------------------------------------------------

def test_pocs_square_recovers_point():
    A = rand(4, 6, 6)
    K = make_set("EuclideanBall", n=6, radius=1.0)
    x = rand(5, 6)
    x *= 0.7 / np.linalg.norm(x)
    xh, diag = pocs_intersect(K, A, A @ x, 0.0)
    assert np.allclose(xh, x, atol=1e-6)


def test_pocs_feasibility_recheck():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((5, 10))
    x = rng.standard_normal(10)
    x *= 0.5 / np.linalg.norm(x)
    K = make_set("EuclideanBall", n=10, radius=1.0)
    xh, diag = pocs_intersect(K, A, A @ x, 0.0)
    assert diag.converged
    assert np.linalg.norm(xh) <= 1 + 1e-8
    assert tube_gap(A, A @ x, 0.0, xh) <= 1e-8


def test_pocs_empty_intersection():
    A = rand(7, 6, 6)
    x = rand(8, 6)
    x /= np.linalg.norm(x)
    K = make_set("EuclideanBall", n=6, radius=0.1)
    with pytest.raises(EmptyIntersection):
        pocs_intersect(K, A, A @ x, 0.0)


# -- gauge minimization -------------------------------------------------------

def test_gauge_min_square():
    A, x = rand(9, 5, 5), rand(10, 5)
    K = make_set("L1Ball", n=5, radius=1.0)
    xh, diag = gauge_min(K, A, A @ x, 0.0)
    assert np.allclose(xh, x, atol=1e-6)
    assert diag.objective == pytest.approx(K.gauge(xh), rel=1e-9)


def test_gauge_min_zero_data():
    A = rand(11, 4, 6)
    xh, diag = gauge_min(make_set("L1Ball", n=6, radius=1.0), A, np.zeros(4), 0.0)
    assert not xh.any() and diag.objective == 0.0


@pytest.mark.parametrize("seed", range(8))
def test_gauge_min_matches_lp(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(4, 13))
    m = int(rng.integers(2, n + 1))
    A = rng.standard_normal((m, n))
    x = np.zeros(n)
    x[rng.choice(n, 2, replace=False)] = rng.standard_normal(2)
    eps = 0.0 if seed % 2 == 0 else 0.05
    y = A @ x + eps * rng.uniform(-1, 1, m)
    K = make_set("L1Ball", n=n, radius=1.0)
    xg, dg = gauge_min(K, A, y, eps)
    xl, dl = l1_min(A, y, eps, solver="lp")
    assert abs(dg.objective - dl.objective) <= 1e-4
    assert tube_gap(A, y, eps, xg) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_gauge_min_not_above_truth(seed):
    rng = np.random.default_rng(seed)
    n, m = 12, 6
    A = rng.standard_normal((m, n))
    x = rng.standard_normal(n)
    K = make_set("ConvexSparse", n=n, s=3, radius=1.0)
    y = A @ x
    xh, _ = gauge_min(K, A, y, 0.0)
    assert K.gauge(xh) <= K.gauge(x) + 1e-3


# -- l1 minimization ----------------------------------------------------------

def test_l1_zero():
    xh, diag = l1_min(rand(12, 3, 5), np.zeros(3))
    assert not xh.any()
    assert diag.path == "lp"


def test_l1_identity():
    y = rand(13, 8)
    xh, _ = l1_min(np.eye(8), y)
    assert np.allclose(xh, y, atol=1e-12)


def _vertex_oracle(A, y):
    """Minimum l1 norm over basic solutions: enumerate every m-column support."""
    m, n = A.shape
    best = np.inf
    for S in itertools.combinations(range(n), m):
        B = A[:, S]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        best = min(best, np.abs(np.linalg.solve(B, y)).sum())
    return best


def test_l1_one_sparse_vertex_oracle():
    rng = np.random.default_rng(14)
    n, m = 12, 8
    A = rng.standard_normal((m, n))
    x = np.zeros(n)
    x[5] = 1.3
    y = A @ x
    xh, diag = l1_min(A, y)
    assert np.allclose(xh, x, atol=1e-6)
    assert diag.objective == pytest.approx(_vertex_oracle(A, y), abs=1e-9)


def test_l1_splitting_path():
    rng = np.random.default_rng(15)
    A = rng.standard_normal((6, 10))
    y = A @ np.eye(10)[2]
    xs, ds = l1_min(A, y, 0.0, solver="splitting")
    xl, dl = l1_min(A, y, 0.0, solver="lp")
    assert ds.path == "splitting" and dl.path == "lp"
    assert np.allclose(xs, xl, atol=1e-5)


def test_l1_overdetermined_noiseless():
    rng = np.random.default_rng(16)
    A = rng.standard_normal((40, 10))
    x = rng.standard_normal(10)
    xh, diag = l1_min(A, A @ x)
    assert np.allclose(xh, x, atol=1e-9)


def test_l1_invalid():
    with pytest.raises(InvalidParam):
        l1_min(np.eye(2), np.ones(2), -1.0)
    with pytest.raises(InvalidParam):
        l1_min(np.eye(2), np.ones(2), 0.0, solver="magic")


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_l1_support_at_most_m(seed):
    rng = np.random.default_rng(seed)
    n, m = 30, 10
    A = rng.standard_normal((m, n))
    y = A @ rng.standard_normal(n) + 0.1 * rng.uniform(-1, 1, m)
    xh, diag = l1_min(A, y, 0.05)
    assert np.count_nonzero(np.abs(xh) > 1e-6 * np.abs(xh).max()) <= m
    assert diag.feasibility_gap <= 1e-6


def test_solver_determinism():
    A, y = rand(17, 10, 20), rand(18, 10)
    a, _ = l1_min(A, y, 0.1)
    b, _ = l1_min(A, y, 0.1)
    assert np.array_equal(a, b)
    K = make_set("ConvexSparse", n=20, s=2, radius=1.0)
    assert np.array_equal(gauge_min(K, A, y, 0.1)[0], gauge_min(K, A, y, 0.1)[0])


# -- SVD and operator norm ----------------------------------------------------

def test_truncated_svd_low_rank_exact():
    rng = np.random.default_rng(19)
    Y = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    X, _ = truncated_svd(Y, 2)
    assert np.allclose(X, Y, atol=1e-10)


def test_truncated_svd_diag():
    X, s = truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(X, np.diag([3.0, 2.0, 0.0]), atol=1e-12)
    assert np.allclose(s, [3, 2, 1])


def test_truncated_svd_random_competitors():
    rng = np.random.default_rng(20)
    Y = rng.standard_normal((20, 15))
    X, s = truncated_svd(Y, 3)
    best = np.linalg.norm(Y - X)
    for _ in range(200):
        Z = rng.standard_normal((20, 3)) @ rng.standard_normal((3, 15))
        # give the competitor its best scaling along Y
        Z *= np.sum(Z * Y) / np.sum(Z * Z)
        assert best <= np.linalg.norm(Y - Z)
    assert best ** 2 == pytest.approx(np.sum(s[3:] ** 2), rel=1e-9)


def test_truncated_svd_rank_check():
    with pytest.raises(InvalidParam):
        truncated_svd(np.eye(3), 4)


def test_operator_norm_matches_svd():
    G = rand(21, 30, 20)
    assert operator_norm(G, rng=0) == pytest.approx(np.linalg.norm(G, 2), rel=1e-8)
