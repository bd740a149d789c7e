"""Numerical engines behind the estimators.

* :func:`project_l1_tube` -- a point of ``{x : (1/m)||Ax - y||_1 <= eps}``
  near a starting point.
* :func:`pocs_intersect` -- alternating projections between a convex set
  and the tube.
* :func:`gauge_min` -- ``minimize ||x||_K s.t. (1/m)||Ax - y||_1 <= eps`` by
  an ADMM splitting that only needs the set's gauge prox.
* :func:`l1_min` -- the same program for ``K = B_1`` as an exact linear
  program, with the splitting scheme as a large-scale fallback.
* :func:`truncated_svd`, :func:`operator_norm`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

from .errors import EmptyIntersection, InvalidParam, NotConverged

__all__ = [
    "SolveDiagnostics",
    "project_l1_tube",
    "pocs_intersect",
    "gauge_min",
    "l1_min",
    "truncated_svd",
    "operator_norm",
    "tube_gap",
    "LP_MAX_N",
]

LP_MAX_N = 512
POCS_ITERS = 5000
POCS_TOL = 1e-8
PLATEAU_WINDOW = 50
PLATEAU_RTOL = 1e-4
FEAS_TOL = 1e-8
ADAPT_EVERY = 100
ADAPT_UNTIL = 1000


@dataclass
class SolveDiagnostics:
    iterations: int
    primal_residual: float
    feasibility_gap: float
    objective: float
    converged: bool
    path: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def tube_gap(A, y, eps, x) -> float:
    """``max(0, (1/m)||Ax - y||_1 - eps)``."""
    r = np.asarray(A) @ np.asarray(x) - np.asarray(y)
    return max(0.0, float(np.mean(np.abs(r))) - eps)


def _project_l1(z, radius):
    from .sets import project_l1_ball

    return project_l1_ball(z, radius)


class _Tube:
    """Projector-like map onto the l1 tube with the pseudo-inverse cached."""

    def __init__(self, A, y, eps):
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if eps < 0:
            raise InvalidParam("eps must be non-negative")
        self.eps = float(eps)
        self.m = self.A.shape[0]
        if self.y.shape != (self.m,):
            raise InvalidParam(f"y has length {self.y.size}, expected {self.m}")
        self.budget = self.m * self.eps
        self.pinv = np.linalg.pinv(self.A)

    def gap(self, x):
        return tube_gap(self.A, self.y, self.eps, x)

    def __call__(self, x0, iters=POCS_ITERS):
        A, y = self.A, self.y
        x0 = np.asarray(x0, dtype=float)
        r = A @ x0 - y
        if np.mean(np.abs(r)) <= self.eps:
            return x0.copy(), 0, 0.0
        base = x0 - self.pinv @ r
        # x(z) = x0 + pinv (y + z - A x0): smallest move putting Ax - y as close to z as possible
        z = _project_l1(r, self.budget)
        best, best_gap = x0, math.inf
        for k in range(1, iters + 1):
            x = base + self.pinv @ z
            res = A @ x - y
            gap = max(0.0, float(np.mean(np.abs(res))) - self.eps)
            if gap < best_gap:
                best, best_gap = x, gap
            if gap <= FEAS_TOL * max(1.0, self.eps):
                return x, k, gap
            z_new = _project_l1(res, self.budget)
            if np.allclose(z_new, z, rtol=0, atol=1e-15 * max(1.0, np.abs(z).max())):
                break
            z = z_new
        return best, k, best_gap


def project_l1_tube(A, y, eps, x0, iters: int = POCS_ITERS):
    """Return a point of the tube ``{x : (1/m)||Ax - y||_1 <= eps}`` near ``x0``.

    Alternates between the exact projection of the residual ``Ax - y`` onto
    the l1 ball of radius ``m * eps`` and a least-squares correction of
    ``x``.  When ``A`` has full row rank a single step is exact.

    Raises
    ------
    NotConverged
        If the feasibility gap stays above ``1e-8``; the best iterate is
        attached to the exception.
    """
    tube = _Tube(A, y, eps)
    x, k, gap = tube(x0, iters)
    if gap > FEAS_TOL * max(1.0, tube.eps):
        diag = SolveDiagnostics(k, gap, gap, math.nan, False, "tube")
        raise NotConverged(f"tube projection stalled at gap {gap:.3g}", x, diag)
    return x


def _convexified(K):
    from .sets import convex_hull_descriptor

    return K if K.convex else convex_hull_descriptor(K)


def pocs_intersect(K, A, y, eps, iters: int = POCS_ITERS, tol: float = POCS_TOL, x0=None):
    """Find a point of ``K`` intersected with the l1 tube by alternating projections.

    Non-convex sets are replaced by their convex stand-in first.  The
    returned point lies in the tube; ``converged`` means its distance to
    ``K`` is at most ``tol``.  If the gap between the two sets stops
    shrinking (relative change below ``1e-4`` over 50 iterations) the sets
    are declared disjoint.

    Returns
    -------
    x : ndarray
    diagnostics : SolveDiagnostics
    """
    K = _convexified(K)
    tube = _Tube(A, y, eps)
    x = np.zeros(K.n) if x0 is None else np.asarray(x0, dtype=float)
    x, _, gap = tube(x)
    history = []
    dist = math.inf
    k = 0
    for k in range(1, iters + 1):
        p = K.project(x)
        x, _, gap = tube(p)
        dist = float(np.linalg.norm(x - p))
        history.append(dist)
        if dist <= tol * max(1.0, float(np.linalg.norm(x))) and gap <= tol:
            diag = SolveDiagnostics(k, dist, gap, K.gauge(x), True, "pocs")
            return x, diag
        if k > 2 * PLATEAU_WINDOW:
            before = history[-PLATEAU_WINDOW - 1]
            if before - dist <= PLATEAU_RTOL * dist:
                diag = SolveDiagnostics(k, dist, gap, K.gauge(x), False, "pocs")
                raise EmptyIntersection(
                    f"alternating projections plateaued at distance {dist:.3g}", x, diag
                )
    diag = SolveDiagnostics(k, dist, gap, K.gauge(x), False, "pocs")
    return x, diag


def gauge_min(
    K,
    A,
    y,
    eps,
    *,
    iters: int = 20000,
    tol: float = 1e-9,
    rho: float = 1.0,
    raise_on_fail: bool = False,
):
    """``minimize ||x||_K subject to (1/m)||Ax - y||_1 <= eps``.

    ADMM on the split ``x = w``, ``Ax = z`` with ``w`` handled by the gauge
    prox of ``K`` and ``z`` by projection onto the tube.  The final iterate
    is pushed into the tube with :func:`project_l1_tube`, so the returned
    point is feasible to ``1e-8`` whenever the tube is nonempty.
    """
    K = _convexified(K)
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    m, n = A.shape
    tube = _Tube(A, y, eps)
    budget = tube.budget
    if not np.any(y) or np.mean(np.abs(y)) <= eps:
        x = np.zeros(n)
        return x, SolveDiagnostics(0, 0.0, 0.0, 0.0, True, "splitting")

    chol = cho_factor(np.eye(n) + A.T @ A)
    scale = max(1.0, float(np.linalg.norm(y)))
    w = np.zeros(n)
    z = y.copy()
    u1 = np.zeros(n)
    u2 = np.zeros(m)
    converged = False
    primal = math.inf
    k = 0
    for k in range(1, iters + 1):
        x = cho_solve(chol, w - u1 + A.T @ (z - u2))
        Ax = A @ x
        w_old, z_old = w, z
        w = K.prox_gauge(x + u1, 1.0 / rho)
        z = y + _project_l1(Ax + u2 - y, budget)
        r1 = x - w
        r2 = Ax - z
        u1 += r1
        u2 += r2
        primal = math.sqrt(float(r1 @ r1 + r2 @ r2))
        dual = rho * float(np.linalg.norm((w - w_old) + A.T @ (z - z_old)))
        if primal <= tol * scale and dual <= tol * scale:
            converged = True
            break
        # residual balancing only during warm-up; late changes of rho stall ADMM
        if k <= ADAPT_UNTIL and k % ADAPT_EVERY == 0:
            if primal > 10 * dual:
                rho *= 2.0
                u1 /= 2.0
                u2 /= 2.0
            elif dual > 10 * primal:
                rho /= 2.0
                u1 *= 2.0
                u2 *= 2.0

    x_hat, _, gap = tube(w)
    converged = converged and gap <= FEAS_TOL * max(1.0, eps)
    diag = SolveDiagnostics(k, primal, gap, K.gauge(x_hat), converged, "splitting")
    if raise_on_fail and not converged:
        raise NotConverged("gauge minimization did not converge", x_hat, diag)
    return x_hat, diag


_LP_ATTEMPTS = (
    ("highs-ds", {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}),
    ("highs-ds", {}),
    ("highs", {}),
)


def _linprog(c, **kw):
    # tight tolerances occasionally leave HiGHS without a status; relax in steps
    res = None
    for method, opts in _LP_ATTEMPTS:
        res = linprog(c, method=method, options=opts, **kw)
        if res.status in (0, 2):
            return res
    return res


def _row_compress(A, y):
    """Replace an overdetermined system ``Ax = y`` by an equivalent full-row-rank one."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    k = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    coef = U[:, :k].T @ y
    resid = np.linalg.norm(y - U[:, :k] @ coef)
    if resid > 1e-9 * max(1.0, np.linalg.norm(y)):
        raise EmptyIntersection("l1 program is infeasible")
    return s[:k, None] * Vt[:k], coef


def _lp_l1(A, y, eps):
    # standard form with x = p - q and, for eps > 0, Ax - y = r - t:
    # minimize sum(p + q) s.t. A(p - q) - (r - t) = y, sum(r + t) <= m eps
    if eps == 0 and A.shape[0] > A.shape[1]:
        A, y = _row_compress(A, y)
    m, n = A.shape
    if eps == 0:
        c = np.ones(2 * n)
        res = _linprog(c, A_eq=np.hstack([A, -A]), b_eq=y, bounds=(0, None))
    else:
        c = np.concatenate([np.ones(2 * n), np.zeros(2 * m)])
        I = np.eye(m)
        A_eq = np.hstack([A, -A, -I, I])
        A_ub = np.concatenate([np.zeros(2 * n), np.ones(2 * m)])[None, :]
        res = _linprog(c, A_ub=A_ub, b_ub=[m * eps], A_eq=A_eq, b_eq=y, bounds=(0, None))
    if res.status == 2:
        raise EmptyIntersection("l1 program is infeasible")
    if res.status != 0:
        raise NotConverged(f"LP solver failed: {res.message}")
    return res.x[:n] - res.x[n:2 * n], int(res.nit)


def l1_min(A, y, eps: float = 0.0, solver: str = "auto"):
    """``minimize ||x||_1 subject to (1/m)||Ax - y||_1 <= eps``.

    ``solver="auto"`` solves the linear program by dual simplex when the LP
    has at most ``LP_MAX_N`` unknowns and uses
    :func:`gauge_min` on the unit l1 ball otherwise.  Simplex returns a
    vertex, so the LP path yields basic (sparse) solutions.  The path taken
    is reported in ``diagnostics.path``.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    m, n = A.shape
    if eps < 0:
        raise InvalidParam("eps must be non-negative")
    if solver not in ("auto", "lp", "splitting"):
        raise InvalidParam(f"unknown solver {solver!r}")
    use_lp = solver == "lp" or (solver == "auto" and n <= LP_MAX_N)
    if not use_lp:
        from .sets import make_set

        x, diag = gauge_min(make_set("L1Ball", n=n, radius=1.0), A, y, eps)
        return x, diag
    x, nit = _lp_l1(A, y, eps)
    gap = tube_gap(A, y, eps, x)
    if gap > 0:
        tube = _Tube(A, y, eps)
        x, _, gap = tube(x)
    primal = float(np.abs(A @ x - y).max()) if eps == 0 else gap
    diag = SolveDiagnostics(nit, primal, gap, float(np.abs(x).sum()), gap <= 1e-6, "lp")
    return x, diag


def truncated_svd(Y, r: int):
    """Best rank-``r`` approximation of ``Y`` and all singular values (descending)."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InvalidParam("truncated_svd expects a matrix")
    if not 1 <= r <= min(Y.shape):
        raise InvalidParam(f"rank must be in [1, {min(Y.shape)}], got {r}")
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    X = (U[:, :r] * s[:r]) @ Vt[:r]
    return X, s


def operator_norm(G, steps: int = 200, tol: float = 1e-10, restarts: int = 3, rng=None):
    """Largest singular value of ``G`` by power iteration on ``G^T G``.

    Takes the best of ``restarts`` random starts; each run stops once the
    relative change of the estimate drops below ``tol``.
    """
    G = np.asarray(G, dtype=float)
    rng = np.random.default_rng(rng)
    best = 0.0
    for _ in range(restarts):
        v = rng.standard_normal(G.shape[1])
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(steps):
            u = G @ v
            w = G.T @ u
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            v = w / nw
            new = float(np.linalg.norm(G @ v))
            if abs(new - est) <= tol * new:
                est = new
                break
            est = new
        best = max(best, est)
    return best
