"""One estimator per observation model.

Each returns an :class:`EstimateReport`.  Passing the ground truth only
fills in error fields; it never changes the estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParam, NotFeasible
from .sets import FeasibleSet, convex_hull_descriptor, make_set
from .solvers import SolveDiagnostics, gauge_min, l1_min, pocs_intersect, truncated_svd, tube_gap

__all__ = [
    "EstimateReport",
    "estimate_linear_feasibility",
    "estimate_linear_gauge",
    "estimate_regression",
    "estimate_sparse_dictionary",
    "estimate_lowrank",
    "complete_matrix",
    "estimate_onebit",
    "estimate_onebit_feasible",
    "estimate_single_index",
    "sign_agreement",
]


@dataclass
class EstimateReport:
    estimate: np.ndarray
    diagnostics: SolveDiagnostics
    auxiliary: np.ndarray | None = None
    error_l2: float | None = None
    scaled_target: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "estimate": arr(self.estimate),
            "auxiliary": arr(self.auxiliary),
            "diagnostics": self.diagnostics.to_dict(),
            "error_l2": self.error_l2,
            "scaled_target": arr(self.scaled_target),
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _error(estimate, truth):
    if truth is None:
        return None
    return float(np.linalg.norm(np.asarray(estimate) - np.asarray(truth)))


def _convex(K: FeasibleSet) -> FeasibleSet:
    return K if K.convex else convex_hull_descriptor(K)


def estimate_linear_feasibility(K, A, y, eps=0.0, x_true=None, **kw) -> EstimateReport:
    """Any point of ``K`` consistent with ``(1/m)||Ax - y||_1 <= eps``."""
    if eps < 0:
        raise InvalidParam("eps must be non-negative")
    x, diag = pocs_intersect(_convex(K), A, y, eps, **kw)
    return EstimateReport(x, diag, error_l2=_error(x, x_true))


def estimate_linear_gauge(K, A, y, eps=0.0, x_true=None, **kw) -> EstimateReport:
    """``minimize ||x'||_K subject to (1/m)||Ax' - y||_1 <= eps``."""
    x, diag = gauge_min(_convex(K), A, y, eps, **kw)
    return EstimateReport(x, diag, error_l2=_error(x, x_true))


# constrained regression is the same program with beta in place of x
estimate_regression = estimate_linear_gauge


def estimate_sparse_dictionary(D, A, y, eps=0.0, alpha_true=None, solver="auto") -> EstimateReport:
    """Sparse recovery in a dictionary: l1 minimization over the coefficients.

    Solves ``minimize ||alpha'||_1`` subject to
    ``(1/m)||A D alpha' - y||_1 <= eps`` and reports ``x = D alpha``;
    ``auxiliary`` holds the coefficients.
    """
    D = np.asarray(D, dtype=float)
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms > 1 + 1e-9):
        raise InvalidParam("dictionary columns must have norm at most 1")
    alpha, diag = l1_min(np.asarray(A) @ D, y, eps, solver=solver)
    x = D @ alpha
    err = None if alpha_true is None else _error(x, D @ np.asarray(alpha_true))
    return EstimateReport(x, diag, auxiliary=alpha, error_l2=err)


def estimate_lowrank(A, y, d1, d2, eps=0.0, X_true=None, **kw) -> EstimateReport:
    """Nuclear-norm minimization from ``y_i = <A_i, X>`` (rows of ``A`` are flattened ``A_i``)."""
    A = np.asarray(A, dtype=float)
    if A.shape[1] != d1 * d2:
        raise InvalidParam(f"A must have d1*d2 = {d1 * d2} columns")
    K = make_set("NuclearBall", n=d1 * d2, radius=1.0, d1=d1, d2=d2)
    x, diag = gauge_min(K, A, y, eps, **kw)
    X = x.reshape(d1, d2)
    err = None if X_true is None else float(np.linalg.norm(X - np.asarray(X_true)))
    return EstimateReport(X, diag, error_l2=err)


def complete_matrix(Y, mask, p, r, X_true=None) -> EstimateReport:
    """Best rank-``r`` approximation of ``Y / p``.

    With ``X_true`` the report carries the Frobenius error and, in
    ``extra["per_entry_error"]``, the error divided by ``sqrt(d1 d2)``.
    """
    Y = np.asarray(Y, dtype=float)
    if not 0 < p <= 1:
        raise InvalidParam("sampling probability p must lie in (0, 1]")
    if r < 1:
        raise InvalidParam("rank r must be at least 1")
    X, sv = truncated_svd(Y / p, r)
    diag = SolveDiagnostics(1, 0.0, 0.0, float(sv[:r].sum()), True, "svd")
    rep = EstimateReport(X, diag, extra={"observed": int(np.count_nonzero(mask))})
    if X_true is not None:
        err = float(np.linalg.norm(X - np.asarray(X_true)))
        rep.error_l2 = err
        rep.extra["per_entry_error"] = err / math.sqrt(Y.size)
    return rep


def estimate_onebit(K, A, y, x_true=None) -> EstimateReport:
    """Maximize ``<Ax', y>`` over ``K``: a single support-function call at ``A^T y``."""
    C = _convex(K)
    if C.max_norm() > 1 + 1e-9:
        raise InvalidParam("one-bit estimation needs a set inside the unit ball")
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    res = C.support(A.T @ y)
    diag = SolveDiagnostics(1, 0.0, 0.0, res.value, True, "support")
    truth = None if x_true is None else np.asarray(x_true) / np.linalg.norm(x_true)
    return EstimateReport(res.argmax, diag, error_l2=_error(res.argmax, truth))


def sign_agreement(A, y, x) -> float:
    """Fraction of rows with ``sign(<a_i, x>) == y_i`` (``sign(0) = +1``)."""
    s = np.where(np.asarray(A) @ np.asarray(x) >= 0, 1.0, -1.0)
    return float(np.mean(s == np.asarray(y)))


def _to_sphere(K, x):
    if K.kind == "SparseUnitSet":
        return K.project(x)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        out = np.zeros_like(x)
        out[0] = 1.0
        return out
    return x / nrm


def estimate_onebit_feasible(K, A, y, restarts: int = 20, x_true=None, strict: bool = False,
                             seed=None) -> EstimateReport:
    """Heuristic for ``x in K, sign(Ax) = y`` with ``K`` on the sphere.

    Starts from :func:`estimate_onebit` pushed to the sphere, then runs
    ``restarts`` rounds of correcting the misclassified rows (a perceptron
    step followed by the same projection), keeping the iterate with the best
    sign agreement.  Exact feasibility is a non-convex problem and is not
    guaranteed; ``extra["agreement"]`` reports what was reached.  With
    ``strict=True`` anything short of full agreement raises
    :class:`NotFeasible` carrying the report.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    m = A.shape[0]
    base = estimate_onebit(K, A, y)
    C = _convex(K)
    x = _to_sphere(K, base.estimate)
    best, best_agree = x, sign_agreement(A, y, x)
    rng = np.random.default_rng(seed)
    steps = 0
    for steps in range(1, restarts + 1):
        if best_agree == 1.0:
            break
        wrong = np.where(A @ x >= 0, 1.0, -1.0) != y
        corr = A[wrong].T @ y[wrong] / m
        step = 1.0 / (1 + steps)
        jitter = 1e-3 * rng.standard_normal(x.size)
        x = C.project(x + step * corr + jitter)
        x = _to_sphere(K, x)
        agree = sign_agreement(A, y, x)
        if agree > best_agree:
            best, best_agree = x, agree
    diag = SolveDiagnostics(steps, 1.0 - best_agree, 1.0 - best_agree, best_agree,
                            best_agree == 1.0, "onebit-heuristic")
    truth = None if x_true is None else np.asarray(x_true) / np.linalg.norm(x_true)
    rep = EstimateReport(best, diag, error_l2=_error(best, truth), extra={"agreement": best_agree})
    if strict and best_agree < 1.0:
        raise NotFeasible(f"best sign agreement {best_agree:.4f} < 1", rep)
    return rep


def estimate_single_index(cone, A, y, x_true=None, link=None, magnitude=None,
                          local_width=None) -> EstimateReport:
    """Project ``x_lin = (1/m) A^T y`` onto a known cone.

    ``auxiliary`` holds ``x_lin``.  Given the truth and a link, the report
    also carries ``lambda * x_bar`` and the error against it; with the local
    width ``w_1`` of the cone it adds the bound ``M w_1 / sqrt(m)``.
    """
    if cone.kind not in ("SparseCone", "LowRankCone"):
        raise InvalidParam("single-index projection is implemented for SparseCone and LowRankCone")
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    m = A.shape[0]
    x_lin = A.T @ y / m
    x_hat = cone.project(x_lin)
    diag = SolveDiagnostics(1, 0.0, 0.0, float(np.linalg.norm(x_hat)), True, "projection")
    rep = EstimateReport(x_hat, diag, auxiliary=x_lin)
    if x_true is not None and link is not None:
        from .observations import link_constants

        x_true = np.asarray(x_true, dtype=float).reshape(-1)
        nrm = np.linalg.norm(x_true)
        lam, M = link_constants(link, nrm if magnitude is None else magnitude)
        target = lam * x_true / nrm
        rep.scaled_target = target
        rep.error_l2 = _error(x_hat, target)
        rep.extra.update({"lambda": lam, "M": M, "linear_stage_error": _error(x_lin, target)})
        if local_width is not None:
            rep.extra["bound"] = M * local_width / math.sqrt(m)
    elif x_true is not None:
        rep.error_l2 = _error(x_hat, x_true)
    return rep


def feasibility_gap(A, y, eps, x) -> float:
    return tube_gap(A, y, eps, x)
