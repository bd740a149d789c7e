"""Feasible sets as oracle bundles.

Every set exposes the same four oracles: support function (with a
maximizer), gauge (Minkowski functional), Euclidean projection and a
membership test.  Sets are built from a :class:`SetDescriptor`, a small
serializable record ``{"kind", "n", "params"}``.

Matrix-valued kinds (``LowRankCone``, ``NuclearBall``) work on vectors of
length ``d1 * d2``; the vector is the row-major flattening of the matrix,
so the trace inner product is the ordinary dot product.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidParam, NoClosedForm, NoRepresentation, Unbounded, ZeroVector

__all__ = [
    "SetDescriptor",
    "SupportResult",
    "FeasibleSet",
    "make_set",
    "convex_hull_descriptor",
    "project_l1_ball",
    "hard_threshold",
    "soft_threshold",
    "KINDS",
]

KINDS = (
    "EuclideanBall",
    "L1Ball",
    "Hypercube",
    "SparseCone",
    "SparseUnitSet",
    "ConvexSparse",
    "DictionaryHull",
    "FiniteSet",
    "LowRankCone",
    "NuclearBall",
)

# numerical rank threshold relative to the top singular value
RANK_RTOL = 1e-9
DICT_NORM_SLACK = 1e-9


# ---------------------------------------------------------------------------
# elementary operators shared with the solvers
# ---------------------------------------------------------------------------

def soft_threshold(x, t):
    """Entrywise ``sign(x) * max(|x| - t, 0)``."""
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _top_indices(x, s):
    # stable sort on -|x|: equal magnitudes keep the lowest index first
    order = np.argsort(-np.abs(x), kind="stable")
    return order[:s]


def hard_threshold(x, s):
    """Keep the ``s`` largest-magnitude entries of ``x``; ties go to the lowest index."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if s <= 0:
        return out
    idx = _top_indices(x, s)
    out[idx] = x[idx]
    return out


def _l1_threshold(a, radius):
    """Threshold ``theta`` with ``sum(max(a - theta, 0)) = radius`` for ``a >= 0``."""
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    cond = u - (css - radius) / k > 0
    hits = np.nonzero(cond)[0]
    # the first entry always qualifies in exact arithmetic
    rho = hits[-1] if hits.size else 0
    return (css[rho] - radius) / (rho + 1.0)


def project_l1_ball(x, radius=1.0):
    """Exact Euclidean projection onto ``{z : ||z||_1 <= radius}``.

    Sort-based algorithm, O(k log k).
    """
    x = np.asarray(x, dtype=float)
    if radius < 0:
        raise InvalidParam("radius must be non-negative")
    if radius == 0:
        return np.zeros_like(x)
    if np.abs(x).sum() <= radius:
        return x.copy()
    theta = _l1_threshold(np.abs(x), radius)
    return soft_threshold(x, theta)


def _ratio_threshold(a, s):
    """Smallest ``t >= 0`` with ``||(a - t)_+||_1 / ||(a - t)_+||_2 <= sqrt(s)``.

    ``a`` is a 2-D array of non-negative rows.  The ratio is decreasing in
    ``t``; on each interval with ``k`` active entries the crossing solves a
    quadratic in closed form.
    """
    a = np.sort(a, axis=1)[:, ::-1]
    B, n = a.shape
    S1 = np.cumsum(a, axis=1)
    S2 = np.cumsum(a * a, axis=1)
    t = np.zeros(B)
    tot1, tot2 = S1[:, -1], S2[:, -1]
    with np.errstate(invalid="ignore", divide="ignore"):
        need = tot1 * tot1 > s * tot2 * (1 + 1e-15)
    if not need.any():
        return t
    k = np.arange(1, n + 1, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = s * (k * S2 - S1 * S1) / (k - s)
        tk = (S1 - np.sqrt(np.maximum(disc, 0.0))) / k
    lower = np.concatenate([a[:, 1:], np.zeros((B, 1))], axis=1)
    slack = 1e-12 * a[:, :1]
    valid = (k > s) & (tk >= lower - slack) & (tk <= a + slack) & np.isfinite(tk)
    valid &= need[:, None]
    first = np.argmax(valid, axis=1)
    found = valid[np.arange(B), first]
    t = np.where(found, tk[np.arange(B), first], 0.0)
    t = np.maximum(t, 0.0)
    # rows with no valid interval (only through rounding) fall back to bisection
    for i in np.nonzero(need & ~found)[0]:
        t[i] = _ratio_threshold_bisect(a[i], s)
    return t


def _ratio_threshold_bisect(a, s):
    lo, hi = 0.0, float(a.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        z = np.maximum(a - mid, 0.0)
        nz = np.linalg.norm(z)
        if nz == 0 or z.sum() <= math.sqrt(s) * nz:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupportResult:
    value: float
    argmax: np.ndarray


@dataclass
class SetDescriptor:
    """Serializable description of a feasible set.

    ``params`` holds the kind-specific parameters.  Dictionary matrices may
    be given as an ``(n, N)`` array; when serialized they are written as a
    flat column-major list together with ``N``.
    """

    kind: str
    n: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        params = {}
        for key, val in self.params.items():
            if key == "D":
                D = np.asarray(val, dtype=float)
                params["D"] = D.flatten(order="F").tolist()
                params["N"] = int(D.shape[1])
            elif key == "points":
                params["points"] = np.asarray(val, dtype=float).tolist()
            elif isinstance(val, np.generic):
                params[key] = val.item()
            else:
                params[key] = val
        return {"kind": self.kind, "n": int(self.n), "params": params}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "SetDescriptor":
        try:
            kind, n = obj["kind"], obj["n"]
        except (KeyError, TypeError) as exc:
            raise InvalidParam(f"set descriptor needs 'kind' and 'n': {obj!r}") from exc
        extra = set(obj) - {"kind", "n", "params"}
        if extra:
            raise InvalidParam(f"unknown descriptor keys: {sorted(extra)}")
        params = dict(obj.get("params", {}))
        if kind == "DictionaryHull" and "D" in params:
            flat = np.asarray(params.pop("D"), dtype=float)
            N = int(params.pop("N", flat.size // int(n)))
            if flat.size != N * int(n):
                raise InvalidParam("dictionary array has wrong length")
            params["D"] = flat.reshape((N, int(n))).T
        if kind == "FiniteSet" and "points" in params:
            params["points"] = np.asarray(params["points"], dtype=float)
        return cls(kind=kind, n=int(n), params=params)

    @classmethod
    def from_json(cls, text: str) -> "SetDescriptor":
        return cls.from_dict(json.loads(text))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# the oracle bundle
# ---------------------------------------------------------------------------

class FeasibleSet:
    """Base oracle bundle.  Instances are immutable once built."""

    kind: str = ""
    convex = True
    symmetric = True
    cone = False

    def __init__(self, descriptor: SetDescriptor):
        self.descriptor = descriptor
        self.n = int(descriptor.n)

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor.to_json()})"

    @property
    def bounded(self) -> bool:
        return not self.cone

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            x = x.reshape(-1)
            if x.shape != (self.n,):
                raise InvalidParam(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x

    # -- oracles ------------------------------------------------------------
    def support(self, eta) -> SupportResult:
        raise NotImplementedError

    def support_values(self, G) -> np.ndarray:
        """Support function evaluated on every row of ``G``."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        return np.array([self.support(g).value for g in G])

    def gauge(self, x) -> float:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        if tol < 0:
            raise InvalidParam("tol must be non-negative")
        return bool(self.gauge(x) <= 1.0 + tol)

    def max_norm(self) -> float:
        """``sup ||u||_2`` over the set."""
        raise NotImplementedError

    def difference_gauge(self, d) -> float:
        """Gauge of ``d`` with respect to ``K - K``."""
        d = self._check(d)
        if not np.any(d):
            raise ZeroVector("difference_gauge needs a nonzero direction")
        if self.convex and self.symmetric:
            return self.gauge(d) / 2.0
        raise NoClosedForm(f"K - K has no closed form for {self.kind}")

    def prox_gauge(self, v, tau: float) -> np.ndarray:
        """``argmin_x tau * gauge(x) + 0.5 * ||x - v||^2``.

        Generic route: 1-D convex search over the scale ``s`` of ``s * K``,
        using only the projection oracle.
        """
        v = self._check(v)
        if tau <= 0:
            return v.copy()

        def phi(s):
            if s <= 0:
                p = np.zeros_like(v)
            else:
                p = s * self.project(v / s)
            return tau * s + 0.5 * float(np.sum((v - p) ** 2)), p

        hi = max(self.gauge(v), 1e-300)
        if not np.isfinite(hi):
            raise NoClosedForm(f"gauge prox needs a finite gauge for {self.kind}")
        lo = 0.0
        invphi = (math.sqrt(5) - 1) / 2
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        fc, fd = phi(c)[0], phi(d)[0]
        for _ in range(120):
            if fc <= fd:
                hi, d, fd = d, c, fc
                c = hi - invphi * (hi - lo)
                fc = phi(c)[0]
            else:
                lo, c, fc = c, d, fd
                d = lo + invphi * (hi - lo)
                fd = phi(d)[0]
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        cands = [0.0, 0.5 * (lo + hi), self.gauge(v)]
        best = min(cands, key=lambda s: phi(s)[0])
        return phi(best)[1]


class _Matrix:
    def _dims(self):
        p = self.descriptor.params
        return int(p["d1"]), int(p["d2"])

    def _mat(self, x):
        d1, d2 = self._dims()
        return np.asarray(x, dtype=float).reshape(d1, d2)


class EuclideanBall(FeasibleSet):
    kind = "EuclideanBall"

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.radius = float(descriptor.params["radius"])

    def support(self, eta):
        eta = self._check(eta)
        nrm = np.linalg.norm(eta)
        if nrm == 0:
            return SupportResult(0.0, np.zeros(self.n))
        u = self.radius * eta / nrm
        return SupportResult(float(eta @ u), u)

    def support_values(self, G):
        return self.radius * np.linalg.norm(np.atleast_2d(G), axis=1)

    def gauge(self, x):
        return float(np.linalg.norm(self._check(x)) / self.radius)

    def project(self, x):
        x = self._check(x)
        nrm = np.linalg.norm(x)
        if nrm <= self.radius:
            return x.copy()
        return x * (self.radius / nrm)

    def prox_gauge(self, v, tau):
        v = self._check(v)
        nrm = np.linalg.norm(v)
        t = tau / self.radius
        if nrm <= t:
            return np.zeros_like(v)
        return v * (1 - t / nrm)

    def max_norm(self):
        return self.radius


class L1Ball(FeasibleSet):
    kind = "L1Ball"

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.radius = float(descriptor.params["radius"])

    def support(self, eta):
        eta = self._check(eta)
        j = int(np.argmax(np.abs(eta)))
        u = np.zeros(self.n)
        u[j] = self.radius * (1.0 if eta[j] >= 0 else -1.0)
        return SupportResult(float(self.radius * abs(eta[j])), u)

    def support_values(self, G):
        return self.radius * np.abs(np.atleast_2d(G)).max(axis=1)

    def gauge(self, x):
        return float(np.abs(self._check(x)).sum() / self.radius)

    def project(self, x):
        return project_l1_ball(self._check(x), self.radius)

    def prox_gauge(self, v, tau):
        return soft_threshold(self._check(v), tau / self.radius)

    def max_norm(self):
        return self.radius


class Hypercube(FeasibleSet):
    kind = "Hypercube"

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.halfwidth = float(descriptor.params["halfwidth"])

    def support(self, eta):
        eta = self._check(eta)
        u = self.halfwidth * np.where(eta >= 0, 1.0, -1.0)
        return SupportResult(float(eta @ u), u)

    def support_values(self, G):
        return self.halfwidth * np.abs(np.atleast_2d(G)).sum(axis=1)

    def gauge(self, x):
        return float(np.abs(self._check(x)).max() / self.halfwidth)

    def project(self, x):
        return np.clip(self._check(x), -self.halfwidth, self.halfwidth)

    def prox_gauge(self, v, tau):
        v = self._check(v)
        # Moreau: the polar of h * B_inf is (1/h) * B_1
        return v - project_l1_ball(v, tau / self.halfwidth)

    def max_norm(self):
        return self.halfwidth * math.sqrt(self.n)


class SparseCone(FeasibleSet):
    """Vectors with at most ``s`` nonzero entries."""

    kind = "SparseCone"
    convex = False
    cone = True

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.s = int(descriptor.params["s"])

    def support(self, eta):
        eta = self._check(eta)
        if np.any(eta):
            raise Unbounded("support of a sparse cone is infinite off its polar {0}")
        return SupportResult(0.0, np.zeros(self.n))

    def _nnz(self, x, tol):
        return int(np.count_nonzero(np.abs(x) > tol))

    def gauge(self, x):
        x = self._check(x)
        return 0.0 if self._nnz(x, 0.0) <= self.s else math.inf

    def project(self, x):
        return hard_threshold(self._check(x), self.s)

    def contains(self, x, tol=1e-9):
        if tol < 0:
            raise InvalidParam("tol must be non-negative")
        return self._nnz(self._check(x), tol) <= self.s

    def difference_gauge(self, d):
        d = self._check(d)
        if not np.any(d):
            raise ZeroVector("difference_gauge needs a nonzero direction")
        return 0.0 if self._nnz(d, 0.0) <= 2 * self.s else math.inf

    def max_norm(self):
        return math.inf


class SparseUnitSet(FeasibleSet):
    """Unit-norm vectors with at most ``s`` nonzero entries (not convex)."""

    kind = "SparseUnitSet"
    convex = False

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.s = int(descriptor.params["s"])

    def support(self, eta):
        eta = self._check(eta)
        idx = _top_indices(eta, self.s)
        u = np.zeros(self.n)
        u[idx] = eta[idx]
        nrm = np.linalg.norm(u)
        if nrm == 0:
            u = np.zeros(self.n)
            u[0] = 1.0
            return SupportResult(0.0, u)
        u /= nrm
        return SupportResult(float(eta @ u), u)

    def support_values(self, G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        a = -np.sort(-np.abs(G), axis=1)[:, : self.s]
        return np.sqrt(np.sum(a * a, axis=1))

    def gauge(self, x):
        x = self._check(x)
        if not np.any(x) or np.count_nonzero(x) > self.s:
            return math.inf
        return float(np.linalg.norm(x))

    def project(self, x):
        x = self._check(x)
        h = hard_threshold(x, self.s)
        nrm = np.linalg.norm(h)
        if nrm == 0:
            out = np.zeros(self.n)
            out[0] = 1.0
            return out
        return h / nrm

    def contains(self, x, tol=1e-9):
        if tol < 0:
            raise InvalidParam("tol must be non-negative")
        x = self._check(x)
        if np.count_nonzero(np.abs(x) > tol) > self.s:
            return False
        return abs(np.linalg.norm(x) - 1.0) <= tol

    def difference_gauge(self, d):
        # K - K sits inside ConvexSparse(2s, 2); the gauge there is a lower
        # bound on the true one, so 1/gauge over-estimates section lengths.
        d = self._check(d)
        if not np.any(d):
            raise ZeroVector("difference_gauge needs a nonzero direction")
        s2 = min(2 * self.s, self.n)
        return _convex_sparse_gauge(d, s2, 2.0)

    def max_norm(self):
        return 1.0


def _convex_sparse_gauge(x, s, radius):
    return float(max(np.abs(x).sum() / math.sqrt(s), np.linalg.norm(x)) / radius)


class ConvexSparse(FeasibleSet):
    """``radius * (sqrt(s) * B_1 intersected with B_2)``."""

    kind = "ConvexSparse"

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.s = int(descriptor.params["s"])
        self.radius = float(descriptor.params.get("radius", 1.0))

    def _directions(self, G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        t = _ratio_threshold(np.abs(G), self.s)
        Z = soft_threshold(G, t[:, None])
        nrm = np.linalg.norm(Z, axis=1)
        nrm[nrm == 0] = 1.0
        return Z / nrm[:, None]

    def support(self, eta):
        eta = self._check(eta)
        if not np.any(eta):
            return SupportResult(0.0, np.zeros(self.n))
        u = self.radius * self._directions(eta)[0]
        return SupportResult(float(eta @ u), u)

    def support_values(self, G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        U = self._directions(G)
        return self.radius * np.einsum("ij,ij->i", G, U)

    def gauge(self, x):
        return _convex_sparse_gauge(self._check(x), self.s, self.radius)

    def project(self, x):
        x = self._check(x) / self.radius
        rs = math.sqrt(self.s)
        nrm = np.linalg.norm(x)
        z = x / nrm if nrm > 1 else x
        if np.abs(z).sum() <= rs:
            return self.radius * z
        theta = _l1_threshold(np.abs(x), rs)
        z = soft_threshold(x, theta)
        if np.linalg.norm(z) <= 1:
            return self.radius * z
        t = _ratio_threshold(np.abs(x)[None, :], self.s)[0]
        z = soft_threshold(x, t)
        return self.radius * z / np.linalg.norm(z)

    def prox_gauge(self, v, tau):
        # gauge = max(g1, g2) = max over theta of theta*g1 + (1-theta)*g2.  For
        # fixed theta the prox is soft- then group-shrinkage.  The dual slope
        # has the sign of ||z||_1 - sqrt(s)||z||_2 for z = soft(v, a*theta),
        # so the optimal theta sits at the ratio threshold of |v|.
        v = self._check(v)
        if tau <= 0:
            return v.copy()
        a = tau / (self.radius * math.sqrt(self.s))
        b = tau / self.radius
        t_star = _ratio_threshold(np.abs(v)[None, :], self.s)[0]
        theta = min(1.0, t_star / a)
        z = soft_threshold(v, theta * a)
        nz = np.linalg.norm(z)
        shrink = (1 - theta) * b
        if nz <= shrink:
            return np.zeros_like(v)
        return z * (1 - shrink / nz)

    def max_norm(self):
        return self.radius


class DictionaryHull(FeasibleSet):
    """``radius * conv{+-d_i}`` for the columns ``d_i`` of ``D``."""

    kind = "DictionaryHull"

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.D = _frozen(descriptor.params["D"])
        self.radius = float(descriptor.params.get("radius", 1.0))

    def support(self, eta):
        eta = self._check(eta)
        c = self.D.T @ eta
        j = int(np.argmax(np.abs(c)))
        sgn = 1.0 if c[j] >= 0 else -1.0
        u = self.radius * sgn * self.D[:, j]
        return SupportResult(float(eta @ u), u)

    def support_values(self, G):
        return self.radius * np.abs(np.atleast_2d(G) @ self.D).max(axis=1)

    def coefficients(self, x):
        """Minimum-l1 coefficients ``alpha`` with ``D @ alpha = x`` (a linear program)."""
        x = self._check(x)
        N = self.D.shape[1]
        if not np.any(x):
            return np.zeros(N)
        # alpha = p - q with p, q >= 0
        c = np.ones(2 * N)
        A_eq = np.hstack([self.D, -self.D])
        res = linprog(c, A_eq=A_eq, b_eq=x, bounds=(0, None), method="highs-ds")
        if res.status == 2:
            raise NoRepresentation("vector lies outside the span of the dictionary")
        if res.status != 0:
            raise NoRepresentation(f"dictionary LP failed: {res.message}")
        return res.x[:N] - res.x[N:]

    def gauge(self, x):
        return float(np.abs(self.coefficients(x)).sum() / self.radius)

    def project(self, x, iters: int = 20000, tol: float = 1e-14):
        x = self._check(x)
        try:
            if self.gauge(x) <= 1.0:
                return x.copy()
        except NoRepresentation:
            pass
        # FISTA on 0.5 * ||D a - x||^2 over the l1 ball of the coefficients
        D = np.asarray(self.D)
        L = max(np.linalg.norm(D, 2) ** 2, 1e-300)
        a = project_l1_ball(D.T @ x / L, self.radius)
        z, t = a.copy(), 1.0
        for _ in range(iters):
            a_new = project_l1_ball(z - D.T @ (D @ z - x) / L, self.radius)
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            z = a_new + ((t - 1) / t_new) * (a_new - a)
            step = np.linalg.norm(a_new - a)
            a, t = a_new, t_new
            if step <= tol * max(1.0, np.linalg.norm(a)):
                break
        return D @ a

    def max_norm(self):
        return self.radius * float(np.linalg.norm(self.D, axis=0).max())


class FiniteSet(FeasibleSet):
    kind = "FiniteSet"
    convex = False
    symmetric = False

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.points = _frozen(np.atleast_2d(descriptor.params["points"]))

    def support(self, eta):
        eta = self._check(eta)
        vals = self.points @ eta
        j = int(np.argmax(vals))
        return SupportResult(float(vals[j]), self.points[j].copy())

    def support_values(self, G):
        return (np.atleast_2d(G) @ self.points.T).max(axis=1)

    def gauge(self, x):
        x = self._check(x)
        if not np.any(x):
            return 0.0 if np.any(np.all(self.points == 0, axis=1)) else math.inf
        best = math.inf
        xn = np.linalg.norm(x)
        for p in self.points:
            pp = p @ p
            if pp == 0:
                continue
            lam = (x @ p) / pp
            if lam > 0 and np.linalg.norm(x - lam * p) <= 1e-12 * xn:
                best = min(best, lam)
        return float(best)

    def project(self, x):
        x = self._check(x)
        d = np.linalg.norm(self.points - x, axis=1)
        return self.points[int(np.argmin(d))].copy()

    def contains(self, x, tol=1e-9):
        if tol < 0:
            raise InvalidParam("tol must be non-negative")
        x = self._check(x)
        return bool(np.min(np.linalg.norm(self.points - x, axis=1)) <= tol)

    def max_norm(self):
        return float(np.linalg.norm(self.points, axis=1).max())


class LowRankCone(_Matrix, FeasibleSet):
    """Matrices of rank at most ``r``."""

    kind = "LowRankCone"
    convex = False
    cone = True

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.r = int(descriptor.params["r"])

    def support(self, eta):
        eta = self._check(eta)
        if np.any(eta):
            raise Unbounded("support of a low-rank cone is infinite off its polar {0}")
        return SupportResult(0.0, np.zeros(self.n))

    def _rank(self, x, tol=0.0):
        sv = np.linalg.svd(self._mat(x), compute_uv=False)
        if sv.size == 0 or sv[0] == 0:
            return 0
        return int(np.count_nonzero(sv > max(tol, RANK_RTOL) * sv[0]))

    def gauge(self, x):
        return 0.0 if self._rank(self._check(x)) <= self.r else math.inf

    def project(self, x):
        from .solvers import truncated_svd

        X, _ = truncated_svd(self._mat(self._check(x)), self.r)
        return X.reshape(-1)

    def contains(self, x, tol=1e-9):
        if tol < 0:
            raise InvalidParam("tol must be non-negative")
        return self._rank(self._check(x), tol) <= self.r

    def difference_gauge(self, d):
        d = self._check(d)
        if not np.any(d):
            raise ZeroVector("difference_gauge needs a nonzero direction")
        return 0.0 if self._rank(d) <= 2 * self.r else math.inf

    def max_norm(self):
        return math.inf


class NuclearBall(_Matrix, FeasibleSet):
    kind = "NuclearBall"

    def __init__(self, descriptor):
        super().__init__(descriptor)
        self.radius = float(descriptor.params["radius"])

    def support(self, eta):
        eta = self._check(eta)
        U, sv, Vt = np.linalg.svd(self._mat(eta), full_matrices=False)
        u = self.radius * np.outer(U[:, 0], Vt[0]).reshape(-1)
        return SupportResult(float(eta @ u), u)

    def support_values(self, G):
        d1, d2 = self._dims()
        G = np.atleast_2d(np.asarray(G, dtype=float)).reshape(-1, d1, d2)
        return self.radius * np.linalg.svd(G, compute_uv=False)[:, 0]

    def gauge(self, x):
        sv = np.linalg.svd(self._mat(self._check(x)), compute_uv=False)
        return float(sv.sum() / self.radius)

    def project(self, x):
        U, sv, Vt = np.linalg.svd(self._mat(self._check(x)), full_matrices=False)
        if sv.sum() <= self.radius:
            return np.asarray(x, dtype=float).reshape(-1).copy()
        sv = project_l1_ball(sv, self.radius)
        return ((U * sv) @ Vt).reshape(-1)

    def prox_gauge(self, v, tau):
        U, sv, Vt = np.linalg.svd(self._mat(self._check(v)), full_matrices=False)
        sv = np.maximum(sv - tau / self.radius, 0.0)
        return ((U * sv) @ Vt).reshape(-1)

    def max_norm(self):
        return self.radius


_CLASSES = {
    cls.kind: cls
    for cls in (
        EuclideanBall,
        L1Ball,
        Hypercube,
        SparseCone,
        SparseUnitSet,
        ConvexSparse,
        DictionaryHull,
        FiniteSet,
        LowRankCone,
        NuclearBall,
    )
}


def _positive(params, key):
    try:
        val = float(params[key])
    except KeyError as exc:
        raise InvalidParam(f"missing parameter {key!r}") from exc
    if not val > 0:
        raise InvalidParam(f"{key} must be positive, got {val}")
    return val


def _count(params, key, lo, hi):
    try:
        val = params[key]
    except KeyError as exc:
        raise InvalidParam(f"missing parameter {key!r}") from exc
    if int(val) != val or not lo <= int(val) <= hi:
        raise InvalidParam(f"{key} must be an integer in [{lo}, {hi}], got {val}")
    return int(val)


def _validate(desc: SetDescriptor) -> SetDescriptor:
    kind, n, p = desc.kind, desc.n, dict(desc.params)
    if kind not in _CLASSES:
        raise InvalidParam(f"unknown set kind {kind!r}")
    if int(n) != n or n < 1:
        raise InvalidParam(f"dimension n must be a positive integer, got {n}")
    if kind in ("EuclideanBall", "L1Ball"):
        p["radius"] = _positive(p, "radius")
    elif kind == "Hypercube":
        p["halfwidth"] = _positive(p, "halfwidth")
    elif kind in ("SparseCone", "SparseUnitSet"):
        p["s"] = _count(p, "s", 1, n)
    elif kind == "ConvexSparse":
        p["s"] = _count(p, "s", 1, n)
        p["radius"] = _positive({"radius": p.get("radius", 1.0)}, "radius")
    elif kind == "DictionaryHull":
        if "D" not in p:
            raise InvalidParam("DictionaryHull needs a dictionary 'D'")
        D = np.asarray(p["D"], dtype=float)
        if D.ndim != 2 or D.shape[0] != n or D.shape[1] < 1:
            raise InvalidParam(f"dictionary must have shape ({n}, N), got {D.shape}")
        norms = np.linalg.norm(D, axis=0)
        if np.any(norms > 1 + DICT_NORM_SLACK):
            j = int(np.argmax(norms))
            raise InvalidParam(f"dictionary column {j} has norm {norms[j]:.6g} > 1")
        p["D"] = D
        p["radius"] = _positive({"radius": p.get("radius", 1.0)}, "radius")
    elif kind == "FiniteSet":
        pts = np.atleast_2d(np.asarray(p.get("points", []), dtype=float))
        if pts.size == 0 or pts.shape[1] != n:
            raise InvalidParam(f"points must be a non-empty (k, {n}) array")
        p["points"] = pts
    elif kind in ("LowRankCone", "NuclearBall"):
        d1 = _count(p, "d1", 1, n)
        d2 = _count(p, "d2", 1, n)
        if d1 * d2 != n:
            raise InvalidParam(f"d1 * d2 = {d1 * d2} does not match n = {n}")
        p["d1"], p["d2"] = d1, d2
        if kind == "LowRankCone":
            p["r"] = _count(p, "r", 1, min(d1, d2))
        else:
            p["radius"] = _positive(p, "radius")
    return SetDescriptor(kind, int(n), p)


def make_set(descriptor: SetDescriptor | dict | str, n: int | None = None, **params: Any) -> FeasibleSet:
    """Build a validated oracle bundle.

    Accepts a :class:`SetDescriptor`, its dict/JSON form, or a kind name
    with ``n`` and keyword parameters::

        make_set("L1Ball", n=3, radius=1.0)
    """
    if isinstance(descriptor, str):
        if n is None:
            descriptor = SetDescriptor.from_json(descriptor)
        else:
            descriptor = SetDescriptor(descriptor, n, params)
    elif isinstance(descriptor, dict):
        descriptor = SetDescriptor.from_dict(descriptor)
    desc = _validate(descriptor)
    return _CLASSES[desc.kind](desc)


def convex_hull_descriptor(K: FeasibleSet) -> FeasibleSet:
    """Convex set standing in for ``conv(K)``.

    Convex kinds map to themselves.  ``SparseUnitSet(s)`` maps to
    ``ConvexSparse(s, 1)``, a superset of the hull with width of the same
    order.  ``FiniteSet`` maps to the symmetric hull of its points, which is
    exact for origin-symmetric point sets and a superset otherwise.
    """
    if K.convex:
        return K
    if K.kind == "SparseUnitSet":
        return make_set(SetDescriptor("ConvexSparse", K.n, {"s": K.s, "radius": 1.0}))
    if K.kind == "FiniteSet":
        pts = np.asarray(K.points)
        scale = float(np.linalg.norm(pts, axis=1).max())
        if scale == 0:
            raise NoClosedForm("hull of the origin is not a DictionaryHull")
        cols = []
        for p in pts:
            if not np.any(p):
                continue
            if any(np.allclose(p, c) or np.allclose(p, -c) for c in cols):
                continue
            cols.append(p)
        D = np.column_stack(cols) / scale
        return make_set(SetDescriptor("DictionaryHull", K.n, {"D": D, "radius": scale}))
    raise NoClosedForm(f"no closed-form convex hull for {K.kind}")
