"""Sensing ensembles and observation models.

Rows of the sensing matrix are isotropic (``E a a^T = I``).  Matrix sensing
uses the same code: a Gaussian row of length ``d1 * d2`` paired with the
row-major flattening of the matrix.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import InvalidLink, InvalidParam, NonInformative, ZeroVector

__all__ = [
    "RowDistribution",
    "LinkFunction",
    "NoiseSpec",
    "ObservationBundle",
    "sample_sensing_matrix",
    "observe_linear",
    "observe_single_bit",
    "observe_link",
    "sample_entries",
    "link_constants",
    "subgaussian_proxy",
    "sign",
]

ROW_KINDS = ("Gaussian", "Rademacher", "UniformSphereScaled")


def sign(z):
    """Sign with ``sign(0) = +1``."""
    return np.where(np.asarray(z) >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class RowDistribution:
    kind: str = "Gaussian"
    n: int = 1

    def __post_init__(self):
        if self.kind not in ROW_KINDS:
            raise InvalidParam(f"unknown row distribution {self.kind!r}")
        if self.n < 1:
            raise InvalidParam("row dimension must be positive")


@dataclass(frozen=True)
class LinkFunction:
    """Link ``theta`` of a single-index model.

    ``Sign`` and ``Tanh`` are binary: observations are random signs with
    mean ``theta(<a, x>)``.  ``Custom`` links are odd functions tabulated on
    ``knots >= 0`` and linearly interpolated (constant beyond the last knot).
    """

    kind: str = "Sign"
    scale: float = 0.5
    knots: tuple = ()
    values: tuple = ()
    binary: bool | None = None

    def __post_init__(self):
        if self.kind not in ("Sign", "Tanh", "Linear", "Custom"):
            raise InvalidLink(f"unknown link {self.kind!r}")
        if self.binary is None:
            object.__setattr__(self, "binary", self.kind in ("Sign", "Tanh"))
        if self.kind == "Custom":
            if len(self.knots) != len(self.values) or len(self.knots) < 1:
                raise InvalidLink("custom link needs matching knots and values")
            if np.any(np.diff(self.knots) <= 0) or self.knots[0] < 0:
                raise InvalidLink("custom link knots must be increasing and non-negative")
        if self.binary:
            if self.kind == "Linear":
                raise InvalidLink("linear link is unbounded and cannot be binary")
            if self.kind == "Custom" and np.max(np.abs(self.values)) > 1:
                raise InvalidLink("binary link must satisfy |theta| <= 1")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "Sign":
            return sign(z)
        if self.kind == "Tanh":
            return np.tanh(self.scale * z)
        if self.kind == "Linear":
            return z.copy()
        mag = np.interp(np.abs(z), self.knots, self.values)
        return np.where(z >= 0, mag, -mag)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise with an l1 budget: ``(1/m)||nu||_1 <= eps``.

    ``IidBounded`` draws i.i.d. uniform ``[-sigma, sigma]`` entries and
    shrinks them onto the budget if needed; ``Adversarial`` spends the whole
    budget on one coordinate chosen from ``(A, x)``.
    """

    kind: str = "None"
    sigma: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in ("None", "IidBounded", "Adversarial"):
            raise InvalidParam(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.eps < 0:
            raise InvalidParam("noise parameters must be non-negative")


@dataclass
class ObservationBundle:
    A: np.ndarray
    y: np.ndarray
    seed: int
    model: dict = field(default_factory=dict)
    nu: np.ndarray | None = None
    mask: np.ndarray | None = None
    p: float | None = None

    def to_json(self) -> str:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return json.dumps({
            "A": arr(self.A),
            "y": arr(self.y),
            "nu": arr(self.nu),
            "mask": arr(self.mask),
            "p": self.p,
            "seed": self.seed,
            "model": self.model,
        })

    @classmethod
    def from_json(cls, text: str) -> "ObservationBundle":
        obj = json.loads(text)

        def arr(a, dtype=float):
            return None if a is None else np.asarray(a, dtype=dtype)

        return cls(A=arr(obj["A"]), y=arr(obj["y"]), seed=obj["seed"], model=obj.get("model", {}),
                   nu=arr(obj.get("nu")), mask=arr(obj.get("mask"), bool), p=obj.get("p"))


def model_descriptor(dist=None, link=None, noise=None) -> dict:
    out = {}
    if dist is not None:
        out["rows"] = asdict(dist)
    if link is not None:
        out["link"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(link).items()}
    if noise is not None:
        out["noise"] = asdict(noise)
    return out


def sample_sensing_matrix(dist: RowDistribution, m: int, seed) -> np.ndarray:
    """``m x n`` matrix with i.i.d. rows from ``dist``."""
    if m < 1:
        raise InvalidParam("m must be at least 1")
    rng = np.random.default_rng(seed)
    n = dist.n
    if dist.kind == "Gaussian":
        return rng.standard_normal((m, n))
    if dist.kind == "Rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(m, n))
    G = rng.standard_normal((m, n))
    nrm = np.linalg.norm(G, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    return math.sqrt(n) * G / nrm


def _enforce_budget(nu, eps):
    m = nu.size

    def over(v):
        return np.abs(v).sum() / m > eps

    if not over(nu):
        return nu
    if eps == 0:
        return np.zeros_like(nu)
    nu = nu * (m * eps / np.abs(nu).sum())
    # rounding can leave the budget a few ulps over, also for subnormal eps
    while over(nu):
        nu = np.nextafter(nu, 0.0)
    return nu


def _noise(noise: NoiseSpec, A, x, rng):
    m = A.shape[0]
    if noise.kind == "None":
        return np.zeros(m)
    if noise.kind == "IidBounded":
        nu = rng.uniform(-noise.sigma, noise.sigma, size=m)
        return _enforce_budget(nu, noise.eps)
    # whole budget on the row with the largest |<a_i, x>|, pushing outward
    ax = A @ x
    i = int(np.argmax(np.abs(ax)))
    nu = np.zeros(m)
    nu[i] = m * noise.eps * (1.0 if ax[i] >= 0 else -1.0)
    return _enforce_budget(nu, noise.eps)


def observe_linear(A, x, noise: NoiseSpec = NoiseSpec(), seed=None):
    """``y = A x + nu`` with ``(1/m)||nu||_1 <= eps``; returns ``(y, nu)``."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float).reshape(-1)
    if A.shape[1] != x.size:
        raise InvalidParam(f"A has {A.shape[1]} columns but x has length {x.size}")
    nu = _noise(noise, A, x, np.random.default_rng(seed))
    return A @ x + nu, nu


def observe_single_bit(A, x):
    """``y_i = sign(<a_i, x>)`` with ``sign(0) = +1``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.any(x):
        raise ZeroVector("single-bit observations of the zero vector carry no information")
    return sign(np.asarray(A, dtype=float) @ x)


def observe_link(A, x, link: LinkFunction, seed=None, noise: NoiseSpec | None = None):
    """Observations with ``E y_i = theta(<a_i, x>)``.

    Binary links draw independent signs with ``P(y_i = 1) = (1 + theta)/2``;
    other links return ``theta(<a_i, x>)`` plus optional additive noise.
    """
    z = np.asarray(A, dtype=float) @ np.asarray(x, dtype=float).reshape(-1)
    th = link(z)
    rng = np.random.default_rng(seed)
    if link.binary:
        if np.any(np.abs(th) > 1):
            raise InvalidLink("binary link produced |theta| > 1")
        u = rng.random(z.size)
        return np.where(u < (1 + th) / 2, 1.0, -1.0)
    if noise is not None and noise.kind != "None":
        th = th + _noise(noise, np.asarray(A, dtype=float), np.asarray(x, dtype=float), rng)
    return th


def sample_entries(X, m: int, noise: NoiseSpec = NoiseSpec(), seed=None):
    """Observe each entry independently with probability ``p = min(1, m / (d1 d2))``.

    ``m`` above ``d1 d2`` is capped at ``p = 1`` with a warning.  Returns ``(Y, mask, p)`` with ``Y`` zero off the mask.  With
    ``IidBounded`` noise, observed entries get ``|nu_ij| <= sigma`` added.
    """
    X = np.asarray(X, dtype=float)
    d1, d2 = X.shape
    if m < 0:
        raise InvalidParam(f"m must be non-negative, got {m}")
    if m > d1 * d2:
        warnings.warn(f"m = {m} exceeds d1*d2 = {d1 * d2}; sampling every entry (p = 1)",
                      RuntimeWarning, stacklevel=2)
    if m < max(d1 * math.log(d1), d2 * math.log(d2)):
        warnings.warn(
            f"m = {m} is below d log d; expect unobserved rows or columns",
            RuntimeWarning,
            stacklevel=2,
        )
    p = min(1.0, m / (d1 * d2))
    rng = np.random.default_rng(seed)
    mask = rng.random((d1, d2)) < p
    Y = np.where(mask, X, 0.0)
    if noise.kind == "IidBounded" and noise.sigma > 0:
        nu = rng.uniform(-noise.sigma, noise.sigma, size=(d1, d2))
        Y = np.where(mask, X + nu, 0.0)
    elif noise.kind == "Adversarial":
        raise InvalidParam("entry sampling supports only bounded i.i.d. noise")
    return Y, mask, p


def _gauss_expect_even(f):
    # E f(g) for an even integrand f, via 2 * int_0^inf f(g) phi(g) dg
    val, _ = integrate.quad(
        lambda g: f(g) * math.exp(-0.5 * g * g), 0.0, math.inf, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return 2.0 * val / math.sqrt(2 * math.pi)


def link_constants(link: LinkFunction, magnitude: float = 1.0):
    """Constants ``(lambda, M)`` of a single-index model with ``||x||_2 = magnitude``.

    ``lambda = E theta(magnitude g) g`` and
    ``M = sqrt(2 pi) (E y^2 + Var(y g))^(1/2)`` for ``g ~ N(0, 1)``.
    Binary links have ``y^2 = 1``.  The integrands are even (all links are
    odd), so both are computed by adaptive quadrature on the half line.

    Raises
    ------
    NonInformative
        If ``|lambda| <= 1e-6``.
    """
    rho = float(magnitude)

    def theta(t):
        return float(link(np.array([rho * t]))[0])

    lam = _gauss_expect_even(lambda g: theta(g) * g)
    if abs(lam) <= 1e-6:
        raise NonInformative(f"lambda = {lam:.3g}: the observations carry no signal")
    if link.binary:
        ey2 = 1.0
        ey2g2 = 1.0
    else:
        ey2 = _gauss_expect_even(lambda g: theta(g) ** 2)
        ey2g2 = _gauss_expect_even(lambda g: (theta(g) * g) ** 2)
    var = max(ey2g2 - lam * lam, 0.0)
    M = math.sqrt(2 * math.pi) * math.sqrt(ey2 + var)
    return lam, M


def subgaussian_proxy(A, directions: int = 100, seed=None) -> float:
    """Empirical sub-gaussian constant of the rows of ``A``.

    For each random unit direction ``v`` the marginal ``<a, v>`` is fitted to
    ``E exp(<a,v>^2 / t^2) <= 2`` by bisection on ``t``; the maximum over
    directions is returned.  Reported as metadata only.
    """
    A = np.asarray(A, dtype=float)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(directions):
        v = rng.standard_normal(A.shape[1])
        v /= np.linalg.norm(v)
        z = A @ v
        lo, hi = 1e-6, 10.0 * max(1e-6, float(np.abs(z).max()))
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            with np.errstate(over="ignore"):
                val = np.mean(np.exp((z / mid) ** 2))
            if val <= 2:
                hi = mid
            else:
                lo = mid
        best = max(best, hi)
    return best
