"""Monte Carlo checks of the geometric inequalities and error-rate sweeps.

Every randomized routine derives its generators from ``(seed, index...)``
through :func:`derive_seed`, so results do not depend on how trials are
scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import SweepConfig
from .errors import ConfigError, InsufficientPairs, InvalidParam, NotConverged
from .estimators import (
    complete_matrix,
    estimate_linear_feasibility,
    estimate_linear_gauge,
    estimate_lowrank,
    estimate_onebit,
    estimate_single_index,
    estimate_sparse_dictionary,
)
from .geometry import (
    descent_cone_width_l1,
    escape_probability_bound,
    local_mean_width_mc,
    mean_width_mc,
)
from .observations import (
    LinkFunction,
    NoiseSpec,
    RowDistribution,
    link_constants,
    observe_link,
    observe_linear,
    observe_single_bit,
    sample_entries,
    sample_sensing_matrix,
)
from .sets import FeasibleSet, make_set
from .solvers import l1_min, operator_norm

__all__ = [
    "SweepRecord",
    "ScalingFit",
    "derive_seed",
    "fit_loglog",
    "random_sparse_vector",
    "section_diameter_experiment",
    "deviation_experiment",
    "symmetrization_contraction_check",
    "matrix_norm_bound_check",
    "tessellation_experiment",
    "tessellation_sweep",
    "exact_recovery_phase",
    "phase_crossing",
    "sweep",
]

SQRT_2_PI = math.sqrt(2 / math.pi)


@dataclass
class SweepRecord:
    params: dict
    error_stats: dict
    bound_value: float
    trials: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    grid: list

    def to_dict(self) -> dict:
        return asdict(self)


def derive_seed(seed: int, *index: int) -> int:
    """Deterministic child seed for ``(seed, *index)``."""
    ss = np.random.SeedSequence([int(seed), *[int(i) for i in index]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "mean": float(v.mean()),
        "median": float(np.median(v)),
        "q90": float(np.quantile(v, 0.9)),
    }


def fit_loglog(grid, values) -> ScalingFit | None:
    """Least-squares line through ``(log m, log value)``; needs 4 or more positive points."""
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 4:
        return None
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), x[keep].tolist())


def random_sparse_vector(n, s, rng, unit=True):
    """Gaussian entries on a uniformly random support of size ``s``."""
    x = np.zeros(n)
    idx = rng.choice(n, size=s, replace=False)
    x[idx] = rng.standard_normal(s)
    return x / np.linalg.norm(x) if unit else x


def compressible_vector(n, s, rng, tail=0.2):
    """Unit vector dominated by ``s`` entries with a dense Gaussian tail of norm ``tail``."""
    head = random_sparse_vector(n, s, rng)
    g = rng.standard_normal(n)
    g[head != 0] = 0.0
    x = head + tail * g / np.linalg.norm(g)
    return x / np.linalg.norm(x)


# ---------------------------------------------------------------------------
# geometric checks
# ---------------------------------------------------------------------------

def section_diameter_experiment(K: FeasibleSet, m: int, directions: int, trials: int, seed: int,
                                width_trials: int = 2000) -> SweepRecord:
    """Diameters of random sections ``K`` intersected with ``ker A``.

    For each trial the kernel of a Gaussian ``m x n`` matrix is spanned by
    the trailing columns of a complete QR of ``A^T``.  Along a unit kernel
    direction ``d`` the section has length ``1 / gauge_{K-K}(d)``; the
    maximum over ``directions`` random kernel directions is a lower bound on
    the section diameter.
    """
    n = K.n
    if not 1 <= m < n:
        raise InvalidParam(f"need 1 <= m < n, got m = {m}, n = {n}")
    width = mean_width_mc(K, width_trials, derive_seed(seed, 10**6)).mean
    bound = width / math.sqrt(m)
    diams = []
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        A = rng.standard_normal((m, n))
        Q, _ = np.linalg.qr(A.T, mode="complete")
        E = Q[:, m:]
        C = rng.standard_normal((E.shape[1], directions))
        D = E @ C
        D /= np.linalg.norm(D, axis=0)
        best = 0.0
        for d in D.T:
            g = K.difference_gauge(d)
            best = max(best, math.inf if g == 0 else 1.0 / g)
        diams.append(best)
    rec = SweepRecord(
        params={"experiment": "section", "n": n, "m": m, "set": K.kind, "seed": seed},
        error_stats=_stats(diams),
        bound_value=bound,
        trials=trials,
        extra={"width": width},
    )
    rec.extra["ratio_mean"] = rec.error_stats["mean"] / bound
    rec.extra["diameters"] = diams
    return rec


def deviation_experiment(T, m: int, trials: int, seed: int, width_trials: int = 4000) -> SweepRecord:
    """Per-trial check of the uniform deviation inequality over a finite set ``T``.

    Left side per trial: ``max_u |(1/m)||Au||_1 - sqrt(2/pi)||u||_2|``.
    Right side: ``(4/sqrt(m)) E max_u |<g, u>|`` by Monte Carlo, with
    three standard errors of slack.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    k, n = T.shape
    if k > 10**4:
        raise InvalidParam("T may hold at most 10^4 points")
    norms = np.linalg.norm(T, axis=1)
    rng = np.random.default_rng(derive_seed(seed, 10**6))
    G = rng.standard_normal((width_trials, n))
    sup = np.abs(G @ T.T).max(axis=1)
    rhs_mean = float(sup.mean())
    rhs_se = float(sup.std(ddof=1) / math.sqrt(width_trials))
    rhs = 4 / math.sqrt(m) * rhs_mean
    rhs_slack = 4 / math.sqrt(m) * (rhs_mean + 3 * rhs_se)
    lhs = []
    for t in range(trials):
        A = np.random.default_rng(derive_seed(seed, t)).standard_normal((m, n))
        dev = np.abs(np.abs(A @ T.T).mean(axis=0) - SQRT_2_PI * norms)
        lhs.append(float(dev.max()))
    lhs = np.asarray(lhs)
    holds = lhs <= rhs_slack
    return SweepRecord(
        params={"experiment": "deviation", "n": n, "m": m, "points": k, "seed": seed},
        error_stats=_stats(lhs),
        bound_value=rhs,
        trials=trials,
        extra={
            "holds": int(holds.sum()),
            "holds_fraction": float(holds.mean()),
            "rhs_with_slack": rhs_slack,
            "rhs_stderr": 4 / math.sqrt(m) * rhs_se,
        },
    )


@dataclass
class SymmetrizationReport:
    symmetrization_pass: float
    contraction_pass: float
    symmetrization_lhs: float
    symmetrization_rhs: float
    contraction_lhs: float
    contraction_rhs: float
    trials: int

    def to_dict(self) -> dict:
        return asdict(self)


def _gaussian_process(T):
    T = np.atleast_2d(np.asarray(T, dtype=float))

    def draw(rng, inner, m):
        A = rng.standard_normal((inner, m, T.shape[1]))
        return A @ T.T

    return draw, SQRT_2_PI * np.linalg.norm(T, axis=1)


def symmetrization_contraction_check(T, processes: int, trials: int, seed: int, inner: int = 200,
                                     process=None, abs_mean=None) -> SymmetrizationReport:
    """Monte Carlo check of symmetrization and contraction over a finite index set.

    The signed processes are ``X_i(t) = <a_i, t>`` with Gaussian ``a_i``
    unless ``process(rng, inner, m)`` is given (it must return an array of
    shape ``(inner, m, |T|)``, and ``abs_mean`` the exact ``E|X_i(t)|``).
    Each trial estimates both sides of

    * ``E sup|sum(|X_i| - E|X_i|)| <= 2 E sup|sum eps_i |X_i||``
    * ``E sup|sum eps_i |X_i|| <= 2 E sup|sum eps_i X_i|``

    from ``inner`` draws and passes when the left side is below the right
    plus three combined standard errors.
    """
    if process is None:
        process, abs_mean = _gaussian_process(T)
    elif abs_mean is None:
        raise InvalidParam("a custom process needs abs_mean")
    m = processes
    sym_ok = con_ok = 0
    acc = np.zeros(4)

    def mean_se(v):
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0

    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        X = process(rng, inner, m)
        Z = np.abs(X)
        eps = rng.choice(np.array([-1.0, 1.0]), size=(inner, m, 1))
        s_lhs = np.abs((Z - abs_mean).sum(axis=1)).max(axis=1)
        s_rhs = 2 * np.abs((eps * Z).sum(axis=1)).max(axis=1)
        c_rhs = 2 * np.abs((eps * X).sum(axis=1)).max(axis=1)
        (a, sa), (b, sb), (c, sc) = mean_se(s_lhs), mean_se(s_rhs), mean_se(c_rhs)
        c_lhs_v = s_rhs / 2
        d, sd = mean_se(c_lhs_v)
        sym_ok += a <= b + 3 * math.hypot(sa, sb)
        con_ok += d <= c + 3 * math.hypot(sd, sc)
        acc += (a, b, d, c)
    acc /= trials
    return SymmetrizationReport(sym_ok / trials, con_ok / trials, *acc.tolist(), trials)


@dataclass
class MatrixNormReport:
    mean_norm: float
    stderr: float
    gordon_bound: float
    gordon_holds: bool
    seginer_term: float
    seginer_ratio: float
    trials: int
    kind: str

    def to_dict(self) -> dict:
        return asdict(self)


def matrix_norm_bound_check(d1: int, d2: int, kind: str, trials: int, seed: int) -> MatrixNormReport:
    """Empirical ``E||G||`` against ``sqrt(d1) + sqrt(d2)`` and the row/column-norm term.

    The operator norm is computed by power iteration (200 steps, tolerance
    ``1e-10``, 3 restarts).  The Gordon check (2% slack) applies to
    Gaussian entries; the ratio to the row/column term is reported only.
    """
    norms, rows, cols = [], [], []
    for t in range(trials):
        G = sample_sensing_matrix(RowDistribution(kind, d2), d1, derive_seed(seed, t))
        if kind == "UniformSphereScaled":
            raise InvalidParam("entries must be i.i.d.; use Gaussian or Rademacher")
        norms.append(operator_norm(G, rng=derive_seed(seed, t, 1)))
        rows.append(np.linalg.norm(G, axis=1).max())
        cols.append(np.linalg.norm(G, axis=0).max())
    norms = np.asarray(norms)
    mean = float(norms.mean())
    se = float(norms.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = math.sqrt(d1) + math.sqrt(d2)
    seg = float(np.mean(rows) + np.mean(cols))
    holds = mean <= bound * 1.02 if kind == "Gaussian" else True
    return MatrixNormReport(mean, se, bound, bool(holds), seg, mean / seg, trials, kind)


# ---------------------------------------------------------------------------
# tessellations
# ---------------------------------------------------------------------------

def _sphere_sampler(K: FeasibleSet):
    n = K.n
    if K.kind == "SparseUnitSet":
        s = K.s

        def sample(rng):
            return random_sparse_vector(n, s, rng)

        def partner(rng, x):
            z = np.zeros(n)
            idx = np.nonzero(x)[0]
            z[idx] = rng.standard_normal(idx.size)
            return z / np.linalg.norm(z)

        return sample, partner
    if K.kind == "EuclideanBall":
        def sample(rng):
            g = rng.standard_normal(n)
            return g / np.linalg.norm(g)

        return sample, lambda rng, x: sample(rng)
    if K.kind == "FiniteSet":
        P = np.asarray(K.points)
        nrm = np.linalg.norm(P, axis=1)
        P = P[nrm > 0] / nrm[nrm > 0, None]

        def sample(rng):
            return P[rng.integers(len(P))]

        return sample, None
    raise InvalidParam(f"no sphere sampler for {K.kind}")


def _signs(A, X):
    if A.shape[0] == 0:
        return np.ones((X.shape[0], 0), dtype=bool)
    return (X @ A.T) >= 0


def tessellation_experiment(K: FeasibleSet, m: int, pairs: int, trials: int, seed: int,
                            width: float | None = None) -> SweepRecord:
    """Largest same-cell distance found among sampled points of ``K`` on the sphere.

    Two points share a cell of the hyperplane tessellation by the rows of
    ``A`` iff their sign patterns agree.  Each trial draws ``pairs`` base
    points with a partner each: the farthest point on the arc towards the
    partner that stays in the base point's cell is found by bisection, and
    sampled points are also grouped by sign pattern.  The maximum distance
    is a lower bound on the largest cell diameter.
    """
    sample, partner = _sphere_sampler(K)
    n = K.n
    diams = []
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        A = rng.standard_normal((m, n))
        base = np.array([sample(rng) for _ in range(pairs)])
        sb = _signs(A, base)
        best = 0.0
        groups: dict = {}
        for i, key in enumerate(map(bytes, np.packbits(sb, axis=1))):
            groups.setdefault(key, []).append(i)
        for idx in groups.values():
            if len(idx) > 1:
                P = base[idx]
                d = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
                best = max(best, float(d.max()))
        if partner is not None:
            for i in range(pairs):
                x = base[i]
                z = partner(rng, x)
                if np.array_equal(_signs(A, z[None])[0], sb[i]):
                    best = max(best, float(np.linalg.norm(x - z)))
                    continue
                lo, hi = 0.0, 1.0
                for _ in range(50):
                    mid = 0.5 * (lo + hi)
                    p = (1 - mid) * x + mid * z
                    if np.array_equal(_signs(A, p[None])[0], sb[i]):
                        lo = mid
                    else:
                        hi = mid
                p = (1 - lo) * x + lo * z
                nrm = np.linalg.norm(p)
                if nrm > 0:
                    best = max(best, float(np.linalg.norm(x - p / nrm)))
        if best == 0.0:
            raise InsufficientPairs(f"no same-cell pair found in trial {t}; increase pairs")
        diams.append(best)
    if width is None:
        width = mean_width_mc(K, 2000, derive_seed(seed, 10**6)).mean
    return SweepRecord(
        params={"experiment": "tessellate", "n": n, "m": m, "set": K.kind, "seed": seed},
        error_stats=_stats(diams),
        bound_value=width / math.sqrt(max(m, 1)),
        trials=trials,
        extra={"pairs": pairs},
    )


def tessellation_sweep(K: FeasibleSet, m_grid, pairs: int, trials: int, seed: int):
    """Run :func:`tessellation_experiment` over ``m_grid`` and fit diameter vs ``m``.

    The decay exponent is ``-fit.slope``.  It is reported, not asserted.
    """
    width = mean_width_mc(K, 2000, derive_seed(seed, 10**6)).mean
    records = [
        tessellation_experiment(K, int(m), pairs, trials, derive_seed(seed, gi), width=width)
        for gi, m in enumerate(m_grid)
    ]
    fit = fit_loglog([r.params["m"] for r in records], [r.error_stats["mean"] for r in records])
    return records, fit


# ---------------------------------------------------------------------------
# exact recovery phase transition
# ---------------------------------------------------------------------------

def exact_recovery_phase(n: int, s: int, m_grid, trials: int, seed: int, solver: str = "lp",
                         width_trials: int = 4000, tol: float = 1e-4) -> list[SweepRecord]:
    """Success rate of noiseless l1 recovery of random ``s``-sparse unit vectors.

    Each record carries ``success_rate`` and, for overlay, the descent-cone
    width ``w`` of an ``s``-sparse point, ``w^2`` and the escape bound at
    that ``m``.
    """
    x0 = np.zeros(n)
    x0[:s] = 1.0
    cone = descent_cone_width_l1(x0, width_trials, derive_seed(seed, 10**6)).mean
    out = []
    for gi, m in enumerate(m_grid):
        errs, ok = [], 0
        for t in range(trials):
            rng = np.random.default_rng(derive_seed(seed, gi, t))
            x = random_sparse_vector(n, s, rng)
            A = rng.standard_normal((m, n))
            x_hat, _ = l1_min(A, A @ x, 0.0, solver=solver)
            err = float(np.linalg.norm(x_hat - x))
            errs.append(err)
            ok += err <= tol
        out.append(SweepRecord(
            params={"experiment": "phase", "n": n, "m": int(m), "s": s, "eps": 0.0, "seed": seed},
            error_stats=_stats(errs),
            bound_value=cone * cone,
            trials=trials,
            extra={
                "success_rate": ok / trials,
                "cone_width": cone,
                "cone_width_sq": cone * cone,
                "escape_bound": escape_probability_bound(int(m), cone),
            },
        ))
    return out


def phase_crossing(records, level: float = 0.5) -> float | None:
    """Interpolated ``m`` where the success rate first reaches ``level``."""
    ms = [r.params["m"] for r in records]
    rates = [r.extra["success_rate"] for r in records]
    for i, (m, p) in enumerate(zip(ms, rates)):
        if p >= level:
            if i == 0:
                return float(m)
            m0, p0 = ms[i - 1], rates[i - 1]
            return float(m0 + (level - p0) * (m - m0) / (p - p0))
    return None


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _grid_points(cfg: SweepConfig):
    pts = []
    for s in cfg.grid_list("s"):
        for r in cfg.grid_list("r"):
            for eps in cfg.grid_list("eps", 0.0):
                for m in cfg.grid_list("m"):
                    pts.append({"m": int(m), "s": s, "r": r, "eps": float(eps)})
    return pts


def _noise_for(cfg: SweepConfig, eps: float) -> NoiseSpec:
    spec = cfg.model.get("noise")
    if spec is None:
        if eps == 0:
            return NoiseSpec()
        return NoiseSpec("IidBounded", sigma=2 * eps, eps=eps)
    spec = dict(spec)
    spec.setdefault("eps", eps)
    return NoiseSpec(**spec)


def _link_for(cfg: SweepConfig) -> LinkFunction:
    spec = cfg.model.get("link", "Sign")
    if isinstance(spec, str):
        return LinkFunction(spec)
    spec = dict(spec)
    for key in ("knots", "values"):
        if key in spec:
            spec[key] = tuple(spec[key])
    return LinkFunction(**spec)


def _truth(cfg, n, s, rng):
    if cfg.truth == "compressible":
        return compressible_vector(n, s, rng)
    return random_sparse_vector(n, s, rng)


def _set_for(cfg: SweepConfig, s) -> FeasibleSet:
    if cfg.set is not None:
        return make_set(cfg.set)
    return make_set("ConvexSparse", n=cfg.n, s=int(s or 1), radius=1.0)


def _trial(args):
    """One (grid point, trial) evaluation.

    Returns ``(error, converged)``.  A solver that runs out of iterations
    still contributes the error of its best iterate.
    """
    cfg, gi, pt, t = args
    rng = np.random.default_rng(derive_seed(cfg.seed, gi, t))
    n, m, eps, s, r = cfg.n, pt["m"], pt["eps"], pt["s"] or 1, pt["r"] or 1
    exp = cfg.experiment
    rows = RowDistribution(cfg.model.get("rows", "Gaussian"), n)

    def l2(truth):
        return lambda est: float(np.linalg.norm(np.asarray(est) - truth))

    if exp in ("recover", "gauge", "regress", "feasibility"):
        x = _truth(cfg, n, s, rng)
        A = sample_sensing_matrix(rows, m, rng)
        y, _ = observe_linear(A, x, _noise_for(cfg, eps), rng)
        metric = l2(x)
        if exp == "recover":
            solve = lambda: l1_min(A, y, eps, solver=cfg.solver)[0]  # noqa: E731
        elif exp == "feasibility":
            solve = lambda: estimate_linear_feasibility(_set_for(cfg, s), A, y, eps).estimate  # noqa: E731
        else:
            solve = lambda: estimate_linear_gauge(_set_for(cfg, s), A, y, eps).estimate  # noqa: E731
    elif exp == "dict-recover":
        N = int(cfg.grid_list("N", 2 * n)[0])
        D = rng.standard_normal((n, N))
        D /= np.linalg.norm(D, axis=0)
        alpha = random_sparse_vector(N, s, rng)
        A = sample_sensing_matrix(rows, m, rng)
        y, _ = observe_linear(A, D @ alpha, _noise_for(cfg, eps), rng)
        solve = lambda: estimate_sparse_dictionary(D, A, y, eps, solver=cfg.solver).estimate  # noqa: E731
        metric = l2(D @ alpha)
    elif exp in ("lowrank", "complete"):
        d1, d2 = _dims(cfg)
        X = rng.standard_normal((d1, r)) @ rng.standard_normal((r, d2))
        if exp == "lowrank":
            X /= np.linalg.norm(X)
            A = sample_sensing_matrix(RowDistribution(rows.kind, d1 * d2), m, rng)
            y, _ = observe_linear(A, X.reshape(-1), _noise_for(cfg, eps), rng)
            solve = lambda: estimate_lowrank(A, y, d1, d2, eps).estimate  # noqa: E731
            metric = l2(X)
        else:
            X /= np.abs(X).max()
            sigma = float(cfg.grid_list("sigma", 0.0)[0])
            noise = NoiseSpec("IidBounded", sigma=sigma) if sigma > 0 else NoiseSpec()
            Y, mask, p = sample_entries(X, m, noise, rng)
            solve = lambda: complete_matrix(Y, mask, p, r).estimate  # noqa: E731
            metric = lambda est: float(np.linalg.norm(est - X)) / math.sqrt(X.size)  # noqa: E731
    elif exp == "onebit":
        K = _set_for(cfg, s)
        x = random_sparse_vector(n, s, rng)
        A = sample_sensing_matrix(rows, m, rng)
        y = observe_single_bit(A, x)
        solve = lambda: estimate_onebit(K, A, y).estimate  # noqa: E731
        metric = lambda est: float(np.sum((est - x) ** 2))  # noqa: E731
    elif exp == "project":
        x = random_sparse_vector(n, s, rng)
        A = sample_sensing_matrix(rows, m, rng)
        link = _link_for(cfg)
        y = observe_link(A, x, link, rng)
        lam, _ = link_constants(link, 1.0)
        solve = lambda: estimate_single_index(make_set("SparseCone", n=n, s=s), A, y).estimate  # noqa: E731
        metric = l2(lam * x)
    else:
        raise ConfigError(f"experiment {exp!r} is not a trial sweep")
    try:
        return metric(solve()), True
    except NotConverged as exc:
        if exc.estimate is None:
            raise
        return metric(exc.estimate), False


def _dims(cfg):
    if "d1" not in cfg.grid or "d2" not in cfg.grid:
        raise ConfigError(f"experiment {cfg.experiment!r} needs grid.d1 and grid.d2")
    return int(cfg.grid_list("d1")[0]), int(cfg.grid_list("d2")[0])


def _bound(cfg: SweepConfig, pt: dict, cache: dict) -> float:
    n, m, eps, s, r = cfg.n, max(pt["m"], 1), pt["eps"], pt["s"] or 1, pt["r"] or 1
    exp = cfg.experiment
    if exp in ("recover", "gauge", "regress", "feasibility", "onebit", "project"):
        key = ("width", s)
        if key not in cache:
            if exp == "project":
                cone = make_set("SparseCone", n=n, s=s)
                cache[key] = local_mean_width_mc(cone, 1.0, 2000, derive_seed(cfg.seed, 10**6)).mean
            else:
                K = make_set("ConvexSparse", n=n, s=s, radius=1.0) if cfg.set is None or exp == "recover" \
                    else _set_for(cfg, s)
                cache[key] = mean_width_mc(K, 2000, derive_seed(cfg.seed, 10**6)).mean
        w = cache[key]
        if exp == "onebit":
            return math.sqrt(8 * math.pi) * w / math.sqrt(m)
        if exp == "project":
            _, M = link_constants(_link_for(cfg), 1.0)
            return M * w / math.sqrt(m)
        return math.sqrt(8 * math.pi) * (w / math.sqrt(m) + eps)
    if exp == "dict-recover":
        N = int(cfg.grid_list("N", 2 * n)[0])
        return math.sqrt(s * math.log(N) / m) + math.sqrt(2 * math.pi) * eps
    if exp == "lowrank":
        d1, d2 = _dims(cfg)
        return 4 * math.sqrt(math.pi) * math.sqrt(r * (d1 + d2) / m)
    if exp == "complete":
        d1, d2 = _dims(cfg)
        return math.sqrt(r * (d1 + d2) / m) * (1 + float(cfg.grid_list("sigma", 0.0)[0]))
    return math.nan


def sweep(cfg: SweepConfig, workers: int | None = None):
    """Run an estimator over the grid with ``cfg.trials`` trials per point.

    Trial ``t`` at grid index ``gi`` uses the seed ``derive_seed(seed, gi, t)``,
    and per-point statistics are computed over trials in index order, so the
    records are identical for any number of workers.

    Returns
    -------
    records : list of SweepRecord
    fit : ScalingFit or None
        Log-log fit of median error against ``m`` over the ``eps = 0``
        points (first ``s``/``r`` value); ``None`` with fewer than 4 points.
    """
    workers = cfg.workers if workers is None else workers
    if cfg.experiment == "phase":
        s = int(cfg.grid_list("s")[0] or 1)
        records = exact_recovery_phase(cfg.n, s, cfg.grid_list("m"), cfg.trials, cfg.seed,
                                       solver="lp" if cfg.solver == "auto" else cfg.solver)
        return records, None
    if cfg.experiment == "tessellate":
        K = make_set(cfg.set) if cfg.set else make_set("SparseUnitSet", n=cfg.n,
                                                       s=int(cfg.grid_list("s")[0] or 1))
        return tessellation_sweep(K, cfg.grid_list("m"), 200, cfg.trials, cfg.seed)
    points = _grid_points(cfg)
    jobs = [(cfg, gi, pt, t) for gi, pt in enumerate(points) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_trial(j) for j in jobs]
    errors = [e for e, _ in results]
    converged = [c for _, c in results]
    records = []
    cache: dict = {}
    for gi, pt in enumerate(points):
        errs = errors[gi * cfg.trials:(gi + 1) * cfg.trials]
        params = {"experiment": cfg.experiment, "n": cfg.n, "m": pt["m"], "s": pt["s"],
                  "r": pt["r"], "eps": pt["eps"], "seed": cfg.seed}
        failed = cfg.trials - sum(converged[gi * cfg.trials:(gi + 1) * cfg.trials])
        extra = {"not_converged": failed} if failed else {}
        records.append(SweepRecord(params, _stats(errs), _bound(cfg, pt, cache), cfg.trials, extra))
    first = points[0]
    sub = [rec for rec, pt in zip(records, points)
           if pt["eps"] == 0 and pt["s"] == first["s"] and pt["r"] == first["r"]]
    fit = fit_loglog([r.params["m"] for r in sub], [r.error_stats["median"] for r in sub])
    return records, fit
