"""Monte Carlo estimators: tails, two-point averages, typical maxima,
pseudo-critical points and power-law fits.

Replica-level observables are reduced to ``EstimateRecord`` values carrying a
standard error and a percentile-bootstrap interval over replicas.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .clusters import (ClusterForest, crossing_parameter, size_tail, susceptibility_without_largest,
                       two_point_profile, window_stats)
from .errors import DomainError, InsufficientDataError, SearchError
from .kernel import Kernel, TorusBox, displacement_classes, class_weights, exponent_bounds
from .sampler import sample_configuration

MIN_TAIL_REPLICAS = 50
MIN_TYPICAL_REPLICAS = 100
DEFAULT_TOLERANCE = 0.05


@dataclass(frozen=True)
class EstimateRecord:
    quantity: str
    params: dict
    estimate: float
    n_samples: int
    stderr: float
    ci_level: float
    ci_lo: float
    ci_hi: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def bootstrap_ci(values, level: float = 0.95, n_boot: int = 1000, seed: int = 0,
                 stat=np.mean) -> tuple[float, float]:
    """Percentile bootstrap over the first axis; returns ``(lo, hi)`` per column."""
    values = np.asarray(values, dtype=float)
    rng = np.random.Generator(np.random.Philox(key=[seed % 2 ** 64, 0xB007]))
    R = values.shape[0]
    idx = rng.integers(0, R, size=(n_boot, R))
    boots = np.stack([stat(values[i], axis=0) for i in idx])
    a = (1 - level) / 2
    return np.quantile(boots, a, axis=0), np.quantile(boots, 1 - a, axis=0)


def records_from_matrix(quantity, matrix, keys, params, *, key_name="n", level=0.95,
                        n_boot=1000, seed=0) -> list[EstimateRecord]:
    """One record per column of an ``(R, k)`` replica matrix (mean over replicas)."""
    M = np.asarray(matrix, dtype=float)
    R = M.shape[0]
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(mean)
    lo, hi = bootstrap_ci(M, level, n_boot, seed)
    lo = np.minimum(lo, mean)
    hi = np.maximum(hi, mean)
    out = []
    for j, key in enumerate(keys):
        p = dict(params)
        p[key_name] = key.item() if hasattr(key, "item") else key
        out.append(EstimateRecord(quantity, p, float(mean[j]), R, float(se[j]), level,
                                  float(lo[j]), float(hi[j]), seed))
    return out


# ---------------------------------------------------------------------------
# per-replica observables

def window_normalizer(box: TorusBox, r: int) -> float:
    """``sum_v |(v + Λ_r) ∩ box|``."""
    if box.is_torus:
        return float(box.N) * (2 * r + 1) ** box.d
    return float(box.L * (2 * r + 1) - r * (r + 1)) ** box.d


def tail_row(forest: ClusterForest, ns) -> np.ndarray:
    return size_tail(forest, ns)


def two_point_row(forest: ClusterForest, rs) -> np.ndarray:
    rs = np.atleast_1d(np.asarray(rs, dtype=np.int64))
    prof = two_point_profile(forest, int(rs.max()))
    return np.array([prof[r] / window_normalizer(forest.box, int(r)) for r in rs])


def _replicas(ensemble, fn):
    return ensemble.replica_matrix(fn) if hasattr(ensemble, "replica_matrix") else np.asarray(ensemble, dtype=float)


def tail_estimate(ensemble, ns, **kw) -> list[EstimateRecord]:
    """Vertex-averaged ``P(|K_v| >= n)`` for each ``n``.

    ``ensemble`` is an :class:`~lrperc.ensemble.Ensemble` or a precomputed
    ``(R, len(ns))`` matrix of per-replica tails.
    """
    ns = np.atleast_1d(ns)
    if ns.size == 0:
        raise DomainError("empty n grid")
    M = _replicas(ensemble, lambda f: tail_row(f, ns))
    if M.shape[0] < MIN_TAIL_REPLICAS:
        raise InsufficientDataError(f"need at least {MIN_TAIL_REPLICAS} replicas, got {M.shape[0]}")
    params = ensemble.params() if hasattr(ensemble, "params") else {}
    seed = getattr(ensemble, "seed", 0)
    return records_from_matrix("tail", M, ns, params, key_name="n", seed=seed, **kw)


def two_point_avg_estimate(ensemble, rs, **kw) -> list[EstimateRecord]:
    """``(1/|Λ_r|) sum_{x in Λ_r} P(0 <-> x)`` for each ``r``."""
    rs = np.atleast_1d(rs)
    if rs.size == 0:
        raise DomainError("empty r grid")
    M = _replicas(ensemble, lambda f: two_point_row(f, rs))
    params = ensemble.params() if hasattr(ensemble, "params") else {}
    seed = getattr(ensemble, "seed", 0)
    return records_from_matrix("two_point", M, rs, params, key_name="r", seed=seed, **kw)


def typical_max_from_samples(kmax_samples) -> int:
    """``min{n >= 0 : P̂(K_max >= n) <= 1/e}`` from a sample of window maxima."""
    s = np.sort(np.asarray(kmax_samples))
    R = s.size
    n = 0
    thr = math.exp(-1)
    while True:
        frac = (R - np.searchsorted(s, n, side="left")) / R
        if frac <= thr:
            return n
        n += 1


def m_typical_estimate(ensemble, window=None) -> int:
    """Empirical typical maximum ``M̂(Λ)`` (window defaults to the whole box)."""
    if hasattr(ensemble, "forests"):
        if ensemble.n_replicas < MIN_TYPICAL_REPLICAS:
            raise InsufficientDataError(f"need at least {MIN_TYPICAL_REPLICAS} replicas")
        win = np.arange(ensemble.box.N) if window is None else window
        samples = [window_stats(f, win).max_in_window for f in ensemble.forests()]
    else:
        samples = np.asarray(ensemble)
        if samples.size < MIN_TYPICAL_REPLICAS:
            raise InsufficientDataError(f"need at least {MIN_TYPICAL_REPLICAS} replicas")
    return typical_max_from_samples(samples)


# ---------------------------------------------------------------------------
# pseudo-critical point

def replica_thresholds(box: TorusBox, kernel: Kernel, seed: int, n_replicas: int, beta_hi: float,
                       threshold: float, *, periodized: bool = False, start: int = 0) -> np.ndarray:
    """Exact per-replica ``beta`` at which ``|K_max|`` first reaches ``threshold``.

    Uses the coupled sampler at ``beta_hi``: an edge with uniform ``U`` and
    kernel value ``J`` is open at ``beta`` iff ``beta > -log(1 - U) / J``, so a
    single sweep over open edges sorted by that value recovers the whole
    monotone path ``beta -> K_max``. Replicas not crossing by ``beta_hi``
    give ``inf``.
    """
    classes = displacement_classes(box)
    J = class_weights(kernel, classes, periodized)
    out = np.empty(n_replicas)
    for i in range(n_replicas):
        cfg = sample_configuration(box, kernel, beta_hi, seed, start + i, periodized=periodized,
                                   keep_uniforms=True)
        act = -np.log1p(-cfg.uniforms) / J[cfg.edge_class]
        out[i] = crossing_parameter(box.N, cfg.edges, act, threshold)
    return out


def crossing_fraction(thresholds, beta) -> float:
    """``D̂(beta)``: fraction of replicas whose threshold is at most ``beta``."""
    return float(np.mean(np.asarray(thresholds) <= beta))


def bisect_crossing(thresholds, lo: float, hi: float, level: float = 0.5, rtol: float = 1e-7) -> float:
    """Bisection for the smallest ``beta`` with ``D̂(beta) >= level``."""
    if not lo < hi:
        raise SearchError("need lo < hi")
    if crossing_fraction(thresholds, lo) >= level or crossing_fraction(thresholds, hi) < level:
        raise SearchError(f"[{lo}, {hi}] does not bracket the crossing at level {level}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if crossing_fraction(thresholds, mid) >= level:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class CrossingResult:
    L: int
    beta: float
    ci_lo: float
    ci_hi: float
    stderr: float
    n_replicas: int
    thresholds: np.ndarray = field(repr=False)


@dataclass
class BetaCResult:
    """Pseudo-critical estimates across box sizes.

    ``beta_hat`` is the largest-``L`` crossing and ``systematic`` the spread
    of crossings across sizes. ``non_convergent`` is raised when crossings
    drift upward with ``L`` by more than ``drift_tol`` per doubling of ``N``
    (relative), with every step of the drift significant.
    """

    crossings: list
    beta_hat: float
    systematic: float
    drift_per_doubling: float
    non_convergent: bool
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat, "systematic": self.systematic,
            "drift_per_doubling": self.drift_per_doubling, "non_convergent": self.non_convergent,
            "flags": list(self.flags),
            "crossings": [{"L": c.L, "beta": c.beta, "ci_lo": c.ci_lo, "ci_hi": c.ci_hi,
                           "stderr": c.stderr, "n_replicas": c.n_replicas} for c in self.crossings],
        }


def crossing_for_size(box: TorusBox, kernel: Kernel, n_replicas: int, seed: int, *,
                      beta_lo: float = 0.0, beta_hi: float = 4.0, threshold_exponent: float = 0.75,
                      level: float = 0.5, periodized: bool = False, n_boot: int = 400,
                      expand_to: float | None = None) -> CrossingResult:
    """Crossing for one box. With ``expand_to``, ``beta_hi`` is doubled (up to that
    value) until the interval brackets the crossing; otherwise a non-bracketing
    interval raises :class:`SearchError`."""
    thr = box.N ** threshold_exponent
    ts = replica_thresholds(box, kernel, seed, n_replicas, beta_hi, thr, periodized=periodized)
    while expand_to is not None and crossing_fraction(ts, beta_hi) < level and beta_hi < expand_to:
        beta_hi = min(2 * beta_hi, expand_to)
        ts = replica_thresholds(box, kernel, seed, n_replicas, beta_hi, thr, periodized=periodized)
    beta = bisect_crossing(ts, beta_lo, beta_hi, level)
    rng = np.random.Generator(np.random.Philox(key=[seed % 2 ** 64, box.L]))
    boots = []
    for _ in range(n_boot):
        sample = ts[rng.integers(0, ts.size, ts.size)]
        if crossing_fraction(sample, beta_lo) >= level or crossing_fraction(sample, beta_hi) < level:
            continue
        boots.append(bisect_crossing(sample, beta_lo, beta_hi, level))
    boots = np.asarray(boots) if boots else np.array([beta])
    lo, hi = np.quantile(boots, [0.025, 0.975])
    return CrossingResult(box.L, beta, float(min(lo, beta)), float(max(hi, beta)),
                          float(boots.std(ddof=1)) if boots.size > 1 else 0.0, n_replicas, ts)


def beta_c_search(kernel: Kernel, sizes, n_replicas: int = 200, seed: int = 0, *,
                  boundary: str = "torus", beta_lo: float = 0.0, beta_hi: float = 4.0,
                  threshold_exponent: float = 0.75, level: float = 0.5, normalize: bool = True,
                  periodized: bool = False, drift_tol: float = 0.02, z_sig: float = 3.0,
                  expand_to: float | None = None) -> BetaCResult:
    """Crossing of ``D̂_L(beta) = P̂(|K_max| >= N^(3/4))`` through 1/2 for increasing ``L``.

    With ``normalize`` the kernel is rescaled so the lattice sum of ``J`` is one.
    """
    sizes = sorted(int(L) for L in sizes)
    if len(sizes) < 2:
        raise DomainError("need at least two box sizes")
    k = kernel.normalized() if normalize else kernel
    crossings = [crossing_for_size(TorusBox(k.d, L, boundary), k, n_replicas, seed + i,
                                   beta_lo=beta_lo, beta_hi=beta_hi,
                                   threshold_exponent=threshold_exponent, level=level,
                                   periodized=periodized, expand_to=expand_to)
                 for i, L in enumerate(sizes)]
    betas = np.array([c.beta for c in crossings])
    ses = np.array([c.stderr for c in crossings])
    logN = np.log2([L ** k.d for L in sizes])
    slope = float(np.polyfit(logN, betas, 1)[0]) if len(sizes) > 1 else 0.0
    rel = slope / betas[-1]
    steps_up = all((betas[i + 1] - betas[i]) > z_sig * math.hypot(ses[i], ses[i + 1])
                   for i in range(len(betas) - 1))
    non_conv = bool(rel > drift_tol and steps_up)
    flags = ("non_convergent_beta_c",) if non_conv else ()
    return BetaCResult(crossings, float(betas[-1]), float(betas.max() - betas.min()), float(rel),
                       non_conv, flags)


def susceptibility_scan(box: TorusBox, kernel: Kernel, betas, n_replicas: int, seed: int = 0,
                        periodized: bool = False) -> tuple[np.ndarray, float]:
    """Mean ``(sum s^2 - s_max^2)/N`` over replicas at each ``beta``; returns ``(chi, beta_peak)``.

    Replica ``r`` uses the same stream at every ``beta``, so the scan is monotonically coupled.
    """
    from .clusters import build_clusters

    betas = np.asarray(betas, dtype=float)
    chi = np.zeros(betas.size)
    for j, b in enumerate(betas):
        for r in range(n_replicas):
            f = build_clusters(sample_configuration(box, kernel, b, seed, r, periodized=periodized))
            chi[j] += susceptibility_without_largest(f.sizes)
    chi /= n_replicas
    return chi, float(betas[int(np.argmax(chi))])


# ---------------------------------------------------------------------------
# fits and audits

@dataclass(frozen=True)
class FitResult:
    """Decay exponent of ``y ~ C x^(-exponent)`` over a window."""

    exponent: float
    intercept: float
    ci_lo: float
    ci_hi: float
    window: tuple
    n_points: int
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def _loglog_slope(x, y):
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return coef


def fit_window(size: float, lo: float = 10.0) -> tuple[float, float]:
    """Default window ``[10, size^0.8 / 10]``."""
    return lo, size ** 0.8 / 10


def exponent_fit(x, y, window=None, *, stderr=None, replicas=None, level: float = 0.95,
                 n_boot: int = 1000, seed: int = 0) -> FitResult:
    """Log-log least squares for ``y ~ x^-exponent`` on ``window``.

    The interval comes from resampling replicas when the ``(R, len(x))``
    replica matrix is given, from Gaussian perturbation by ``stderr`` when
    only standard errors are available, and from residual resampling otherwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = (x.min(), x.max()) if window is None else window
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < 4:
        raise InsufficientDataError(f"need at least 4 points in the window, got {int(sel.sum())}")
    if np.any(y[sel] <= 0):
        raise DomainError("nonpositive estimates inside the fit window")
    xs, ys = x[sel], y[sel]
    slope, icpt = _loglog_slope(xs, ys)
    rng = np.random.Generator(np.random.Philox(key=[seed % 2 ** 64, 0xF17]))
    boots = []
    if replicas is not None:
        Rm = np.asarray(replicas, dtype=float)[:, sel]
        method = "replica-bootstrap"
        for _ in range(n_boot):
            yb = Rm[rng.integers(0, Rm.shape[0], Rm.shape[0])].mean(axis=0)
            if np.all(yb > 0):
                boots.append(_loglog_slope(xs, yb)[0])
    elif stderr is not None:
        se = np.asarray(stderr, dtype=float)[sel]
        method = "parametric"
        for _ in range(n_boot):
            yb = ys + se * rng.standard_normal(ys.size)
            if np.all(yb > 0):
                boots.append(_loglog_slope(xs, yb)[0])
    else:
        method = "residual-bootstrap"
        fitted = icpt + slope * np.log(xs)
        res = np.log(ys) - fitted
        for _ in range(n_boot):
            boots.append(_loglog_slope(xs, np.exp(fitted + rng.choice(res, res.size)))[0])
    boots = -np.asarray(boots) if boots else np.array([-slope])
    a = (1 - level) / 2
    clo, chi_ = np.quantile(boots, [a, 1 - a])
    exponent = float(-slope)
    return FitResult(exponent, float(icpt), float(min(clo, exponent)), float(max(chi_, exponent)),
                     (float(lo), float(hi)), int(sel.sum()), method)


@dataclass
class AuditRow:
    name: str
    fitted: float | None
    bound: float | None
    predicted: float | None
    tolerance: float
    passed: bool | None
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BoundAudit:
    d: int
    alpha: float
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if r.passed is not None)

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "pass": self.passed,
                "rows": [r.to_dict() for r in self.rows]}


def bound_audit(d: int, alpha: float, tail_fit: FitResult | float | None,
                two_point_fit: FitResult | float | None, tolerance: float = DEFAULT_TOLERANCE,
                prediction_window: float = 0.10) -> BoundAudit:
    """Compare fitted exponents with the proven lower bounds (asserted) and the
    conjectured values (reported only)."""
    if tail_fit is None or two_point_fit is None:
        raise DomainError("bound audit needs both the tail fit and the two-point fit")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = exponent_bounds(d, alpha)
    t = tail_fit.exponent if isinstance(tail_fit, FitResult) else float(tail_fit)
    r = two_point_fit.exponent if isinstance(two_point_fit, FitResult) else float(two_point_fit)
    inv_delta = b.inverse_delta_predicted
    decay_pred = d - b.two_minus_eta_predicted if b.two_minus_eta_predicted is not None else None
    rows = [
        AuditRow("tail_exponent", t, b.theta, inv_delta, tolerance, t >= b.theta - tolerance,
                 "" if inv_delta is None else
                 f"|fit - 1/delta| = {abs(t - inv_delta):.3f} (window {prediction_window})"),
        AuditRow("two_point_decay", r, b.two_point_decay, decay_pred, tolerance,
                 r >= b.two_point_decay - tolerance),
        AuditRow("tail_vs_prediction", t, None, inv_delta, prediction_window, None,
                 "reported only" if inv_delta is None else
                 ("consistent" if abs(t - inv_delta) <= prediction_window else "inconsistent")),
    ]
    return BoundAudit(d, alpha, rows)
