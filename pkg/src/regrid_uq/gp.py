"""Gaussian-process regridding with an exponential covariance.

A transformed field observed on a native grid is modelled, day by day, as a
stationary GP with constant mean ``mu`` and covariance

    C(s, s') = rho * exp(-|s - s'| / theta)

Days are independent replicates, so one set of parameters is fitted per field
by pooling days. Given the parameters the field on a target grid is normal
with the kriging mean and the conditional covariance; drawing from that law
is conditional simulation.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import IllConditionedCovariance, InvalidArgument, InvalidCovariance
from .grid import pairwise_distances
from .rng import stream

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
RHO_FLOOR = 1e-12
REL_JITTER = 1e-8
MAX_JITTER_ESCALATIONS = 3


@dataclass(frozen=True)
class CovParams:
    rho: float
    theta: float
    mu: float = 0.0
    jitter: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgument(f"rho must be positive, got {self.rho}")
        if not self.theta > 0:
            raise InvalidArgument(f"theta must be positive, got {self.theta}")
        if not self.jitter >= 0:
            raise InvalidArgument(f"jitter must be nonnegative, got {self.jitter}")
        if not np.isfinite(self.mu):
            raise InvalidArgument("mu must be finite")

    def to_text(self):
        return f"rho={self.rho!r} theta_km={self.theta!r} mu={self.mu!r} jitter={self.jitter!r}"

    @classmethod
    def from_text(cls, text):
        kv = dict(tok.split("=", 1) for tok in text.split())
        try:
            return cls(rho=float(kv["rho"]), theta=float(kv["theta_km"]),
                       mu=float(kv["mu"]), jitter=float(kv["jitter"]))
        except KeyError as e:
            raise InvalidArgument(f"covariance parameter block is missing {e.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class ConditionalLaw:
    """Normal law of a field on the target grid given native-grid values."""

    mean: np.ndarray
    cov: np.ndarray
    day_index: int = 0


def exp_cov(d, p, add_jitter=None):
    """Exponential covariance for the distance matrix ``d``.

    The jitter goes on the diagonal when ``add_jitter`` is true, or, when it
    is None, whenever ``d`` is square with a zero diagonal.
    """
    d = np.asarray(d, dtype=float)
    k = p.rho * np.exp(-d / p.theta)
    if add_jitter is None:
        add_jitter = d.ndim == 2 and d.shape[0] == d.shape[1] and not np.any(np.diag(d))
    if add_jitter and p.jitter:
        k[np.diag_indices_from(k)] += p.jitter
    return k


def chol_jittered(k, jitter, scale=1.0):
    """Lower Cholesky factor of ``k``, escalating diagonal jitter on failure.

    ``k`` should already contain ``jitter`` on its diagonal. On failure the
    jitter is multiplied by 10 up to three times (starting from
    ``REL_JITTER * scale`` when ``jitter`` is zero). Returns ``(L, jitter)``.
    """
    base = k
    extra = 0.0
    j = jitter
    for attempt in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            m = base if extra == 0.0 else base + extra * np.eye(len(base))
            return linalg.cholesky(m, lower=True, check_finite=False), j
        except linalg.LinAlgError:
            if attempt == MAX_JITTER_ESCALATIONS:
                break
            new_j = 10.0 * j if j > 0 else REL_JITTER * scale
            extra += new_j - j
            j = new_j
            log.debug("cholesky failed; jitter escalated to %g", j)
    raise IllConditionedCovariance(
        f"covariance factorization failed after {MAX_JITTER_ESCALATIONS} jitter escalations (jitter={j:g})")


def _as_days(fields, n):
    x = np.asarray(fields, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n:
        raise InvalidArgument(f"each day's field must have length {n}, got array of shape {x.shape}")
    if x.shape[0] < 1:
        raise InvalidArgument("at least one day of data is required")
    return x


def neg_log_lik(p, native, fields):
    """Negative log-likelihood of independent replicate days.

    ``fields`` is a (days, n) array of transformed values on ``native``.
    """
    x = _as_days(fields, len(native))
    t, n = x.shape
    k = exp_cov(pairwise_distances(native, native), p)
    L, _ = chol_jittered(k, p.jitter, scale=p.rho)
    r = linalg.solve_triangular(L, (x - p.mu).T, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return 0.5 * t * logdet + 0.5 * float(np.sum(r * r)) + 0.5 * t * n * LOG_2PI


@dataclass(frozen=True)
class _Profile:
    nll: float
    rho: float
    mu: float


def _profile(d, x, theta):
    t, n = x.shape
    r = np.exp(-d / theta)
    r[np.diag_indices_from(r)] += REL_JITTER
    L, _ = chol_jittered(r, REL_JITTER)
    li1 = linalg.solve_triangular(L, np.ones(n), lower=True, check_finite=False)
    lix = linalg.solve_triangular(L, x.T, lower=True, check_finite=False)
    mu = float(li1 @ lix.sum(axis=1) / (t * (li1 @ li1)))
    res = lix - mu * li1[:, None]
    rho = float(np.sum(res * res) / (n * t))
    rho = max(rho, RHO_FLOOR)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    nll = 0.5 * n * t * math.log(rho) + 0.5 * t * logdet + 0.5 * n * t * (1.0 + LOG_2PI)
    return _Profile(nll, rho, mu)


def _golden(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol:
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = f(e)
    return (a + b) / 2.0


def theta_bounds(native):
    d = pairwise_distances(native, native)
    nz = d[d > 0]
    return 0.1 * float(nz.min()), 10.0 * float(nz.max())


def fit_mle(native, fields, n_grid=60, rtol=1e-4):
    """Maximum-likelihood ``CovParams`` by profiling out ``mu`` and ``rho``.

    For a given range ``theta`` the mean is the GLS estimate and the sill is
    the average scaled quadratic form; ``theta`` itself is located on a
    log-spaced grid over ``[0.1 * min distance, 10 * max distance]`` and
    refined by golden-section search in ``log(theta)``. Jitter is fixed at
    ``1e-8 * rho``.

    A constant field gives ``rho`` at the floor ``1e-12`` and
    ``degenerate=True``.
    """
    if len(native) < 2:
        raise InvalidArgument("fit_mle needs at least two locations")
    x = _as_days(fields, len(native))
    d = pairwise_distances(native, native)
    lo, hi = theta_bounds(native)

    if np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        log.warning("constant field on grid %r; returning degenerate covariance parameters", native.id)
        return CovParams(rho=RHO_FLOOR, theta=hi, mu=float(x.mean()), jitter=REL_JITTER * RHO_FLOOR,
                         degenerate=True)

    cache = {}

    def prof(lt):
        if lt not in cache:
            cache[lt] = _profile(d, x, math.exp(lt))
        return cache[lt]

    grid = np.linspace(math.log(lo), math.log(hi), n_grid)
    vals = np.array([prof(g).nll for g in grid])
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_grid - 1)]
    lt = _golden(lambda s: prof(s).nll, a, b, rtol)
    if prof(grid[i]).nll < prof(lt).nll:
        lt = grid[i]
    best = prof(lt)
    degenerate = best.rho <= RHO_FLOOR
    return CovParams(rho=best.rho, theta=math.exp(lt), mu=best.mu, jitter=REL_JITTER * best.rho,
                     degenerate=degenerate)


@dataclass(frozen=True, eq=False)
class KrigingOperator:
    """Day-independent pieces of the conditional law.

    ``weights`` maps native anomalies to target anomalies; ``cov`` is the
    conditional covariance, identical for every day.
    """

    params: CovParams
    weights: np.ndarray
    cov: np.ndarray

    def means(self, native_values):
        x = np.asarray(native_values, dtype=float)
        return self.params.mu + (x - self.params.mu) @ self.weights.T


def kriging_operator(p, native, target):
    k_ss = exp_cov(pairwise_distances(native, native), p)
    L, j = chol_jittered(k_ss, p.jitter, scale=p.rho)
    if j != p.jitter:
        log.info("kriging on grid %r used escalated jitter %g", native.id, j)
    k_ts = exp_cov(pairwise_distances(target, native), p)
    k_tt = exp_cov(pairwise_distances(target, target), p)
    w = linalg.cho_solve((L, True), k_ts.T, check_finite=False).T
    c = k_tt - w @ k_ts.T
    c = 0.5 * (c + c.T)
    return KrigingOperator(p, w, c)


def conditional_law(p, native, target, native_values, day_index=0):
    """Kriging mean and conditional covariance on ``target`` for one day."""
    v = np.asarray(native_values, dtype=float)
    if v.shape != (len(native),):
        raise InvalidArgument(f"native_values must have length {len(native)}, got shape {v.shape}")
    op = kriging_operator(p, native, target)
    return ConditionalLaw(op.means(v), op.cov, day_index)


def psd_factor(cov, tol=1e-6, scale=0.0):
    """Square-root factor ``F`` with ``F @ F.T == cov`` for a PSD matrix.

    Uses an eigendecomposition with negative eigenvalues clipped to zero, so
    singular covariances are fine. Eigenvalues below
    ``-tol * max(trace, scale)`` raise ``InvalidCovariance``; pass the prior
    sill as ``scale`` when ``cov`` may be a vanishing conditional covariance.
    """
    c = np.asarray(cov, dtype=float)
    w, v = linalg.eigh(c, check_finite=False)
    tr = max(abs(float(np.trace(c))), scale)
    if w.size and w.min() < -tol * tr:
        raise InvalidCovariance(f"covariance has eigenvalue {w.min():.3g} below -{tol:g} * trace")
    return v * np.sqrt(np.clip(w, 0.0, None))


def conditional_simulate(law, n_draws, seed):
    """Draw ``n_draws`` fields from ``law``; rows are independent draws.

    Row ``r`` uses the random stream keyed by ``(seed, law.day_index, r)``.
    """
    if n_draws < 1:
        raise InvalidArgument("n_draws must be >= 1")
    f = psd_factor(law.cov)
    n = len(law.mean)
    z = np.empty((n_draws, n))
    for r in range(n_draws):
        z[r] = stream(seed, law.day_index, r).standard_normal(n)
    return law.mean + z @ f.T


def simulate_days(means, factor, rng):
    """One conditional simulation for a block of days.

    ``means`` is (days, n); the same ``factor`` applies to every day.
    """
    z = rng.standard_normal(means.shape)
    return means + z @ factor.T
