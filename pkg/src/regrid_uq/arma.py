"""Serially correlated regression errors.

The regression error is allowed to follow a causal ARMA(p, q) process. Its
correlation matrix ``Omega(eta)`` comes from the MA(infinity) expansion, and
for the one-parameter families AR(1) and MA(1) the marginal posterior of
``eta`` (after integrating out coefficients and ``sigma^2``) is evaluated on
a grid. Conditional on ``eta`` the problem is ordinary least squares on data
whitened by ``Omega^{-1/2}``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft, linalg, optimize

from .bayes_lm import RegressionDesign
from .errors import InvalidArgument, NumericError
from .rng import stream

FAMILIES = ("AR1", "MA1")
DEFAULT_ETA_GRID = np.linspace(-0.99, 0.99, 199)
TRUNCATION_MARGIN = 50


@dataclass(frozen=True)
class ArmaSpec:
    ar: tuple = ()
    ma: tuple = ()
    truncation: int = 200

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(a) for a in self.ar))
        object.__setattr__(self, "ma", tuple(float(b) for b in self.ma))
        if self.truncation < 1:
            raise InvalidArgument("truncation must be >= 1")
        if not is_causal(self.ar):
            raise InvalidArgument(f"AR polynomial {self.ar} is not causal")

    @property
    def p(self):
        return len(self.ar)

    @property
    def q(self):
        return len(self.ma)


def _inverse_root_radius(ar):
    """Largest modulus among the reciprocal roots of ``1 - ar[0] z - ar[1] z^2 - ...``.

    The reciprocals solve ``z^p - ar[0] z^(p-1) - ... - ar[p-1] = 0``, which stays
    well conditioned when the coefficients are tiny.
    """
    lam = np.roots(np.r_[1.0, -np.asarray(ar, dtype=float)])
    return float(np.abs(lam).max()) if lam.size else 0.0


def is_causal(ar):
    """True when all roots of ``1 - ar[0] z - ar[1] z^2 - ...`` lie outside the unit circle."""
    if not len(ar) or not np.any(ar):
        return True
    return _inverse_root_radius(ar) < 1.0 - 1e-10


def ma_inf_coeffs(spec):
    """First ``spec.truncation`` MA(infinity) weights, ``a_0 = 1``."""
    n = spec.truncation
    a = np.zeros(n)
    a[0] = 1.0
    for j in range(1, n):
        v = spec.ma[j - 1] if j <= spec.q else 0.0
        for i in range(1, min(spec.p, j) + 1):
            v += spec.ar[i - 1] * a[j - i]
        a[j] = v
    return a


def autocov(spec, sigma2, maxlag):
    """Autocovariances at lags ``0..maxlag`` from the truncated expansion."""
    if spec.truncation < maxlag + TRUNCATION_MARGIN:
        raise InvalidArgument(
            f"truncation {spec.truncation} is too short for maxlag {maxlag} (need >= {maxlag + TRUNCATION_MARGIN})")
    a = ma_inf_coeffs(spec)
    t = len(a)
    return sigma2 * np.array([a[: t - h] @ a[h:] for h in range(maxlag + 1)])


def auto_truncation(spec, n, tol=1e-16):
    """Truncation long enough for lag ``n - 1`` and a negligible tail."""
    need = n - 1 + TRUNCATION_MARGIN
    lam = _inverse_root_radius(spec.ar) if spec.p else 0.0
    if lam > 0.0:
        # weights decay like lam^j
        need = max(need, int(math.ceil(math.log(tol) / math.log(lam))) + spec.q + 1)
    return need


def family_spec(family, eta, n):
    if family not in FAMILIES:
        raise InvalidArgument(f"unknown ARMA family {family!r}; expected one of {FAMILIES}")
    if not abs(eta) < 1:
        raise InvalidArgument(f"|eta| must be < 1, got {eta}")
    s = ArmaSpec(ar=(eta,)) if family == "AR1" else ArmaSpec(ma=(eta,))
    return ArmaSpec(s.ar, s.ma, auto_truncation(s, n))


def build_omega(spec, n):
    """Correlation matrix of ``n`` consecutive errors."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    g = autocov(spec, 1.0, n - 1)
    om = linalg.toeplitz(g / g[0])
    om = 0.5 * (om + om.T)
    if n > 1 and linalg.eigvalsh(om)[0] < -1e-10:
        raise NumericError("ARMA correlation matrix is not positive semidefinite")
    return om


def _gls_parts(Z, y, omega):
    try:
        L = linalg.cholesky(omega, lower=True)
    except linalg.LinAlgError:
        raise NumericError("Omega(eta) is singular") from None
    Zw = linalg.solve_triangular(L, Z, lower=True)
    yw = linalg.solve_triangular(L, y, lower=True)
    return Zw.T @ Zw, Zw.T @ yw, float(yw @ yw), 2.0 * float(np.sum(np.log(np.diag(L))))


def _log_marginal(G, b, c, logdet_omega, n, k):
    """Unnormalized log posterior of eta from GLS summaries (vectorized over a leading axis)."""
    cf = np.linalg.cholesky(G)
    coef = np.linalg.solve(G, b[..., None])[..., 0]
    ss = c - np.einsum("...i,...i->...", b, coef)
    logdet_g = 2.0 * np.sum(np.log(np.diagonal(cf, axis1=-2, axis2=-1)), axis=-1)
    return -((n - k) / 2.0 + 1.0) * np.log(ss) + 0.5 * logdet_g - 0.5 * logdet_omega


def eta_log_marginal(eta, d, family):
    """Unnormalized log marginal posterior of ``eta`` for a design.

    Computed densely from ``Omega(eta)``: the generalized residual sum of
    squares ``SS``, ``det(Z^T Omega^{-1} Z)`` and ``det(Omega)`` combine as
    ``-((n - k)/2 + 1) log SS + 1/2 log det(Z^T Omega^-1 Z) - 1/2 log det Omega``.
    """
    omega = build_omega(family_spec(family, eta, d.n), d.n)
    G, b, c, ld = _gls_parts(d.Z, d.y, omega)
    return float(_log_marginal(G, b, c, ld, d.n, d.k))


def gls_summaries(Z, y, family, etas):
    """``Z^T Omega^-1 Z``, ``Z^T Omega^-1 y``, ``y^T Omega^-1 y`` and ``log det Omega`` for each eta.

    Uses the tridiagonal AR(1) precision matrix or the sine-basis
    diagonalization of the MA(1) correlation matrix, so every grid point
    costs O(n k^2) instead of a dense factorization.
    """
    etas = np.asarray(etas, dtype=float)
    if np.any(np.abs(etas) >= 1):
        raise InvalidArgument("|eta| must be < 1")
    W = np.column_stack([Z, y])
    n, k1 = W.shape
    if family == "AR1":
        A0 = W.T @ W
        Am = W[1:-1].T @ W[1:-1]
        A1 = W[:-1].T @ W[1:]
        A1 = A1 + A1.T
        e = etas[:, None, None]
        Q = (A0 + e**2 * Am - e * A1) / (1.0 - e**2)
        logdet = (n - 1) * np.log1p(-etas**2)
    elif family == "MA1":
        U = fft.dst(W, type=1, axis=0, norm="ortho")
        c = etas / (1.0 + etas**2)
        lam = 1.0 + 2.0 * c[:, None] * np.cos(np.arange(1, n + 1) * np.pi / (n + 1))[None, :]
        Q = np.einsum("ej,ja,jb->eab", 1.0 / lam, U, U)
        logdet = np.sum(np.log(lam), axis=1)
    else:
        raise InvalidArgument(f"unknown ARMA family {family!r}; expected one of {FAMILIES}")
    kk = k1 - 1
    return Q[:, :kk, :kk], Q[:, :kk, kk], Q[:, kk, kk], logdet


@dataclass(frozen=True, eq=False)
class EtaPosterior:
    grid: np.ndarray
    log_density: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_log_density(cls, grid, log_density):
        ld = np.asarray(log_density, dtype=float)
        w = np.exp(ld - ld.max())
        return cls(np.asarray(grid, dtype=float), ld, w / w.sum())

    def to_csv_rows(self):
        return [(float(e), float(l), float(w)) for e, l, w in zip(self.grid, self.log_density, self.weights)]


def eta_posterior(d, family, grid=DEFAULT_ETA_GRID):
    """Grid posterior of ``eta`` for design ``d``."""
    G, b, c, ld = gls_summaries(d.Z, d.y, family, grid)
    return EtaPosterior.from_log_density(grid, _log_marginal(G, b, c, ld, d.n, d.k))


def sample_eta(post, seed, size=None):
    """Inverse-CDF draw(s) from the discrete grid posterior."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    u = rng.random(size)
    cdf = np.cumsum(post.weights)
    idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1)
    return post.grid[idx]


def inverse_sqrt(omega):
    """Symmetric inverse square root of a positive-definite matrix."""
    w, v = linalg.eigh(omega)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise NumericError("correlation matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def whiten(d, omega):
    """Return the design premultiplied by ``Omega^{-1/2}``."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (d.n, d.n):
        raise InvalidArgument(f"omega must be {d.n}x{d.n}")
    if not np.allclose(omega, omega.T):
        raise NumericError("omega is not symmetric")
    r = inverse_sqrt(omega)
    return RegressionDesign(r @ d.y, r @ d.X, r @ d.S, d.names)


def _arma_profile_nll(params, p, q, r):
    ar, ma = params[:p], params[p:]
    if not is_causal(ar) or np.any(np.abs(ma) > 5):
        return np.inf
    n = len(r)
    spec = ArmaSpec(ar, ma, 1)
    spec = ArmaSpec(ar, ma, min(auto_truncation(spec, n, tol=1e-12), 20000))
    omega = build_omega(spec, n)
    try:
        cf = linalg.cho_factor(omega, lower=True)
    except linalg.LinAlgError:
        return np.inf
    s2 = float(r @ linalg.cho_solve(cf, r)) / n
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return 0.5 * n * (math.log(2 * math.pi * s2) + 1.0) + 0.5 * logdet


def arma_order_report(residuals, max_p=2, max_q=2, grid=DEFAULT_ETA_GRID):
    """AIC/BIC for ARMA(p, q) error models fitted to regression residuals.

    Each model is fitted by Gaussian profile likelihood (innovation variance
    profiled out). One-parameter models are scanned on the ``eta`` grid;
    larger models start from the best one-parameter fit and are polished
    with Nelder-Mead. Returns a list of dicts sorted by ``(p, q)``.
    """
    r = np.asarray(residuals, dtype=float)
    r = r - r.mean()
    n = len(r)
    rows = []
    single = {}
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            npar = p + q
            if npar == 0:
                nll = _arma_profile_nll(np.zeros(0), 0, 0, r)
                x = np.zeros(0)
            elif npar == 1:
                vals = [_arma_profile_nll(np.array([e]), p, q, r) for e in grid]
                i = int(np.argmin(vals))
                x, nll = np.array([grid[i]]), vals[i]
                single[(p, q)] = grid[i]
            else:
                x0 = np.zeros(npar)
                if p:
                    x0[0] = single.get((1, 0), 0.0) / 2
                if q:
                    x0[p] = single.get((0, 1), 0.0) / 2
                res = optimize.minimize(_arma_profile_nll, x0, args=(p, q, r), method="Nelder-Mead",
                                        options={"xatol": 1e-4, "fatol": 1e-6, "maxiter": 400})
                x, nll = res.x, float(res.fun)
            k = npar + 1
            rows.append({"p": p, "q": q, "params": tuple(float(v) for v in x), "nll": float(nll),
                         "aic": 2 * nll + 2 * k, "bic": 2 * nll + k * math.log(n)})
    return rows
