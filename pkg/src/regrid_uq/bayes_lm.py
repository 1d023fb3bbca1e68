"""Linear regression under the uniform prior on (coefficients, log sigma^2).

With that prior the posterior factorizes as

    sigma^2 | y        ~ scaled Inv-chi^2(n - k, s^2)
    coef | sigma^2, y  ~ N(coef_hat, sigma^2 (Z^T Z)^{-1})

where ``Z = [X S]`` and ``coef_hat``, ``s^2`` are the least-squares estimates.
Sampling is exact: no Markov chain is involved.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .errors import InvalidArgument, SingularDesign
from .rng import stream

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class RegressionDesign:
    """Response ``y`` with design ``X`` (intercept first) and optional ``S``.

    ``names`` labels the columns of ``[X S]``.
    """

    y: np.ndarray
    X: np.ndarray
    S: np.ndarray = None
    names: tuple = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        S = np.zeros((len(y), 0)) if self.S is None else np.asarray(self.S, dtype=float)
        if S.ndim == 1:
            S = S[:, None]
        if X.shape[0] != len(y) or S.shape[0] != len(y):
            raise InvalidArgument(f"row mismatch: y has {len(y)}, X has {X.shape[0]}, S has {S.shape[0]}")
        k = X.shape[1] + S.shape[1]
        names = self.names
        if names is None:
            names = tuple(f"beta{j}" for j in range(X.shape[1])) + tuple(f"gamma{j}" for j in range(S.shape[1]))
        if len(names) != k:
            raise InvalidArgument(f"expected {k} column names, got {len(names)}")
        if k >= len(y):
            raise InvalidArgument(f"need more observations ({len(y)}) than coefficients ({k})")
        for name, v in (("y", y), ("X", X), ("S", S)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "names", tuple(names))
        check_full_rank(self.Z, self.names)

    @property
    def Z(self):
        return np.hstack([self.X, self.S])

    @property
    def n(self):
        return len(self.y)

    @property
    def k(self):
        return self.X.shape[1] + self.S.shape[1]

    @property
    def m(self):
        """Number of ``X`` columns (intercept included)."""
        return self.X.shape[1]


def check_full_rank(Z, names=None):
    """Raise ``SingularDesign`` unless ``Z`` has full column rank."""
    names = names or tuple(f"col{j}" for j in range(Z.shape[1]))
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    if s.size == 0:
        return
    tol = RANK_RTOL * s[0] if s[0] > 0 else 1.0
    null = vt[s <= tol]
    if len(null):
        involved = sorted({names[j] for v in null for j in np.flatnonzero(np.abs(v) > 1e-6)})
        raise SingularDesign(f"design is rank deficient; collinear columns: {', '.join(involved)}", involved)


@dataclass(frozen=True, eq=False)
class OlsFit:
    coef: np.ndarray
    s2: float
    residuals: np.ndarray
    gram_inverse: np.ndarray
    n: int
    k: int
    m: int
    names: tuple

    @property
    def beta_hat(self):
        return self.coef[: self.m]

    @property
    def gamma_hat(self):
        return self.coef[self.m:]

    @property
    def df(self):
        return self.n - self.k

    @property
    def std_errors(self):
        return np.sqrt(self.s2 * np.diag(self.gram_inverse))

    def confidence_intervals(self, level=0.95):
        tq = stats.t.ppf(0.5 + level / 2.0, self.df)
        se = self.std_errors
        return self.coef - tq * se, self.coef + tq * se

    def p_values(self):
        se = self.std_errors
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, self.coef / se, np.inf * np.sign(self.coef))
        return 2.0 * stats.t.sf(np.abs(t), self.df)

    def prediction_intervals(self, Z_new, level=0.95):
        """Classical t prediction intervals for new rows (design held fixed)."""
        Z_new = np.atleast_2d(np.asarray(Z_new, dtype=float))
        pred = Z_new @ self.coef
        lev = np.einsum("ij,jk,ik->i", Z_new, self.gram_inverse, Z_new)
        half = stats.t.ppf(0.5 + level / 2.0, self.df) * np.sqrt(self.s2 * (1.0 + lev))
        return pred, pred - half, pred + half


def ols_fit(d):
    """Least-squares fit of ``d.y`` on ``[X S]``; ``s2 = RSS / (n - k)``."""
    Z = d.Z
    coef, *_ = np.linalg.lstsq(Z, d.y, rcond=None)
    resid = d.y - Z @ coef
    s2 = float(resid @ resid) / (d.n - d.k)
    gram = Z.T @ Z
    gi = linalg.cho_solve(linalg.cho_factor(gram, lower=True), np.eye(d.k))
    gi = 0.5 * (gi + gi.T)
    return OlsFit(coef, s2, resid, gi, d.n, d.k, d.m, d.names)


def sample_sigma2(n, k, s2, seed, size=None):
    """Scaled inverse chi-square draw(s): ``(n - k) s2 / chi2_{n-k}``."""
    if n <= k:
        raise InvalidArgument(f"need n > k, got n={n}, k={k}")
    if s2 < 0:
        raise InvalidArgument("s2 must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    g = rng.chisquare(n - k, size=size)
    return (n - k) * s2 / g


def _cov_factor(gram_inverse):
    g = np.asarray(gram_inverse, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or not np.allclose(g, g.T, rtol=1e-8, atol=1e-12 * np.abs(g).max()):
        raise InvalidArgument("gram_inverse must be a symmetric matrix")
    w, v = linalg.eigh(g)
    if w.min() < -1e-10 * max(abs(w).max(), 1e-300):
        raise InvalidArgument("gram_inverse is not positive semidefinite")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_coefficients(beta_hat, gamma_hat, gram_inverse, sigma2, seed, size=None):
    """Draw coefficients from ``N((beta_hat, gamma_hat), sigma2 * gram_inverse)``.

    ``sigma2`` may be a scalar or, with ``size``, an array of per-draw
    variances. Returns ``(beta, gamma)`` split at ``len(beta_hat)``.
    """
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    gamma_hat = np.atleast_1d(np.asarray(gamma_hat if gamma_hat is not None else [], dtype=float))
    mean = np.concatenate([beta_hat, gamma_hat])
    f = _cov_factor(gram_inverse)
    if f.shape[0] != len(mean):
        raise InvalidArgument("gram_inverse size does not match the coefficient vector")
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise InvalidArgument("sigma2 must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    shape = () if size is None else (size,)
    z = rng.standard_normal(shape + (len(mean),))
    draw = mean + np.sqrt(sigma2)[..., None] * (z @ f.T) if shape else mean + np.sqrt(sigma2) * (f @ z)
    m = len(beta_hat)
    return draw[..., :m], draw[..., m:]


@dataclass(frozen=True)
class PosteriorDraw:
    beta: np.ndarray
    gamma: np.ndarray
    sigma2: float
    eta: float = None


@dataclass(frozen=True, eq=False)
class DrawSet:
    """Posterior draws stored column-wise.

    ``coef`` is (draws, k) holding beta then gamma; ``m`` is the beta length.
    """

    coef: np.ndarray
    sigma2: np.ndarray
    m: int
    eta: np.ndarray = None

    def __len__(self):
        return len(self.sigma2)

    def __iter__(self):
        for i in range(len(self)):
            yield PosteriorDraw(self.coef[i, : self.m], self.coef[i, self.m:], float(self.sigma2[i]),
                                None if self.eta is None else float(self.eta[i]))

    @classmethod
    def from_draws(cls, draws):
        draws = list(draws)
        if not draws:
            raise InvalidArgument("no posterior draws given")
        coef = np.array([np.concatenate([np.atleast_1d(d.beta), np.atleast_1d(d.gamma)]) for d in draws])
        eta = None if draws[0].eta is None else np.array([d.eta for d in draws], dtype=float)
        return cls(coef, np.array([d.sigma2 for d in draws], dtype=float), len(np.atleast_1d(draws[0].beta)), eta)

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        eta = None if sets[0].eta is None else np.concatenate([s.eta for s in sets])
        return cls(np.vstack([s.coef for s in sets]), np.concatenate([s.sigma2 for s in sets]), sets[0].m, eta)


def posterior_draws(fit, n_draws, seed, sigma2_mode="sample"):
    """Joint posterior draws of ``(beta, gamma, sigma2)`` for one fit.

    ``sigma2_mode="plugin"`` fixes ``sigma2`` at ``s2`` instead of sampling it.
    """
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    if sigma2_mode == "sample":
        s2 = sample_sigma2(fit.n, fit.k, fit.s2, rng, size=n_draws)
    elif sigma2_mode == "plugin":
        s2 = np.full(n_draws, fit.s2)
    else:
        raise InvalidArgument(f"unknown sigma2 mode {sigma2_mode!r}")
    b, g = sample_coefficients(fit.beta_hat, fit.gamma_hat, fit.gram_inverse, s2, rng, size=n_draws)
    return DrawSet(np.hstack([b, g]), s2, fit.m)


def predictive_samples(draws, x_new, rng):
    """One posterior-predictive sample per draw.

    ``x_new`` is either one covariate row shared by every draw or a
    (draws, k) array holding a row per draw.
    """
    x = np.asarray(x_new, dtype=float)
    if x.ndim == 1:
        mean = draws.coef @ x
    elif x.shape == draws.coef.shape:
        mean = np.einsum("ij,ij->i", x, draws.coef)
    else:
        raise InvalidArgument(f"x_new shape {x.shape} does not match draws {draws.coef.shape}")
    return mean + np.sqrt(draws.sigma2) * rng.standard_normal(mean.shape)


def predictive_interval(draws, x_new, level=0.95, seed=0):
    """Equal-tailed posterior predictive interval for one covariate row."""
    if not isinstance(draws, DrawSet):
        draws = DrawSet.from_draws(draws)
    if len(draws) < 100:
        raise InvalidArgument(f"predictive_interval needs at least 100 draws, got {len(draws)}")
    if not 0 < level < 1:
        raise InvalidArgument(f"level must lie in (0, 1), got {level}")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    yhat = predictive_samples(draws, x_new, rng)
    lo, hi = np.quantile(yhat, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return float(lo), float(hi)
