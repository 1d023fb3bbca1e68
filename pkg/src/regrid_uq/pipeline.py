"""Naive and uncertainty-aware regridding regressions, per location and month.

For every month the covariate fields get a log/linear transform and an
exponential-covariance GP fit on their native grids. Each target location
then gets two regressions of the response on the regridded covariates:

* naive: the covariates are replaced by their kriging means and an ordinary
  least-squares fit gives point estimates and t intervals;
* two-step Bayesian: ``n_cond_sims`` conditional simulations of the
  covariate fields are drawn, and for each one ``n_post_per_sim`` draws come
  from the conjugate regression posterior. All draws are pooled and summarized
  by the median and equal-tailed quantiles.

Randomness is keyed by ``(master_seed, stage, fold, month, ...)``: conditional
simulations by covariate and simulation index, posterior draws by location
and simulation index. Any location or simulation can be recomputed alone and
results do not depend on processing order.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .arma import DEFAULT_ETA_GRID, FAMILIES, _log_marginal, gls_summaries
from .bayes_lm import DrawSet, RegressionDesign, ols_fit
from .errors import InvalidArgument, SingularDesign
from .gp import fit_mle, kriging_operator, psd_factor
from .rng import stream
from .transform import fit_nu, gamma_inverse, transform_field

log = logging.getLogger(__name__)

INTERCEPT = "intercept"
SEASONAL_NAMES = ("season_sin", "season_cos")


@dataclass(frozen=True)
class StudyConfig:
    months: tuple = (2, 5, 8, 11)
    years: tuple = None
    n_cond_sims: int = 100
    n_post_per_sim: int = 50
    ci_level: float = 0.95
    drop_pvalue: float = 0.05
    response_scale: str = "transformed"
    sigma2_mode: str = "sample"
    arma_family: str = "none"
    master_seed: int = 0
    seasonal: bool = False
    covariate_transform: bool = True
    nu_quantile: float = 0.20
    threads: int = 1

    def __post_init__(self):
        if self.n_cond_sims < 1 or self.n_post_per_sim < 1:
            raise InvalidArgument("n_cond_sims and n_post_per_sim must be >= 1")
        if not 0 < self.ci_level < 1:
            raise InvalidArgument(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if self.response_scale not in ("transformed", "raw"):
            raise InvalidArgument(f"response_scale must be 'transformed' or 'raw', got {self.response_scale!r}")
        if self.sigma2_mode not in ("sample", "plugin"):
            raise InvalidArgument(f"sigma2_mode must be 'sample' or 'plugin', got {self.sigma2_mode!r}")
        if self.arma_family not in ("none",) + FAMILIES:
            raise InvalidArgument(f"arma_family must be one of none, AR1, MA1; got {self.arma_family!r}")
        if not self.months:
            raise InvalidArgument("at least one month is required")
        if self.threads < 1:
            raise InvalidArgument("threads must be >= 1")

    @property
    def n_draws(self):
        return self.n_cond_sims * self.n_post_per_sim


@dataclass(frozen=True)
class CovariateModel:
    name: str
    transform: object
    params: object
    retained: bool = True


@dataclass(frozen=True)
class MonthModel:
    month: int
    response_transform: object
    covariates: tuple

    @property
    def retained(self):
        return tuple(c.name for c in self.covariates if c.retained)

    def covariate(self, name):
        for c in self.covariates:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_retained(self, names):
        names = set(names)
        return replace(self, covariates=tuple(replace(c, retained=c.name in names) for c in self.covariates))


def coef_names(covariates, seasonal=False):
    return (INTERCEPT,) + tuple(covariates) + (SEASONAL_NAMES if seasonal else ())


def seasonal_columns(dates):
    doy = (dates - dates.astype("datetime64[Y]")).astype(int) + 1
    ang = 2.0 * np.pi * doy / 365.25
    return np.column_stack([np.sin(ang), np.cos(ang)])


def fit_month(data, month, cfg, years=None, retained=None):
    """Transforms and GP parameters for one month, pooling the given years."""
    d = data.aligned(years=years if years is not None else cfg.years, months=(month,))
    resp_spec = None
    if cfg.response_scale == "transformed":
        resp_spec = fit_nu(d.response.values, cfg.nu_quantile)
    covs = []
    for f in d.covariates:
        spec = None
        z = f.values
        if cfg.covariate_transform:
            spec = fit_nu(f.values, cfg.nu_quantile)
            z, _ = transform_field(f.values, spec)
        params = fit_mle(f.grid, z)
        if params.degenerate:
            log.warning("covariate %s, month %d: degenerate GP fit", f.name, month)
        keep = True if retained is None else f.name in retained
        covs.append(CovariateModel(f.name, spec, params, keep))
    return MonthModel(month, resp_spec, tuple(covs))


@dataclass(frozen=True, eq=False)
class RegriddedMonth:
    """Everything the regressions need for one month.

    ``y`` is on the analysis scale, ``y_raw`` on the original scale;
    ``means[name]`` holds kriging means (days x target) and ``ops[name]`` the
    kriging operator with its conditional covariance.
    """

    month: int
    model: MonthModel
    dates: np.ndarray
    location_ids: tuple
    y: np.ndarray
    y_raw: np.ndarray
    means: dict
    ops: dict
    cov_index: dict
    S: np.ndarray
    factors: dict = field(default_factory=dict)

    @property
    def n_days(self):
        return len(self.dates)

    @property
    def n_locations(self):
        return len(self.location_ids)

    def factor(self, name):
        if name not in self.factors:
            op = self.ops[name]
            self.factors[name] = psd_factor(op.cov, scale=op.params.rho)
        return self.factors[name]

    def design(self, loc, names, covariate_values=None, rows=None):
        """Design matrix ``[1, covariates, seasonal]`` for one location."""
        src = self.means if covariate_values is None else covariate_values
        cols = [np.ones(self.n_days)] + [src[nm][:, loc] for nm in names]
        Z = np.column_stack(cols + ([self.S] if self.S.shape[1] else []))
        return Z if rows is None else Z[rows]

    def back_transform(self, z):
        spec = self.model.response_transform
        return z if spec is None else gamma_inverse(z, spec)


def regrid_month(data, model, cfg, years=None):
    """Transform native covariate values and krige them to the target grid."""
    d = data.aligned(years=years if years is not None else cfg.years, months=(model.month,))
    y_raw = d.response.values
    y = y_raw if model.response_transform is None else transform_field(y_raw, model.response_transform)[0]
    means, ops, index = {}, {}, {}
    for i, f in enumerate(d.covariates):
        cm = model.covariate(f.name)
        z = f.values if cm.transform is None else transform_field(f.values, cm.transform)[0]
        op = kriging_operator(cm.params, f.grid, d.target)
        ops[f.name] = op
        means[f.name] = op.means(z)
        index[f.name] = i
    S = seasonal_columns(d.response.dates) if cfg.seasonal else np.zeros((len(y), 0))
    return RegriddedMonth(model.month, model, d.response.dates, d.target.ids, y, y_raw, means, ops, index, S)


@dataclass(frozen=True, eq=False)
class NaiveResult:
    names: tuple
    fit: object
    lo: np.ndarray
    hi: np.ndarray
    p_values: np.ndarray

    @property
    def estimate(self):
        return self.fit.coef


def naive_fit(reg, loc, covariates, cfg, rows=None):
    """Least squares on kriging-mean covariates (the usual regridding practice)."""
    names = coef_names(covariates, cfg.seasonal)
    Z = reg.design(loc, covariates, rows=rows)
    y = reg.y[:, loc] if rows is None else reg.y[rows, loc]
    try:
        fit = ols_fit(RegressionDesign(y, Z, None, names))
    except SingularDesign as e:
        raise SingularDesign(f"location {reg.location_ids[loc]}, month {reg.month}: {e}", e.columns) from None
    lo, hi = fit.confidence_intervals(cfg.ci_level)
    return NaiveResult(names, fit, lo, hi, fit.p_values())


def drop_covariates(naive_results, covariates, threshold):
    """Covariates kept after the majority p-value rule.

    A covariate is dropped when its p-value exceeds ``threshold`` at strictly
    more than half of the locations.
    """
    if not naive_results:
        raise InvalidArgument("no naive fits to base covariate dropping on")
    keep = []
    for name in covariates:
        p = np.array([r.p_values[r.names.index(name)] for r in naive_results])
        frac = float(np.mean(p > threshold))
        if frac > 0.5:
            log.info("dropping covariate %s (p > %g at %.0f%% of locations)", name, threshold, 100 * frac)
        else:
            keep.append(name)
    if not keep:
        raise InvalidArgument("every covariate failed the significance rule; an intercept-only model is refused")
    return tuple(keep)


def simulate_covariates(reg, covariates, cfg, fold=0):
    """Conditional simulations of each covariate: ``{name: (sims, days, target)}``."""
    out = {}
    for name in covariates:
        f = reg.factor(name)
        m = reg.means[name]
        sims = np.empty((cfg.n_cond_sims,) + m.shape)
        for j in range(cfg.n_cond_sims):
            rng = stream(cfg.master_seed, "condsim", fold, reg.month, reg.cov_index[name], j)
            sims[j] = m + rng.standard_normal(m.shape) @ f.T
        out[name] = sims
    return out


def sim_designs(reg, loc, covariates, sims, rows=None):
    """Stack of designs, one per conditional simulation: (sims, days, k)."""
    n_sims = next(iter(sims.values())).shape[0]
    Zs = np.empty((n_sims, reg.n_days, 1 + len(covariates) + reg.S.shape[1]))
    Zs[:, :, 0] = 1.0
    for c, name in enumerate(covariates):
        Zs[:, :, 1 + c] = sims[name][:, :, loc]
    if reg.S.shape[1]:
        Zs[:, :, 1 + len(covariates):] = reg.S
    return Zs if rows is None else Zs[:, rows]


def _check_batch_rank(G, where):
    w = np.linalg.eigvalsh(G)
    bad = np.flatnonzero(w[:, 0] <= (1e-10) ** 2 * w[:, -1])
    if bad.size:
        raise SingularDesign(f"{where}, simulation {int(bad[0])}: simulated design is rank deficient")


def posterior_from_sims(Zs, y, cfg, rng_for_sim, where="", eta_grid=DEFAULT_ETA_GRID):
    """Pool ``n_post_per_sim`` conjugate posterior draws per simulated design.

    ``rng_for_sim(j)`` supplies the random stream for simulation ``j``. With an
    ARMA error family, ``eta`` is drawn from its grid posterior first and the
    regression is solved in the whitened metric for that ``eta``.
    """
    n_sims, n, k = Zs.shape
    P = cfg.n_post_per_sim
    coef = np.empty((n_sims, P, k))
    sig2 = np.empty((n_sims, P))
    etas = None if cfg.arma_family == "none" else np.empty((n_sims, P))
    G_all = np.einsum("sni,snj->sij", Zs, Zs)
    _check_batch_rank(G_all, where)
    for j in range(n_sims):
        rng = rng_for_sim(j)
        if cfg.arma_family == "none":
            G = np.broadcast_to(G_all[j], (P, k, k))
            b = np.broadcast_to(Zs[j].T @ y, (P, k))
            c = np.full(P, float(y @ y))
        else:
            Ge, be, ce, lde = gls_summaries(Zs[j], y, cfg.arma_family, eta_grid)
            ld = _log_marginal(Ge, be, ce, lde, n, k)
            w = np.exp(ld - ld.max())
            cdf = np.cumsum(w / w.sum())
            idx = np.minimum(np.searchsorted(cdf, rng.random(P) * cdf[-1], side="right"), len(cdf) - 1)
            etas[j] = eta_grid[idx]
            G, b, c = Ge[idx], be[idx], ce[idx]
        L = np.linalg.cholesky(G)
        mean = np.linalg.solve(G, b[..., None])[..., 0]
        if cfg.arma_family == "none":
            r = y - Zs[j] @ mean[0]
            ss = np.full(P, float(r @ r))
        else:
            ss = np.maximum(c - np.einsum("pi,pi->p", b, mean), 0.0)
        s2 = ss / (n - k)
        if cfg.sigma2_mode == "sample":
            s2 = (n - k) * s2 / rng.chisquare(n - k, size=P)
        z = rng.standard_normal((P, k, 1))
        # L^{-T} z has covariance G^{-1}
        dev = np.linalg.solve(np.swapaxes(L, -1, -2), z)[..., 0]
        coef[j] = mean + np.sqrt(s2)[:, None] * dev
        sig2[j] = s2
    return DrawSet(coef.reshape(-1, k), sig2.ravel(), k, None if etas is None else etas.ravel())


@dataclass(frozen=True, eq=False)
class BayesResult:
    names: tuple
    draws: DrawSet
    median: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_cond_sims: int
    n_post_per_sim: int


def summarize_draws(names, draws, cfg):
    q = np.quantile(draws.coef, [0.5, (1.0 - cfg.ci_level) / 2.0, (1.0 + cfg.ci_level) / 2.0], axis=0)
    return BayesResult(names, draws, q[0], q[1], q[2], cfg.n_cond_sims, cfg.n_post_per_sim)


def bayes_two_step(reg, loc, covariates, sims, cfg, fold=0, rows=None):
    """Pooled posterior for one location from precomputed conditional simulations."""
    names = coef_names(covariates, cfg.seasonal)
    Zs = sim_designs(reg, loc, covariates, sims, rows)
    y = reg.y[:, loc] if rows is None else reg.y[rows, loc]
    draws = posterior_from_sims(
        Zs, y, cfg, lambda j: stream(cfg.master_seed, "post", fold, reg.month, loc, j),
        where=f"location {reg.location_ids[loc]}, month {reg.month}")
    return summarize_draws(names, draws, cfg)


@dataclass(frozen=True, eq=False)
class LocationResult:
    location_id: str
    location_index: int
    month: int
    names: tuple
    naive: NaiveResult = None
    bayes: BayesResult = None

    @property
    def bias(self):
        if self.naive is None or self.bayes is None:
            raise InvalidArgument("bias needs both the naive and the Bayesian fit")
        return self.naive.estimate - self.bayes.median

    def rows(self):
        nan = np.full(len(self.names), np.nan)
        nv = self.naive
        bs = self.bayes
        est, lo, hi = (nv.estimate, nv.lo, nv.hi) if nv else (nan, nan, nan)
        med, blo, bhi = (bs.median, bs.lo, bs.hi) if bs else (nan, nan, nan)
        bias = self.bias if nv and bs else nan
        for j, name in enumerate(self.names):
            yield (self.location_id, self.month, name, est[j], lo[j], hi[j], med[j], blo[j], bhi[j], bias[j])


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def fit_study(data, cfg):
    """Per-month transforms, GP parameters and covariate-dropping decisions."""
    data = data.aligned(years=cfg.years)
    models = {}
    for month in cfg.months:
        model = fit_month(data, month, cfg)
        reg = regrid_month(data, model, cfg)
        allc = data.covariate_names
        naive = _map(lambda i: naive_fit(reg, i, allc, cfg), range(reg.n_locations), cfg.threads)
        keep = drop_covariates(naive, allc, cfg.drop_pvalue)
        models[month] = model.with_retained(keep)
        log.info("month %d: retained covariates %s", month, ", ".join(keep))
    return models


def analyze_month(data, model, cfg, mode="both", fold=0, years=None):
    """Naive and/or Bayesian fits at every target location for one month."""
    if mode not in ("naive", "bayes", "both"):
        raise InvalidArgument(f"mode must be naive, bayes or both; got {mode!r}")
    reg = regrid_month(data, model, cfg, years)
    covs = model.retained
    names = coef_names(covs, cfg.seasonal)
    sims = simulate_covariates(reg, covs, cfg, fold) if mode != "naive" else None

    def one(i):
        nv = naive_fit(reg, i, covs, cfg) if mode != "bayes" else None
        bs = bayes_two_step(reg, i, covs, sims, cfg, fold) if sims is not None else None
        return LocationResult(reg.location_ids[i], i, model.month, names, nv, bs)

    return _map(one, range(reg.n_locations), cfg.threads)


@dataclass(frozen=True, eq=False)
class StudyResult:
    models: dict
    results: list
    manifest: dict


def analyze(data, models, cfg, mode="both"):
    data = data.aligned(years=cfg.years)
    out = []
    for month in cfg.months:
        if month not in models:
            raise InvalidArgument(f"no fitted model for month {month}")
        out.extend(analyze_month(data, models[month], cfg, mode))
    return out


def run_manifest(cfg, mode, timings):
    m = {
        "toolkit_version": __version__,
        "numpy_version": np.__version__,
        "master_seed": cfg.master_seed,
        "mode": mode,
        "draw_count": cfg.n_draws if mode != "naive" else 0,
    }
    for k, v in cfg.__dict__.items():
        m[f"config.{k}"] = v
    for k, v in timings.items():
        m[f"seconds.{k}"] = round(v, 3)
    return m


def run_study(data, cfg, mode="both"):
    """Fit, drop covariates, then run the requested analyses for every month."""
    t0 = time.perf_counter()
    models = fit_study(data, cfg)
    t1 = time.perf_counter()
    results = analyze(data, models, cfg, mode)
    t2 = time.perf_counter()
    return StudyResult(models, results, run_manifest(cfg, mode, {"fit": t1 - t0, "analyze": t2 - t1}))
