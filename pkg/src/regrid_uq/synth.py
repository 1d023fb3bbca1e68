"""Synthetic studies with known ground truth.

Each covariate is a GP drawn jointly on its native grid and the target grid,
so the hidden target-grid values and the visible native values are one
consistent realization. The response on the target grid follows the linear
model with known coefficients. Only :attr:`SyntheticStudy.datasets` is meant
for the fitting code; :attr:`SyntheticStudy.truth` is kept for scoring.
"""
import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, InvalidArgument
from .fields import Datasets, Field
from .gp import CovParams, exp_cov
from .grid import Grid, make_regular_grid, pairwise_distances, transform_grid
from .pipeline import INTERCEPT, seasonal_columns
from .rng import stream
from .transform import TransformSpec, gamma_inverse


@dataclass(frozen=True)
class CovariateTruth:
    name: str
    spacing: float = 35.0
    nx: int = 7
    ny: int = 7
    rotation: float = 0.0
    offset: tuple = (0.0, 0.0)
    rho: float = 0.25
    theta: float = 120.0
    mu: float = 5.0


def _default_covariates():
    return (
        CovariateTruth("rcm_a", rotation=0.0, offset=(6.0, -4.0)),
        CovariateTruth("rcm_b", rotation=0.2, offset=(-3.0, 5.0)),
        CovariateTruth("rcm_c", rotation=-0.15, offset=(4.0, 7.0)),
    )


@dataclass(frozen=True)
class TruthConfig:
    target_origin: tuple = (0.0, 0.0)
    target_spacing: float = 20.0
    target_nx: int = 8
    target_ny: int = 8
    covariates: tuple = field(default_factory=_default_covariates)
    beta: tuple = (-1.0, 0.8, 0.4, 0.0)
    gamma: tuple = ()
    noise_sd: float = 0.5
    days_per_month: int = 28
    months: tuple = (2, 5, 8, 11)
    years: tuple = tuple(range(1998, 2010))
    master_seed: int = 20240101
    transform: bool = True

    def __post_init__(self):
        if len(self.beta) != len(self.covariates) + 1:
            raise ConfigError(f"beta needs {len(self.covariates) + 1} entries (intercept + one per covariate)")
        if self.gamma and len(self.gamma) != 2:
            raise ConfigError("gamma must be empty or hold the two seasonal harmonic coefficients")
        if not 10 <= self.days_per_month <= 28:
            raise ConfigError("days_per_month must lie in [10, 28]")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")
        if len(set(self.years)) != len(self.years) or not self.years:
            raise ConfigError("years must be a nonempty list without duplicates")
        for c in self.covariates:
            CovParams(c.rho, c.theta, c.mu)

    @property
    def coefficients(self):
        return dict(zip((INTERCEPT,) + tuple(c.name for c in self.covariates), self.beta))


@dataclass(frozen=True, eq=False)
class SyntheticStudy:
    datasets: Datasets
    truth: dict
    truth_raw: dict
    config: TruthConfig


def target_grid(cfg):
    return make_regular_grid(cfg.target_origin, cfg.target_spacing, cfg.target_nx, cfg.target_ny, id="target")


def native_grid(cfg, c):
    """Native lattice centred on the target centroid, then rotated and shifted."""
    tc = target_grid(cfg).centroid
    origin = (tc[0] - (c.nx - 1) * c.spacing / 2.0, tc[1] - (c.ny - 1) * c.spacing / 2.0)
    g = make_regular_grid(origin, c.spacing, c.nx, c.ny, id=c.name)
    return transform_grid(g, c.rotation, c.offset)


def study_dates(cfg):
    out = [dt.date(y, m, d) for y in cfg.years for m in cfg.months for d in range(1, cfg.days_per_month + 1)]
    return np.array(sorted(out), dtype="datetime64[D]")


def _joint_factor(native, target, params):
    """Cholesky factor on native points plus the target points not already on the native grid."""
    d_tn = pairwise_distances(target, native)
    dup = d_tn.min(axis=1) <= 1e-9
    extra = Grid(target.points[~dup], id="extra") if np.any(~dup) else None
    pts = native.points if extra is None else np.vstack([native.points, extra.points])
    joint = Grid(pts, id="joint")
    k = exp_cov(pairwise_distances(joint, joint), CovParams(params.rho, params.theta, params.mu, 1e-10 * params.rho))
    try:
        L = linalg.cholesky(k, lower=True)
    except linalg.LinAlgError:
        raise ConfigError("joint native/target covariance is not positive definite; grids too dense or overlapping") \
            from None
    tidx = np.empty(len(target), dtype=int)
    tidx[dup] = d_tn[dup].argmin(axis=1)
    tidx[~dup] = len(native) + np.arange(int((~dup).sum()))
    return L, tidx


def _nu_from_latent(latent):
    return TransformSpec(float(np.exp(np.quantile(latent, 0.20))))


def generate_study(cfg):
    """Draw a full synthetic study from ``cfg``."""
    target = target_grid(cfg)
    dates = study_dates(cfg)
    months = dates.astype("datetime64[M]").astype(int) % 12 + 1
    years = dates.astype("datetime64[Y]").astype(int) + 1970
    n_days = len(dates)

    covariates, truth, truth_raw = [], {}, {}
    latent_target = []
    for ci, c in enumerate(cfg.covariates):
        native = native_grid(cfg, c)
        L, tidx = _joint_factor(native, target, c)
        lat = np.empty((n_days, L.shape[0]))
        for m in cfg.months:
            for y in cfg.years:
                rows = (months == m) & (years == y)
                rng = stream(cfg.master_seed, "synth", ci, m, y)
                lat[rows] = c.mu + rng.standard_normal((int(rows.sum()), L.shape[0])) @ L.T
        nat_raw = np.empty((n_days, len(native)))
        tgt_raw = np.empty((n_days, len(target)))
        for m in cfg.months:
            rows = months == m
            if cfg.transform:
                spec = _nu_from_latent(lat[rows][:, : len(native)])
                nat_raw[rows] = gamma_inverse(lat[rows][:, : len(native)], spec)
                tgt_raw[rows] = gamma_inverse(lat[rows][:, tidx], spec)
            else:
                nat_raw[rows] = lat[rows][:, : len(native)]
                tgt_raw[rows] = lat[rows][:, tidx]
        covariates.append(Field(c.name, native, dates, nat_raw))
        truth[c.name] = Field(c.name, target, dates, lat[:, tidx])
        truth_raw[c.name] = Field(c.name, target, dates, tgt_raw)
        latent_target.append(lat[:, tidx])

    ystar = np.full((n_days, len(target)), float(cfg.beta[0]))
    for b, lt in zip(cfg.beta[1:], latent_target):
        ystar += b * lt
    if cfg.gamma:
        ystar += (seasonal_columns(dates) @ np.asarray(cfg.gamma, dtype=float))[:, None]
    if cfg.noise_sd > 0:
        for m in cfg.months:
            for y in cfg.years:
                rows = (months == m) & (years == y)
                rng = stream(cfg.master_seed, "noise", m, y)
                ystar[rows] += cfg.noise_sd * rng.standard_normal((int(rows.sum()), len(target)))
    yraw = ystar.copy()
    if cfg.transform:
        for m in cfg.months:
            rows = months == m
            yraw[rows] = gamma_inverse(ystar[rows], _nu_from_latent(ystar[rows]))
    response = Field("response", target, dates, yraw)
    truth["response"] = Field("response", target, dates, ystar)
    return SyntheticStudy(Datasets(response, tuple(covariates)), truth, truth_raw, cfg)


def attenuation_benchmark(truth_cfg, study_cfg):
    """Score both regression paths against the known coefficients.

    Returns one dict per (month, location, retained coefficient) with the true
    value, naive estimate and interval, Bayesian median and interval, and
    whether each interval covers the truth.
    """
    from .pipeline import run_study

    if not truth_cfg.covariates:
        raise InvalidArgument("benchmark needs at least one covariate")
    study = generate_study(truth_cfg)
    res = run_study(study.datasets, study_cfg, mode="both")
    true = truth_cfg.coefficients
    if truth_cfg.gamma:
        true.update(zip(("season_sin", "season_cos"), truth_cfg.gamma))
    rows = []
    for r in res.results:
        for j, name in enumerate(r.names):
            t = true[name]
            rows.append({
                "month": r.month, "location_id": r.location_id, "coef": name, "true": t,
                "naive": float(r.naive.estimate[j]), "naive_se": float(r.naive.fit.std_errors[j]),
                "naive_lo": float(r.naive.lo[j]), "naive_hi": float(r.naive.hi[j]),
                "bayes_median": float(r.bayes.median[j]),
                "bayes_lo": float(r.bayes.lo[j]), "bayes_hi": float(r.bayes.hi[j]),
                "naive_covers": bool(r.naive.lo[j] <= t <= r.naive.hi[j]),
                "bayes_covers": bool(r.bayes.lo[j] <= t <= r.bayes.hi[j]),
                "naive_in_bayes": bool(r.bayes.lo[j] <= r.naive.estimate[j] <= r.bayes.hi[j]),
            })
    return rows


def kriging_variance_fraction(cfg):
    """Mean conditional variance at target points relative to the sill, per covariate."""
    from .gp import kriging_operator

    target = target_grid(cfg)
    out = {}
    for c in cfg.covariates:
        op = kriging_operator(CovParams(c.rho, c.theta, c.mu, 1e-8 * c.rho), native_grid(cfg, c), target)
        out[c.name] = float(np.mean(np.diag(op.cov)) / c.rho)
    return out

