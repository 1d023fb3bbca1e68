"""Leave-one-year-out evaluation of the naive and Bayesian regression paths."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .pipeline import (
    _map,
    fit_month,
    naive_fit,
    posterior_from_sims,
    regrid_month,
    sim_designs,
    simulate_covariates,
)
from .rng import stream

log = logging.getLogger(__name__)

PATHS = ("naive", "bayes")


def loyo_folds(years):
    """One ``(train_years, test_year)`` pair per year."""
    years = [int(y) for y in years]
    if len(set(years)) != len(years):
        raise InvalidArgument(f"duplicate years in {years}")
    if len(years) < 2:
        raise InvalidArgument("leave-one-year-out needs at least two years")
    years = sorted(years)
    return [(tuple(y for y in years if y != t), t) for t in years]


def coverage(intervals, actuals):
    """Fraction of ``actuals`` inside their closed interval ``(lo, hi)``."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    a = np.asarray(actuals, dtype=float).ravel()
    if len(iv) != len(a):
        raise InvalidArgument(f"{len(iv)} intervals but {len(a)} actual values")
    if len(a) == 0:
        raise InvalidArgument("coverage needs at least one value")
    return float(np.mean((iv[:, 0] <= a) & (a <= iv[:, 1])))


def rmse(pred, actual):
    p = np.asarray(pred, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if len(p) != len(a):
        raise InvalidArgument(f"{len(p)} predictions but {len(a)} actual values")
    if len(a) == 0:
        raise InvalidArgument("rmse needs at least one value")
    return float(np.sqrt(np.mean((p - a) ** 2)))


@dataclass(frozen=True, eq=False)
class FoldReport:
    test_year: int
    month: int
    path: str
    location_ids: tuple
    coverage: np.ndarray
    rmse: np.ndarray

    def rows(self):
        for i, lid in enumerate(self.location_ids):
            yield (lid, self.month, self.path, self.test_year, self.coverage[i], self.rmse[i])


@dataclass(frozen=True, eq=False)
class EvalSummary:
    folds: list
    n_folds: dict

    def table(self):
        """``(location_id, month, path, mean_coverage, mean_rmse)`` rows."""
        out = []
        keys = sorted({(f.month, f.path) for f in self.folds}, key=lambda k: (k[0], PATHS.index(k[1])))
        for month, path in keys:
            fs = [f for f in self.folds if f.month == month and f.path == path]
            if len(fs) != self.n_folds[month]:
                raise InvalidArgument(f"month {month}, path {path}: expected {self.n_folds[month]} folds")
            cov = np.mean([f.coverage for f in fs], axis=0)
            err = np.mean([f.rmse for f in fs], axis=0)
            for i, lid in enumerate(fs[0].location_ids):
                out.append((lid, month, path, float(cov[i]), float(err[i])))
        return out

    def mean_by_location(self, path, month=None):
        rows = [r for r in self.table() if r[2] == path and (month is None or r[1] == month)]
        cov, err = {}, {}
        for lid, _, _, c, e in rows:
            cov.setdefault(lid, []).append(c)
            err.setdefault(lid, []).append(e)
        ids = sorted(cov)
        return ids, np.array([np.mean(cov[i]) for i in ids]), np.array([np.mean(err[i]) for i in ids])


def _predictive_bounds(draws, Zs_test, cfg, rng):
    """Posterior-predictive median and equal-tailed bounds for test days.

    Draws of simulation ``j`` are paired with that simulation's covariates.
    """
    n_sims, n_test, k = Zs_test.shape
    coef = draws.coef.reshape(n_sims, -1, k)
    mean = np.einsum("sdk,spk->spd", Zs_test, coef)
    sd = np.sqrt(draws.sigma2).reshape(n_sims, -1, 1)
    yhat = (mean + sd * rng.standard_normal(mean.shape)).reshape(-1, n_test)
    a = (1.0 - cfg.ci_level) / 2.0
    q = np.quantile(yhat, [0.5, a, 1.0 - a], axis=0)
    return q[0], q[1], q[2]


def evaluate_fold(data, month, covariates, train, test, cfg, paths=PATHS):
    """Refit on ``train`` years and score predictions for the ``test`` year."""
    model = fit_month(data, month, cfg, years=train, retained=covariates)
    reg = regrid_month(data, model, cfg, years=tuple(train) + (test,))
    yrs = reg.dates.astype("datetime64[Y]").astype(int) + 1970
    tr = yrs != test
    te = yrs == test
    covs = model.retained
    n = reg.n_locations
    out = {}

    if "naive" in paths:
        def naive_one(i):
            nv = naive_fit(reg, i, covs, cfg, rows=tr)
            pred, lo, hi = nv.fit.prediction_intervals(reg.design(i, covs, rows=te), cfg.ci_level)
            actual = reg.y_raw[te, i]
            iv = np.column_stack([reg.back_transform(lo), reg.back_transform(hi)])
            return coverage(iv, actual), rmse(reg.back_transform(pred), actual)

        res = _map(naive_one, range(n), cfg.threads)
        out["naive"] = FoldReport(test, month, "naive", reg.location_ids,
                                  np.array([r[0] for r in res]), np.array([r[1] for r in res]))

    if "bayes" in paths:
        sims = simulate_covariates(reg, covs, cfg, fold=test)

        def bayes_one(i):
            Zs = sim_designs(reg, i, covs, sims)
            draws = posterior_from_sims(
                Zs[:, tr], reg.y[tr, i], cfg,
                lambda j: stream(cfg.master_seed, "post", test, month, i, j),
                where=f"fold {test}, location {reg.location_ids[i]}, month {month}")
            med, lo, hi = _predictive_bounds(draws, Zs[:, te], cfg, stream(cfg.master_seed, "pred", test, month, i))
            actual = reg.y_raw[te, i]
            iv = np.column_stack([reg.back_transform(lo), reg.back_transform(hi)])
            return coverage(iv, actual), rmse(reg.back_transform(med), actual)

        res = _map(bayes_one, range(n), cfg.threads)
        out["bayes"] = FoldReport(test, month, "bayes", reg.location_ids,
                                  np.array([r[0] for r in res]), np.array([r[1] for r in res]))
    return out


def run_eval(data, cfg, models, paths=PATHS):
    """Leave-one-year-out coverage and RMSE for each month and path.

    GP parameters, transforms and regressions are refitted on the training
    years of every fold; the retained covariate set of each month is taken
    from ``models`` (the full-data fit) so folds stay comparable.
    """
    data = data.aligned(years=cfg.years)
    folds, n_folds = [], {}
    for month in cfg.months:
        if month not in models:
            raise InvalidArgument(f"no fitted model for month {month}")
        years = data.response.subset(month=month).years
        splits = loyo_folds(np.unique(years))
        n_folds[month] = len(splits)
        for train, test in splits:
            log.info("month %d: holding out %d", month, test)
            rep = evaluate_fold(data, month, models[month].retained, train, test, cfg, paths)
            folds.extend(rep[p] for p in paths)
    return EvalSummary(folds, n_folds)


def bias_map(results):
    """``(location_id, month, coef_name, bias)`` rows; bias = naive - Bayesian median."""
    rows = []
    for r in results:
        if r.naive is None or r.bayes is None:
            raise InvalidArgument(f"location {r.location_id}, month {r.month}: both paths are required for bias")
        b = r.bias
        for j, name in enumerate(r.names):
            rows.append((r.location_id, r.month, name, float(b[j])))
    return rows
