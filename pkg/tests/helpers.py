"""Small hand-built datasets shared by several test modules."""
import datetime as dt

import numpy as np

from regrid_uq.fields import Datasets, Field
from regrid_uq.gp import CovParams, exp_cov
from regrid_uq.grid import make_regular_grid, pairwise_distances
from regrid_uq.pipeline import CovariateModel, MonthModel


def dates_for(years, months, days):
    out = [dt.date(y, m, d) for y in years for m in months for d in range(1, days + 1)]
    return np.array(sorted(out), dtype="datetime64[D]")


def gp_days(grid, rho, theta, mu, n_days, rng):
    k = exp_cov(pairwise_distances(grid, grid), CovParams(rho, theta))
    L = np.linalg.cholesky(k + 1e-10 * np.eye(len(k)))
    return mu + rng.standard_normal((n_days, len(grid))) @ L.T


def identity_study(beta=(1.0, 0.5, -0.3), noise=0.3, nx=4, years=(2000, 2001, 2002), days=20, seed=0):
    """Covariates observed on the target grid itself, response linear in them."""
    rng = np.random.default_rng(seed)
    g = make_regular_grid((0, 0), 20, nx, nx, id="target")
    dates = dates_for(years, (2,), days)
    covs, vals = [], []
    for c in range(len(beta) - 1):
        x = gp_days(g, 1.0, 60.0, 2.0, len(dates), rng)
        gc = make_regular_grid((0, 0), 20, nx, nx, id=f"cov{c}")
        covs.append(Field(f"cov{c}", gc, dates, x))
        vals.append(x)
    y = beta[0] + sum(b * x for b, x in zip(beta[1:], vals)) + noise * rng.standard_normal(vals[0].shape)
    return Datasets(Field("response", g, dates, y), tuple(covs)), vals


def exact_model(data, month=2, jitter=1e-13):
    """Model with no transforms and fixed GP parameters (near-zero jitter)."""
    covs = tuple(CovariateModel(f.name, None, CovParams(1.0, 60.0, 2.0, jitter)) for f in data.covariates)
    return MonthModel(month, None, covs)
