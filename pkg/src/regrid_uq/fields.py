"""Space-time fields and date alignment across data sources."""
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InvalidArgument
from .grid import Grid


@dataclass(frozen=True, eq=False)
class Field:
    """Daily values of one variable on a grid: ``values[day, point]``."""

    name: str
    grid: Grid
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(dates), len(self.grid)):
            raise InvalidArgument(
                f"field {self.name!r}: values shape {values.shape} does not match "
                f"{len(dates)} dates x {len(self.grid)} points")
        if len(dates) > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise InvalidArgument(f"field {self.name!r}: dates must be strictly increasing")
        dates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    @property
    def years(self):
        return self.dates.astype("datetime64[Y]").astype(int) + 1970

    @property
    def months(self):
        return self.dates.astype("datetime64[M]").astype(int) % 12 + 1

    def select(self, mask):
        return Field(self.name, self.grid, self.dates[mask], self.values[mask])

    def subset(self, month=None, years=None):
        mask = np.ones(len(self.dates), dtype=bool)
        if month is not None:
            mask &= self.months == month
        if years is not None:
            mask &= np.isin(self.years, list(years))
        return self.select(mask)


@dataclass(frozen=True, eq=False)
class Datasets:
    """Response on the target grid plus covariates on their native grids."""

    response: Field
    covariates: tuple

    def __post_init__(self):
        covs = tuple(self.covariates)
        if not covs:
            raise InvalidArgument("at least one covariate field is required")
        names = [c.name for c in covs]
        if len(set(names)) != len(names):
            raise InvalidArgument(f"duplicate covariate names: {names}")
        object.__setattr__(self, "covariates", covs)

    @property
    def target(self):
        return self.response.grid

    @property
    def covariate_names(self):
        return tuple(c.name for c in self.covariates)

    def common_years(self, years=None):
        common = set(self.response.years.tolist())
        for c in self.covariates:
            common &= set(c.years.tolist())
        if years is not None:
            common &= set(int(y) for y in years)
        return sorted(common)

    def aligned(self, years=None, months=None):
        """Restrict every source to shared years (and months); dates must then agree."""
        yrs = self.common_years(years)
        if not yrs:
            raise AlignmentError("no overlapping years across response and covariate sources")

        def cut(f):
            g = f.subset(years=yrs)
            return g if months is None else g.select(np.isin(g.months, list(months)))

        resp = cut(self.response)
        covs = tuple(cut(c) for c in self.covariates)
        ref = set(resp.dates.tolist())
        for c in covs:
            other = set(c.dates.tolist())
            if other != ref:
                bad = sorted(ref ^ other)
                shown = ", ".join(str(d) for d in bad[:10]) + (" ..." if len(bad) > 10 else "")
                raise AlignmentError(
                    f"covariate {c.name!r} and response {resp.name!r} disagree on {len(bad)} date(s): {shown}")
        if len(resp.dates) == 0:
            raise AlignmentError("no days left after restricting to the requested years and months")
        return Datasets(resp, covs)
