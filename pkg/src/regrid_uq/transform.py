"""Log/linear variance-stabilizing transform for positive fields.

Below a threshold ``nu`` values are logged; above it the map continues along
the tangent line of ``log`` at ``nu``, so large values keep a linear scale and
the inverse is always positive.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

log = logging.getLogger(__name__)

CLAMP_FLOOR = 1e-6


@dataclass(frozen=True)
class TransformSpec:
    nu: float

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise InvalidArgument(f"nu must be a positive finite number, got {self.nu}")


def fit_nu(values, q=0.20):
    """Threshold ``nu`` as the empirical ``q``-quantile of ``values``.

    Linear interpolation between order statistics (1-based position
    ``1 + q (n - 1)``). When that quantile is not positive the smallest
    positive value is used instead.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InvalidArgument("fit_nu needs at least one value")
    if not 0 < q < 1:
        raise InvalidArgument(f"q must lie in (0, 1), got {q}")
    pos = v[v > 0]
    if pos.size == 0:
        raise InvalidArgument("fit_nu needs at least one positive value")
    nu = float(np.quantile(v, q))
    if nu <= 0:
        nu = float(pos.min())
    return TransformSpec(nu)


def gamma(x, spec):
    """Forward transform. Raises on nonpositive input in the log branch."""
    x = np.asarray(x, dtype=float)
    nu = spec.nu
    if np.any(x <= 0):
        raise InvalidArgument("log/linear transform is undefined for values <= 0")
    out = np.where(x <= nu, np.log(np.where(x <= nu, x, 1.0)), np.log(nu) + (x - nu) / nu)
    return out[()] if out.ndim == 0 else out


def gamma_inverse(z, spec):
    z = np.asarray(z, dtype=float)
    nu = spec.nu
    lnu = np.log(nu)
    out = np.where(z <= lnu, np.exp(np.minimum(z, lnu)), nu * (1.0 + z - lnu))
    return out[()] if out.ndim == 0 else out


def transform_field(values, spec, floor=CLAMP_FLOOR):
    """Apply :func:`gamma` to a raw field, clamping values below ``floor``.

    Returns ``(transformed, n_clamped)``.
    """
    v = np.asarray(values, dtype=float)
    low = v < floor
    n = int(low.sum())
    if n:
        log.info("clamped %d cell(s) below %g before transform", n, floor)
        v = np.where(low, floor, v)
    return gamma(v, spec), n
