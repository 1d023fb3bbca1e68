import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrid_uq.errors import InvalidArgument
from regrid_uq.transform import TransformSpec, fit_nu, gamma, gamma_inverse, transform_field


def test_fit_nu_constant():
    assert fit_nu([3.5] * 10).nu == 3.5


def test_fit_nu_sort_and_interpolate():
    # 1..100 at q = 0.2: position 0.2 * 99 = 19.8 between 20 and 21
    assert fit_nu(np.arange(1, 101), 0.2).nu == pytest.approx(20.8, abs=1e-12)


def test_fit_nu_nonpositive_quantile_falls_back():
    assert fit_nu([-1.0, 0.0, 5.0], 0.2).nu == 5.0


def test_fit_nu_rejects_all_nonpositive():
    with pytest.raises(InvalidArgument):
        fit_nu([-1.0, 0.0])


def test_gamma_examples():
    s = TransformSpec(2.0)
    assert gamma(2.0, s) == pytest.approx(math.log(2.0))
    assert gamma(4.0, s) == pytest.approx(math.log(2.0) + 1.0)
    assert gamma(1.0, s) == 0.0


def test_gamma_inverse_examples():
    s = TransformSpec(3.0)
    assert gamma_inverse(math.log(3.0), s) == pytest.approx(3.0)
    assert gamma_inverse(math.log(3.0) + 1.0, s) == pytest.approx(6.0)
    for x in (0.1, 3.0, 30.0):
        assert abs(gamma_inverse(gamma(x, s), s) - x) <= 1e-12 * max(1.0, x)


def test_transform_field_clamps_and_logs(caplog):
    s = TransformSpec(1.0)
    with caplog.at_level(logging.INFO):
        z, n = transform_field(np.array([[0.0, -2.0, 1.0]]), s)
    assert n == 2
    assert z[0, 0] == z[0, 1] == pytest.approx(math.log(1e-6))
    assert any("clamp" in r.message for r in caplog.records)


pos = st.floats(1e-3, 1e4, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(pos, pos)
def test_round_trip(x, nu):
    s = TransformSpec(nu)
    assert gamma_inverse(gamma(x, s), s) == pytest.approx(x, rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(pos, pos, pos)
def test_gamma_monotone_and_continuous(a, b, nu):
    s = TransformSpec(nu)
    if a < b:
        assert gamma(a, s) < gamma(b, s)
    eps = 1e-9 * nu
    assert abs(gamma(nu + eps, s) - gamma(nu - eps, s)) < 1e-6
