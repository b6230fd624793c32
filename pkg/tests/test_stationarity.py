from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsdelab.errors import ParameterError, PreconditionError
from bdsdelab.finite import DriverSpec
from bdsdelab.noise import sample_noise
from bdsdelab.problems import get_problem
from bdsdelab.stationarity import (
    make_v_builder,
    moments_agree,
    ou_stationary_oracle,
    shift_compare,
    spde_stationarity_check,
)
from bdsdelab.weighted import SpatialGrid

DT = 2.0**-4
TINY = SpatialGrid.build(1, 1.0, 3)


def compare(name, t, r, grid=TINY, **kw):
    p = get_problem(name, **kw)
    return shift_compare(p.driver, p.constants, p.coeffs, grid, 7, t, r, dt=DT, H=1.0, M=4, J=p.J)


def test_shift_compare_trivial_cases():
    assert compare("ou", 0.5, 0.0) == 0.0
    assert compare("relax", 0.25, 0.5) == 0.0
    assert compare("ou", 0.0, 50 * DT) <= 1e-12
    assert compare("nonlinear", 0.25, 1.0, grid=SpatialGrid.build(1, 4.0, 17)) <= 1e-12


def test_shift_compare_needs_homogeneous_driver():
    driver = DriverSpec(f=lambda t, x, y, z: t + 0.0 * y, time_dependent=True)
    p = get_problem("ou")
    with pytest.raises(PreconditionError):
        shift_compare(driver, p.constants, p.coeffs, TINY, 0, 0.0, 0.25)
    with pytest.raises(ParameterError):
        compare("ou", 0.1, 0.0)


@settings(max_examples=15, deadline=None)
@given(k=st.integers(0, 8), r1=st.integers(0, 8), r2=st.integers(0, 8))
def test_shift_cocycle(k, r1, r2):
    t = k * DT
    lhs = compare("ou", t, (r1 + r2) * DT)
    rhs = compare("ou", t, r1 * DT) + compare("ou", t + r1 * DT, r2 * DT)
    assert lhs <= rhs + 1e-12


def test_spde_stationarity_identical_streams():
    p = get_problem("ou")
    build = make_v_builder(p.driver, p.coeffs, TINY, 2, 4.0)
    nz = sample_noise(5, 0.0, DT, 32, 1, 1)
    assert spde_stationarity_check(build, nz, TINY, 0.5, 0.0) == (0.0, True)
    d, ok = spde_stationarity_check(build, nz, TINY, 0.25, 1.0)
    assert ok and d <= 1e-10
    relax = get_problem("relax")
    d, ok = spde_stationarity_check(make_v_builder(relax.driver, relax.coeffs, TINY, 2, 4.0), nz, TINY, 0.0, 1.5)
    assert d == 0.0 and ok
    with pytest.raises(ParameterError):
        spde_stationarity_check(build, nz, TINY, 1.5, 1.0)


def test_spde_stationarity_in_distribution():
    p = get_problem("ou")
    build = make_v_builder(p.driver, p.coeffs, TINY, 2, 12.0)
    a, b = [], []
    for s in range(48):
        nz = sample_noise(100 + s, 0.0, DT, 32, 1, 1)
        a.append(build(nz, 0.25)[1])
        b.append(build(nz, 1.75)[1])
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    se = math.sqrt(2.0 / (len(a) - 1)) * (va + vb)
    assert abs(va - vb) <= 4.0 * se


def test_ou_oracle_degenerate_and_errors():
    report = ou_stationary_oracle(0.5, 0.0, 0.125, 0.25, 16.0, 8, override=True)
    assert report.variance == 0.0 and report.target == 0.0 and report.passed
    with pytest.raises(ParameterError):
        ou_stationary_oracle(0.5, 1.0, 0.125, 0.25, 16.0, 7)
    with pytest.raises(ParameterError):
        ou_stationary_oracle(0.5, 1.0, 0.125, 0.25, 8.0, 8)


def test_ou_oracle_target_scales_with_noise_strength():
    one = ou_stationary_oracle(0.5, 1.0, 0.125, 0.25, 16.0, 8)
    two = ou_stationary_oracle(0.5, 2.0, 0.125, 0.25, 16.0, 8)
    assert two.target == 4.0 * one.target == 4.0
    assert two.variance == pytest.approx(4.0 * one.variance, rel=1e-12)


def test_moments_agree():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(400, 5))
    assert moments_agree(x)
    x[:, 2] += 1.0
    assert not moments_agree(x)
