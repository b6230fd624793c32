from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from bdsdelab.conditions import ProblemConstants, validate_conditions
from bdsdelab.errors import DegenerateInputError, NonConvergenceError, ParameterError, PreconditionError
from bdsdelab.finite import DriverSpec, FieldPath
from bdsdelab.forward import constant_coefficients
from bdsdelab.infinite import (
    default_horizons,
    horizon_tail_estimate,
    p_norm_bound_check,
    solve_infinite,
    time_continuity_study,
)
from bdsdelab.noise import sample_noise
from bdsdelab.problems import get_problem
from bdsdelab.weighted import SpatialGrid

GRID = SpatialGrid.build(1, 1.0, 3)
STILL = constant_coefficients(1, 0.0, 0.0)


def test_condition_examples():
    r = validate_conditions(ProblemConstants(K=0.2, mu=0.5, C=0.25))
    assert r["H7"].slack == pytest.approx(0.3, abs=1e-15) and r["H7"].passed
    assert not validate_conditions(ProblemConstants(alphaj=(0.3, 0.3)))["H2"].passed
    assert validate_conditions(ProblemConstants(p=2.5, q=4.0))["A2"].passed
    assert not validate_conditions(ProblemConstants(p=2.5, q=3.2))["A2"].passed


def test_tail_of_zero_driver_is_zero():
    driver = DriverSpec(f=lambda x, y, z: 0.0 * y, g=(lambda x, y, z: 0.0 * y,))
    assert horizon_tail_estimate(driver, ProblemConstants(K=0.3), GRID, 1.0, 5.0) == 0.0


def test_tail_closed_form_against_quadrature():
    c, K = 0.7, 0.3
    grid = SpatialGrid.build(1, 4.0, 33)
    consts = ProblemConstants(K=K)
    homogeneous = DriverSpec(f=lambda x, y, z: c + 0.0 * y)
    exact = c * c * grid.mass * integrate.quad(lambda r: math.exp(-K * r), 2.0, 7.0)[0]
    assert horizon_tail_estimate(homogeneous, consts, grid, 2.0, 7.0) == pytest.approx(exact, rel=1e-6)
    timed = DriverSpec(f=lambda t, x, y, z: c * math.cos(t) + 0.0 * y, time_dependent=True)
    exact_t = c * c * grid.mass * integrate.quad(lambda r: math.exp(-K * r) * math.cos(r) ** 2, 2.0, 7.0)[0]
    assert horizon_tail_estimate(timed, consts, grid, 2.0, 7.0) == pytest.approx(exact_t, rel=1e-6)


def test_tail_factorises_under_doubling():
    consts = ProblemConstants(K=0.25)
    driver = DriverSpec(f=lambda x, y, z: 1.0 + 0.0 * y)
    n, gap = 3.0, 2.0
    ratio = horizon_tail_estimate(driver, consts, GRID, 2 * n, 2 * n + gap) / horizon_tail_estimate(driver, consts, GRID, n, n + gap)
    assert ratio == pytest.approx(math.exp(-0.25 * n), rel=1e-12)
    with pytest.raises(ParameterError):
        horizon_tail_estimate(driver, consts, GRID, 2.0, 2.0)


def test_default_horizons_meet_tail_target():
    prob = get_problem("relax")
    hs = default_horizons(prob.driver, prob.constants, GRID, 1e-2, 2.0**-4)
    assert hs[1] == 2 * hs[0] and hs[2] == 4 * hs[0]
    assert horizon_tail_estimate(prob.driver, prob.constants, GRID, hs[0], math.inf) <= 1e-3


def test_zero_driver_gives_zero_everywhere():
    driver = DriverSpec(f=lambda x, y, z: 0.0 * y, g=(lambda x, y, z: 0.0 * y,))
    consts = ProblemConstants(K=0.1, mu=0.5, C=0.0, Cj=(0.0,), alphaj=(0.0,))
    path, report = solve_infinite(driver, consts, STILL, GRID, 0, [1.0, 2.0, 4.0], 1e-12, dt=0.25, M=2, n_seeds=2)
    assert not path.Y.any()
    assert report.picard_residuals == [0.0, 0.0]


def test_relaxation_to_stationary_constant():
    # The implicit step y_k = y_{k+1} + (0.1 - 0.5 y_k) dt from y_N = 0 gives
    # y_0 = 0.2 (1 - (1 + 0.5 dt)^(-N)).
    prob = get_problem("relax")
    dt = 2.0**-4
    path, report = solve_infinite(prob.driver, prob.constants, prob.coeffs, GRID, 0, [8.0, 16.0, 32.0], math.inf, dt=dt, M=2, n_seeds=1)
    assert np.allclose(path.Y[0], 0.2 * (1.0 - (1.0 + 0.5 * dt) ** -(32.0 / dt)), rtol=1e-12, atol=0)
    assert np.allclose(path.Y[0], 0.2, rtol=0, atol=1e-6)
    diffs = report.picard_residuals
    assert diffs[1] < diffs[0]
    assert all(row["within"] for row in report.tail_estimates["pairs"])


def test_condition_gating_and_override():
    prob = get_problem("ou").with_constants(mu=0.01)
    with pytest.raises(PreconditionError):
        solve_infinite(prob.driver, prob.constants, prob.coeffs, GRID, 0, [1.0, 2.0], 1.0, dt=0.25, M=2, n_seeds=1)
    _, report = solve_infinite(prob.driver, prob.constants, prob.coeffs, GRID, 0, [1.0, 2.0], math.inf, dt=0.25, M=2, n_seeds=1, override=True)
    assert len(report.tail_estimates["pairs"]) == 1


def test_cauchy_failure_raises_with_differences():
    prob = get_problem("ou")
    with pytest.raises(NonConvergenceError) as info:
        solve_infinite(prob.driver, prob.constants, prob.coeffs, GRID, 0, [1.0, 2.0, 4.0], 1e-12, dt=0.25, M=2, n_seeds=2)
    assert len(info.value.residuals) == 2


def test_horizon_list_validation():
    prob = get_problem("relax")
    for hs in ([2.0], [2.0, 1.0], [1.0, 1.1]):
        with pytest.raises(ParameterError):
            solve_infinite(prob.driver, prob.constants, prob.coeffs, GRID, 0, hs, 1.0, dt=0.25, M=2, n_seeds=1)


def _const_path(c: float, steps: int = 8) -> FieldPath:
    times = np.linspace(0.0, 2.0, steps + 1)
    return FieldPath(times, np.full((steps + 1, GRID.size), c), np.zeros((steps + 1, GRID.size, 1)), GRID)


def test_p_norm_trivial_cases():
    consts = ProblemConstants(K=0.2, p=2.5)
    assert p_norm_bound_check(_const_path(0.0), consts) == 0.0
    assert p_norm_bound_check(_const_path(1.3), consts) == pytest.approx(1.3**2.5 * GRID.mass, rel=1e-14)


def test_p_norm_stable_across_seed_batches():
    prob = get_problem("ou")

    def batch(first: int) -> float:
        vals = []
        for s in range(first, first + 20):
            path, _ = solve_infinite(prob.driver, prob.constants, prob.coeffs, GRID, s, [4.0, 8.0], math.inf, dt=2.0**-4, M=2, n_seeds=1)
            vals.append(p_norm_bound_check(path, prob.constants))
        return float(np.mean(vals))

    a, b = batch(0), batch(100)
    assert 0.5 <= a / b <= 2.0


def test_continuity_exact_invariance_without_x_dependence():
    prob = get_problem("ou")
    noises = [sample_noise(s, 0.0, 2.0**-5, 32, 1, 1) for s in range(2)]
    study = time_continuity_study(prob.driver, prob.constants, prob.coeffs, GRID, [0.25, 0.3125, 0.375, 0.5], noises, 2, 1.0)
    assert study.exact_invariance and study.moments == [0.0, 0.0, 0.0]


def test_continuity_requires_distinct_times():
    prob = get_problem("ou_space")
    nz = sample_noise(0, 0.0, 2.0**-5, 32, 1, 1)
    with pytest.raises(DegenerateInputError):
        time_continuity_study(prob.driver, prob.constants, prob.coeffs, GRID, [0.25, 0.25, 0.5, 0.5], nz, 2, 1.0)


def test_continuity_single_step_gap_is_positive():
    prob = get_problem("ou_space")
    grid = SpatialGrid.build(1, 4.0, 17)
    dt = 2.0**-5
    nz = sample_noise(0, 0.0, dt, 32, 1, 1)
    study = time_continuity_study(prob.driver, prob.constants, prob.coeffs, grid, [0.25, 0.25 + dt, 0.25 + 2 * dt, 0.25 + 4 * dt], nz, 4, 1.0)
    assert 0.0 < study.moments[0] < math.inf
    assert study.slope is not None
