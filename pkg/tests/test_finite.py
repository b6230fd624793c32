from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from bdsdelab.conditions import ProblemConstants
from bdsdelab.errors import NonConvergenceError, ParameterError, PreconditionError
from bdsdelab.finite import (
    DriverSpec,
    flow_consistency_check,
    march_solve,
    mode_convergence_study,
    picard_solve,
    solve_linear_bdsde,
    truncate_modes,
)
from bdsdelab.forward import constant_coefficients, linear_drift_coefficients
from bdsdelab.noise import sample_noise
from bdsdelab.problems import get_problem
from bdsdelab.weighted import SpatialGrid

GRID = SpatialGrid.build(1, 4.0, 17)
BM = constant_coefficients(1, 0.0, 1.0)
SAFE = ProblemConstants(K=0.1, mu=0.5, C=0.25, Cj=(0.0,), alphaj=(0.0,))


def noise(seed=0, N=16, J=1, dt=1 / 16):
    return sample_noise(seed, 0.0, dt, N, 1, J)


def test_linear_constant_terminal():
    path = solve_linear_bdsde(lambda k, x: 0.0, [], 2.5, BM, GRID, noise(), 8)
    assert np.allclose(path.Y, 2.5, rtol=0, atol=1e-13)
    assert np.allclose(path.Z, 0.0, rtol=0, atol=1e-12)


def test_linear_unit_generator():
    path = solve_linear_bdsde(lambda k, x: 1.0, [], None, BM, GRID, noise(), 8)
    expected = path.times[-1] - path.times
    assert np.allclose(path.Y, expected[:, None], rtol=0, atol=1e-13)


def test_linear_unit_noise_coefficient():
    nz = noise(J=1)
    path = solve_linear_bdsde(lambda k, x: 0.0, [lambda k, x: np.ones(x.shape[:-1])], None, BM, GRID, nz, 8)
    tail = -np.concatenate([np.cumsum(nz.dBhat[::-1, 0])[::-1], [0.0]])
    assert np.allclose(path.Y, tail[:, None], rtol=0, atol=1e-13)
    assert np.allclose(path.Z, 0.0, rtol=0, atol=1e-12)


def test_terminal_value_is_exact_and_solves_are_deterministic():
    prob = get_problem("nonlinear")
    h = lambda x: np.tanh(x[:, 0])
    driver = replace(prob.driver, h=h)
    a = march_solve(driver, prob.coeffs, GRID, noise(3), 16)
    b = march_solve(driver, prob.coeffs, GRID, noise(3), 16)
    assert np.array_equal(a.Y[-1], h(GRID.nodes))
    assert np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z)
    c, _ = picard_solve(driver, 1.0, prob.constants, prob.coeffs, GRID, noise(3), 16, 1e-20, 60)
    d, _ = picard_solve(driver, 1.0, prob.constants, prob.coeffs, GRID, noise(3), 16, 1e-20, 60)
    assert np.array_equal(c.Y, d.Y)
    assert np.array_equal(c.Y[-1], h(GRID.nodes))


def test_picard_fixed_affine_driver_stops_after_one_update():
    driver = DriverSpec(f=lambda x, y, z: np.cos(x[..., 0]), g=(lambda x, y, z: 0.5 + 0.0 * y,))
    _, report = picard_solve(driver, 1.0, SAFE, BM, GRID, noise(), 8, 1e-30, 5)
    assert report.iterations == 2 and report.picard_residuals[1] == 0.0


def test_picard_zero_solution():
    driver = DriverSpec(f=lambda x, y, z: -0.5 * y)
    path, report = picard_solve(driver, 1.0, SAFE, BM, GRID, noise(), 8, 1e-30, 5)
    assert report.picard_residuals == [0.0]
    assert not path.Y.any()


def test_picard_agrees_with_march():
    prob = get_problem("nonlinear")
    grid = SpatialGrid.build(1, 4.0, 33)
    nz = noise(5, N=32, dt=1 / 32)
    p, report = picard_solve(prob.driver, 1.0, prob.constants, prob.coeffs, grid, nz, 16, 1e-16, 60)
    m = march_solve(prob.driver, prob.coeffs, grid, nz, 16)
    assert np.max(np.abs(p.Y - m.Y)) < 1e-7
    assert all(r >= 0 for r in report.picard_residuals)
    assert all(r <= 0.75 + 0.15 for r in report.contraction_ratios[1:])


def test_picard_errors():
    prob = get_problem("nonlinear")
    with pytest.raises(NonConvergenceError) as info:
        picard_solve(prob.driver, 1.0, prob.constants, prob.coeffs, GRID, noise(), 8, 1e-30, 2)
    assert len(info.value.residuals) == 2
    bad = prob.constants.__class__(alphaj=(0.3, 0.3))
    with pytest.raises(PreconditionError):
        picard_solve(prob.driver, 1.0, bad, prob.coeffs, GRID, noise(), 8)


def test_truncate_modes():
    prob = get_problem("modes", J=4)
    assert truncate_modes(prob.driver, 4).g == prob.driver.g
    assert truncate_modes(prob.driver, 1).g == prob.driver.g[:1]
    for n in (0, 5):
        with pytest.raises(ParameterError):
            truncate_modes(prob.driver, n)


def test_truncated_solve_ignores_higher_columns():
    prob = get_problem("modes", J=4)
    nz = noise(2, J=4)
    driver = truncate_modes(prob.driver, 2)
    base = march_solve(driver, prob.coeffs, GRID, nz, 8)
    scrambled = nz.dBhat.copy()
    scrambled[:, 2:] = np.random.default_rng(0).normal(size=(nz.N, 2))
    other = march_solve(driver, prob.coeffs, GRID, replace(nz, dBhat=scrambled), 8)
    assert np.array_equal(base.Y, other.Y) and np.array_equal(base.Z, other.Z)


def test_mode_study_vanishing_tail_and_order_check():
    driver = DriverSpec(
        f=lambda x, y, z: -0.5 * y,
        g=(lambda x, y, z: np.cos(x[..., 0]),) + tuple(lambda x, y, z: 0.0 * y for _ in range(3)),
    )
    consts = ProblemConstants(K=0.1, mu=0.5, C=0.25, Cj=(0.0,) * 4, alphaj=(0.0,) * 4)
    coeffs = linear_drift_coefficients(1)
    study = mode_convergence_study(driver, 1.0, consts, coeffs, GRID, [noise(s, J=4) for s in range(2)], [1, 2, 4], 8)
    assert [r["measured_diff"] for r in study.rows] == [0.0, 0.0]
    with pytest.raises(ParameterError):
        mode_convergence_study(driver, 1.0, consts, coeffs, GRID, noise(J=4), [4, 2, 1], 8)


def test_mode_study_sup_norms_bounded():
    prob = get_problem("modes", J=8)
    study = mode_convergence_study(prob.driver, 1.0, prob.constants, prob.coeffs, GRID, [noise(s, J=8) for s in range(4)], [1, 2, 4, 8], 8)
    sups = list(study.sup_norms.values())
    assert max(sups) <= 2.0 * min(sups)


def test_flow_consistency_trivial_cases():
    prob = get_problem("ou_space")
    nz = noise(4)
    path = march_solve(prob.driver, prob.coeffs, GRID, nz, 8)
    assert flow_consistency_check(path, 0.25, 0.25, prob.driver, prob.coeffs, nz) == 0.0
    frozen = constant_coefficients(1, 0.0, 0.0)
    still = march_solve(prob.driver, frozen, GRID, nz, 8)
    assert flow_consistency_check(still, 0.0, 1.0, prob.driver, frozen, nz) < 1e-12


def test_flow_consistency_improves_under_refinement():
    prob = get_problem("ou_space")
    out = []
    for dt, M, n in ((2.0**-3, 4, 17), (2.0**-5, 64, 65)):
        grid = SpatialGrid.build(1, 8.0, n)
        vals = []
        for s in range(4):
            nz = sample_noise(s, 0.0, dt, int(1 / dt), 1, 1)
            path = march_solve(prob.driver, prob.coeffs, grid, nz, M)
            vals.append(flow_consistency_check(path, 0.0, 0.5, prob.driver, prob.coeffs, nz))
        out.append(np.mean(vals))
    assert out[1] < out[0]


def test_path_export_and_report_json(tmp_path):
    prob = get_problem("nonlinear")
    path, report = picard_solve(prob.driver, 1.0, prob.constants, prob.coeffs, GRID, noise(), 8, 1e-14, 60)
    files = path.export(tmp_path / "p", "abc", stride=8)
    names = sorted(f.name for f in files)
    assert names == ["Y_000000.csv", "Y_000008.csv", "Y_000016.csv", "Z_000000.csv", "Z_000008.csv", "Z_000016.csv", "manifest.json"]
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert manifest["config_hash"] == "abc" and len(manifest["times"]) == 17
    saved = json.loads(report.write_json(tmp_path / "r.json").read_text())
    assert "wall_time" not in saved and saved["iterations"] == report.iterations
