"""Study batteries shared by the command line and the acceptance suite.

Each study returns a ``StudyResult``: named pass/fail verdicts, tables
(lists of row dicts, written as CSV by the CLI) and a JSON-ready summary.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .conditions import ProblemConstants, validate_conditions
from .finite import FieldPath, SolveReport, march_solve, mode_convergence_study, picard_solve
from .forward import FlowEnsemble, linear_drift_coefficients, simulate_flow
from .infinite import solve_infinite, time_continuity_study
from .noise import sample_noise
from .problems import Problem, get_problem, heat
from .spde import battery_rms, bump_battery, heat_oracle_fields, sigma_grad_u, weak_form_residual
from .stationarity import ou_stationary_oracle, shift_compare
from .weighted import SpatialGrid, equivalence_ratio


@dataclass
class StudyResult:
    name: str
    verdicts: dict[str, bool] = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    paths: dict[str, FieldPath] = field(default_factory=dict)
    reports: dict[str, SolveReport] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def map_seeds(fn: Callable[[int], object], seeds: Iterable[int], threads: int = 1) -> list:
    """Apply ``fn`` to every seed, in order, on up to ``threads`` worker threads."""
    seeds = list(seeds)
    if threads <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))


def log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _steps(T: float, dt: float) -> int:
    return int(round(T / dt))


def validate_study(constants: ProblemConstants, level: str = "infinite") -> StudyResult:
    report = validate_conditions(constants)
    res = StudyResult("validate")
    res.tables["conditions"] = report.rows()
    res.verdicts[f"conditions_{level}"] = report.passed(level)
    res.summary = {"failures": report.failures(level), "level": level}
    return res


def solve_finite_study(problem: Problem, T: float, dt: float, M: int, grid: SpatialGrid, seed: int, method: str = "march", tol: float = 1e-16, max_iter: int = 60) -> StudyResult:
    noise = sample_noise(seed, 0.0, dt, _steps(T, dt), grid.d, problem.J)
    res = StudyResult("solve-finite")
    if method == "picard":
        path, report = picard_solve(problem.driver, T, problem.constants, problem.coeffs, grid, noise, M, tol, max_iter)
        res.reports["solve"] = report
        res.tables["picard"] = [{"iteration": i + 1, "residual": r} for i, r in enumerate(report.picard_residuals)]
    else:
        path = march_solve(problem.driver, problem.coeffs, grid, noise, M)
    res.paths["solution"] = path
    res.verdicts["finite"] = bool(np.all(np.isfinite(path.Y)) and np.all(np.isfinite(path.Z)))
    res.summary = {"Y0_weighted_norm_sq": float(np.dot(path.Y[0] ** 2, grid.quad_weights)), "steps": path.steps}
    return res


def solve_infinite_study(problem: Problem, grid: SpatialGrid, seed: int, horizons: Sequence[float] | None, tol: float, dt: float, M: int, n_seeds: int, override: bool = False) -> StudyResult:
    res = StudyResult("solve-infinite")
    path, report = solve_infinite(problem.driver, problem.constants, problem.coeffs, grid, seed, horizons, tol, dt=dt, M=M, n_seeds=n_seeds, J=problem.J, override=override)
    res.paths["solution"] = path
    res.reports["solve"] = report
    res.tables["horizons"] = report.tail_estimates["pairs"]
    res.verdicts["cauchy"] = report.converged
    res.summary = {"decay": report.tail_estimates["decay"]}
    return res


def picard_study(
    problem: Problem,
    levels: Sequence[tuple[float, int, int]] = ((2.0**-7, 64, 65), (2.0**-8, 256, 129)),
    T: float = 1.0,
    R: float = 8.0,
    seed: int = 0,
    tol: float = 1e-16,
    max_iter: int = 60,
    slack: float = 0.15,
) -> StudyResult:
    """Picard residual ratios at successive (dt, M, nodes) levels.

    The excess of a level is max(0, largest ratio - (1/2 + sum alpha_j)); it
    must stay within ``slack`` and must not grow under refinement.
    """
    bound = problem.constants.contraction_bound
    res = StudyResult("picard-study")
    rows, excess = [], []
    for li, (dt, M, n) in enumerate(levels):
        grid = SpatialGrid.build(problem.d, R, n, problem.constants.q)
        noise = sample_noise(seed, 0.0, dt, _steps(T, dt), grid.d, problem.J)
        _, report = picard_solve(problem.driver, T, problem.constants, problem.coeffs, grid, noise, M, tol, max_iter)
        ratios = report.contraction_ratios
        for i, r in enumerate(report.picard_residuals):
            rows.append({"level": li, "dt": dt, "M": M, "nodes": n, "iteration": i + 1, "residual": r, "ratio": ratios[i - 1] if i else ""})
        excess.append(max(0.0, max(ratios, default=0.0) - bound))
    res.tables["contraction"] = rows
    res.verdicts["ratios_within_bound"] = all(e <= slack for e in excess)
    res.verdicts["slack_non_increasing"] = all(b <= a for a, b in zip(excess, excess[1:]))
    res.summary = {"bound": bound, "excess": excess}
    return res


def mode_study(
    problem: Problem,
    n_list: Sequence[int] = (2, 4, 8, 16),
    T: float = 1.0,
    dt: float = 2.0**-6,
    M: int = 32,
    R: float = 8.0,
    nodes: int = 65,
    n_seeds: int = 64,
    seed: int = 0,
    safety: float = 5.0,
) -> StudyResult:
    grid = SpatialGrid.build(problem.d, R, nodes, problem.constants.q)
    noises = [sample_noise(seed + s, 0.0, dt, _steps(T, dt), grid.d, problem.J) for s in range(n_seeds)]
    study = mode_convergence_study(problem.driver, T, problem.constants, problem.coeffs, grid, noises, n_list, M, safety=safety)
    res = StudyResult("mode-study")
    res.tables["modes"] = study.rows
    measured = [r["measured_diff"] for r in study.rows]
    res.verdicts["within_safety"] = all(r["within"] for r in study.rows)
    res.verdicts["decreasing_in_n"] = all(b < a for a, b in zip(measured, measured[1:]))
    sups = list(study.sup_norms.values())
    res.verdicts["uniform_bound"] = max(sups) <= 2.0 * min(sups) if min(sups) > 0 else max(sups) == 0
    res.summary = {"sup_norms": {str(k): v for k, v in study.sup_norms.items()}, "energy": {str(k): v for k, v in study.energy.items()}}
    return res


def horizon_study(
    problem: Problem,
    horizons: Sequence[float] = (4.0, 8.0, 16.0),
    dt: float = 2.0**-4,
    M: int = 2,
    grid: SpatialGrid | None = None,
    n_seeds: int = 128,
    seed: int = 0,
    safety: float = 5.0,
    override: bool = False,
) -> StudyResult:
    grid = grid or SpatialGrid.build(problem.d, 1.0, 3, problem.constants.q)
    _, report = solve_infinite(problem.driver, problem.constants, problem.coeffs, grid, seed, horizons, math.inf, dt=dt, M=M, n_seeds=n_seeds, J=problem.J, override=override, safety=safety, check_cauchy=False)
    res = StudyResult("horizon-study")
    rows = report.tail_estimates["pairs"]
    decay = report.tail_estimates["decay"]["values"]
    res.tables["horizons"] = rows
    res.tables["decay"] = [{"horizon": h, "discounted_norm_sq": v, "terminal": h == horizons[-1]} for h, v in zip(horizons, decay)]
    res.verdicts["within_safety"] = all(r["within"] for r in rows)
    # The last entry is the zero terminal value itself, so it carries no evidence.
    interior = decay[:-1]
    res.verdicts["decay_decreasing"] = len(interior) >= 2 and all(b < a for a, b in zip(interior, interior[1:]))
    res.reports["solve"] = report
    return res


def stationarity_study(
    problems: Sequence[tuple[Problem, SpatialGrid]],
    t_values: Sequence[float] = (0.0, 0.25, 1.0),
    r_values: Sequence[float] = (0.0, 0.25, 1.0),
    seed: int = 0,
    dt: float = 2.0**-6,
    H: float = 2.0,
    M: int = 8,
    tol: float = 1e-12,
) -> StudyResult:
    res = StudyResult("stationarity")
    rows = []
    for problem, grid in problems:
        for t in t_values:
            for r in r_values:
                d = shift_compare(problem.driver, problem.constants, problem.coeffs, grid, seed, t, r, dt=dt, H=H, M=M, J=problem.J)
                rows.append({"problem": problem.name, "t": t, "r": r, "discrepancy": d, "seed": seed})
    worst = max(r["discrepancy"] for r in rows)
    res.tables["shift"] = rows
    res.verdicts["perfect_stationarity"] = worst <= tol
    res.summary = {"max_discrepancy": worst, "tolerance": tol}
    return res


def heat_refinement(levels: Sequence[tuple[float, int]] = ((2.0**-5, 129), (2.0**-6, 257), (2.0**-7, 513)), R: float = 4.0, T: float = 1.0) -> tuple[list[dict], float]:
    """Weak-form residual of the analytic heat solution per level and the smallest observed order."""
    problem = heat(T)
    rows = []
    for dt, n in levels:
        grid = SpatialGrid.build(1, R, n)
        noise = sample_noise(0, 0.0, dt, _steps(T, dt), 1, 1)
        U, S = heat_oracle_fields(grid, noise.times, T)
        r = battery_rms([weak_form_residual(U, S, b, problem.driver, problem.coeffs, grid, noise, 0.0, T) for b in bump_battery(grid)])
        rows.append({"dt": dt, "h": grid.h, "residual": r, "scale": dt + grid.h**2, "constant": r / (dt + grid.h**2)})
    orders = [math.log(a["residual"] / b["residual"]) / math.log(a["scale"] / b["scale"]) for a, b in zip(rows, rows[1:])]
    for row, o in zip(rows[1:], orders):
        row["order"] = o
    return rows, min(orders)


def _ou_space_level(problem: Problem, dt: float, n: int, M: int, R: float, T: float, seed: int):
    grid = SpatialGrid.build(1, R, n, problem.constants.q)
    noise = sample_noise(seed, 0.0, dt, _steps(T, dt), 1, problem.J)
    path = march_solve(problem.driver, problem.coeffs, grid, noise, M)
    residuals = [weak_form_residual(path.Y, path.Z, b, problem.driver, problem.coeffs, grid, noise, 0.0, T) for b in bump_battery(grid)]
    return grid, residuals, sigma_grad_u(path, problem.coeffs).discrepancy


OU_SPACE_LEVELS = ((2.0**-4, 33, 16), (2.0**-5, 65, 64), (2.0**-6, 129, 256))


def weakform_study(
    problem: Problem,
    levels: Sequence[tuple[float, int, int]] = OU_SPACE_LEVELS,
    R: float = 4.0,
    T: float = 1.0,
    n_seeds: int = 4,
    seed: int = 0,
    min_slope: float = 0.4,
    heat_min_order: float = 0.9,
    threads: int = 1,
) -> StudyResult:
    """Heat oracle, residual battery and gradient identification under joint (dt, h, M) refinement."""
    res = StudyResult("weakform")
    heat_rows, heat_order = heat_refinement()
    res.tables["heat"] = heat_rows
    heat_res = [r["residual"] for r in heat_rows]
    res.verdicts["heat_residual_decreasing"] = all(b < a for a, b in zip(heat_res, heat_res[1:]))
    res.verdicts["heat_order"] = heat_order >= heat_min_order
    battery, summary, grads = [], [], []
    for dt, n, M in levels:
        outs = map_seeds(lambda s: _ou_space_level(problem, dt, n, M, R, T, s), range(seed, seed + n_seeds), threads)
        level_res = []
        gd = []
        for s, (grid, residuals, g) in zip(range(seed, seed + n_seeds), outs):
            for i, r in enumerate(residuals):
                battery.append({"psi_id": i, "seed": s, "residual": r, "dt": dt, "h": grid.h, "M": M})
            level_res.extend(residuals)
            gd.append(g)
        summary.append({"dt": dt, "h": outs[0][0].h, "M": M, "rms_residual": battery_rms(level_res), "grad_discrepancy": float(np.mean(gd))})
    res.tables["battery"] = battery
    res.tables["refinement"] = summary
    rms = [r["rms_residual"] for r in summary]
    grad = [r["grad_discrepancy"] for r in summary]
    slope = log_slope([r["dt"] for r in summary], rms)
    res.verdicts["battery_decreasing"] = all(b < a for a, b in zip(rms, rms[1:]))
    res.verdicts["battery_slope"] = slope >= min_slope
    res.verdicts["gradient_decreasing"] = all(b < a for a, b in zip(grad, grad[1:]))
    res.summary = {"heat_min_order": heat_order, "battery_slope": slope}
    return res


def equivalence_study(
    T: float = 2.0,
    n_times: int = 10,
    dt: float = 2.0**-6,
    R: float = 8.0,
    nodes: int = 129,
    n_seeds: int = 16,
    seed: int = 0,
    band: float = 10.0,
) -> StudyResult:
    """Norm-equivalence ratios of three fields along the flow b = -x, sigma = 1."""
    coeffs = linear_drift_coefficients(1, 1.0, 1.0)
    grid = SpatialGrid.build(1, R, nodes)
    N = _steps(T, dt)
    flows = [simulate_flow(grid.nodes, 0.0, T, coeffs, sample_noise(seed + s, 0.0, dt, N, 1, 1)) for s in range(n_seeds)]
    flow = FlowEnsemble.stack(flows)
    x = grid.nodes[:, 0]
    fields = {"one": np.ones_like(x), "gauss": np.exp(-x * x), "growth": 1.0 + np.abs(x)}
    times = [dt * round(N * (k + 1) / n_times) for k in range(n_times)]
    rows = []
    res = StudyResult("equivalence")
    for name, phi in fields.items():
        ratios = [equivalence_ratio(phi, flow, grid, s) for s in times]
        rows += [{"field": name, "s": s, "ratio": r} for s, r in zip(times, ratios)]
        finite = all(0.0 < r < math.inf for r in ratios)
        res.verdicts[f"band_{name}"] = finite and max(ratios) / min(ratios) <= band
    res.tables["ratios"] = rows
    return res


def continuity_study(
    problem: Problem,
    dt: float = 2.0**-8,
    T: float = 1.0,
    base: float = 0.25,
    gap_steps: Sequence[int] = (2, 4, 8, 16, 32, 64),
    M: int = 32,
    R: float = 8.0,
    nodes: int = 129,
    n_seeds: int = 8,
    seed: int = 0,
    slack: float = 0.3,
) -> StudyResult:
    grid = SpatialGrid.build(problem.d, R, nodes, problem.constants.q)
    noises = [sample_noise(seed + s, 0.0, dt, _steps(T, dt), grid.d, problem.J) for s in range(n_seeds)]
    t_values = [base] + [base + k * dt for k in gap_steps]
    study = time_continuity_study(problem.driver, problem.constants, problem.coeffs, grid, t_values, noises, M, T)
    res = StudyResult("continuity-study")
    res.tables["continuity"] = [{"gap": g, "moment": m} for g, m in zip(study.gaps, study.moments)]
    target = problem.constants.p / 2.0 - slack
    res.verdicts["holder_slope"] = study.exact_invariance or study.slope >= target
    res.summary = {"slope": study.slope, "target": target}
    return res


def ou_oracle_study(mu: float = 0.5, sigma0: float = 1.0, K: float = 0.125, dt: float = 2.0**-8, horizon: float = 16.0, n_seeds: int = 64, seed: int = 0, override: bool = False) -> StudyResult:
    report = ou_stationary_oracle(mu, sigma0, K, dt, horizon, n_seeds, base_seed=seed, override=override)
    res = StudyResult("ou-oracle")
    res.verdicts.update(report.checks)
    res.tables["variance"] = [{"t": t, "variance": v, "se": e} for t, v, e in zip(report.times, report.time_variances, report.time_errors)]
    res.summary = {
        "target": report.target,
        "variance": report.variance,
        "standard_error": report.standard_error,
        "skewness": report.skewness,
        "excess_kurtosis": report.excess_kurtosis,
    }
    return res


def default_stationarity_problems() -> list[tuple[Problem, SpatialGrid]]:
    return [
        (get_problem("ou"), SpatialGrid.build(1, 1.0, 3)),
        (get_problem("nonlinear"), SpatialGrid.build(1, 4.0, 33)),
    ]


__all__ = [
    "StudyResult",
    "validate_study",
    "solve_finite_study",
    "solve_infinite_study",
    "picard_study",
    "mode_study",
    "horizon_study",
    "stationarity_study",
    "weakform_study",
    "equivalence_study",
    "continuity_study",
    "ou_oracle_study",
    "heat_refinement",
    "default_stationarity_problems",
    "map_seeds",
]
