"""Infinite-horizon equations by horizon extension with zero terminal data.

Solutions on horizons n < m are compared in the discounted norm
int_0^inf e^{-Kr} (|dY|^2 + |dZ|^2) rho^{-1} dx dr, each solution extended
by zero beyond its own horizon. The expectation is a mean over seeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conditions import ProblemConstants, validate_conditions
from .errors import DegenerateInputError, NonConvergenceError, ParameterError, PreconditionError
from .finite import DriverSpec, FieldPath, SolveReport, march_solve, picard_solve
from .forward import ForwardCoefficients
from .noise import NoiseGrid, sample_noise
from .weighted import SpatialGrid, path_norms_sq

__all__ = [
    "validate_conditions",
    "horizon_tail_estimate",
    "default_horizons",
    "solve_infinite",
    "p_norm_bound_check",
    "time_continuity_study",
    "ContinuityStudy",
    "zero_driver_mass",
]

_TAIL_QUAD_POINTS = 2049
# Pointwise differences this close (relative) come from two recursions rounding differently.
_ROUNDOFF = 1e-12


def zero_driver_mass(driver: DriverSpec, grid: SpatialGrid, r: float = 0.0) -> float:
    """int (|f(r,x,0,0)|^2 + sum_j |g_j(r,x,0,0)|^2) rho^{-1} dx on the grid."""
    y = np.zeros(grid.size)
    z = np.zeros((grid.size, grid.d))
    sq = driver.f_at(r, grid.nodes, y, z) ** 2
    for j in range(driver.J):
        sq = sq + driver.g_at(j, r, grid.nodes, y, z) ** 2
    return float(np.dot(sq, grid.quad_weights))


def horizon_tail_estimate(driver: DriverSpec, constants: ProblemConstants, grid: SpatialGrid, n: float, m: float) -> float:
    """Cp int_n^m e^{-Kr} (|f(r,.,0,0)|^2 + sum_j |g_j(r,.,0,0)|^2) rho^{-1} dx dr.

    Closed form in r for time-homogeneous drivers (``m`` may be infinite),
    trapezoid otherwise.
    """
    if not n < m:
        raise ParameterError(f"need n < m, got n={n}, m={m}")
    K = constants.K
    if not driver.time_dependent:
        mass = zero_driver_mass(driver, grid)
        if K == 0.0:
            if math.isinf(m):
                return math.inf if mass > 0 else 0.0
            return constants.Cp * mass * (m - n)
        upper = 0.0 if math.isinf(m) else math.exp(-K * m)
        return constants.Cp * mass * (math.exp(-K * n) - upper) / K
    if math.isinf(m):
        raise ParameterError("time-dependent drivers need a finite upper horizon")
    r = np.linspace(n, m, _TAIL_QUAD_POINTS)
    vals = np.array([math.exp(-K * ri) * zero_driver_mass(driver, grid, ri) for ri in r])
    return constants.Cp * float(np.trapezoid(vals, r))


def default_horizons(driver: DriverSpec, constants: ProblemConstants, grid: SpatialGrid, tol: float, dt: float) -> list[float]:
    """[n, 2n, 4n] with n the smallest whole number of time units whose tail is below tol/10."""
    if not constants.K > 0.0:
        raise ParameterError("horizon schedule needs a positive discount K")
    n = 1.0
    while horizon_tail_estimate(driver, constants, grid, n, math.inf if not driver.time_dependent else 64.0 * n) > tol / 10.0:
        n *= 2.0
        if n > 1e6:
            raise ParameterError("tail bound does not fall below tol/10 within 1e6 time units")
    lo, hi = n / 2.0, n
    while hi - lo > 1.0:
        mid = math.ceil((lo + hi) / 2.0)
        tail = horizon_tail_estimate(driver, constants, grid, mid, math.inf if not driver.time_dependent else 64.0 * mid)
        lo, hi = (lo, mid) if tail <= tol / 10.0 else (mid, hi)
    n = max(dt, round(hi / dt) * dt)
    return [n, 2.0 * n, 4.0 * n]


def extended_difference(long: FieldPath, short: FieldPath, K: float) -> float:
    """int_0^inf e^{-Kr} (|dY|^2 + |dZ|^2) rho^{-1} dx dr with ``short`` extended by zero."""
    k = short.steps
    if not np.allclose(long.times[: k + 1], short.times, rtol=0.0, atol=1e-12):
        raise ParameterError("paths must share their time lattice")
    dY = long.Y.copy()
    dZ = long.Z.copy()
    dY[: k + 1] -= short.Y
    dZ[: k + 1] -= short.Z
    grid = long.grid
    vals = np.exp(-K * long.times) * (path_norms_sq(dY, grid) + path_norms_sq(dZ, grid))
    return float(np.trapezoid(vals, long.times))


def _solve_window(driver, constants, coeffs, grid, noise, M, T, method):
    if method == "march":
        return march_solve(driver, coeffs, grid, noise, M, t=noise.t0, T=T)
    return picard_solve(driver, T, constants, coeffs, grid, noise, M, tol=1e-14, max_iter=60, t=noise.t0)[0]


def solve_infinite(
    driver: DriverSpec,
    constants: ProblemConstants,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    base_noise_seed: int,
    horizons: Sequence[float] | None = None,
    tol: float = 1e-2,
    *,
    dt: float = 2.0**-4,
    M: int = 16,
    n_seeds: int = 16,
    J: int | None = None,
    override: bool = False,
    method: str = "march",
    safety: float = 5.0,
    check_cauchy: bool = True,
) -> tuple[FieldPath, SolveReport]:
    """Solve with zero terminal data on every horizon and check the Cauchy property.

    Seeds ``base_noise_seed .. base_noise_seed + n_seeds - 1`` give the
    expectation. The returned path is the base seed's solution on the
    largest horizon; ``tail_estimates`` holds one row per horizon pair
    (n, m, measured_diff, tail_bound, ratio) and the decay profile
    e^{-K n_i} E|Y^{(max)}_{n_i}|^2 of the largest-horizon solution.
    With ``check_cauchy`` a last difference above ``tol`` raises.
    """
    report = validate_conditions(constants)
    if not override and not report.passed("infinite"):
        raise PreconditionError(f"constants fail {report.failures('infinite')}; pass override=True to run anyway")
    if n_seeds < 1:
        raise ParameterError("n_seeds must be at least 1")
    hs = list(horizons) if horizons is not None else default_horizons(driver, constants, grid, tol, dt)
    if len(hs) < 2 or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ParameterError("horizons must be an increasing list of at least two values")
    steps = []
    for h in hs:
        k = int(round(h / dt))
        if abs(k * dt - h) > 1e-9 * max(1.0, h):
            raise ParameterError(f"horizon {h} is not a multiple of dt={dt}")
        steps.append(k)
    J = driver.J if J is None else J
    K = constants.K
    start = time.perf_counter()
    diffs = np.zeros((n_seeds, len(hs) - 1))
    decay = np.zeros((n_seeds, len(hs)))
    base_path: FieldPath | None = None
    for i in range(n_seeds):
        seed = base_noise_seed + i
        noise = sample_noise(seed, 0.0, dt, steps[-1], grid.d, max(J, 1))
        paths = [_solve_window(driver, constants, coeffs, grid, noise, M, h, method) for h in hs]
        for a in range(len(hs) - 1):
            diffs[i, a] = extended_difference(paths[a + 1], paths[a], K)
        top = paths[-1]
        decay[i] = [math.exp(-K * h) * float(np.dot(top.Y[k] ** 2, grid.quad_weights)) for h, k in zip(hs, steps)]
        if i == 0:
            base_path = top
    measured = diffs.mean(axis=0)
    rows = []
    for a in range(len(hs) - 1):
        bound = horizon_tail_estimate(driver, constants, grid, hs[a], hs[a + 1])
        ratio = measured[a] / bound if bound > 0 else (0.0 if measured[a] == 0 else math.inf)
        rows.append({"n": hs[a], "m": hs[a + 1], "measured_diff": float(measured[a]), "tail_bound": bound, "ratio": float(ratio), "within": bool(ratio <= safety)})
    profile = decay.mean(axis=0).tolist()
    wall = time.perf_counter() - start
    out = SolveReport(
        picard_residuals=[float(v) for v in measured],
        contraction_ratios=[],
        iterations=len(hs),
        wall_time=wall,
        seeds=list(range(base_noise_seed, base_noise_seed + n_seeds)),
        tail_estimates={"pairs": rows, "decay": {"horizons": hs, "values": profile}},
        converged=bool(measured[-1] <= tol),
        method=method,
    )
    if check_cauchy and measured[-1] > tol:
        raise NonConvergenceError(f"horizon differences {measured.tolist()} not below tol={tol}", measured.tolist())
    return base_path, out


def p_norm_bound_check(path: FieldPath, constants: ProblemConstants) -> float:
    """max_k e^{-pK t_k} int |Y_k|^p rho^{-1} dx."""
    p, K = constants.p, constants.K
    vals = (np.abs(path.Y) ** p) @ path.grid.quad_weights
    return float(np.max(np.exp(-p * K * path.times) * vals))


@dataclass
class ContinuityStudy:
    gaps: list[float]
    moments: list[float]
    slope: float | None

    @property
    def exact_invariance(self) -> bool:
        return self.slope is None


def _pathwise_Y(u: FieldPath, tau_k: int, driver: DriverSpec, coeffs: ForwardCoefficients, noise: NoiseGrid) -> np.ndarray:
    """Y_s^{tau,x} on every step s of ``u`` for x on the nodes.

    On s >= tau the solution is the field along the flow, u(s, X_s^{tau,x}).
    Before tau the state is frozen at x, nothing depends on W there, so Z = 0
    and Y follows the backward recursion with f and g evaluated at x.
    """
    grid = u.grid
    out = np.empty_like(u.Y)
    x = grid.nodes.copy()
    out[tau_k] = u.Y[tau_k]
    for k in range(tau_k, u.steps):
        x = x + coeffs.drift(x) * noise.dt + np.einsum("nij,j->ni", coeffs.diffusion(x), noise.dW[k])
        out[k + 1] = grid.interp(u.Y[k + 1][None, :], x)[0]
    zeros = np.zeros((grid.size, grid.d))
    for k in range(tau_k - 1, -1, -1):
        y1 = out[k + 1]
        gsum = np.zeros(grid.size)
        for j in range(driver.J):
            gsum += driver.g_at(j, float(u.times[k + 1]), grid.nodes, y1, zeros) * noise.dBhat[k, j]
        base = y1 - gsum
        y = base + driver.f_at(float(u.times[k]), grid.nodes, y1, zeros) * noise.dt
        for _ in range(50):
            y_new = base + driver.f_at(float(u.times[k]), grid.nodes, y, zeros) * noise.dt
            if np.max(np.abs(y_new - y), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(y_new), initial=0.0)):
                y = y_new
                break
            y = y_new
        out[k] = y
    return out


def time_continuity_study(
    driver: DriverSpec,
    constants: ProblemConstants,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    t_values: Sequence[float],
    noises: NoiseGrid | Sequence[NoiseGrid],
    M: int,
    T: float,
) -> ContinuityStudy:
    """Hoelder exponent of t -> Y^{t,.} in the p-th moment.

    ``t_values[0]`` is the base time; every other value gives one gap. For
    each gap g the moment E sup_s e^{-pKs} int |Y_s^{t+g,x} - Y_s^{t,x}|^p
    rho^{-1} dx is averaged over ``noises`` and the least-squares slope of
    log moment against log g is returned (None when all moments vanish).
    """
    ts = [float(v) for v in t_values]
    if len(set(ts)) < 4 or len(set(ts)) != len(ts):
        raise DegenerateInputError("need at least 4 distinct t values")
    base = ts[0]
    gaps = [t - base for t in ts[1:]]
    if any(g <= 0 for g in gaps):
        raise ParameterError("t_values[0] must be the smallest time")
    noise_list = [noises] if isinstance(noises, NoiseGrid) else list(noises)
    p, K = constants.p, constants.K
    acc = np.zeros(len(gaps))
    for nz in noise_list:
        window = nz.between(nz.t0, T)
        u = march_solve(driver, coeffs, grid, window, M)
        disc = np.exp(-p * K * u.times)
        ref = _pathwise_Y(u, u.index(base), driver, coeffs, window)
        for i, t in enumerate(ts[1:]):
            other = _pathwise_Y(u, u.index(t), driver, coeffs, window)
            gap = np.abs(other - ref)
            gap[gap <= _ROUNDOFF * (1.0 + np.abs(ref))] = 0.0
            mom = (gap**p) @ grid.quad_weights
            acc[i] += float(np.max(disc * mom))
    moments = (acc / len(noise_list)).tolist()
    if all(m == 0.0 for m in moments):
        return ContinuityStudy(gaps, moments, None)
    if any(m <= 0.0 for m in moments):
        raise DegenerateInputError("some gaps give a zero moment; the log-log fit is undefined")
    slope = float(np.polyfit(np.log(gaps), np.log(moments), 1)[0])
    return ContinuityStudy(gaps, moments, slope)
