"""Stationarity under the noise shift: exact grid identities and the OU oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .conditions import ProblemConstants, validate_conditions
from .errors import ParameterError, PreconditionError
from .finite import DriverSpec, march_solve
from .forward import ForwardCoefficients
from .noise import NoiseGrid, reverse, sample_noise, shift
from .problems import ou
from .weighted import SpatialGrid, weighted_norm_sq


def _steps(value: float, dt: float, what: str) -> int:
    k = int(round(value / dt))
    if k < 0 or abs(k * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ParameterError(f"{what}={value} is not a non-negative multiple of dt={dt}")
    return k


def relative_discrepancy(a: np.ndarray, b: np.ndarray, grid: SpatialGrid) -> float:
    """|a - b| / |a| in the weighted norm; 0 when both vanish."""
    num = math.sqrt(weighted_norm_sq(a - b, grid))
    den = math.sqrt(weighted_norm_sq(a, grid))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def shift_compare(
    driver: DriverSpec,
    constants: ProblemConstants,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    master_seed: int,
    t: float,
    r: float,
    *,
    dt: float = 2.0**-6,
    H: float = 2.0,
    M: int = 8,
    J: int | None = None,
) -> float:
    """Relative distance between Y_{t+r}^{t+r,.} and Y_t^{t,.} on the r-shifted noise.

    Both are solved on windows of length ``H`` with the driver's terminal
    data at the window end, so they consume the same increments.
    """
    if driver.time_dependent:
        raise PreconditionError("shift comparison needs a time-homogeneous driver")
    kt = _steps(t, dt, "t")
    kr = _steps(r, dt, "r")
    kh = _steps(H, dt, "H")
    if kh < 1:
        raise ParameterError("window length H must cover at least one step")
    base = sample_noise(master_seed, 0.0, dt, kt + kr + kh, grid.d, max(J or driver.J, 1))
    direct = march_solve(driver, coeffs, grid, base, M, t=t + r, T=t + r + H)
    moved = march_solve(driver, coeffs, grid, shift(base, kr), M, t=t, T=t + H)
    return relative_discrepancy(direct.Y[0], moved.Y[0], grid)


def make_v_builder(driver: DriverSpec, coeffs: ForwardCoefficients, grid: SpatialGrid, M: int, window: float) -> Callable[[NoiseGrid, float], np.ndarray]:
    """v(t, .) under forward noise: reverse at the grid end T, solve on [T - t, T - t + window]."""

    def build(noise: NoiseGrid, t: float) -> np.ndarray:
        T = noise.T
        if t > T + 1e-12:
            raise ParameterError(f"t={t} lies beyond the reversal time {T}")
        rev = reverse(noise, T)
        s = T - t
        return march_solve(driver, coeffs, grid, rev, M, t=s, T=s + window).Y[0]

    return build


def spde_stationarity_check(
    build_v: Callable[[NoiseGrid, float], np.ndarray],
    noise: NoiseGrid,
    grid: SpatialGrid,
    t: float,
    r: float,
    tol: float = 1e-10,
) -> tuple[float, bool]:
    """Compare v(t + r) under the noise with v(t) under the noise shifted forward by r."""
    kr = _steps(r, noise.dt, "r")
    if t + r > noise.T + 1e-12:
        raise ParameterError("t + r must not exceed the reversal horizon")
    a = build_v(noise, t + r)
    b = build_v(shift(noise, kr), t)
    d = relative_discrepancy(a, b, grid)
    return d, d <= tol


@dataclass
class OUOracleReport:
    target: float
    variance: float
    standard_error: float
    times: list[float]
    time_variances: list[float]
    time_errors: list[float]
    skewness: float
    excess_kurtosis: float
    n_seeds: int
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def moments_agree(samples: np.ndarray, n_se: float = 4.0) -> bool:
    """First four raw moments of each column agree with their cross-column mean within ``n_se`` SE."""
    for power in (1, 2, 3, 4):
        vals = samples**power
        means = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
        centre = means.mean()
        if np.any(np.abs(means - centre) > n_se * se + 1e-15):
            return False
    return True


def ou_stationary_oracle(
    mu: float,
    sigma0: float,
    K: float,
    dt: float,
    horizon: float,
    n_seeds: int,
    *,
    base_seed: int = 0,
    n_times: int = 5,
    M: int = 2,
    override: bool = False,
) -> OUOracleReport:
    """Empirical law of u(t) for f(y) = -mu y, g_1 = sigma0 against N(0, sigma0^2 / (2 mu)).

    Each seed solves once on [0, horizon] with zero terminal value; the
    field is read at ``n_times`` equally spaced times in [0, horizon / 2),
    which leaves at least horizon / 2 of relaxation. Checks: pooled variance
    within 3 SE of the target, per-time variances within 4 SE of their mean,
    sample skewness and excess kurtosis within 4 CLT standard errors
    computed from the number of seeds.
    """
    if n_seeds < 8:
        raise ParameterError("the OU oracle needs at least 8 seeds")
    if horizon * mu < 8.0:
        raise ParameterError("horizon * mu must be at least 8 for the zero terminal value to relax")
    problem = ou(mu=mu, sigma0=sigma0, K=K)
    if not override and not validate_conditions(problem.constants).passed("infinite"):
        raise PreconditionError("OU constants fail the infinite-horizon conditions; pass override=True")
    N = _steps(horizon, dt, "horizon")
    grid = SpatialGrid.build(1, R=1.0, n=3)
    stride = max(1, (N // 2) // n_times)
    idx = [i * stride for i in range(n_times)]
    samples = np.empty((n_seeds, n_times))
    for s in range(n_seeds):
        noise = sample_noise(base_seed + s, 0.0, dt, N, 1, 1)
        path = march_solve(problem.driver, problem.coeffs, grid, noise, M)
        samples[s] = path.Y[idx, grid.size // 2]
    target = sigma0**2 / (2.0 * mu)
    sq = samples**2
    per_seed = sq.mean(axis=1)
    variance = float(per_seed.mean())
    se = float(per_seed.std(ddof=1) / math.sqrt(n_seeds))
    tv = sq.mean(axis=0)
    te = sq.std(axis=0, ddof=1) / math.sqrt(n_seeds)
    flat = samples.ravel()
    if target == 0.0:
        skew = kurt = 0.0
        gaussian = bool(np.all(flat == 0.0))
    else:
        skew = float(stats.skew(flat))
        kurt = float(stats.kurtosis(flat))
        gaussian = abs(skew) <= 4.0 * math.sqrt(6.0 / n_seeds) and abs(kurt) <= 4.0 * math.sqrt(24.0 / n_seeds)
    checks = {
        "variance_within_3se": abs(variance - target) <= 3.0 * se + 1e-15,
        "time_invariant_4se": bool(np.all(np.abs(tv - tv.mean()) <= 4.0 * te + 1e-15)),
        "moments_time_invariant": target == 0.0 or moments_agree(samples),
        "gaussian_moments": gaussian,
    }
    return OUOracleReport(
        target=target,
        variance=variance,
        standard_error=se,
        times=[float(i * dt) for i in idx],
        time_variances=tv.tolist(),
        time_errors=te.tolist(),
        skewness=skew,
        excess_kurtosis=kurt,
        n_seeds=n_seeds,
        checks=checks,
    )
