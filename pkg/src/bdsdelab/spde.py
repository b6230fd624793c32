"""SPDE fields from BDSDE solutions and the weak-form residual.

The diagonal field u(t, x) = Y_t^{t,x} is read off a nodal solve: the
value at node x and step k of a solve on [t_k, T] is u(t_k, x), and a
solve on [0, T] carries every such value at once because the backward
sweep from T does not depend on where it stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError, PreconditionError
from .finite import DriverSpec, FieldPath, march_solve
from .forward import ForwardCoefficients, tilde_A
from .noise import NoiseGrid, backward_integral
from .problems import heat_solution
from .weighted import FieldSnapshot, SpatialGrid

DIV_REL_STEP = 1e-4


@dataclass(frozen=True)
class TestFunction:
    """Smooth bump amp * exp(-1 / (1 - |x - c|^2 / r^2)) times a polynomial in time.

    ``time_coeffs`` are the polynomial's coefficients in increasing degree.
    """

    __test__ = False

    center: tuple[float, ...]
    radius: float = 1.0
    amplitude: float = 1.0
    time_coeffs: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "time_coeffs", tuple(float(c) for c in self.time_coeffs))
        if not self.radius > 0.0:
            raise ParameterError("bump radius must be positive")

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def support_radius(self) -> float:
        return self.radius

    def check_support(self, grid: SpatialGrid) -> None:
        if grid.d != self.d:
            raise ParameterError("test function and grid dimensions differ")
        if max(abs(c) for c in self.center) + self.radius > grid.R:
            raise ParameterError(f"support of the bump at {self.center} leaves [-{grid.R}, {grid.R}]^{grid.d}")

    def _time(self, s: float) -> tuple[float, float]:
        poly = np.polynomial.Polynomial(self.time_coeffs)
        return float(poly(s)), float(poly.deriv()(s))

    def _spatial(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        diff = x - np.asarray(self.center)
        q = np.sum(diff * diff, axis=-1) / self.radius**2
        inside = q < 1.0
        qi = np.where(inside, q, 0.0)
        phi = np.where(inside, self.amplitude * np.exp(-1.0 / np.where(inside, 1.0 - qi, 1.0)), 0.0)
        one_m = np.where(inside, 1.0 - qi, 1.0)
        d1 = -phi / one_m**2
        d2 = phi * (2.0 * qi - 1.0) / one_m**4
        grad_q = 2.0 * diff / self.radius**2
        return phi, d1, d2, grad_q

    def psi(self, s: float, x: np.ndarray) -> np.ndarray:
        return self._spatial(x)[0] * self._time(s)[0]

    def dpsi_ds(self, s: float, x: np.ndarray) -> np.ndarray:
        return self._spatial(x)[0] * self._time(s)[1]

    def grad_psi(self, s: float, x: np.ndarray) -> np.ndarray:
        _, d1, _, gq = self._spatial(x)
        return (d1 * self._time(s)[0])[..., None] * gq

    def hess_psi(self, s: float, x: np.ndarray) -> np.ndarray:
        _, d1, d2, gq = self._spatial(x)
        eye = np.eye(self.d) * (2.0 / self.radius**2)
        h = d2[..., None, None] * gq[..., :, None] * gq[..., None, :] + d1[..., None, None] * eye
        return h * self._time(s)[0]


def bump_battery(grid: SpatialGrid, n: int = 5, radius: float = 1.0, time_coeffs: Sequence[float] = (1.0,)) -> list[TestFunction]:
    """``n`` bumps with centres spread over [-1.5, 1.5] along the first axis."""
    if n < 1:
        raise ParameterError("battery needs at least one bump")
    centres = np.linspace(-1.5, 1.5, n) if n > 1 else np.zeros(1)
    out = []
    for c in centres:
        centre = (float(c),) + (0.0,) * (grid.d - 1)
        tf = TestFunction(centre, radius, 1.0, tuple(time_coeffs))
        tf.check_support(grid)
        out.append(tf)
    return out


def diagonal_solver(driver: DriverSpec, coeffs: ForwardCoefficients, grid: SpatialGrid, noise: NoiseGrid, M: int, T: float) -> Callable[[float], FieldPath]:
    """t -> solve on [t, T] under ``noise``; its first slice is u(t, .)."""

    def solve(t: float) -> FieldPath:
        return march_solve(driver, coeffs, grid, noise, M, t=t, T=T)

    return solve


def extract_u(solve: Callable[[float], FieldPath], t_values: Sequence[float]) -> list[FieldSnapshot]:
    """u(t, .) = Y_t^{t,.} for each t, one diagonal solve per time."""
    out = []
    for t in t_values:
        path = solve(float(t))
        out.append(FieldSnapshot(path.Y[0], path.grid))
    return out


def extract_v(
    driver: DriverSpec,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    reversed_noise: NoiseGrid,
    M: int,
    T: float,
    t_values: Sequence[float],
    window: float | None = None,
) -> list[FieldSnapshot]:
    """v(t, .) = u(T - t, .) with u the diagonal field under the reversed noise.

    ``window=None`` solves each diagonal up to T; a positive ``window`` H
    solves on [T - t, T - t + H] instead, regenerating noise beyond T.
    """
    if reversed_noise.direction >= 0:
        raise PreconditionError("extract_v needs a grid produced by noise.reverse")
    if abs(reversed_noise.T - T) > 1e-9 * max(1.0, abs(T)):
        raise ParameterError(f"reversal horizon {T} does not match the grid end {reversed_noise.T}")
    out = []
    for t in t_values:
        s = T - float(t)
        reversed_noise.step_index(s)
        end = T if window is None else s + window
        path = march_solve(driver, coeffs, grid, reversed_noise, M, t=s, T=end)
        out.append(FieldSnapshot(path.Y[0], grid))
    return out


@dataclass(frozen=True, eq=False)
class GradientCheck:
    z: np.ndarray
    fd: np.ndarray
    discrepancy: float


def fd_sigma_grad(values: np.ndarray, coeffs: ForwardCoefficients, grid: SpatialGrid) -> np.ndarray:
    """sigma(x)^T times the central-difference gradient of a nodal field."""
    grad = grid.gradient(values)
    return np.einsum("nji,nj->ni", coeffs.diffusion(grid.nodes), grad)


def sigma_grad_u(solution: FieldPath, coeffs: ForwardCoefficients) -> GradientCheck:
    """Two routes to sigma^T grad u along the diagonal.

    Primary: the Z field of the solve. Secondary: finite differences of the
    Y field. The discrepancy is the root mean over steps 0..N-1 of the
    weighted squared distance (the terminal step carries Z = 0 by convention).
    """
    grid = solution.grid
    if grid.d > 2:
        raise ParameterError("gradient identification supports d <= 2")
    fd = np.stack([fd_sigma_grad(y, coeffs, grid) for y in solution.Y])
    steps = max(solution.steps, 1)
    diff = solution.Z[:steps] - fd[:steps]
    sq = np.sum(diff * diff, axis=-1) @ grid.quad_weights
    return GradientCheck(solution.Z, fd, math.sqrt(float(np.mean(sq))))


def _drift_minus_correction(coeffs: ForwardCoefficients, x: np.ndarray) -> np.ndarray:
    return coeffs.drift(x) - tilde_A(coeffs, x)


def div_drift_psi(psi: TestFunction, s: float, coeffs: ForwardCoefficients, x: np.ndarray) -> np.ndarray:
    """div((b - A~) psi) = (b - A~) . grad psi + psi div(b - A~), divergence by central differences."""
    v = _drift_minus_correction(coeffs, x)
    step = DIV_REL_STEP * (1.0 + np.linalg.norm(x, axis=-1))
    div = np.zeros(x.shape[0])
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = 1.0
        hi = _drift_minus_correction(coeffs, x + step[:, None] * e)[:, i]
        lo = _drift_minus_correction(coeffs, x - step[:, None] * e)[:, i]
        div += (hi - lo) / (2.0 * step)
    return np.sum(v * psi.grad_psi(s, x), axis=-1) + psi.psi(s, x) * div


def _as_stack(fields, grid: SpatialGrid) -> np.ndarray:
    if isinstance(fields, np.ndarray):
        return fields
    return np.stack([f.values if isinstance(f, FieldSnapshot) else np.asarray(f, dtype=float) for f in fields])


def weak_form_residual(
    u: Sequence[FieldSnapshot] | np.ndarray,
    sgu: Sequence[FieldSnapshot] | np.ndarray,
    psi: TestFunction,
    driver: DriverSpec,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    noise: NoiseGrid,
    t: float,
    T: float,
) -> float:
    """Residual of the weak formulation on [t, T] for one test function.

    ``u`` and ``sgu`` (sigma^T grad u) are given on every step of
    ``noise.between(t, T)``. The residual is

        int <u, d_s psi> + <u(t), psi(t)> - <u(T), psi(T)>
        + 1/2 int <sgu, sigma^T grad psi> + int <u, div((b - A~) psi)>
        - int <f(u, sgu), psi> + sum_j int <g_j(u, sgu), psi> dBhat_j,

    time integrals by trapezoid, the last term by right-endpoint sums and
    <., .> the plain dx integral on the grid.
    """
    psi.check_support(grid)
    window = noise.between(t, T)
    if window.N < 1:
        raise ParameterError("need t < T")
    U = _as_stack(u, grid)
    S = _as_stack(sgu, grid)
    if U.shape[0] != window.N + 1 or S.shape[0] != window.N + 1:
        raise ParameterError(f"fields must have {window.N + 1} time slices")
    if driver.J > window.J:
        raise ParameterError(f"driver uses {driver.J} modes, noise carries {window.J}")
    x = grid.nodes
    cw = grid.cell_weights
    times = window.times
    sig = coeffs.diffusion(x)
    lin = np.empty(window.N + 1)
    g_int = np.zeros((window.N + 1, driver.J))
    for k, s in enumerate(times):
        p = psi.psi(s, x)
        sgp = np.einsum("nji,nj->ni", sig, psi.grad_psi(s, x))
        val = U[k] * psi.dpsi_ds(s, x)
        val = val + 0.5 * np.sum(S[k] * sgp, axis=-1)
        val = val + U[k] * div_drift_psi(psi, s, coeffs, x)
        val = val - driver.f_at(s, x, U[k], S[k]) * p
        lin[k] = float(np.dot(val, cw))
        for j in range(driver.J):
            g_int[k, j] = float(np.dot(driver.g_at(j, s, x, U[k], S[k]) * p, cw))
    total = float(np.trapezoid(lin, times))
    total += float(np.dot(U[0] * psi.psi(times[0], x), cw)) - float(np.dot(U[-1] * psi.psi(times[-1], x), cw))
    for j in range(driver.J):
        total += backward_integral(g_int[1:, j], window, j + 1)
    return total


def generator_apply(phi: TestFunction, s: float, coeffs: ForwardCoefficients, x: np.ndarray) -> np.ndarray:
    """L phi = 1/2 tr(a Hess phi) + b . grad phi."""
    a = coeffs.a(x)
    return 0.5 * np.einsum("nij,nij->n", a, phi.hess_psi(s, x)) + np.sum(coeffs.drift(x) * phi.grad_psi(s, x), axis=-1)


def ibp_identity_residual(phi1: TestFunction, phi2: TestFunction, coeffs: ForwardCoefficients, grid: SpatialGrid, s: float = 0.0) -> float:
    """int L phi1 phi2 + 1/2 int (sigma^T grad phi1).(sigma^T grad phi2) + int phi1 div((b - A~) phi2)."""
    phi1.check_support(grid)
    phi2.check_support(grid)
    x = grid.nodes
    sig = coeffs.diffusion(x)
    s1 = np.einsum("nji,nj->ni", sig, phi1.grad_psi(s, x))
    s2 = np.einsum("nji,nj->ni", sig, phi2.grad_psi(s, x))
    val = generator_apply(phi1, s, coeffs, x) * phi2.psi(s, x)
    val = val + 0.5 * np.sum(s1 * s2, axis=-1)
    val = val + phi1.psi(s, x) * div_drift_psi(phi2, s, coeffs, x)
    return float(np.dot(val, grid.cell_weights))


def battery_rms(residuals: Sequence[float]) -> float:
    """Root mean square over a battery of test functions and seeds."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ParameterError("empty residual battery")
    return math.sqrt(float(np.mean(r * r)))


def heat_oracle_fields(grid: SpatialGrid, times: np.ndarray, T: float, s0: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Analytic backward heat solution on the grid and its sigma^T grad with sigma = sqrt 2.

    The gradient is taken by central differences of the sampled field.
    """
    if grid.d != 1:
        raise ParameterError("the heat oracle is one-dimensional")
    x = grid.nodes[:, 0]
    U = np.stack([heat_solution(t, x, T, s0) for t in times])
    S = np.stack([math.sqrt(2.0) * grid.gradient(u) for u in U])
    return U, S
