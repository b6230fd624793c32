"""Finite-horizon BDSDE solver on a spatial grid.

The solution is carried as nodal fields Y_k(x), Z_k(x) on the time steps of
a noise window. One backward step from k + 1 to k, per node x:

* M one-step transitions X+ = x + b(x) dt + sigma(x) dW_m, with the inner
  increments keyed by the global step index (so shifted noise reuses them);
* Z_k(x) = avg[Y_{k+1}(X+) dW_m] / dt;
* Y_k(x) = avg[Y_{k+1}(X+)] + f dt - sum_j avg[g_j(X+, ...)] dBhat_j(k),
  the noise coefficients evaluated at the right endpoint along X+.

``picard_solve`` freezes f and g at the previous iterate and repeats that
linear pass. ``march_solve`` reaches the same discrete fixed point in one
pass by solving the scalar equation for Y_k at each node.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .conditions import ProblemConstants, validate_conditions
from .errors import NonConvergenceError, NumericalError, ParameterError, PreconditionError
from .forward import ForwardCoefficients, euler_step
from .noise import NoiseGrid, inner_increments
from .weighted import FieldSnapshot, SpatialGrid, path_norms_sq

IMPLICIT_TOL = 1e-15
IMPLICIT_MAX_ITER = 100


def _full(value, shape: tuple[int, ...]) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


@dataclass(frozen=True)
class DriverSpec:
    """Generator ``f``, noise coefficients ``g`` and terminal value ``h``.

    Callables are vectorised: ``f(x, y, z)`` with x of shape (..., d), y of
    shape (...) and z of shape (..., d); with ``time_dependent`` they take a
    leading time argument. ``h(x)`` returns terminal values; when
    ``h_noise_steps`` is positive it is called as ``h(x, dbhat)`` with the
    backward increments of that many steps beyond the horizon. ``h=None``
    means a zero terminal value.
    """

    f: Callable
    g: tuple[Callable, ...] = ()
    h: Callable | None = None
    time_dependent: bool = False
    h_noise_steps: int = 0
    name: str = "driver"

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", tuple(self.g))

    @property
    def J(self) -> int:
        return len(self.g)

    def f_at(self, t: float, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        v = self.f(t, x, y, z) if self.time_dependent else self.f(x, y, z)
        return _full(v, y.shape)

    def g_at(self, j: int, t: float, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        gj = self.g[j]
        v = gj(t, x, y, z) if self.time_dependent else gj(x, y, z)
        return _full(v, y.shape)

    def terminal(self, x: np.ndarray, segment: np.ndarray | None = None) -> np.ndarray:
        if self.h is None:
            return np.zeros(x.shape[0])
        v = self.h(x, segment) if self.h_noise_steps > 0 else self.h(x)
        return np.array(_full(v, x.shape[:1]), dtype=float)


@dataclass(frozen=True, eq=False)
class FieldPath:
    """Nodal Y (steps+1, size) and Z (steps+1, size, d) on ``times``."""

    times: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    grid: SpatialGrid
    seed: int = 0
    origin: int = 0
    direction: int = 1

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.steps else 0.0

    def index(self, t: float) -> int:
        if self.steps == 0:
            k = 0
        else:
            k = int(round((t - self.times[0]) / self.dt))
        if not 0 <= k <= self.steps or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"time {t} is not a step of this path")
        return k

    def Y_at(self, t: float) -> np.ndarray:
        return self.Y[self.index(t)]

    def Z_at(self, t: float) -> np.ndarray:
        return self.Z[self.index(t)]

    def snapshot(self, k: int) -> tuple[FieldSnapshot, FieldSnapshot]:
        return FieldSnapshot(self.Y[k], self.grid), FieldSnapshot(self.Z[k], self.grid)

    def export(self, directory: str | Path, config_hash: str = "", stride: int = 1) -> list[Path]:
        """One CSV per exported time slice for Y and Z plus ``manifest.json``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        slices = []
        for k in range(0, self.steps + 1, max(1, stride)):
            y, z = self.snapshot(k)
            written.append(y.to_csv(out / f"Y_{k:06d}.csv"))
            written.append(z.to_csv(out / f"Z_{k:06d}.csv"))
            slices.append({"k": k, "t": float(self.times[k])})
        manifest = {
            "times": [float(t) for t in self.times],
            "exported": slices,
            "seeds": [int(self.seed)],
            "origin": int(self.origin),
            "direction": int(self.direction),
            "config_hash": config_hash,
        }
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        written.append(path)
        return written


@dataclass
class SolveReport:
    picard_residuals: list[float] = field(default_factory=list)
    contraction_ratios: list[float] = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    seeds: list[int] = field(default_factory=list)
    tail_estimates: dict = field(default_factory=dict)
    converged: bool = True
    method: str = "picard"

    def to_dict(self, include_wall_time: bool = True) -> dict:
        d = asdict(self)
        if not include_wall_time:
            d.pop("wall_time")
        return d

    def write_json(self, path: str | Path, include_wall_time: bool = False) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(include_wall_time), indent=2, sort_keys=True, default=float))
        return path


def ratios(residuals: Sequence[float]) -> list[float]:
    """Successive ratios r_{i+1} / r_i (inf when a residual is exactly 0 and the next is not)."""
    out = []
    for a, b in zip(residuals, residuals[1:]):
        out.append(b / a if a > 0 else (0.0 if b == 0 else math.inf))
    return out


class _Backward:
    """Shared state of one backward sweep over a fixed noise window."""

    def __init__(self, grid: SpatialGrid, coeffs: ForwardCoefficients, window: NoiseGrid, M: int, moment_match: bool, n_modes: int):
        if coeffs.d != grid.d or window.d != grid.d:
            raise ParameterError("grid, coefficients and noise must share the dimension d")
        if M < 1:
            raise ParameterError("inner sample count M must be at least 1")
        if n_modes > window.J:
            raise ParameterError(f"driver uses {n_modes} modes, noise carries {window.J}")
        self.grid = grid
        self.coeffs = coeffs
        self.window = window
        self.M = M
        self.n_modes = n_modes
        self.dt = window.dt
        self.S = window.N
        self.times = window.times
        nodes = grid.nodes
        self.nodes = nodes
        self.base = nodes + coeffs.drift(nodes) * self.dt
        self.sig = np.ascontiguousarray(coeffs.diffusion(nodes))
        self.inner = [
            inner_increments(window.master_seed, window.global_index(k), M, grid.d, self.dt, moment_match)
            for k in range(self.S)
        ]

    def points(self, k: int) -> np.ndarray:
        return self.base[:, None, :] + np.einsum("nij,mj->nmi", self.sig, self.inner[k])

    def terminal(self, driver: DriverSpec) -> np.ndarray:
        seg = None
        if driver.h_noise_steps > 0:
            seg = self.window.window(self.S, driver.h_noise_steps).dBhat
        return driver.terminal(self.nodes, seg)

    def sweep(
        self,
        terminal: np.ndarray,
        driver: DriverSpec | None = None,
        f_nodes: np.ndarray | None = None,
        g_frozen: Sequence[Callable] | None = None,
        prev: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Run k = S-1 .. 0.

        f: ``f_nodes[k]`` if given, otherwise ``driver.f`` solved implicitly in Y_k.
        g: ``g_frozen[j](k + 1, X+)`` if given; else ``driver.g`` at the
        previous iterate ``prev`` if given; else at the current Y_{k+1}, Z_{k+1}.
        """
        S, n, d, M, dt = self.S, self.grid.size, self.grid.d, self.M, self.dt
        Y = np.empty((S + 1, n))
        Z = np.zeros((S + 1, n, d))
        Y[S] = terminal
        dB = self.window.dBhat
        use_driver_g = g_frozen is None and driver is not None and self.n_modes > 0
        for k in range(S - 1, -1, -1):
            pts = self.points(k)
            if use_driver_g:
                src_Y, src_Z = (prev[0][k + 1], prev[1][k + 1]) if prev is not None else (Y[k + 1], Z[k + 1])
                stack = np.vstack([Y[k + 1][None, :], src_Y[None, :], src_Z.T]) if prev is not None else np.vstack([Y[k + 1][None, :], src_Z.T])
            else:
                stack = Y[k + 1][None, :]
            vals = self.grid.interp(stack, pts.reshape(-1, d)).reshape(stack.shape[0], n, M)
            y_next = vals[0]
            ey = y_next.mean(axis=1)
            z = y_next @ self.inner[k] / (M * dt)
            gsum = np.zeros(n)
            if use_driver_g:
                if prev is not None:
                    gy, gz = vals[1], np.moveaxis(vals[2:], 0, -1)
                else:
                    gy, gz = y_next, np.moveaxis(vals[1:], 0, -1)
                t1 = self.times[k + 1]
                for j in range(self.n_modes):
                    gsum += driver.g_at(j, t1, pts, gy, gz).mean(axis=1) * dB[k, j]
            elif g_frozen:
                for j, gj in enumerate(g_frozen):
                    gsum += _full(gj(k + 1, pts), (n, M)).mean(axis=1) * dB[k, j]
            if f_nodes is not None:
                yk = ey + f_nodes[k] * dt - gsum
            else:
                yk = self._implicit(driver, self.times[k], ey - gsum, z)
            if not np.all(np.isfinite(yk)):
                bad = int(np.flatnonzero(~np.isfinite(yk))[0])
                raise NumericalError(f"non-finite Y at node {bad} (x={self.nodes[bad].tolist()}), time index {k}")
            Y[k] = yk
            Z[k] = z
        return Y, Z

    def _implicit(self, driver: DriverSpec, t: float, base: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Solve y = base + f(t, x, y, z) dt by fixed-point iteration."""
        dt = self.dt
        y = base + driver.f_at(t, self.nodes, base, z) * dt
        for _ in range(IMPLICIT_MAX_ITER):
            y_new = base + driver.f_at(t, self.nodes, y, z) * dt
            done = np.max(np.abs(y_new - y), initial=0.0) <= IMPLICIT_TOL * (1.0 + np.max(np.abs(y_new), initial=0.0))
            y = y_new
            if done:
                break
        return y


def _window(noise: NoiseGrid, t: float | None, T: float | None) -> NoiseGrid:
    t = noise.t0 if t is None else t
    T = noise.T if T is None else T
    return noise.between(t, T)


def _path(ctx: _Backward, Y: np.ndarray, Z: np.ndarray) -> FieldPath:
    w = ctx.window
    return FieldPath(ctx.times.copy(), Y, Z, ctx.grid, w.master_seed, w.origin_offset, w.direction)


def solve_linear_bdsde(
    f_frozen: Callable[[int, np.ndarray], np.ndarray],
    g_frozen: Sequence[Callable[[int, np.ndarray], np.ndarray]],
    h: Callable[[np.ndarray], np.ndarray] | np.ndarray | None,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    noise: NoiseGrid,
    M: int,
    *,
    t: float | None = None,
    T: float | None = None,
    moment_match: bool = True,
) -> FieldPath:
    """Backward recursion for drivers that do not depend on (Y, Z).

    ``f_frozen(k, nodes)`` gives f at local step k on the nodes and
    ``g_frozen[j](k, pts)`` gives g_j at local step k on arbitrary points.
    """
    window = _window(noise, t, T)
    ctx = _Backward(grid, coeffs, window, M, moment_match, len(g_frozen))
    if h is None:
        terminal = np.zeros(grid.size)
    elif callable(h):
        terminal = np.array(_full(h(grid.nodes), (grid.size,)), dtype=float)
    else:
        terminal = np.array(_full(h, (grid.size,)), dtype=float)
    f_nodes = np.stack([_full(f_frozen(k, grid.nodes), (grid.size,)) for k in range(ctx.S)]) if ctx.S else np.zeros((0, grid.size))
    Y, Z = ctx.sweep(terminal, f_nodes=f_nodes, g_frozen=list(g_frozen))
    return _path(ctx, Y, Z)


def picard_norm(dY: np.ndarray, dZ: np.ndarray, times: np.ndarray, K: float, y_weight: float, grid: SpatialGrid) -> float:
    """Trapezoid estimate of int e^{Kr} (y_weight |dY|^2 + |dZ|^2) rho^{-1} dx dr."""
    vals = np.exp(K * times) * (y_weight * path_norms_sq(dY, grid) + path_norms_sq(dZ, grid))
    return float(np.trapezoid(vals, times)) if len(times) > 1 else 0.0


def picard_solve(
    driver: DriverSpec,
    T: float,
    constants: ProblemConstants,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    noise: NoiseGrid,
    M: int,
    tol: float = 1e-12,
    max_iter: int = 50,
    *,
    t: float | None = None,
    K: float | None = None,
    moment_match: bool = True,
) -> tuple[FieldPath, SolveReport]:
    """Picard iteration over frozen-driver linear solves, started from (0, 0).

    The stopping quantity is the squared discounted norm of the difference
    between successive iterates, with discount ``K`` (default
    1 + 2C + 2 sum C_j) and Y-weight 1 + 2 sum C_j.
    """
    report = validate_conditions(constants)
    if not report.passed("finite"):
        raise PreconditionError(f"constants fail {report.failures('finite')}")
    if not tol > 0.0:
        raise ParameterError("tol must be positive")
    start = time.perf_counter()
    window = _window(noise, t, T)
    ctx = _Backward(grid, coeffs, window, M, moment_match, driver.J)
    disc = constants.picard_K if K is None else K
    y_weight = 1.0 + 2.0 * constants.sum_Cj
    terminal = ctx.terminal(driver)
    S, n, d = ctx.S, grid.size, grid.d
    Yp = np.zeros((S + 1, n))
    Zp = np.zeros((S + 1, n, d))
    residuals: list[float] = []
    converged = False
    for _ in range(max_iter):
        f_nodes = np.stack([driver.f_at(ctx.times[k], grid.nodes, Yp[k], Zp[k]) for k in range(S)]) if S else np.zeros((0, n))
        Y, Z = ctx.sweep(terminal, driver=driver, f_nodes=f_nodes, prev=(Yp, Zp))
        residuals.append(picard_norm(Y - Yp, Z - Zp, ctx.times, disc, y_weight, grid))
        Yp, Zp = Y, Z
        if residuals[-1] <= tol:
            converged = True
            break
    wall = time.perf_counter() - start
    if not converged:
        raise NonConvergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} iterations", residuals)
    path = _path(ctx, Yp, Zp)
    return path, SolveReport(
        picard_residuals=residuals,
        contraction_ratios=ratios(residuals),
        iterations=len(residuals),
        wall_time=wall,
        seeds=[window.master_seed],
        converged=True,
        method="picard",
    )


def march_solve(
    driver: DriverSpec,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    noise: NoiseGrid,
    M: int,
    *,
    t: float | None = None,
    T: float | None = None,
    moment_match: bool = True,
) -> FieldPath:
    """Single backward pass solving each step's scalar equation for Y_k.

    Produces the fixed point of the Picard map of ``picard_solve`` directly.
    """
    window = _window(noise, t, T)
    ctx = _Backward(grid, coeffs, window, M, moment_match, driver.J)
    Y, Z = ctx.sweep(ctx.terminal(driver), driver=driver)
    return _path(ctx, Y, Z)


def solve(driver: DriverSpec, constants: ProblemConstants, coeffs: ForwardCoefficients, grid: SpatialGrid, noise: NoiseGrid, M: int, *, method: str = "march", t: float | None = None, T: float | None = None, tol: float = 1e-12, max_iter: int = 60) -> FieldPath:
    """Dispatch to ``march_solve`` or ``picard_solve`` on the window [t, T]."""
    if method == "march":
        return march_solve(driver, coeffs, grid, noise, M, t=t, T=T)
    if method == "picard":
        T_ = noise.T if T is None else T
        return picard_solve(driver, T_, constants, coeffs, grid, noise, M, tol, max_iter, t=t)[0]
    raise ParameterError(f"unknown solve method {method!r}")


def truncate_modes(driver: DriverSpec, n: int) -> DriverSpec:
    """Keep the first ``n`` noise coefficients."""
    if not 1 <= n <= driver.J:
        raise ParameterError(f"mode count {n} outside 1..{driver.J}")
    return replace(driver, g=driver.g[:n])


@dataclass
class ModeStudy:
    rows: list[dict]
    sup_norms: dict[int, float]
    energy: dict[int, float]

    @property
    def ratios(self) -> list[float]:
        return [r["ratio"] for r in self.rows]


def g_zero_mass(driver: DriverSpec, j: int, grid: SpatialGrid, times: np.ndarray) -> float:
    """int int |g_j(r, x, 0, 0)|^2 rho^{-1} dx dr over ``times`` (trapezoid)."""
    zeros = np.zeros(grid.size)
    zz = np.zeros((grid.size, grid.d))
    vals = [float(np.dot(driver.g_at(j, t, grid.nodes, zeros, zz) ** 2, grid.quad_weights)) for t in times]
    return float(np.trapezoid(vals, times)) if len(times) > 1 else 0.0


def mode_convergence_study(
    driver: DriverSpec,
    T: float,
    constants: ProblemConstants,
    coeffs: ForwardCoefficients,
    grid: SpatialGrid,
    noises: NoiseGrid | Sequence[NoiseGrid],
    n_list: Sequence[int],
    M: int,
    *,
    method: str = "march",
    safety: float = 5.0,
) -> ModeStudy:
    """Differences between n- and m-mode solutions against the tail bound.

    measured: E int_0^T e^{Kr} (|dY|^2 + |dZ|^2) rho^{-1} dx dr with
    K = 1 + 2C + 2 sum C_j, averaged over ``noises``.
    bound: Cp sum_{j=n+1}^m [(C_j + alpha_j) S + int int |g_j(r,x,0,0)|^2 rho^{-1}],
    S the largest E int int (|Y|^2 + |Z|^2) rho^{-1} over the levels.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ParameterError("n_list must be strictly increasing")
    if not n_list or n_list[0] < 1 or n_list[-1] > driver.J:
        raise ParameterError(f"mode counts must lie in 1..{driver.J}")
    noise_list = [noises] if isinstance(noises, NoiseGrid) else list(noises)
    K = constants.picard_K
    paths: dict[int, list[FieldPath]] = {n: [] for n in n_list}
    for nz in noise_list:
        for n in n_list:
            paths[n].append(solve(truncate_modes(driver, n), constants, coeffs, grid, nz, M, method=method, t=nz.t0, T=T))
    times = paths[n_list[0]][0].times
    energy = {
        n: float(np.mean([picard_norm(p.Y, p.Z, p.times, 0.0, 1.0, grid) for p in paths[n]])) for n in n_list
    }
    sup_norms = {n: float(np.mean([path_norms_sq(p.Y, grid).max() for p in paths[n]])) for n in n_list}
    S_sup = max(energy.values())
    Cj = list(constants.Cj) + [0.0] * driver.J
    al = list(constants.alphaj) + [0.0] * driver.J
    rows = []
    for n, m in zip(n_list, n_list[1:]):
        measured = float(np.mean([
            picard_norm(pm.Y - pn.Y, pm.Z - pn.Z, pm.times, K, 1.0, grid) for pm, pn in zip(paths[m], paths[n])
        ]))
        bound = constants.Cp * sum((Cj[j] + al[j]) * S_sup + g_zero_mass(driver, j, grid, times) for j in range(n, m))
        ratio = measured / bound if bound > 0 else (0.0 if measured == 0 else math.inf)
        rows.append({"n": n, "m": m, "measured_diff": measured, "tail_bound": float(bound), "ratio": float(ratio), "within": bool(ratio <= safety)})
    return ModeStudy(rows, sup_norms, energy)


def flow_consistency_check(
    solution: FieldPath,
    t: float,
    s: float,
    driver: DriverSpec,
    coeffs: ForwardCoefficients,
    noise: NoiseGrid,
) -> float:
    """Weighted L2 distance between two routes to Y_s^{t,x}.

    Route 1 evaluates the field at s along the flow: Y_s(X_s^{t,x}).
    Route 2 starts at Y_t(x) and integrates the equation forward along the
    realised path: Y <- Y - f dt + sum_j g_j dBhat_j + Z . dW, with f, Z at
    the left point and g at the right point of each step.
    """
    grid = solution.grid
    k0, k1 = solution.index(t), solution.index(s)
    if k1 < k0:
        raise ParameterError("need t <= s")
    if noise.dt != solution.dt and solution.steps:
        raise ParameterError("noise step differs from the solution's")
    window = noise.between(float(solution.times[0]), float(solution.times[-1]))
    x = grid.nodes.copy()
    y = solution.Y[k0].copy()
    for k in range(k0, k1):
        tk = float(solution.times[k])
        zx = grid.interp(solution.Z[k].T, x).T
        x_next = euler_step(x, coeffs, window.dt, window.dW[k])
        gsum = np.zeros(grid.size)
        if driver.J:
            stack = np.vstack([solution.Y[k + 1][None, :], solution.Z[k + 1].T])
            vals = grid.interp(stack, x_next)
            for j in range(driver.J):
                gsum += driver.g_at(j, float(solution.times[k + 1]), x_next, vals[0], vals[1:].T) * window.dBhat[k, j]
        y = y - driver.f_at(tk, x, y, zx) * window.dt + gsum + np.sum(zx * window.dW[k], axis=-1)
        x = x_next
    along = grid.interp(solution.Y[k1][None, :], x)[0]
    diff = y - along
    return math.sqrt(float(np.dot(diff * diff, grid.quad_weights)))
