"""Forward diffusion: Euler-Maruyama flows, one-step clouds and the drift correction.

Coefficient callables are vectorised over leading axes: ``b`` maps
``(..., d)`` to ``(..., d)`` and ``sigma`` maps ``(..., d)`` to ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalOverflowError, ParameterError
from .noise import NoiseGrid, inner_increments

Field = Callable[[np.ndarray], np.ndarray]

FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class ForwardCoefficients:
    """Drift ``b``, diffusion ``sigma`` and optional analytic ``da``.

    ``da(x)[..., i, j]`` is the derivative of ``a_ij = (sigma sigma^T)_ij`` with
    respect to ``x_i``. ``L`` is a user-asserted Lipschitz constant.
    """

    b: Field
    sigma: Field
    d: int = 1
    da: Field | None = None
    L: float = 0.0

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ParameterError(f"dimension d={self.d} unsupported: the grid solver handles d <= 2")

    def drift(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.b(x), dtype=float), x.shape)

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma(x), dtype=float), x.shape + (self.d,))

    def a(self, x: np.ndarray) -> np.ndarray:
        s = self.diffusion(x)
        return np.einsum("...ik,...jk->...ij", s, s)


def constant_coefficients(d: int, drift: Sequence[float] | float = 0.0, sigma: float = 1.0, L: float = 0.0) -> ForwardCoefficients:
    """b constant, sigma = sigma * I."""
    c = np.broadcast_to(np.asarray(drift, dtype=float), (d,)).copy()
    s = sigma * np.eye(d)
    return ForwardCoefficients(
        b=lambda x: np.broadcast_to(c, x.shape),
        sigma=lambda x: np.broadcast_to(s, x.shape + (d,)),
        d=d,
        da=lambda x: np.zeros(x.shape + (d,)),
        L=L,
    )


def linear_drift_coefficients(d: int, kappa: float = 1.0, sigma: float = 1.0) -> ForwardCoefficients:
    """b(x) = -kappa x, sigma = sigma * I (Ornstein-Uhlenbeck in space)."""
    s = sigma * np.eye(d)
    return ForwardCoefficients(
        b=lambda x: -kappa * x,
        sigma=lambda x: np.broadcast_to(s, x.shape + (d,)),
        d=d,
        da=lambda x: np.zeros(x.shape + (d,)),
        L=abs(kappa),
    )


def _as_points(x: np.ndarray | Sequence[float] | float, d: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != d:
        raise ParameterError(f"state has trailing dimension {arr.shape[-1]}, expected {d}")
    return arr


def euler_step(x: np.ndarray, coeffs: ForwardCoefficients, dt: float, dW: np.ndarray) -> np.ndarray:
    """x + b(x) dt + sigma(x) dW, vectorised over leading axes of ``x``."""
    if not dt > 0.0:
        raise ParameterError("dt must be positive")
    x = _as_points(x, coeffs.d)
    dW = np.asarray(dW, dtype=float)
    out = x + coeffs.drift(x) * dt + np.einsum("...ij,...j->...i", coeffs.diffusion(x), dW)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out).all(axis=-1))
        where = x[tuple(bad[0])] if bad.size else x
        raise NumericalOverflowError(f"Euler step left the finite range from x={where.tolist()}")
    return out


@dataclass(frozen=True, eq=False)
class FlowEnsemble:
    """Paths indexed (point, inner sample, step, component) on ``times``."""

    start_points: np.ndarray
    times: np.ndarray
    paths: np.ndarray

    @property
    def t(self) -> float:
        return float(self.times[0])

    def at(self, s: float) -> np.ndarray:
        """States at time ``s`` with shape (point, inner sample, d).

        Before the start time the flow is frozen at its start point.
        """
        if s < self.times[0] - 1e-12:
            return np.broadcast_to(self.start_points[:, None, :], self.paths[:, :, 0].shape)
        k = int(round((s - self.times[0]) / (self.times[1] - self.times[0]))) if len(self.times) > 1 else 0
        if not 0 <= k < len(self.times) or abs(self.times[k] - s) > 1e-9 * max(1.0, abs(s)):
            raise ParameterError(f"time {s} is not a step of this flow")
        return self.paths[:, :, k]

    @staticmethod
    def stack(flows: Sequence["FlowEnsemble"]) -> "FlowEnsemble":
        """Concatenate independent realisations along the inner-sample axis."""
        first = flows[0]
        for f in flows[1:]:
            if f.paths.shape[0] != first.paths.shape[0] or not np.array_equal(f.times, first.times):
                raise ParameterError("flows must share start points and times")
        return FlowEnsemble(first.start_points, first.times, np.concatenate([f.paths for f in flows], axis=1))


def simulate_flow(
    starts: np.ndarray,
    t: float,
    horizon: float,
    coeffs: ForwardCoefficients,
    grid: NoiseGrid,
) -> FlowEnsemble:
    """Flow from every start point over [t, horizon] driven by the grid's shared W."""
    starts = _as_points(starts, coeffs.d).reshape(-1, coeffs.d)
    k0 = grid.step_index(t)
    k1 = grid.step_index(horizon)
    if k0 < 0 or k1 > grid.N or k1 < k0:
        raise ParameterError(f"grid steps 0..{grid.N} do not cover [{t}, {horizon}]")
    paths = np.empty((starts.shape[0], 1, k1 - k0 + 1, coeffs.d))
    x = starts.copy()
    paths[:, 0, 0] = x
    for i, k in enumerate(range(k0, k1), start=1):
        x = euler_step(x, coeffs, grid.dt, grid.dW[k])
        paths[:, 0, i] = x
    return FlowEnsemble(starts, grid.t0 + grid.dt * np.arange(k0, k1 + 1), paths)


def one_step_cloud(
    x: np.ndarray,
    coeffs: ForwardCoefficients,
    dt: float,
    M: int,
    stream: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """``M`` independent Euler steps from ``x`` and their increments.

    ``stream`` is the substream key ``(master_seed, global step index)``.
    """
    if M < 1:
        raise ParameterError("inner sample count M must be at least 1")
    x = _as_points(x, coeffs.d).reshape(coeffs.d)
    dW = inner_increments(stream[0], stream[1], M, coeffs.d, dt)
    states = euler_step(np.broadcast_to(x, (M, coeffs.d)), coeffs, dt, dW)
    return states, dW


def tilde_A(coeffs: ForwardCoefficients, x: np.ndarray) -> np.ndarray:
    """Half the row-wise divergence of a = sigma sigma^T.

    Analytic when ``coeffs.da`` is supplied, central differences with step
    1e-5 (1 + |x|) otherwise.
    """
    x = _as_points(x, coeffs.d)
    if coeffs.da is not None:
        return 0.5 * np.asarray(coeffs.da(x), dtype=float).sum(axis=-2)
    return 0.5 * fd_divergence_rows(coeffs, x)


def fd_divergence_rows(coeffs: ForwardCoefficients, x: np.ndarray) -> np.ndarray:
    """sum_i d a_ij / d x_i by central differences."""
    x = _as_points(x, coeffs.d)
    step = FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=-1))
    out = np.zeros(x.shape)
    for i in range(coeffs.d):
        e = np.zeros(coeffs.d)
        e[i] = 1.0
        hi = coeffs.a(x + step[..., None] * e)
        lo = coeffs.a(x - step[..., None] * e)
        out += (hi[..., i, :] - lo[..., i, :]) / (2.0 * step[..., None])
    return out
