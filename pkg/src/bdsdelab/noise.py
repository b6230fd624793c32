"""Counter-based Brownian increments for the forward and backward noises.

Every scalar increment is a pure function of ``(master_seed, global step
index, component)``. The global index of local step ``k`` is
``origin_offset + direction * k``, so an index shift of the noise is an
offset change, a time reversal flips ``direction``, and any step outside
the stored block can be regenerated bit for bit.

Each (seed, stream, step) triple keys its own Philox counter block; the
components of a step are consecutive standard normals from that block, so
component ``c`` does not depend on how many components are drawn.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError

_MASK64 = (1 << 64) - 1

STREAM_W = 0
STREAM_BHAT = 1
STREAM_INNER = 2

_BIN_MAGIC = b"BDSN"
_BIN_HEADER = struct.Struct("<4sddqqqQqq")
_CSV_HEADER = ["t0", "dt", "N", "d", "J", "seed", "offset", "direction"]


def standard_normals(seed: int, stream: int, index: int, count: int) -> np.ndarray:
    """The first ``count`` standard normals of the block keyed by (seed, stream, index)."""
    key = np.array([seed & _MASK64, stream], dtype=np.uint64)
    counter = np.array([0, index & _MASK64, 0, 0], dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=counter)
    return np.random.Generator(bitgen).standard_normal(count)


def _block(seed: int, stream: int, first: int, direction: int, n: int, width: int, dt: float) -> np.ndarray:
    out = np.empty((n, width))
    if width == 0:
        return out
    root = math.sqrt(dt)
    for k in range(n):
        out[k] = standard_normals(seed, stream, first + direction * k, width) * root
    if direction < 0:
        np.negative(out, out=out)
    return out


def inner_increments(seed: int, index: int, M: int, d: int, dt: float, moment_match: bool = False) -> np.ndarray:
    """``M`` one-step Brownian increments of dimension ``d`` for the inner Monte-Carlo.

    Keyed by the global step index so a shifted noise reuses the same
    samples. With ``moment_match`` the sample is centred and whitened so its
    empirical mean is 0 and its empirical covariance is ``dt * I``.
    """
    if M < 1:
        raise ParameterError("inner sample count M must be at least 1")
    dw = standard_normals(seed, STREAM_INNER, index, M * d).reshape(M, d) * math.sqrt(dt)
    if not moment_match or M < d + 1:
        return dw
    centred = dw - dw.mean(axis=0)
    if d == 1:
        scale = math.sqrt(dt / float(np.mean(centred[:, 0] ** 2)))
        return centred * scale
    cov = centred.T @ centred / M
    chol = np.linalg.cholesky(cov)
    return np.linalg.solve(chol, centred.T).T * math.sqrt(dt)


@dataclass(frozen=True)
class NoiseSpectrum:
    """Eigenvalues of the trace-class covariance, truncated to ``J`` modes."""

    lambdas: tuple[float, ...]

    def __post_init__(self) -> None:
        lam = tuple(float(v) for v in self.lambdas)
        if not lam:
            raise ParameterError("spectrum needs at least one mode")
        if any(not (v > 0.0) for v in lam):
            raise ParameterError("all eigenvalues must be positive")
        if any(b > a for a, b in zip(lam, lam[1:])):
            raise ParameterError("eigenvalues must be non-increasing")
        object.__setattr__(self, "lambdas", lam)

    @property
    def J(self) -> int:
        return len(self.lambdas)

    @property
    def partial_sum(self) -> float:
        return float(sum(self.lambdas))

    @classmethod
    def power_law(cls, J: int, exponent: float = 2.0) -> "NoiseSpectrum":
        """lambda_j = j**(-exponent), j = 1..J."""
        if J < 1:
            raise ParameterError("J must be at least 1")
        return cls(tuple(float(j) ** -exponent for j in range(1, J + 1)))

    @classmethod
    def flat(cls, J: int) -> "NoiseSpectrum":
        if J < 1:
            raise ParameterError("J must be at least 1")
        return cls((1.0,) * J)


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """Increments of W (``dW``, N x d) and of the backward modes (``dBhat``, N x J)."""

    t0: float
    dt: float
    N: int
    d: int
    J: int
    dW: np.ndarray = field(repr=False)
    dBhat: np.ndarray = field(repr=False)
    master_seed: int
    origin_offset: int
    direction: int = 1
    spectrum: NoiseSpectrum | None = None

    @property
    def T(self) -> float:
        return self.t0 + self.N * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.N + 1)

    def global_index(self, k: int) -> int:
        return self.origin_offset + self.direction * k

    def step_index(self, t: float) -> int:
        """Local index of grid time ``t``; raises if ``t`` is off the step lattice."""
        x = (t - self.t0) / self.dt
        k = int(round(x))
        if abs(x - k) > 1e-9 * max(1.0, abs(x)):
            raise ParameterError(f"time {t} is not on the grid lattice t0 + k*dt")
        return k

    def window(self, k_start: int, n_steps: int) -> "NoiseGrid":
        """Local steps ``k_start .. k_start + n_steps - 1`` as a new grid.

        Stored rows are reused; anything outside is regenerated from the
        master stream, which yields identical values by construction.
        """
        if n_steps < 0:
            raise ParameterError("n_steps must be non-negative")
        dW = np.empty((n_steps, self.d))
        dB = np.empty((n_steps, self.J))
        lo = max(k_start, 0)
        hi = min(k_start + n_steps, self.N)
        if hi > lo:
            dW[lo - k_start : hi - k_start] = self.dW[lo:hi]
            dB[lo - k_start : hi - k_start] = self.dBhat[lo:hi]
        for a, b in ((k_start, min(lo, k_start + n_steps)), (max(hi, k_start), k_start + n_steps)):
            if b > a:
                first = self.global_index(a)
                dW[a - k_start : b - k_start] = _block(self.master_seed, STREAM_W, first, self.direction, b - a, self.d, self.dt)
                dB[a - k_start : b - k_start] = _block(self.master_seed, STREAM_BHAT, first, self.direction, b - a, self.J, self.dt)
        return replace(
            self,
            t0=self.t0 + k_start * self.dt,
            N=n_steps,
            dW=dW,
            dBhat=dB,
            origin_offset=self.global_index(k_start),
        )

    def between(self, t: float, T: float) -> "NoiseGrid":
        """Steps covering [t, T], regenerating if the grid is too short."""
        k0 = self.step_index(t)
        k1 = self.step_index(T)
        if k1 < k0:
            raise ParameterError("window end precedes its start")
        return self.window(k0, k1 - k0)

    def same_increments(self, other: "NoiseGrid") -> bool:
        return (
            self.dW.shape == other.dW.shape
            and self.dBhat.shape == other.dBhat.shape
            and np.array_equal(self.dW, other.dW)
            and np.array_equal(self.dBhat, other.dBhat)
        )


def sample_noise(
    seed: int,
    t0: float,
    dt: float,
    N: int,
    d: int,
    spectrum: NoiseSpectrum | int,
    origin_offset: int = 0,
) -> NoiseGrid:
    """Generate ``N`` steps of forward and backward increments."""
    if not dt > 0.0:
        raise ParameterError("dt must be positive")
    if N < 0:
        raise ParameterError("N must be non-negative")
    if d < 1:
        raise ParameterError("dimension d must be at least 1")
    if isinstance(spectrum, NoiseSpectrum):
        J, spec = spectrum.J, spectrum
    else:
        J, spec = int(spectrum), None
        if J < 1:
            raise ParameterError("mode count J must be at least 1")
    return NoiseGrid(
        t0=float(t0),
        dt=float(dt),
        N=int(N),
        d=int(d),
        J=J,
        dW=_block(seed, STREAM_W, origin_offset, 1, N, d, dt),
        dBhat=_block(seed, STREAM_BHAT, origin_offset, 1, N, J, dt),
        master_seed=int(seed),
        origin_offset=int(origin_offset),
        direction=1,
        spectrum=spec,
    )


def shift(grid: NoiseGrid, r_steps: int) -> NoiseGrid:
    """Index shift: step k of the result is step k + r_steps of ``grid``."""
    if r_steps < 0:
        raise ParameterError("r_steps must be non-negative")
    if r_steps == 0:
        return grid
    return replace(grid.window(r_steps, grid.N), t0=grid.t0)


def reverse(grid: NoiseGrid, T: float) -> NoiseGrid:
    """Time reversal at the right end T: step k becomes minus step N-1-k.

    The result lives on the same interval [t0, T]; reversing twice returns
    the original grid exactly.
    """
    if abs(T - grid.T) > 1e-9 * max(1.0, abs(T)):
        raise ParameterError(f"reversal time {T} is not the grid end {grid.T}")
    return replace(
        grid,
        dW=-grid.dW[::-1].copy(),
        dBhat=-grid.dBhat[::-1].copy(),
        origin_offset=grid.global_index(grid.N - 1) if grid.N else grid.origin_offset,
        direction=-grid.direction,
    )


def _check_mode(values: Sequence[float], grid: NoiseGrid, mode: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.N,):
        raise ParameterError(f"expected {grid.N} integrand values, got shape {v.shape}")
    if not 1 <= mode <= grid.J:
        raise ParameterError(f"mode {mode} outside 1..{grid.J}")
    return v


def backward_integral(values: Sequence[float], grid: NoiseGrid, mode: int) -> float:
    """Right-endpoint sum: values[k] is the integrand at t_{k+1}."""
    v = _check_mode(values, grid, mode)
    return float(np.dot(v, grid.dBhat[:, mode - 1]))


def forward_integral(values: Sequence[float], grid: NoiseGrid, mode: int) -> float:
    """Left-endpoint (Ito) sum: values[k] is the integrand at t_k."""
    v = _check_mode(values, grid, mode)
    return float(np.dot(v, grid.dBhat[:, mode - 1]))


def save_noise(grid: NoiseGrid, path: str | Path) -> Path:
    """Write the grid as binary (``.bin``) or CSV (``.csv``), chosen by suffix."""
    path = Path(path)
    rows = np.hstack([grid.dW, grid.dBhat]) if grid.N else np.empty((0, grid.d + grid.J))
    header = (grid.t0, grid.dt, grid.N, grid.d, grid.J, grid.master_seed & _MASK64, grid.origin_offset, grid.direction)
    if path.suffix == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_CSV_HEADER)
            w.writerow([repr(float(header[0])), repr(float(header[1]))] + [str(v) for v in header[2:]])
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
    else:
        with path.open("wb") as fh:
            fh.write(_BIN_HEADER.pack(_BIN_MAGIC, *header))
            fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
    return path


def load_noise(path: str | Path) -> NoiseGrid:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            names = next(reader)
            if names != _CSV_HEADER:
                raise ParameterError(f"unexpected noise CSV header {names}")
            vals = next(reader)
            t0, dt = float(vals[0]), float(vals[1])
            N, d, J, seed, offset, direction = (int(v) for v in vals[2:])
            rows = np.array([[float(v) for v in row] for row in reader], dtype=float).reshape(N, d + J)
    else:
        data = path.read_bytes()
        magic, t0, dt, N, d, J, seed, offset, direction = _BIN_HEADER.unpack_from(data)
        if magic != _BIN_MAGIC:
            raise ParameterError("not a noise grid file")
        rows = np.frombuffer(data, dtype="<f8", offset=_BIN_HEADER.size).reshape(N, d + J).astype(float)
    return NoiseGrid(
        t0=t0,
        dt=dt,
        N=N,
        d=d,
        J=J,
        dW=rows[:, :d].copy(),
        dBhat=rows[:, d:].copy(),
        master_seed=seed,
        origin_offset=offset,
        direction=direction,
    )
