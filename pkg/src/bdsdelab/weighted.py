"""Weighted spatial grids, norms and interpolation.

Fields live on a tensor grid over [-R, R]^d (d = 1 or 2). Quadrature
weights integrate the multilinear interpolant of a field exactly against
the weight rho^{-1}(x) = (1 + |x|)^{-q}; per-cell Gauss-Legendre handles
the weight itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DegenerateInputError, ParameterError
from .forward import FlowEnsemble

_GAUSS_POINTS = 8


@dataclass(frozen=True)
class WeightSpec:
    q: float = 4.0

    def __post_init__(self) -> None:
        if not self.q > 3.0:
            raise ParameterError(f"weight exponent q={self.q} must exceed 3")

    def moment_tail_1d(self, p: float, R: float) -> float:
        """Upper bound for the two-sided tail of |x|^p rho^{-1} beyond R (needs p < q - 1)."""
        if not p < self.q - 1.0:
            raise ParameterError("moment p must satisfy p < q - 1 for integrability")
        return 2.0 * (1.0 + R) ** (p + 1.0 - self.q) / (self.q - p - 1.0)


def rho(weight: WeightSpec, x: np.ndarray | float) -> np.ndarray | float:
    """(1 + |x|)^q; arrays are points with the components on the last axis."""
    arr = np.asarray(x, dtype=float)
    r = np.abs(arr) if arr.ndim == 0 else np.linalg.norm(arr, axis=-1)
    out = (1.0 + r) ** weight.q
    return float(out) if np.ndim(out) == 0 else out


def _cell_rules(axis: np.ndarray, gauss: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gauss-Legendre nodes and weights on [0, 1] for every cell of the axis.

    A cell with the origin strictly inside is split there, since the weight
    has a kink at 0.
    """
    g, gw = np.polynomial.legendre.leggauss(gauss)
    u = 0.5 * (g + 1.0)
    uw = 0.5 * gw
    rules = []
    for a, b in zip(axis[:-1], axis[1:]):
        if a < 0.0 < b:
            c = -a / (b - a)
            rules.append((np.concatenate([c * u, c + (1.0 - c) * u]), np.concatenate([c * uw, (1.0 - c) * uw])))
        else:
            rules.append((u, uw))
    return rules


def _hat_weights(axis: np.ndarray, d: int, inv_rho, gauss: int) -> np.ndarray:
    n = axis.size
    h = axis[1] - axis[0]
    rules = _cell_rules(axis, gauss)
    if d == 1:
        out = np.zeros(n)
        for i, (u, uw) in enumerate(rules):
            vals = inv_rho((axis[i] + h * u)[:, None]) * uw * h
            out[i] += (vals * (1.0 - u)).sum()
            out[i + 1] += (vals * u).sum()
        return out
    out = np.zeros((n, n))
    for i, (u0, w0) in enumerate(rules):
        for j, (u1, w1) in enumerate(rules):
            U0, U1 = np.meshgrid(u0, u1, indexing="ij")
            pts = np.stack([axis[i] + h * U0, axis[j] + h * U1], axis=-1)
            v = inv_rho(pts) * np.outer(w0, w1) * h * h
            out[i, j] += (v * (1 - U0) * (1 - U1)).sum()
            out[i + 1, j] += (v * U0 * (1 - U1)).sum()
            out[i, j + 1] += (v * (1 - U0) * U1).sum()
            out[i + 1, j + 1] += (v * U0 * U1).sum()
    return out.ravel()


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Tensor grid with ``n`` nodes per axis; node order is C order (last axis fastest)."""

    d: int
    R: float
    n: int
    weight: WeightSpec
    axis: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    cell_weights: np.ndarray = field(repr=False)
    interp_order: int = 1

    @classmethod
    def build(cls, d: int = 1, R: float = 8.0, n: int = 129, weight: WeightSpec | float = 4.0) -> "SpatialGrid":
        if d not in (1, 2):
            raise ParameterError(f"dimension d={d} unsupported: the grid solver handles d <= 2")
        if n < 2 or not R > 0.0:
            raise ParameterError("need n >= 2 nodes per axis and R > 0")
        w = weight if isinstance(weight, WeightSpec) else WeightSpec(float(weight))
        axis = np.linspace(-R, R, n)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        inv_rho = lambda pts: (1.0 + np.linalg.norm(pts, axis=-1)) ** (-w.q)
        quad = _hat_weights(axis, d, inv_rho, _GAUSS_POINTS)
        trap = np.full(n, axis[1] - axis[0])
        trap[[0, -1]] *= 0.5
        cell = trap if d == 1 else np.outer(trap, trap).ravel()
        return cls(d, float(R), n, w, axis, nodes, quad, cell)

    @property
    def h(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def mass(self) -> float:
        """Sum of quadrature weights, the discrete integral of rho^{-1}."""
        return float(self.quad_weights.sum())

    def interp(self, stack: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Interpolate ``c`` nodal fields (shape (c, size)) at points (P, d) -> (c, P)."""
        stack = np.ascontiguousarray(stack, dtype=float)
        pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, self.d)
        if self.d == 1:
            return kernels.interp_1d(stack, -self.R, self.R, self.h, np.ascontiguousarray(pts[:, 0]))
        return kernels.interp_2d(stack, -self.R, self.R, self.h, self.n, pts)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Central-difference gradient of a nodal scalar field, shape (size, d)."""
        v = np.asarray(values, dtype=float).reshape((self.n,) * self.d)
        grads = np.gradient(v, self.axis, edge_order=2) if self.d > 1 else [np.gradient(v, self.axis, edge_order=2)]
        return np.stack([g.ravel() for g in grads], axis=-1)


@dataclass(frozen=True, eq=False)
class FieldSnapshot:
    """Nodal values of a scalar (shape (size,)) or vector (shape (size, d)) field."""

    values: np.ndarray
    grid: SpatialGrid

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.grid.size:
            raise ParameterError(f"field has {v.shape[0]} nodes, grid has {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("field values must be finite")
        object.__setattr__(self, "values", v)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        vec = self.values.ndim == 2
        cols = [f"x_{i + 1}" for i in range(self.grid.d)]
        cols += [f"value_{i + 1}" for i in range(self.values.shape[1])] if vec else ["value"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            vals = self.values if vec else self.values[:, None]
            for x, v in zip(self.grid.nodes, vals):
                w.writerow([repr(float(c)) for c in x] + [repr(float(c)) for c in v])
        return path

    @classmethod
    def from_csv(cls, path: str | Path, grid: SpatialGrid) -> "FieldSnapshot":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            cols = next(reader)
            data = np.array([[float(c) for c in row] for row in reader])
        nvals = len(cols) - grid.d
        if not np.allclose(data[:, : grid.d], grid.nodes, rtol=0, atol=1e-12):
            raise ParameterError("CSV nodes do not match the grid")
        vals = data[:, grid.d :]
        return cls(vals[:, 0] if nvals == 1 and cols[-1] == "value" else vals, grid)


def _values(field: FieldSnapshot | np.ndarray) -> np.ndarray:
    return field.values if isinstance(field, FieldSnapshot) else np.asarray(field, dtype=float)


def weighted_norm_sq(field: FieldSnapshot | np.ndarray, grid: SpatialGrid) -> float:
    """sum_i |v_i|^2 w_i; vector fields sum over components."""
    v = _values(field)
    sq = v * v if v.ndim == 1 else np.sum(v * v, axis=-1)
    return float(np.dot(sq, grid.quad_weights))


def path_norms_sq(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Weighted squared norm of every time slice of a (steps, size[, d]) array."""
    v = np.asarray(values, dtype=float)
    sq = v * v if v.ndim == 2 else np.sum(v * v, axis=-1)
    return sq @ grid.quad_weights


def discounted_path_norm(
    path: Sequence[FieldSnapshot | np.ndarray] | np.ndarray,
    times: Sequence[float] | np.ndarray,
    K: float,
    kind: str,
    grid: SpatialGrid,
) -> float:
    """sup_k e^{-K t_k} |.|^2 (``kind="sup"``) or the trapezoid integral of it (``"integral"``)."""
    if len(path) == 0:
        raise ParameterError("empty path")
    vals = np.stack([_values(p) for p in path]) if not isinstance(path, np.ndarray) else path
    t = np.asarray(times, dtype=float)
    if t.shape[0] != vals.shape[0]:
        raise ParameterError("times and path lengths differ")
    norms = path_norms_sq(vals, grid)
    disc = np.exp(-K * t) * norms
    if kind == "sup":
        return float(disc.max())
    if kind == "integral":
        return float(np.trapezoid(disc, t)) if len(t) > 1 else 0.0
    raise ParameterError(f"unknown norm kind {kind!r}")


def interpolate(field: FieldSnapshot | np.ndarray, grid: SpatialGrid, x: np.ndarray | float) -> np.ndarray | float:
    """Multilinear interpolation with clamping to [-R, R]^d.

    ``x`` is a single point (a scalar is accepted when d = 1) or an array of
    points with the components on the last axis.
    """
    v = _values(field)
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    single = pts.ndim == 1
    flat = pts.reshape(-1, grid.d)
    stack = v[None, :] if v.ndim == 1 else v.T
    out = grid.interp(stack, flat)
    if v.ndim == 1:
        return float(out[0, 0]) if single else out[0].reshape(pts.shape[:-1])
    return out[:, 0] if single else out.T.reshape(pts.shape[:-1] + (v.shape[1],))


def equivalence_ratio(phi: FieldSnapshot | np.ndarray, flow: FlowEnsemble, grid: SpatialGrid, s: float) -> float:
    """E int |phi(X_s^{t,x})| rho^{-1} dx over int |phi(x)| rho^{-1} dx.

    The flow must start from the grid nodes; the expectation averages the
    inner-sample axis of the ensemble.
    """
    v = np.abs(_values(phi))
    den = float(np.dot(v, grid.quad_weights))
    if not den > 0.0:
        raise DegenerateInputError("phi vanishes in the weighted norm; ratio undefined")
    if flow.start_points.shape != grid.nodes.shape or not np.array_equal(flow.start_points, grid.nodes):
        raise ParameterError("flow must start from the grid nodes")
    states = flow.at(s)
    vals = grid.interp(v[None, :], states.reshape(-1, grid.d))[0].reshape(states.shape[:2])
    num = float(np.dot(vals.mean(axis=1), grid.quad_weights))
    return num / den
