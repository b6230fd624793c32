"""Benchmark problems: driver, forward coefficients and their constants.

Each factory returns a ``Problem``. Constants are the tightest values the
author could verify by hand for the stated coefficients; ``K`` and ``p``
are choices, not consequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .conditions import ProblemConstants
from .errors import ParameterError
from .finite import DriverSpec
from .forward import ForwardCoefficients, constant_coefficients, linear_drift_coefficients
from .noise import NoiseSpectrum


@dataclass(frozen=True)
class Problem:
    name: str
    driver: DriverSpec
    coeffs: ForwardCoefficients
    constants: ProblemConstants
    spectrum: NoiseSpectrum | None = None

    @property
    def J(self) -> int:
        return max(self.driver.J, 1)

    @property
    def d(self) -> int:
        return self.coeffs.d

    def with_constants(self, **changes) -> "Problem":
        return replace(self, constants=replace(self.constants, **changes))


def _x0(x: np.ndarray) -> np.ndarray:
    return x[..., 0]


def _z0(z: np.ndarray) -> np.ndarray:
    return z[..., 0]


def ou(mu: float = 0.5, sigma0: float = 1.0, K: float = 0.125, d: int = 1) -> Problem:
    """f(y) = -mu y, one constant mode g_1 = sigma0, frozen forward state.

    The stationary solution is Gaussian with variance sigma0^2 / (2 mu).
    """
    if not mu > 0.0:
        raise ParameterError("OU rate mu must be positive")
    driver = DriverSpec(
        f=lambda x, y, z: -mu * y,
        g=(lambda x, y, z: sigma0,),
        name="ou",
    )
    consts = ProblemConstants(K=K, p=2.5, q=4.0, mu=mu, C=mu * mu, Cj=(0.0,), alphaj=(0.0,), L=0.0)
    return Problem("ou", driver, constant_coefficients(d, 0.0, 0.0), consts)


def relax(mu: float = 0.5, c: float = 0.1, K: float = 0.125, d: int = 1) -> Problem:
    """Deterministic f(y) = -mu y + c; the stationary value is c / mu."""
    driver = DriverSpec(f=lambda x, y, z: -mu * y + c, g=(), name="relax")
    consts = ProblemConstants(K=K, p=2.5, q=4.0, mu=mu, C=mu * mu, L=0.0)
    return Problem("relax", driver, constant_coefficients(d, 0.0, 0.0), consts)


def nonlinear(alpha: float = 0.25) -> Problem:
    """f = -y/2 + 0.2 sin z + 0.5 cos x, g_1 = 0.3 cos x + sqrt(alpha) sin z, b = -x, sigma = 1.

    |dg_1|^2 <= alpha |dz|^2, so the z-constant of the noise term is alpha.
    """
    a = math.sqrt(alpha)
    driver = DriverSpec(
        f=lambda x, y, z: -0.5 * y + 0.2 * np.sin(_z0(z)) + 0.5 * np.cos(_x0(x)),
        g=(lambda x, y, z: 0.3 * np.cos(_x0(x)) + a * np.sin(_z0(z)),),
        name="nonlinear",
    )
    consts = ProblemConstants(K=0.1, p=2.5, q=4.0, mu=0.5, C=0.5, Cj=(0.0,), alphaj=(alpha,), L=1.0)
    return Problem("nonlinear", driver, linear_drift_coefficients(1, 1.0, 1.0), consts)


def ou_space(mu: float = 0.5, sigma0: float = 1.0) -> Problem:
    """f = -mu y + cos x, g_1 = sigma0, with an Ornstein-Uhlenbeck forward state."""
    driver = DriverSpec(
        f=lambda x, y, z: -mu * y + np.cos(_x0(x)),
        g=(lambda x, y, z: sigma0,),
        name="ou_space",
    )
    consts = ProblemConstants(K=0.125, p=2.5, q=4.0, mu=mu, C=mu * mu, Cj=(0.0,), alphaj=(0.0,), L=1.0)
    return Problem("ou_space", driver, linear_drift_coefficients(1, 1.0, 1.0), consts)


def modes(J: int = 16, exponent: float = 2.0) -> Problem:
    """g_j = sqrt(lambda_j) (cos(x + j) + sin(y) / 4) with lambda_j = j^(-exponent)."""
    spec = NoiseSpectrum.power_law(J, exponent)

    def make(j: int, lam: float) -> Callable:
        s = math.sqrt(lam)
        return lambda x, y, z: s * (np.cos(_x0(x) + j) + 0.25 * np.sin(y))

    g = tuple(make(j, lam) for j, lam in enumerate(spec.lambdas, start=1))
    driver = DriverSpec(f=lambda x, y, z: -0.5 * y, g=g, name="modes")
    Cj = tuple(lam / 16.0 for lam in spec.lambdas)
    consts = ProblemConstants(K=0.1, p=2.5, q=4.0, mu=0.5, C=0.25, Cj=Cj, alphaj=(0.0,) * J, L=1.0)
    return Problem("modes", driver, linear_drift_coefficients(1, 1.0, 1.0), consts, spec)


def heat_solution(t: float | np.ndarray, x: np.ndarray, T: float, s0: float = 1.0) -> np.ndarray:
    """Backward heat solution u_t + u_xx = 0 with u(T, x) = exp(-x^2 / (2 s0))."""
    s = s0 + 2.0 * (T - np.asarray(t, dtype=float))
    return np.sqrt(s0 / s) * np.exp(-(x**2) / (2.0 * s))


def heat(T: float = 1.0, s0: float = 1.0) -> Problem:
    """b = 0, sigma = sqrt 2, f = g = 0, Gaussian terminal value."""
    driver = DriverSpec(f=lambda x, y, z: 0.0 * y, g=(), h=lambda x: heat_solution(T, _x0(x), T, s0), name="heat")
    consts = ProblemConstants(K=0.1, p=2.5, q=4.0, L=0.0)
    return Problem("heat", driver, constant_coefficients(1, 0.0, math.sqrt(2.0)), consts)


REGISTRY: dict[str, Callable[..., Problem]] = {
    "ou": ou,
    "relax": relax,
    "nonlinear": nonlinear,
    "ou_space": ou_space,
    "modes": modes,
    "heat": heat,
}


def get_problem(name: str, **params) -> Problem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ParameterError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**params)
