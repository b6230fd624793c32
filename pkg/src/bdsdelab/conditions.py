"""Problem constants and the audit of the standing inequalities on them."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParameterError


@dataclass(frozen=True)
class ProblemConstants:
    """Constants of the driver and forward coefficients.

    ``C`` bounds |f(y1, z1) - f(y2, z2)|^2 by C (|dy|^2 + |dz|^2), ``Cj`` and
    ``alphaj`` split the analogous bound for each noise coefficient into its
    y and z parts, ``mu`` is the monotonicity constant of f in y and ``L`` the
    Lipschitz constant of the forward coefficients. ``Cp`` is the generic
    constant used when evaluating the tail bounds.
    """

    K: float = 0.1
    p: float = 2.5
    q: float = 4.0
    mu: float = 0.0
    C: float = 0.0
    Cj: tuple[float, ...] = ()
    alphaj: tuple[float, ...] = ()
    L: float = 0.0
    M2: float = 0.0
    M2j: tuple[float, ...] = ()
    Cp: float = 1.0

    def __post_init__(self) -> None:
        for name in ("Cj", "alphaj", "M2j"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if any(v < 0 for v in self.Cj + self.alphaj + self.M2j) or self.C < 0 or self.L < 0:
            raise ParameterError("Lipschitz-type constants must be non-negative")

    @property
    def sum_Cj(self) -> float:
        return float(sum(self.Cj))

    @property
    def sum_alpha(self) -> float:
        return float(sum(self.alphaj))

    @property
    def picard_K(self) -> float:
        """Discount used in the contraction argument: 1 + 2C + 2 sum C_j."""
        return 1.0 + 2.0 * self.C + 2.0 * self.sum_Cj

    @property
    def contraction_bound(self) -> float:
        return 0.5 + self.sum_alpha

    def partial_sums_Cj(self) -> list[float]:
        out, acc = [], 0.0
        for v in self.Cj:
            acc += v
            out.append(acc)
        return out


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    slack: float
    levels: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.slack > 0.0


@dataclass(frozen=True)
class ConditionReport:
    checks: tuple[ConditionCheck, ...] = field(default_factory=tuple)

    def __getitem__(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def passed(self, level: str = "infinite") -> bool:
        """Verdict over every check relevant to ``level`` ("finite" or "infinite")."""
        return all(c.passed for c in self.checks if level in c.levels)

    def failures(self, level: str = "infinite") -> list[str]:
        return [c.name for c in self.checks if level in c.levels and not c.passed]

    def rows(self) -> list[dict]:
        return [{"condition": c.name, "slack": c.slack, "pass": c.passed} for c in self.checks]


def validate_conditions(constants: ProblemConstants) -> ConditionReport:
    """Evaluate every checkable inequality and its slack (report only, never raises).

    Names: ``H2`` sum alpha_j < 1/2; ``H7`` 2 mu - K - 2C - sum C_j > 0;
    ``A3`` K - pL - p(p-1)L^2/2 > 0; ``A4`` 2 mu - pK - pC - p(p-1)/2 sum C_j > 0;
    ``A2`` p in (2, q - 1); ``weight`` q > 3.
    """
    c = constants
    p = c.p
    checks = (
        ConditionCheck("weight", c.q - 3.0, ("finite", "infinite")),
        ConditionCheck("H2", 0.5 - c.sum_alpha, ("finite", "infinite")),
        ConditionCheck("H7", 2.0 * c.mu - c.K - 2.0 * c.C - c.sum_Cj, ("infinite",)),
        ConditionCheck("A2", min(p - 2.0, c.q - 1.0 - p), ("infinite",)),
        ConditionCheck("A3", c.K - p * c.L - 0.5 * p * (p - 1.0) * c.L**2, ("infinite",)),
        ConditionCheck("A4", 2.0 * c.mu - p * c.K - p * c.C - 0.5 * p * (p - 1.0) * c.sum_Cj, ("infinite",)),
    )
    return ConditionReport(checks)

