"""Interaction potentials.

A Potential bundles V, V', V'' as numpy-vectorized callables together with
its declared convexity window [a_lower, a_upper], the Lipschitz constant of
V'', and a name.  The three standing assumptions (symmetry, uniform convexity
with 0 < a <= V'' <= A, and Lipschitz V'') are audited numerically by
`validate`; built-ins ship analytic derivatives because V' drives every
dynamics step and V'' every walk rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Potential:
    name: str
    v: Callable
    dv: Callable
    ddv: Callable
    a_lower: float
    a_upper: float
    lipschitz: float

    def __post_init__(self):
        if not (0 < self.a_lower <= self.a_upper):
            raise ValueError(f"need 0 < a_lower <= a_upper, got [{self.a_lower}, {self.a_upper}]")
        if self.lipschitz < 0:
            raise ValueError("lipschitz constant must be >= 0")

    @property
    def max_stable_dt(self) -> float:
        """Step-size cap 1/(8*a_upper) for the explicit Euler drift."""
        return 1.0 / (8.0 * self.a_upper)


# module-level callables keep Potential picklable for process workers


def _quad_v(x):
    return 0.5 * np.square(x)


def _quad_dv(x):
    return np.asarray(x, dtype=float) + 0.0


def _quad_ddv(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _cos_v(x):
    return np.square(x) + np.cos(x) - 1.0


def _cos_dv(x):
    return 2.0 * np.asarray(x, dtype=float) - np.sin(x)


def _cos_ddv(x):
    return 2.0 - np.cos(x)


def quadratic() -> Potential:
    """V(x) = x^2/2: the harmonic crystal / DGFF case."""
    return Potential(
        name="quadratic",
        v=_quad_v,
        dv=_quad_dv,
        ddv=_quad_ddv,
        a_lower=1.0,
        a_upper=1.0,
        lipschitz=0.0,
    )


def cosine_perturbed() -> Potential:
    """V(x) = x^2 + cos(x) - 1, shifted so V(0) = 0.

    V'' = 2 - cos(x) lies in [1, 3] and is 1-Lipschitz.  The constant shift
    cancels in every Gibbs density and drift.
    """
    return Potential(
        name="cosine",
        v=_cos_v,
        dv=_cos_dv,
        ddv=_cos_ddv,
        a_lower=1.0,
        a_upper=3.0,
        lipschitz=1.0,
    )


_REGISTRY = {"quadratic": quadratic, "cosine": cosine_perturbed}


def by_name(name: str) -> Potential:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; known: {sorted(_REGISTRY)}") from None


@dataclass
class ConditionCheck:
    condition: str
    ok: bool
    worst_margin: float
    witness: float


@dataclass
class ValidationReport:
    potential: str
    half_range: float
    samples: int
    checks: list[ConditionCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.ok]


def validate(p: Potential, half_range: float, samples: int, tol: float = 1e-9) -> ValidationReport:
    """Audit the declared invariants on a uniform grid over [-half_range, half_range].

    Checks: V(x) = V(-x), a_lower <= V'' <= a_upper, |V''(x) - V''(y)| <=
    L |x - y| on adjacent grid pairs (triangle inequality extends this to all
    grid pairs), and V(0) = 0.  Margins are signed; negative means violated.
    """
    if samples < 2:
        raise ValueError("need samples >= 2")
    if half_range <= 0:
        raise ValueError("need half_range > 0")
    x = np.linspace(-half_range, half_range, samples)
    rep = ValidationReport(potential=p.name, half_range=half_range, samples=samples)

    sym = -np.abs(np.asarray(p.v(x)) - np.asarray(p.v(-x)))
    k = int(np.argmin(sym))
    rep.checks.append(ConditionCheck("symmetry", bool(sym[k] >= -tol), float(sym[k]), float(x[k])))

    dd = np.asarray(p.ddv(x), dtype=float)
    lo = dd - p.a_lower
    k = int(np.argmin(lo))
    rep.checks.append(ConditionCheck("convexity_lower", bool(lo[k] >= -tol), float(lo[k]), float(x[k])))
    hi = p.a_upper - dd
    k = int(np.argmin(hi))
    rep.checks.append(ConditionCheck("convexity_upper", bool(hi[k] >= -tol), float(hi[k]), float(x[k])))

    step = x[1] - x[0]
    lip = p.lipschitz * step - np.abs(np.diff(dd))
    k = int(np.argmin(lip))
    rep.checks.append(ConditionCheck("lipschitz", bool(lip[k] >= -tol), float(lip[k]), float(x[k])))

    v0 = float(np.asarray(p.v(0.0)))
    rep.checks.append(ConditionCheck("zero_at_origin", bool(abs(v0) <= tol), -abs(v0), 0.0))
    return rep
