"""Torus gradient Gibbs states with tilt.

The tilt-u state is realized by a periodic height field h on the n x n torus
evolving under Langevin dynamics for the Hamiltonian sum_b V(grad h(b) + u . dx),
with the reported gradient field eta(b) = grad h(b) + u . dx.  The height is
gauge-fixed to h(0,0) = 0 after every step; eta never sees the gauge.  By
periodicity the spatial mean of eta over either bond orientation equals the
tilt component exactly, sample by sample.

a_u(b) = E V''(eta(b)) depends only on the orientation of b; its two values
feed the anisotropic weights beta = (a1, a2) (any positive multiple gives the
same harmonic extensions, so no normalization is applied).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import StabilityError
from .harmonic import Beta
from .lattice import TorusDomain
from .potentials import Potential
from .rngutil import TORUS, rng_for


class TorusField:
    """Periodic height representative with tilt, gauge-fixed at the origin."""

    def __init__(self, torus: TorusDomain, potential: Potential, tilt=(0.0, 0.0), dt: float | None = None):
        self.torus = torus
        self.potential = potential
        self.tilt = (float(tilt[0]), float(tilt[1]))
        cap = potential.max_stable_dt
        self.dt = float(dt) if dt is not None else min(0.01, cap)
        if not (0 < self.dt <= cap * (1 + 1e-12)):
            raise StabilityError(f"dt={self.dt} exceeds the stability cap {cap:.6g}")
        n = torus.side
        self.h = np.zeros((n, n))  # indexed [row=j, col=i]
        self.time = 0.0

    def eta(self) -> np.ndarray:
        """(2, n, n): horizontal and vertical gradient fields including tilt."""
        u1, u2 = self.tilt
        return np.stack([
            self.torus.grad_horizontal(self.h) + u1,
            self.torus.grad_vertical(self.h) + u2,
        ])

    def regauge(self, row: int = 0, col: int = 0):
        self.h -= self.h[row, col]
        return self


def torus_step(state: TorusField, rng: np.random.Generator, xi: np.ndarray | None = None) -> TorusField:
    """One Euler step of the tilted dynamics with iid per-site noise; re-gauged."""
    h = state.h
    u1, u2 = state.tilt
    dv = state.potential.dv
    gh = np.roll(h, -1, axis=1) - h
    gv = np.roll(h, -1, axis=0) - h
    ah = dv(gh + u1)
    av = dv(gv + u2)
    drift = ah - np.roll(ah, 1, axis=1) + av - np.roll(av, 1, axis=0)
    if xi is None:
        xi = rng.standard_normal(h.shape)
    h += state.dt * drift + np.sqrt(2.0 * state.dt) * xi
    h -= h[0, 0]
    state.time += state.dt
    if not np.isfinite(h).all():
        raise StabilityError(f"non-finite torus field at time {state.time}")
    return state


def run_gradient_samples(
    n: int,
    potential: Potential,
    tilt=(0.0, 0.0),
    n_samples: int = 500,
    *,
    burn_time: float | None = None,
    thin_steps: int | None = None,
    dt: float | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Thinned stationary eta snapshots, shape (n_samples, 2, n, n).

    Defaults follow the stationarity protocol: burn 20 n^2 time units, thin
    2 n^2 steps between retained snapshots.
    """
    if n < 2:
        raise ValueError("torus side must be >= 2")
    state = TorusField(TorusDomain(n), potential, tilt, dt=dt)
    burn_time = burn_time if burn_time is not None else 20.0 * n * n
    thin_steps = thin_steps if thin_steps is not None else 2 * n * n
    rng = rng_for(seed, TORUS, n)
    for _ in range(int(round(burn_time / state.dt))):
        torus_step(state, rng)
    out = np.empty((n_samples, 2, n, n))
    for s in range(n_samples):
        for _ in range(thin_steps):
            torus_step(state, rng)
        out[s] = state.eta()
    return out


@dataclass
class TiltEstimate:
    a1: float
    a1_stderr: float
    a2: float
    a2_stderr: float
    diff_stderr: float
    n_samples: int
    side: int
    tilt: tuple[float, float]

    @property
    def beta(self) -> Beta:
        return Beta(self.a1, self.a2)


def estimate_a_u_from_samples(samples: np.ndarray, potential: Potential, tilt=(0.0, 0.0)) -> TiltEstimate:
    """Average V'' over all bonds of each orientation and over snapshots.

    Shift invariance justifies the spatial average; the stderr comes from the
    per-snapshot means of the thinned (decorrelated) series, and the stderr of
    a1 - a2 from per-snapshot differences (the two share each field).
    """
    S = samples.shape[0]
    vh = np.asarray(potential.ddv(samples[:, 0]))
    vv = np.asarray(potential.ddv(samples[:, 1]))
    a1_s = vh.reshape(S, -1).mean(axis=1)
    a2_s = vv.reshape(S, -1).mean(axis=1)
    d_s = a1_s - a2_s
    sq = np.sqrt(S)
    return TiltEstimate(
        a1=float(a1_s.mean()),
        a1_stderr=float(a1_s.std(ddof=1) / sq) if S > 1 else 0.0,
        a2=float(a2_s.mean()),
        a2_stderr=float(a2_s.std(ddof=1) / sq) if S > 1 else 0.0,
        diff_stderr=float(d_s.std(ddof=1) / sq) if S > 1 else 0.0,
        n_samples=S,
        side=samples.shape[-1],
        tilt=(float(tilt[0]), float(tilt[1])),
    )


def estimate_a_u(
    n: int,
    potential: Potential,
    tilt=(0.0, 0.0),
    *,
    burn_time: float | None = None,
    n_samples: int = 500,
    thin_steps: int | None = None,
    dt: float | None = None,
    seed: int = 0,
) -> TiltEstimate:
    if potential.a_lower == potential.a_upper:
        # constant V'': exact, no sampling needed
        c = float(np.asarray(potential.ddv(0.0)))
        return TiltEstimate(c, 0.0, c, 0.0, 0.0, 0, n, (float(tilt[0]), float(tilt[1])))
    samples = run_gradient_samples(
        n, potential, tilt, n_samples, burn_time=burn_time, thin_steps=thin_steps, dt=dt, seed=seed
    )
    return estimate_a_u_from_samples(samples, potential, tilt)


@dataclass
class ReflectionReport:
    axis: str
    statistic: float
    p_value: float
    n_per_group: int
    positions: list[tuple[int, int]]
    shifted_control: bool = False


def reflection_test(
    samples: np.ndarray,
    axis: str = "horizontal",
    f=None,
    potential: Potential | None = None,
    shift: float = 0.0,
) -> ReflectionReport:
    """Two-sample KS test of {f(eta(b))} against the reflected bond pattern.

    Uses horizontal bonds at a small set of well-separated positions, one
    value per decorrelated snapshot per position; the reflection maps a
    horizontal bond to the horizontal bond in the mirrored row (column for
    the vertical axis), so f even means the two samples are equal in law.
    `shift` displaces the second sample (power control); p collapses if the
    test has power.
    """
    if f is None:
        if potential is None:
            raise ValueError("pass f or a potential (f defaults to its V'')")
        f = potential.ddv
    S, _, n, _ = samples.shape
    q = max(1, n // 4)
    positions = [(q, q), (3 * q, q)]  # (row j, col i), separated by n/2
    a_vals = []
    b_vals = []
    for (j, i) in positions:
        eta_h = samples[:, 0, j, i]
        if axis == "horizontal":
            jr = (-j) % n
            eta_ref = samples[:, 0, jr, i]
        elif axis == "vertical":
            # bond (i, j)->(i+1, j) reflects to the bond ending at column -i
            ir = (-(i + 1)) % n
            eta_ref = -samples[:, 0, j, ir]
        else:
            raise ValueError(f"axis must be horizontal or vertical, got {axis!r}")
        a_vals.append(np.asarray(f(eta_h)))
        b_vals.append(np.asarray(f(eta_ref)) + shift)
    a = np.concatenate(a_vals)
    b = np.concatenate(b_vals)
    res = stats.ks_2samp(a, b, method="asymp")
    return ReflectionReport(
        axis=axis,
        statistic=float(res.statistic),
        p_value=float(res.pvalue),
        n_per_group=len(a),
        positions=positions,
        shifted_control=shift != 0.0,
    )
