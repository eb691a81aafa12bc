"""Random walk in the dynamic bond-conductance environment c_t(b) = V''(grad h_t(b)).

Environments are harvested from stationary field trajectories as
piecewise-constant snapshots; walks simulate a continuous-time chain whose
jump intensity across bond b at time t is the snapshot conductance, using
thinning against the uniform bound 4 * a_upper (propose at the bound, accept
with probability total-rate/bound, then pick the bond proportionally to its
rate).  Exit laws estimate the field mean; occupation times before exit
estimate covariances.  With constant V'' the machinery collapses to the
simple constant-rate walk, whose exit law and occupation kernel are the
harmonic measure and Green's function - the module's master oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, EstimateRefusedError
from .harmonic import as_boundary_array
from .langevin import FieldState, burn_in, default_dt, em_step
from .lattice import LatticeDomain, Site
from .potentials import Potential
from .rngutil import WALK, rng_for

SNAPSHOT_SPACING = 0.5
HORIZON_FACTOR = 20.0  # horizon >= 20 R^2 / a_lower so non-exit has prob << 1e-6


@dataclass
class EnvironmentTrajectory:
    """Snapshots of bond conductances on [0, horizon], piecewise constant.

    ch[k] has shape (H, W-1): horizontal-bond rates; cv[k] (H-1, W).  A
    single-snapshot trajectory is frozen: constant in time with no horizon.
    """

    domain: LatticeDomain
    times: np.ndarray
    ch: np.ndarray
    cv: np.ndarray
    rate_bound: float
    horizon: float

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("snapshot times must be strictly increasing")

    @property
    def frozen(self) -> bool:
        return len(self.times) == 1

    def rate_range(self) -> tuple[float, float]:
        return float(min(self.ch.min(), self.cv.min())), float(max(self.ch.max(), self.cv.max()))

    def _as_lists(self):
        """Nested-list views cached for the walk inner loop (scalar indexing
        on numpy arrays dominates the event cost otherwise)."""
        cached = getattr(self, "_list_cache", None)
        if cached is None:
            cached = (
                [g.tolist() for g in self.ch],
                [g.tolist() for g in self.cv],
                self.times.tolist(),
                self.domain.interior_mask.tolist(),
                self.domain.boundary_mask.tolist(),
            )
            object.__setattr__(self, "_list_cache", cached)
        return cached


def frozen_environment(domain: LatticeDomain, potential: Potential) -> EnvironmentTrajectory:
    """Constant-rate environment V''(0) on every bond (exact whenever V'' is constant)."""
    H, W = domain.grid_shape
    c = float(np.asarray(potential.ddv(0.0)))
    return EnvironmentTrajectory(
        domain=domain,
        times=np.zeros(1),
        ch=np.full((1, H, W - 1), c),
        cv=np.full((1, H - 1, W), c),
        rate_bound=4.0 * potential.a_upper,
        horizon=math.inf,
    )


def harvest_environments(
    domain: LatticeDomain,
    potential: Potential,
    boundary,
    n_traj: int,
    seed: int,
    path: tuple[int, ...] = (),
    *,
    dt: float | None = None,
    burn_time: float | None = None,
    horizon: float | None = None,
    spacing: float = SNAPSHOT_SPACING,
) -> list[EnvironmentTrajectory]:
    """Burn one chain to stationarity, then record n_traj back-to-back segments.

    A potential with constant V'' short-circuits to frozen environments: the
    rates do not depend on the field at all.
    """
    if potential.lipschitz == 0.0 and potential.a_lower == potential.a_upper:
        return [frozen_environment(domain, potential)] * n_traj

    dt = dt if dt is not None else default_dt(potential)
    R = domain.diameter
    burn_time = burn_time if burn_time is not None else 20.0 * R * R
    min_horizon = HORIZON_FACTOR * R * R / potential.a_lower
    horizon = horizon if horizon is not None else min_horizon
    if horizon < min_horizon:
        raise DomainError(f"environment horizon {horizon} below the enforced {min_horizon}")

    rng = rng_for(seed, WALK, *path)
    state = FieldState(domain, potential, boundary, dt=dt).start_from_harmonic()
    burn_in(state, burn_time, rng)

    steps_per_snap = max(1, int(round(spacing / dt)))
    snaps_per_traj = int(math.ceil(horizon / (steps_per_snap * dt))) + 1
    H, W = domain.grid_shape
    out = []
    for _ in range(n_traj):
        times = np.empty(snaps_per_traj)
        ch = np.empty((snaps_per_traj, H, W - 1))
        cv = np.empty((snaps_per_traj, H - 1, W))
        for k in range(snaps_per_traj):
            if k > 0:
                for _ in range(steps_per_snap):
                    em_step(state, rng)
            times[k] = k * steps_per_snap * dt
            g = state.grid
            ch[k] = potential.ddv(g[:, 1:] - g[:, :-1])
            cv[k] = potential.ddv(g[1:, :] - g[:-1, :])
        out.append(
            EnvironmentTrajectory(
                domain=domain,
                times=times,
                ch=ch,
                cv=cv,
                rate_bound=4.0 * potential.a_upper,
                horizon=float(times[-1]),
            )
        )
    return out


@dataclass
class WalkPath:
    start: Site
    jump_times: list[float]
    sites: list[Site]
    exit_time: float | None
    exit_site: Site | None
    flagged: bool
    occupation: float  # time spent at the requested target site, if any

    @property
    def exited(self) -> bool:
        return self.exit_site is not None


class _Uniforms:
    """Blocked uniform stream: numpy draws consumed as plain floats."""

    __slots__ = ("rng", "buf", "i", "n")

    def __init__(self, rng: np.random.Generator, n: int = 8192):
        self.rng = rng
        self.n = n
        self.buf = rng.random(n).tolist()
        self.i = 0

    def next(self) -> float:
        i = self.i
        if i >= self.n:
            self.buf = self.rng.random(self.n).tolist()
            i = 0
        self.i = i + 1
        return self.buf[i]


def simulate_walk(
    env: EnvironmentTrajectory,
    x0: Site,
    rng: np.random.Generator,
    *,
    occupation_site: Site | None = None,
    record_path: bool = True,
) -> WalkPath:
    """Run the walk from interior x0 until it first lands on the boundary ring.

    Flagged (and excluded by estimators) if the environment horizon is
    exhausted first.  `occupation_site` accrues the time the walk spends at
    that site before exit.
    """
    dom = env.domain
    if not dom.contains(x0):
        raise DomainError(f"walk must start at an interior site, got {x0}")
    r, c = dom.grid_pos(x0)

    ch, cv, times, interior, boundary = env._as_lists()
    K = len(times)
    bound = env.rate_bound
    horizon = env.horizon
    occ_pos = dom.grid_pos(occupation_site) if occupation_site is not None else None

    u = _Uniforms(rng)
    t = 0.0
    last_jump = 0.0
    occ = 0.0
    k = 0
    jump_times: list[float] = []
    sites: list[Site] = []
    i0, j0 = dom.origin
    while True:
        t -= math.log(1.0 - u.next()) / bound
        if t > horizon:
            if occ_pos == (r, c):
                occ += horizon - last_jump
            return WalkPath(x0, jump_times, sites, None, None, True, occ)
        while k + 1 < K and times[k + 1] <= t:
            k += 1
        chk = ch[k]
        cvk = cv[k]
        right = chk[r][c]
        left = chk[r][c - 1]
        up = cvk[r][c]
        down = cvk[r - 1][c]
        total = right + left + up + down
        if u.next() * bound >= total:
            continue  # thinning rejection; stay put
        pick = u.next() * total
        if pick < right:
            nr, nc = r, c + 1
        elif pick < right + left:
            nr, nc = r, c - 1
        elif pick < right + left + up:
            nr, nc = r + 1, c
        else:
            nr, nc = r - 1, c
        if occ_pos == (r, c):
            occ += t - last_jump
        last_jump = t
        r, c = nr, nc
        if record_path:
            jump_times.append(t)
            sites.append((c + i0, r + j0))
        if boundary[r][c]:
            return WalkPath(x0, jump_times, sites, t, (c + i0, r + j0), False, occ)
        if not interior[r][c]:
            raise DomainError("walk left the domain graph; inconsistent environment")


@dataclass
class Estimate:
    value: float
    stderr: float
    walks: int
    flagged: int
    per_batch: list[float]


def _batch_stats(batches: list[list[float]]) -> tuple[float, float, list[float]]:
    means = [float(np.mean(b)) for b in batches if len(b)]
    value = float(np.mean([x for b in batches for x in b]))
    if len(means) >= 2:
        stderr = float(np.std(means, ddof=1) / math.sqrt(len(means)))
    else:
        flat = np.array([x for b in batches for x in b])
        stderr = float(flat.std(ddof=1) / math.sqrt(len(flat))) if len(flat) > 1 else 0.0
    return value, stderr, means


MAX_FLAGGED_FRACTION = 1e-3


def estimate_covariance(
    envs: Sequence[EnvironmentTrajectory],
    x: Site,
    y: Site,
    walks_per_traj: int,
    seed: int,
) -> Estimate:
    """Cov(h(x), h(y)) as the mean occupation time of y by walks from x.

    Each environment segment serves walks_per_traj walks; the standard error
    comes from trajectory-level batch means (walks sharing an environment are
    dependent).  Refuses to estimate if more than 0.1% of walks fail to exit.
    """
    batches: list[list[float]] = []
    flagged = 0
    total = 0
    for ti, env in enumerate(envs):
        rng = rng_for(seed, WALK, 1, ti)
        vals = []
        for _ in range(walks_per_traj):
            w = simulate_walk(env, x, rng, occupation_site=y, record_path=False)
            total += 1
            if w.flagged:
                flagged += 1
            else:
                vals.append(w.occupation)
        batches.append(vals)
    if flagged > MAX_FLAGGED_FRACTION * total:
        raise EstimateRefusedError(f"{flagged}/{total} walks failed to exit the domain")
    value, stderr, means = _batch_stats(batches)
    return Estimate(value=value, stderr=stderr, walks=total, flagged=flagged, per_batch=means)


def exit_distribution(
    env: EnvironmentTrajectory, x: Site, walks: int, seed: int
) -> tuple[dict[Site, int], int]:
    """Counts of exit sites over `walks` walks from x; also the flagged count."""
    rng = rng_for(seed, WALK, 2)
    counts: dict[Site, int] = {}
    flagged = 0
    for _ in range(walks):
        w = simulate_walk(env, x, rng, record_path=False)
        if w.flagged:
            flagged += 1
        else:
            counts[w.exit_site] = counts.get(w.exit_site, 0) + 1
    return counts, flagged


@dataclass
class MeanEstimate:
    value: float
    stderr: float
    nodes: list[float]
    node_means: list[float]
    node_stderrs: list[float]
    flagged: int


def estimate_mean(
    domain: LatticeDomain,
    potential: Potential,
    psi,
    x: Site,
    r_nodes: int,
    walks: int,
    seed: int,
    *,
    n_traj: int = 4,
    dt: float | None = None,
    burn_time: float | None = None,
    horizon: float | None = None,
) -> MeanEstimate:
    """E h(x) = int_0^1 E psi(exit site of the walk in the r*psi environment) dr.

    Midpoint quadrature over r; for each node a stationary field with boundary
    r*psi supplies the environments, and walks from x average psi at their
    exit site (psi itself, not r*psi).  Every walk starts at trajectory time 0
    of a stationarity-burned segment.
    """
    if r_nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    psi = as_boundary_array(domain, psi)
    bindex = {(int(i), int(j)): k for k, (i, j) in enumerate(domain.boundary_sites)}
    nodes = [(j + 0.5) / r_nodes for j in range(r_nodes)]
    walks_per_traj = max(1, walks // (r_nodes * n_traj))

    node_means: list[float] = []
    node_ses: list[float] = []
    flagged = 0
    total = 0
    for j, rnode in enumerate(nodes):
        envs = harvest_environments(
            domain, potential, rnode * psi, n_traj, seed, (3, j),
            dt=dt, burn_time=burn_time, horizon=horizon,
        )
        batches: list[list[float]] = []
        for ti, env in enumerate(envs):
            rng = rng_for(seed, WALK, 4, j, ti)
            vals = []
            for _ in range(walks_per_traj):
                w = simulate_walk(env, x, rng, record_path=False)
                total += 1
                if w.flagged:
                    flagged += 1
                else:
                    vals.append(float(psi[bindex[w.exit_site]]))
            batches.append(vals)
        m, se, _ = _batch_stats(batches)
        node_means.append(m)
        node_ses.append(se)
    if flagged > MAX_FLAGGED_FRACTION * total:
        raise EstimateRefusedError(f"{flagged}/{total} walks failed to exit the domain")
    value = float(np.mean(node_means))
    stderr = float(np.sqrt(np.sum(np.square(node_ses))) / len(nodes))
    return MeanEstimate(
        value=value, stderr=stderr, nodes=nodes, node_means=node_means,
        node_stderrs=node_ses, flagged=flagged,
    )
