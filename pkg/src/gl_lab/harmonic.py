"""Discrete elliptic machinery: weighted Laplacians, harmonic extension,
Green's functions, Dirichlet energies, and the obstacle-escape walk experiment.

Sign convention.  The weighted Laplacian acting on f at an interior site x is
Delta_w f(x) = sum over incident bonds b (oriented away from x) of
w(b) (f(y) - f(x)).  The positive-definite operator on fields vanishing at the
boundary is -Delta_w; Green's tables here are G = (-Delta_w)^{-1} restricted
to the interior, which is symmetric, positive, and equals the occupation-time
kernel of the rate-w walk killed at the boundary.  That is the object the
field covariance identities use; statements writing G = Delta^{-1} with
nonnegative covariance implicitly carry the same sign flip.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError
from .lattice import Bond, LatticeDomain, Orientation, Site
from .potentials import Potential
from .rngutil import BEURLING, rng_for

DIRECT_SOLVE_LIMIT = 2500  # interior sites; larger domains use relaxation


@dataclass(frozen=True)
class Beta:
    """Anisotropic weights: b1 on horizontal (e1) bonds, b2 on vertical (e2)."""

    b1: float
    b2: float

    def __post_init__(self):
        if not (self.b1 > 0 and self.b2 > 0):
            raise ValueError(f"beta components must be > 0, got ({self.b1}, {self.b2})")


class BondWeights:
    """Per-bond positive weights stored as dense per-orientation grids.

    wh[r, c] weights the horizontal bond joining grid columns c, c+1 in row r;
    wv[r, c] the vertical bond joining rows r, r+1.  Entries at positions that
    are not bonds of the domain are ignored by every consumer.
    """

    def __init__(self, domain: LatticeDomain, wh: np.ndarray, wv: np.ndarray):
        H, W = domain.grid_shape
        if wh.shape != (H, W - 1) or wv.shape != (H - 1, W):
            raise DomainError("weight grids do not match the domain grid")
        self.domain = domain
        self.wh = np.asarray(wh, dtype=float)
        self.wv = np.asarray(wv, dtype=float)

    @classmethod
    def uniform(cls, domain: LatticeDomain, c: float = 1.0) -> "BondWeights":
        if c <= 0:
            raise ValueError("weights must be positive")
        H, W = domain.grid_shape
        return cls(domain, np.full((H, W - 1), float(c)), np.full((H - 1, W), float(c)))

    @classmethod
    def from_beta(cls, domain: LatticeDomain, beta: Beta) -> "BondWeights":
        H, W = domain.grid_shape
        return cls(domain, np.full((H, W - 1), beta.b1), np.full((H - 1, W), beta.b2))

    @classmethod
    def from_gradient_grid(cls, domain: LatticeDomain, potential: Potential, grid: np.ndarray) -> "BondWeights":
        """Conductances V''(grad h) from a dense h-vee-phi grid."""
        return cls(
            domain,
            np.asarray(potential.ddv(grid[:, 1:] - grid[:, :-1]), dtype=float),
            np.asarray(potential.ddv(grid[1:, :] - grid[:-1, :]), dtype=float),
        )

    def weight(self, bond: Bond) -> float:
        b = bond.canonical()
        r, c = self.domain.grid_pos(b.tail)
        if b.orientation is Orientation.HORIZONTAL:
            return float(self.wh[r, c])
        return float(self.wv[r, c])


def _as_weights(domain: LatticeDomain, weights) -> BondWeights:
    if isinstance(weights, BondWeights):
        if weights.domain.grid_shape != domain.grid_shape:
            raise DomainError("weights were built for a different domain")
        return weights
    if isinstance(weights, Beta):
        return BondWeights.from_beta(domain, weights)
    raise TypeError(f"expected BondWeights or Beta, got {type(weights)!r}")


def as_boundary_array(domain: LatticeDomain, values) -> np.ndarray:
    """Boundary values as an (n_boundary,) array from scalar, array, or dict."""
    if np.isscalar(values):
        return np.full(domain.n_boundary, float(values))
    if isinstance(values, Mapping):
        out = np.empty(domain.n_boundary)
        for k, (i, j) in enumerate(domain.boundary_sites):
            key = (int(i), int(j))
            if key not in values:
                raise DomainError(f"boundary value missing at {key}")
            out[k] = float(values[key])
        return out
    arr = np.asarray(values, dtype=float)
    if arr.shape != (domain.n_boundary,):
        raise DomainError(f"expected {domain.n_boundary} boundary values, got shape {arr.shape}")
    return arr.copy()


# -- pointwise operators ------------------------------------------------------


def apply_delta_beta(field: Mapping[Site, float], x: Site, beta: Beta) -> float:
    """Five-point anisotropic Laplacian at x; all stencil values must exist."""
    i, j = x
    try:
        return beta.b1 * (field[(i + 1, j)] + field[(i - 1, j)] - 2.0 * field[x]) + beta.b2 * (
            field[(i, j + 1)] + field[(i, j - 1)] - 2.0 * field[x]
        )
    except KeyError as e:
        raise DomainError(f"stencil value missing at {e.args[0]}") from e


def delta_omega_grid(domain: LatticeDomain, weights: BondWeights, grid: np.ndarray) -> np.ndarray:
    """Delta_w f at every interior site, from a dense grid with boundary filled."""
    w = _as_weights(domain, weights)
    gh = grid[:, 1:] - grid[:, :-1]
    gv = grid[1:, :] - grid[:-1, :]
    fh = w.wh * gh
    fv = w.wv * gv
    out = np.zeros_like(grid)
    out[:, :-1] += fh
    out[:, 1:] -= fh
    out[:-1, :] += fv
    out[1:, :] -= fv
    return out[domain.interior_mask]


# -- harmonic extension -------------------------------------------------------


def _precision_matrix(domain: LatticeDomain, w: BondWeights) -> sp.csr_matrix:
    """-Delta_w on interior sites with Dirichlet boundary (crossing bonds in the diagonal)."""
    idx = domain.site_index
    rows, cols, vals = [], [], []
    diag = np.zeros(domain.n_interior)

    def add_bonds(mask, tail_idx, head_idx, wgrid):
        r, c = np.nonzero(mask)
        wv = wgrid[r, c]
        a = tail_idx[r, c]
        b = head_idx[r, c]
        both = (a >= 0) & (b >= 0)
        np.add.at(diag, a[a >= 0], wv[a >= 0])
        np.add.at(diag, b[b >= 0], wv[b >= 0])
        rows.extend(a[both])
        cols.extend(b[both])
        vals.extend(-wv[both])
        rows.extend(b[both])
        cols.extend(a[both])
        vals.extend(-wv[both])

    hmask = domain.hbond_int | domain.hbond_cross
    add_bonds(hmask, idx[:, :-1], idx[:, 1:], w.wh)
    vmask = domain.vbond_int | domain.vbond_cross
    add_bonds(vmask, idx[:-1, :], idx[1:, :], w.wv)

    n = domain.n_interior
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    mat = (mat + sp.diags(diag)).tocsr()
    return mat


def _boundary_rhs(domain: LatticeDomain, w: BondWeights, bvals: np.ndarray) -> np.ndarray:
    """sum over crossing bonds of w(b) * phi(boundary endpoint), per interior site."""
    bgrid = np.zeros(domain.grid_shape)
    bgrid[domain.boundary_mask] = bvals
    rhs = np.zeros(domain.n_interior)
    idx = domain.site_index

    r, c = np.nonzero(domain.hbond_cross)
    left_int = idx[r, c] >= 0
    np.add.at(rhs, idx[r, c][left_int], (w.wh[r, c] * bgrid[r, c + 1])[left_int])
    np.add.at(rhs, idx[r, c + 1][~left_int], (w.wh[r, c] * bgrid[r, c])[~left_int])

    r, c = np.nonzero(domain.vbond_cross)
    low_int = idx[r, c] >= 0
    np.add.at(rhs, idx[r, c][low_int], (w.wv[r, c] * bgrid[r + 1, c])[low_int])
    np.add.at(rhs, idx[r + 1, c][~low_int], (w.wv[r, c] * bgrid[r, c])[~low_int])
    return rhs


def harmonic_extend(
    domain: LatticeDomain,
    boundary_values,
    weights,
    tol: float = 1e-8,
    method: str = "auto",
) -> np.ndarray:
    """Solve Delta_w u = 0 in D with u = boundary_values on the boundary ring.

    Returns interior values aligned with domain.interior_sites.  Small systems
    go through a direct sparse solve; larger ones through red-black sweeps
    with an iteration cap of 100 * diameter^2.  The residual criterion is
    max |Delta_w u| <= tol * max(1, osc(boundary)).
    """
    if domain.is_empty:
        return np.zeros(0)
    w = _as_weights(domain, weights)
    bvals = as_boundary_array(domain, boundary_values)
    osc = float(bvals.max() - bvals.min()) if domain.n_boundary else 0.0
    target = tol * max(1.0, osc)

    if method == "auto":
        method = "direct" if domain.n_interior <= DIRECT_SOLVE_LIMIT else "relax"

    if method == "direct":
        mat = _precision_matrix(domain, w)
        rhs = _boundary_rhs(domain, w, bvals)
        u = spla.spsolve(mat.tocsc(), rhs)
        return np.asarray(u, dtype=float)

    # red-black relaxation on the dense grid
    grid = domain.to_grid(np.zeros(domain.n_interior), bvals, fill=0.0)
    if domain.n_boundary:
        grid[domain.interior_mask] = float(bvals.mean())
    H, W = domain.grid_shape
    rr, cc = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    checker = (rr + cc) % 2 == 0
    deg = np.zeros((H, W))
    deg[:, :-1] += w.wh * (domain.hbond_int | domain.hbond_cross)
    deg[:, 1:] += w.wh * (domain.hbond_int | domain.hbond_cross)
    deg[:-1, :] += w.wv * (domain.vbond_int | domain.vbond_cross)
    deg[1:, :] += w.wv * (domain.vbond_int | domain.vbond_cross)
    hb = w.wh * (domain.hbond_int | domain.hbond_cross)
    vb = w.wv * (domain.vbond_int | domain.vbond_cross)
    cap = 100 * domain.diameter**2
    interior = domain.interior_mask
    for sweep in range(cap):
        for color in (checker, ~checker):
            acc = np.zeros((H, W))
            acc[:, :-1] += hb * grid[:, 1:]
            acc[:, 1:] += hb * grid[:, :-1]
            acc[:-1, :] += vb * grid[1:, :]
            acc[1:, :] += vb * grid[:-1, :]
            upd = interior & color
            grid[upd] = acc[upd] / deg[upd]
        if sweep % 8 == 7 or sweep == cap - 1:
            res = np.abs(delta_omega_grid(domain, w, grid)).max()
            if res <= target:
                return grid[interior].copy()
    raise ConvergenceError(
        f"harmonic extension did not reach tol {target:g} in {cap} sweeps", residual=float(res)
    )


# -- Green's function ----------------------------------------------------------


@dataclass
class GreensTable:
    """Dense symmetric table G(x, y) = (-Delta_w)^{-1} on the interior."""

    domain: LatticeDomain
    matrix: np.ndarray

    def entry(self, x: Site, y: Site) -> float:
        return float(self.matrix[self.domain.index_of(x), self.domain.index_of(y)])

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


def greens_function(domain: LatticeDomain, weights) -> GreensTable:
    """Invert the interior precision operator; zero boundary condition built in."""
    if domain.is_empty:
        raise DomainError("Green's function needs a nonempty interior")
    w = _as_weights(domain, weights)
    mat = _precision_matrix(domain, w).toarray()
    try:
        from scipy.linalg import cho_factor, cho_solve

        g = cho_solve(cho_factor(mat), np.eye(domain.n_interior))
    except np.linalg.LinAlgError as e:
        raise DomainError(f"precision operator is singular: {e}") from e
    g = 0.5 * (g + g.T)
    return GreensTable(domain=domain, matrix=g)


# -- Dirichlet energy ----------------------------------------------------------


def dirichlet_inner(
    domain: LatticeDomain,
    weights,
    f_interior,
    g_interior,
    f_boundary=None,
    g_boundary=None,
    include_crossing: bool = True,
) -> float:
    """Weighted bond sum sum_b w(b) grad f(b) grad g(b).

    The bond set is D* plus, when include_crossing, the bonds joining D to its
    boundary ring (where the pinned boundary values enter).  Bonds lying inside
    the boundary ring never contribute.
    """
    w = _as_weights(domain, weights)
    fb = as_boundary_array(domain, f_boundary) if f_boundary is not None else np.zeros(domain.n_boundary)
    gb = as_boundary_array(domain, g_boundary) if g_boundary is not None else np.zeros(domain.n_boundary)
    fg = domain.to_grid(np.asarray(f_interior, dtype=float), fb)
    gg = domain.to_grid(np.asarray(g_interior, dtype=float), gb)

    hmask = domain.hbond_int | (domain.hbond_cross if include_crossing else False)
    vmask = domain.vbond_int | (domain.vbond_cross if include_crossing else False)
    fh = fg[:, 1:] - fg[:, :-1]
    gh = gg[:, 1:] - gg[:, :-1]
    fv = fg[1:, :] - fg[:-1, :]
    gv = gg[1:, :] - gg[:-1, :]
    total = float((w.wh * fh * gh)[hmask].sum() + (w.wv * fv * gv)[vmask].sum())
    return total


def dirichlet_energy(
    domain: LatticeDomain,
    weights,
    interior_values,
    boundary_values=None,
    include_crossing: bool = True,
) -> float:
    """sum_b w(b) (grad f(b))^2 over the configured bond set."""
    if include_crossing and boundary_values is None:
        boundary_values = 0.0
    return dirichlet_inner(
        domain,
        weights,
        interior_values,
        interior_values,
        f_boundary=boundary_values,
        g_boundary=boundary_values,
        include_crossing=include_crossing,
    )


# -- obstacle-escape (Beurling) experiment -------------------------------------

EXACT_STATE_LIMIT = 400


@dataclass
class BeurlingReport:
    x: Site
    r: float
    d: float
    walks: int
    escapes: int
    flagged: int
    p_hat: float
    stderr: float
    exact: float | None
    convention: str
    bound_applicable: bool


def _step_probs(beta: Beta, convention: str) -> np.ndarray:
    """Probabilities for steps (+e1, -e1, +e2, -e2)."""
    if convention == "horizontal":
        ph, pv = beta.b1, beta.b2
    elif convention == "updown":
        ph, pv = beta.b2, beta.b1
    else:
        raise ValueError(f"unknown axis convention {convention!r}")
    tot = 2.0 * (ph + pv)
    return np.array([ph, ph, pv, pv]) / tot


def _beurling_exact(x: Site, r: float, obstacle_mask, probs: np.ndarray) -> float | None:
    """Absorbing-chain escape probability when the transient set is small."""
    n = int(np.floor(r))
    coords = [
        (i, j)
        for i in range(-n, n + 1)
        for j in range(-n, n + 1)
        if i * i + j * j < r * r and not obstacle_mask(i + x[0], j + x[1])
    ]
    if len(coords) > EXACT_STATE_LIMIT:
        return None
    index = {s: k for k, s in enumerate(coords)}
    m = len(coords)
    A = np.eye(m)
    b = np.zeros(m)
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    for (i, j), k in index.items():
        for (di, dj), p in zip(steps, probs):
            ni, nj = i + di, j + dj
            if ni * ni + nj * nj >= r * r:
                b[k] += p  # escaped (ties between escape and hit go to escape)
            elif obstacle_mask(ni + x[0], nj + x[1]):
                pass  # absorbed by the obstacle, contributes 0
            else:
                A[k, index[(ni, nj)]] -= p
    u = np.linalg.solve(A, b)
    return float(u[index[(0, 0)]])


def beurling_experiment(
    obstacle: set[Site],
    x: Site,
    r: float,
    beta: Beta,
    walks: int,
    seed: int,
    convention: str = "horizontal",
    batch: int = 8192,
    step_cap_factor: int = 50,
) -> BeurlingReport:
    """Estimate P[escape to distance r before hitting the obstacle].

    The walk is the discrete-time embedded chain of the rate-(beta) walk on
    Z^2 (hitting events are invariant under the time change).  The axis
    convention records whether b1 drives horizontal (matching the anisotropic
    Laplacian here; the default) or vertical jumps.  Starting on the obstacle
    gives probability 0 exactly.  When the transient region holds at most
    400 states an absorbing-chain solve is returned alongside the Monte Carlo
    estimate.
    """
    if r <= 0:
        raise DomainError("need r > 0")
    if walks < 1:
        raise DomainError("need walks >= 1")
    obs = np.asarray(sorted(obstacle), dtype=np.int64)
    if obs.ndim != 2 or obs.shape[1] != 2:
        raise DomainError("obstacle must be a set of sites")

    d = float(np.sqrt(((obs - np.asarray(x)) ** 2).sum(axis=1).min()))
    probs = _step_probs(beta, convention)
    reach = float(np.sqrt(((obs - np.asarray(x)) ** 2).sum(axis=1).max()))
    bound_applicable = bool(reach >= r and d <= r)

    # obstacle membership over the local window [-n..n]^2 around x
    n = int(np.floor(r)) + 1
    mask = np.zeros((2 * n + 1, 2 * n + 1), dtype=bool)
    loc = obs - np.asarray(x)
    keep = (np.abs(loc[:, 0]) <= n) & (np.abs(loc[:, 1]) <= n)
    mask[loc[keep, 1] + n, loc[keep, 0] + n] = True

    def obstacle_at(i_abs, j_abs):
        i, j = i_abs - x[0], j_abs - x[1]
        if abs(i) > n or abs(j) > n:
            return False
        return bool(mask[j + n, i + n])

    if obstacle_at(*x):
        return BeurlingReport(x, r, 0.0, walks, 0, 0, 0.0, 0.0, 0.0, convention, bound_applicable)

    exact = _beurling_exact(x, r, obstacle_at, probs)

    offsets = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)
    cum = np.cumsum(probs)
    r2 = r * r
    step_cap = int(step_cap_factor * r * r) + 16
    escapes = 0
    flagged = 0
    done_walks = 0
    n_batches = (walks + batch - 1) // batch
    for bi in range(n_batches):
        m = min(batch, walks - bi * batch)
        rng = rng_for(seed, BEURLING, bi)
        pos = np.zeros((m, 2), dtype=np.int64)
        alive = np.ones(m, dtype=bool)
        for _ in range(step_cap):
            if not alive.any():
                break
            na = int(alive.sum())
            u = rng.random(na)
            dirs = np.searchsorted(cum, u)
            pos[alive] += offsets[dirs]
            p = pos[alive]
            dist2 = p[:, 0] ** 2 + p[:, 1] ** 2
            esc = dist2 >= r2
            inside = ~esc
            hit = np.zeros(na, dtype=bool)
            if inside.any():
                q = p[inside]
                hit_inside = mask[q[:, 1] + n, q[:, 0] + n]
                hit[inside] = hit_inside
            escapes += int(esc.sum())
            finished = esc | hit
            if finished.any():
                idx = np.nonzero(alive)[0]
                alive[idx[finished]] = False
        flagged += int(alive.sum())
        done_walks += m

    effective = walks - flagged
    p_hat = escapes / effective if effective else 0.0
    stderr = float(np.sqrt(p_hat * (1.0 - p_hat) / effective)) if effective else 0.0
    return BeurlingReport(x, r, d, walks, escapes, flagged, p_hat, stderr, exact, convention, bound_applicable)


def half_line_obstacle(x: Site, d: int, length: int) -> set[Site]:
    """Horizontal half-line at vertical distance d below x, extending right."""
    return {(x[0] + k, x[1] - d) for k in range(0, length + 1)}
