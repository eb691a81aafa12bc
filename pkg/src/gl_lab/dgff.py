"""Exact sampling of the discrete Gaussian free field.

The sampler factorizes the interior precision operator -Delta_w (sparse,
banded under the row-major site ordering) rather than the covariance, and
draws fields by back-substituting a standard normal vector through the upper
Cholesky factor.  Draws have mean equal to the Delta_w-harmonic extension of
the boundary condition and covariance equal to the Green's table, which makes
this module the exact quadratic-case oracle for everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky_banded, solve_banded

from .errors import DomainError
from .harmonic import BondWeights, _as_weights, _precision_matrix, as_boundary_array, harmonic_extend
from .lattice import LatticeDomain


@dataclass
class DgffSampler:
    domain: LatticeDomain
    weights: BondWeights
    boundary: np.ndarray          # pinned boundary values, boundary-site order
    boundary_mean: np.ndarray     # harmonic extension of the boundary, interior order
    factor_ab: np.ndarray = field(repr=False)  # upper banded Cholesky of the precision
    bandwidth: int = 0

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One exact draw, interior-site order."""
        z = rng.standard_normal(self.domain.n_interior)
        return self.boundary_mean + self._solve_factor(z)

    def sample_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, n_interior) stack of exact draws (column solve, same law as n
        sequential draws)."""
        z = rng.standard_normal((self.domain.n_interior, n))
        flukes = self._solve_factor(z)
        return (self.boundary_mean[:, None] + flukes).T.copy()

    def _solve_factor(self, z):
        # precision P = R^T R with R upper banded; x = R^{-1} z has Cov = P^{-1}
        return solve_banded((0, self.bandwidth), self.factor_ab, z)

    def reconstruct_precision(self) -> np.ndarray:
        """Multiply the factor back (dense); for auditing the factorization."""
        n = self.domain.n_interior
        R = np.zeros((n, n))
        for off in range(self.bandwidth + 1):
            row = self.factor_ab[self.bandwidth - off]
            R += np.diag(row[off:], k=off)
        return R.T @ R


def build_sampler(domain: LatticeDomain, weights, boundary=0.0) -> DgffSampler:
    """Assemble the banded precision factorization and the boundary mean."""
    if domain.is_empty:
        raise DomainError("cannot build a sampler on an empty domain")
    w = _as_weights(domain, weights)
    bvals = as_boundary_array(domain, boundary)
    mat = _precision_matrix(domain, w).tocoo()

    bw = int(np.abs(mat.row - mat.col).max()) if mat.nnz else 0
    n = domain.n_interior
    ab = np.zeros((bw + 1, n))
    # scipy upper-banded layout: ab[bw + i - j, j] = P[i, j] for i <= j
    upper = mat.col >= mat.row
    ab[bw + mat.row[upper] - mat.col[upper], mat.col[upper]] = mat.data[upper]
    try:
        factor = cholesky_banded(ab, lower=False)
    except np.linalg.LinAlgError as e:
        raise DomainError(f"precision factorization failed: {e}") from e

    if np.any(bvals):
        mean = harmonic_extend(domain, bvals, w)
    else:
        mean = np.zeros(n)
    return DgffSampler(
        domain=domain, weights=w, boundary=bvals, boundary_mean=mean, factor_ab=factor, bandwidth=bw
    )


def sample(s: DgffSampler, rng: np.random.Generator) -> np.ndarray:
    return s.sample(rng)


def conditional_resample(
    s: DgffSampler, values: np.ndarray, w_sites, rng: np.random.Generator
) -> np.ndarray:
    """Redraw the field on W from its conditional law given the rest.

    W must be a subset of the interior.  The conditional law is a zero-boundary
    field on W plus the harmonic extension of the surrounding values into W,
    so feeding an unconditional sample in returns an unconditional sample out.
    """
    w_sites = {(int(i), int(j)) for (i, j) in w_sites}
    if not w_sites:
        return np.asarray(values, dtype=float).copy()
    for site in w_sites:
        if not s.domain.contains(site):
            raise DomainError(f"resample region site {site} is not interior")

    sub = LatticeDomain(w_sites, allow_disconnected=True)
    grid = s.domain.to_grid(np.asarray(values, dtype=float), s.boundary)

    # surrounding values on the sub-domain's boundary ring, read off the grid
    sub_bvals = np.empty(sub.n_boundary)
    for k, (i, j) in enumerate(sub.boundary_sites):
        r, c = s.domain.grid_pos((int(i), int(j)))
        sub_bvals[k] = grid[r, c]

    # restrict the global conductances to the sub-domain grid window
    r0, c0 = s.domain.grid_pos((sub.origin[0], sub.origin[1]))
    H, W = sub.grid_shape
    sub_w = BondWeights(
        sub,
        s.weights.wh[r0 : r0 + H, c0 : c0 + W - 1],
        s.weights.wv[r0 : r0 + H - 1, c0 : c0 + W],
    )
    sub_sampler = build_sampler(sub, sub_w, sub_bvals)
    draw = sub_sampler.sample(rng)

    out = np.asarray(values, dtype=float).copy()
    for k, (i, j) in enumerate(sub.interior_sites):
        out[s.domain.index_of((int(i), int(j)))] = draw[k]
    return out
