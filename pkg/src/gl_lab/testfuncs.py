"""Smooth test functions on the unit square with analytic gradients.

The experiment domains are mapped affinely onto [0,1]^2: a domain whose
interior spans columns [imin, imax] sends site i to (i - imin + 1)/(imax -
imin + 2), so the boundary rings land exactly on 0 and 1.  Tensor sine
products are Dirichlet eigenfunctions there, giving closed-form weighted
Dirichlet norms; bump-multiplied variants are compactly supported inside the
open square.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import LatticeDomain


@dataclass(frozen=True)
class TestFunction:
    name: str
    f: Callable
    grad: Callable  # (x, y) -> (df/dx, df/dy), vectorized
    compact_support: bool = False


def sine_product(kx: int = 1, ky: int = 1) -> TestFunction:
    """sin(kx pi x) sin(ky pi y); vanishes on the boundary of the square."""

    def f(x, y):
        return np.sin(kx * np.pi * x) * np.sin(ky * np.pi * y)

    def grad(x, y):
        return (
            kx * np.pi * np.cos(kx * np.pi * x) * np.sin(ky * np.pi * y),
            ky * np.pi * np.sin(kx * np.pi * x) * np.cos(ky * np.pi * y),
        )

    return TestFunction(name=f"sine_{kx}{ky}", f=f, grad=grad)


def bump_sine(kx: int = 1, ky: int = 1, margin: float = 0.1) -> TestFunction:
    """Sine product times a C^inf bump vanishing outside [margin, 1-margin]^2."""

    def w(t):
        t = np.asarray(t, dtype=float)
        s = (t - margin) / (1.0 - 2.0 * margin)
        inside = (s > 0) & (s < 1)
        out = np.zeros_like(s)
        ss = s[inside]
        out[inside] = np.exp(-1.0 / (ss * (1.0 - ss)) + 4.0)
        return out

    def dw(t):
        t = np.asarray(t, dtype=float)
        s = (t - margin) / (1.0 - 2.0 * margin)
        inside = (s > 0) & (s < 1)
        out = np.zeros_like(s)
        ss = s[inside]
        out[inside] = (
            np.exp(-1.0 / (ss * (1.0 - ss)) + 4.0)
            * (1.0 - 2.0 * ss)
            / (ss * (1.0 - ss)) ** 2
            / (1.0 - 2.0 * margin)
        )
        return out

    base = sine_product(kx, ky)

    def f(x, y):
        return base.f(x, y) * w(x) * w(y)

    def grad(x, y):
        gx, gy = base.grad(x, y)
        return (
            gx * w(x) * w(y) + base.f(x, y) * dw(x) * w(y),
            gy * w(x) * w(y) + base.f(x, y) * w(x) * dw(y),
        )

    return TestFunction(name=f"bump_{kx}{ky}", f=f, grad=grad, compact_support=True)


def unit_square_map(domain: LatticeDomain):
    """Affine map sending domain sites into [0,1]^2 (boundary rings at 0 and 1)."""
    pts = domain.interior_sites
    imin, imax = int(pts[:, 0].min()), int(pts[:, 0].max())
    jmin, jmax = int(pts[:, 1].min()), int(pts[:, 1].max())
    sx = 1.0 / (imax - imin + 2)
    sy = 1.0 / (jmax - jmin + 2)

    def to_unit(i, j):
        return ((np.asarray(i) - imin + 1) * sx, (np.asarray(j) - jmin + 1) * sy)

    return to_unit, (sx, sy)


def sample_on_grid(tf: TestFunction, domain: LatticeDomain) -> np.ndarray:
    """g evaluated at every grid position of the domain's dense grid."""
    to_unit, _ = unit_square_map(domain)
    H, W = domain.grid_shape
    i0, j0 = domain.origin
    ii = i0 + np.arange(W)
    jj = j0 + np.arange(H)
    X, Y = to_unit(ii[None, :], jj[:, None])
    return np.asarray(tf.f(X, Y), dtype=float)
