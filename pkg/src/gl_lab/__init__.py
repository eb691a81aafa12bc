"""gl-lab: a stochastic lattice laboratory for gradient interface models on Z^2.

Core modules: lattice geometry, interaction potentials, discrete elliptic
solvers, exact Gaussian-field sampling, Langevin dynamics with shared-noise
couplings, the dynamic-environment walk estimators, torus gradient Gibbs
states, and theorem-level experiments.  The runner package drives them from
JSON configs; the service package exposes the runner over HTTP; the CLI is a
thin client over both.
"""

__version__ = "0.1.0"
