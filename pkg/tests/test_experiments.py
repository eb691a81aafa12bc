import numpy as np
import pytest

from gl_lab.dgff import build_sampler
from gl_lab.experiments import (
    ExactGaussianSource,
    LangevinSource,
    brascamp_lieb_check,
    clt_experiment,
    coupling_experiment,
    dirichlet_ip_beta,
    entropy_estimate,
    lag1_autocorrelation,
    mean_harmonic_experiment,
    xi_batch,
    xi_functional,
    xi_site_vector,
)
from gl_lab.harmonic import Beta, BondWeights, greens_function, harmonic_extend
from gl_lab.lattice import build_rectangle
from gl_lab.potentials import cosine_perturbed, quadratic
from gl_lab.rngutil import rng_for
from gl_lab.testfuncs import bump_sine, sample_on_grid, sine_product, unit_square_map


@pytest.fixture(scope="module")
def rect10():
    return build_rectangle(10, 10)


class TestXiFunctional:
    def test_pure_tilt_gives_zero(self, rect10):
        d = rect10
        u = (0.7, -0.3)
        h = u[0] * d.interior_sites[:, 0] + u[1] * d.interior_sites[:, 1]
        g = sample_on_grid(sine_product(1, 1), d)
        assert xi_functional(d, h, g, a=(1.3, 0.8), u=u) == pytest.approx(0.0, abs=1e-12)

    def test_constant_test_function_gives_zero(self, rect10):
        d = rect10
        h = rng_for(1).standard_normal(d.n_interior)
        g = np.ones(d.grid_shape)
        assert xi_functional(d, h, g) == pytest.approx(0.0, abs=1e-12)

    def test_linearity(self, rect10):
        d = rect10
        h = rng_for(2).standard_normal(d.n_interior)
        g1 = sample_on_grid(sine_product(1, 1), d)
        g2 = sample_on_grid(sine_product(2, 1), d)
        x1 = xi_functional(d, h, g1)
        x2 = xi_functional(d, h, g2)
        assert xi_functional(d, h, g1 + g2) == pytest.approx(x1 + x2, abs=1e-10)
        assert xi_functional(d, h, 3.0 * g1) == pytest.approx(3.0 * x1, abs=1e-10)

    def test_variance_matches_dense_oracle(self, rect10):
        # Var(xi) over exact Gaussian draws vs nu^T G nu
        d = rect10
        g_grid = sample_on_grid(sine_product(1, 1), d)
        nu = xi_site_vector(d, g_grid)
        G = greens_function(d, BondWeights.uniform(d)).matrix
        oracle = float(nu @ G @ nu)
        draws = build_sampler(d, BondWeights.uniform(d)).sample_many(6000, rng_for(3))
        xis = xi_batch(d, draws, g_grid)
        se = oracle * np.sqrt(2.0 / len(xis))
        assert abs(xis.var(ddof=1) - oracle) <= 4 * se


class TestDirichletIp:
    def test_ground_mode_norm(self):
        r = dirichlet_ip_beta(sine_product(1, 1), sine_product(1, 1), Beta(1, 1))
        assert r.value == pytest.approx(np.pi**2 / 2, rel=1e-6)
        assert r.converged

    def test_orthogonality(self):
        r = dirichlet_ip_beta(sine_product(1, 1), sine_product(2, 1), Beta(1, 1))
        assert r.value == pytest.approx(0.0, abs=1e-10)
        assert r.converged

    def test_bilinearity(self):
        g1, g2 = sine_product(1, 1), sine_product(2, 2)
        a = dirichlet_ip_beta(g1, g2, Beta(1.5, 0.5)).value

        double = lambda x, y: tuple(2 * np.asarray(t) for t in g1.grad(x, y))
        from gl_lab.testfuncs import TestFunction

        g1x2 = TestFunction("2g1", lambda x, y: 2 * g1.f(x, y), double)
        assert dirichlet_ip_beta(g1x2, g2, Beta(1.5, 0.5)).value == pytest.approx(2 * a, abs=1e-9)

    def test_anisotropic_weights(self):
        # int (b1 (pi cos pi x sin pi y)^2 + b2 (...)^2) = (b1 + b2) pi^2 / 4
        r = dirichlet_ip_beta(sine_product(1, 1), sine_product(1, 1), Beta(2.0, 0.5))
        assert r.value == pytest.approx((2.0 + 0.5) * np.pi**2 / 4, rel=1e-6)

    def test_bump_variant_compactly_supported(self):
        b = bump_sine(1, 1, margin=0.15)
        x = np.array([0.05, 0.1, 0.9, 0.99])
        assert np.all(b.f(x, x) == 0.0)
        r = dirichlet_ip_beta(b, b, Beta(1, 1), mesh=128)
        assert r.value > 0 and r.converged

    def test_mesh_floor(self):
        with pytest.raises(ValueError):
            dirichlet_ip_beta(sine_product(1, 1), sine_product(1, 1), Beta(1, 1), mesh=8)


class TestCltExperiment:
    def test_quadratic_is_gaussian(self, rect10):
        d = rect10
        rep = clt_experiment(
            d, ExactGaussianSource(d), [sine_product(1, 1), sine_product(2, 1)],
            n_samples=5000, seed=4,
        )
        f0 = rep.functions[0]
        assert abs(f0.skew_z) < 3.5 and abs(f0.kurt_z) < 3.5
        assert rep.decorrelation_ok
        assert f0.normality_p > 0.001

    def test_quadratic_mean_prediction_with_linear_boundary(self, rect10):
        # boundary f(x) = i exercises the harmonic-shift term; for the exact
        # Gaussian field the MC mean must match xi(harmonic extension of f)
        d = rect10
        fvals = d.boundary_sites[:, 0].astype(float)
        src = ExactGaussianSource(d, boundary=fvals)
        rep = clt_experiment(
            d, src, [sine_product(1, 1)], n_samples=4000, seed=5,
            mean_check_boundary=fvals,
        )
        mp = rep.mean_prediction
        assert abs(mp["z"]) < 4.0
        # continuum analog: F = x has a vanishing cross term against sines
        to_unit, (sx, _) = unit_square_map(d)
        pred_continuum = 0.0
        assert mp["predicted"] == pytest.approx(pred_continuum, abs=0.15)

    def test_autocorrelation_audit_flags_short_gaps(self, rect10):
        d = rect10
        src = LangevinSource(
            d, cosine_perturbed(), 0.0, dt=1 / 24, burn_time=60.0,
            thin_steps=40, groups=4, chains_per_group=1,
        )
        rep = clt_experiment(d, src, [sine_product(1, 1)], n_samples=400, seed=6)
        assert rep.functions[0].lag1_autocorr > 0.1
        assert not rep.decorrelation_ok  # 40 steps is well under a relaxation time

    def test_autocorrelation_audit_passes_long_gaps(self, rect10):
        d = rect10
        src = LangevinSource(
            d, cosine_perturbed(), 0.0, dt=1 / 24, burn_time=60.0,
            thin_steps=500, groups=4, chains_per_group=1,
        )
        rep = clt_experiment(d, src, [sine_product(1, 1)], n_samples=400, seed=6)
        assert abs(rep.functions[0].lag1_autocorr) <= 0.1
        assert rep.decorrelation_ok

    def test_lag1_autocorrelation_helper(self):
        rng = rng_for(8)
        iid = rng.standard_normal(4000)
        assert abs(lag1_autocorrelation(iid)) < 0.06
        ar = np.empty(4000)
        ar[0] = 0.0
        for k in range(1, 4000):
            ar[k] = 0.8 * ar[k - 1] + rng.standard_normal()
        assert lag1_autocorrelation(ar) > 0.7


class TestMeanHarm:
    def test_quadratic_mean_is_harmonic(self):
        # DGFF mean is exactly harmonic: deviation must sit inside the budget
        d = build_rectangle(16, 16)
        bvals = 0.5 * np.sin(2 * np.pi * d.boundary_sites[:, 0] / 16)
        src = ExactGaussianSource(d, boundary=bvals)
        samples = src.draw(3000, seed=9)
        rep = mean_harmonic_experiment(d, samples, Beta(1, 1), r=4.0)
        assert rep.max_deviation <= 3.0 * rep.error_budget
        assert rep.n_inner == 8 * 8

    def test_empty_inner_region_rejected(self):
        d = build_rectangle(6, 6)
        samples = rng_for(1).standard_normal((50, d.n_interior))
        with pytest.raises(ValueError):
            mean_harmonic_experiment(d, samples, Beta(1, 1), r=5.0)

    def test_beta_scale_invariance_of_deviations(self):
        d = build_rectangle(12, 12)
        bvals = 0.5 * np.sin(2 * np.pi * d.boundary_sites[:, 0] / 12)
        samples = ExactGaussianSource(d, boundary=bvals).draw(600, seed=19)
        r1 = mean_harmonic_experiment(d, samples, Beta(1, 1), r=3.0)
        r2 = mean_harmonic_experiment(d, samples, Beta(5, 5), r=3.0)
        assert r1.max_deviation == pytest.approx(r2.max_deviation, abs=1e-7)

    def test_boundary_class_membership(self):
        from gl_lab.experiments import in_boundary_class

        d = build_rectangle(16, 16)
        small = 0.5 * np.sin(2 * np.pi * d.boundary_sites[:, 0] / 16)
        assert in_boundary_class(d, small)
        huge = 1e4 * np.ones(d.n_boundary)
        assert not in_boundary_class(d, huge)
        tilted = 2.0 * d.boundary_sites[:, 0] + 0.3
        assert in_boundary_class(d, tilted, u=(2.0, 0.0))


class TestCouplingExperiment:
    def test_identical_boundaries_collapse(self):
        d = build_rectangle(8, 8)
        bvals = np.sin(2 * np.pi * d.boundary_sites[:, 0] / 8)
        rep = coupling_experiment(
            d, cosine_perturbed(), bvals, bvals, r=2.0, n_snapshots=4,
            thin_steps=30, burn_time=60.0, dt=1 / 24, seed=10,
        )
        assert rep.osc == 0.0
        assert rep.exceedance_fraction == 0.0
        assert max(rep.deviations) < 1e-6

    def test_quadratic_difference_exactly_harmonic(self):
        # noise cancels; the difference relaxes to the discrete harmonic
        # extension, so the inner-region deviation is solver-level only
        d = build_rectangle(12, 12)
        psi = np.sin(2 * np.pi * d.boundary_sites[:, 0] / 12)
        rep = coupling_experiment(
            d, quadratic(), psi, np.zeros(d.n_boundary), r=3.0,
            n_snapshots=3, thin_steps=10, burn_time=10.0 * d.diameter**2,
            dt=0.05, seed=11,
        )
        assert max(rep.deviations) < 1e-6
        assert rep.exceedance_fraction == 0.0


class TestEntropy:
    def test_identical_boundaries_zero(self):
        d = build_rectangle(8, 8)
        bvals = np.sin(2 * np.pi * d.boundary_sites[:, 0] / 8)
        rep = entropy_estimate(
            d, cosine_perturbed(), bvals, bvals, n_samples=5,
            thin_steps=10, burn_time=20.0, dt=1 / 24, seed=12,
        )
        assert rep.main_term == pytest.approx(0.0, abs=1e-15)
        assert rep.remainder_bound == pytest.approx(0.0, abs=1e-15)
        assert rep.pinsker_tv_bound == 0.0

    def test_quadratic_main_term_vanishes(self):
        # V'' constant: summing by parts against the harmonic g annihilates
        # the main term pathwise; remainder is zero because L = 0
        d = build_rectangle(10, 10)
        zeta = 0.4 * np.sin(2 * np.pi * d.boundary_sites[:, 0] / 10)
        rep = entropy_estimate(
            d, quadratic(), zeta, np.zeros(d.n_boundary), n_samples=40,
            thin_steps=30, burn_time=5.0 * d.diameter**2, dt=0.05, seed=13,
        )
        assert abs(rep.main_term) <= 3.0 * rep.main_stderr + rep.zero_tolerance
        assert rep.remainder_bound == 0.0

    def test_monotone_in_perturbation(self):
        d = build_rectangle(12, 12)
        cos = cosine_perturbed()
        reps = []
        for amp in (0.1, 0.2):
            zeta = amp * np.sin(2 * np.pi * d.boundary_sites[:, 0] / 12)
            reps.append(
                entropy_estimate(
                    d, cos, zeta, np.zeros(d.n_boundary), n_samples=60,
                    thin_steps=60, burn_time=400.0, dt=1 / 24, seed=14,
                )
            )
        assert reps[0].total_bound < reps[1].total_bound
        assert reps[0].pinsker_tv_bound <= reps[1].pinsker_tv_bound


class TestBrascampLieb:
    def test_quadratic_equality_within_error(self):
        d = build_rectangle(9, 9)
        src = ExactGaussianSource(d)
        samples = src.draw(4000, seed=15)
        rng = rng_for(16)
        nus = [rng.standard_normal(d.n_interior) for _ in range(3)]
        rep = brascamp_lieb_check(d, samples, nus, a_lower=1.0)
        assert rep.all_pass
        for c in rep.cases:
            # same law: the bound is attained within noise
            assert c.var_model == pytest.approx(c.gaussian_bound, abs=5 * c.var_stderr)

    def test_zero_vector(self):
        d = build_rectangle(5, 5)
        samples = rng_for(17).standard_normal((200, d.n_interior))
        rep = brascamp_lieb_check(d, samples, [np.zeros(d.n_interior)], 1.0)
        assert rep.cases[0].var_model == 0.0 and rep.cases[0].gaussian_bound == 0.0
        assert rep.all_pass
