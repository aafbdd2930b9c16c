import numpy as np
import pytest

from ppr.errors import ConfigurationError, DomainError
from ppr.geom import CovariateField, Window
from ppr.simulate import (RngSeed, ThomasParams, calibrate_intercept, dummy_process,
                          gaussian_kernel, gen_scenario_covariates, scenario2_gram,
                          simulate_poisson, simulate_thomas, synthetic_terrain)

WIN = Window(0.0, 1000.0, 0.0, 500.0)


def terrain():
    return synthetic_terrain(WIN, RngSeed(123))


class TestRngSeed:
    def test_determinism(self):
        a = RngSeed(9, 3).generator().standard_normal(8)
        b = RngSeed(9, 3).generator().standard_normal(8)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = RngSeed(9, 0).generator().standard_normal(8)
        b = RngSeed(9, 1).generator().standard_normal(8)
        assert not np.array_equal(a, b)

    def test_children_differ(self):
        a = RngSeed(9, 0).child(0).standard_normal(8)
        b = RngSeed(9, 0).child(1).standard_normal(8)
        assert not np.array_equal(a, b)


class TestSimulatePoisson:
    def test_zero_intensity_empty(self):
        pat = simulate_poisson(lambda p: np.zeros(len(p)), 0.1, WIN, RngSeed(1))
        assert len(pat) == 0

    def test_constant_intensity_mean(self):
        c, reps = 0.002, 400
        counts = [len(simulate_poisson(lambda p: np.full(len(p), c), c, WIN, RngSeed(2, r)))
                  for r in range(reps)]
        target = c * WIN.area
        assert abs(np.mean(counts) - target) < 4 * np.sqrt(target / reps)

    def test_no_thinning_at_bound(self):
        # intensity == bound accepts every proposal
        c = 0.001
        rng = RngSeed(3)
        pat = simulate_poisson(lambda p: np.full(len(p), c), c, WIN, rng)
        n_raw = rng.generator().poisson(c * WIN.area)
        assert len(pat) == n_raw

    def test_bound_violation(self):
        with pytest.raises(DomainError):
            simulate_poisson(lambda p: np.full(len(p), 2.0), 1.0, WIN, RngSeed(4))

    def test_loglinear_mean_matches_pixel_sum(self):
        elev, grad = terrain()
        beta = np.array([-7.0, 2.0, 0.75])
        mu = elev.pixel_area * np.exp(
            beta[0] + beta[1] * elev.values + beta[2] * grad.values).sum()
        bound = float(np.exp(beta[0] + (beta[1] * elev.values + beta[2] * grad.values).max()))

        def lam(pts):
            return np.exp(beta[0] + beta[1] * elev.lookup(pts) + beta[2] * grad.lookup(pts))

        reps = 200
        counts = [len(simulate_poisson(lam, bound, WIN, RngSeed(5, r))) for r in range(reps)]
        assert abs(np.mean(counts) - mu) < 4 * np.sqrt(mu / reps)


class TestCalibrateIntercept:
    def test_constant_intensity(self):
        b0 = calibrate_intercept(np.zeros(2), list(terrain()), WIN, 1600.0)
        assert b0 == pytest.approx(np.log(1600.0 / 500000.0), abs=1e-12)
        assert b0 == pytest.approx(-5.744604469, abs=1e-6)

    def test_doubling_target_adds_log2(self):
        covs = list(terrain())
        slopes = np.array([2.0, 0.75])
        b1 = calibrate_intercept(slopes, covs, WIN, 1600.0)
        b2 = calibrate_intercept(slopes, covs, WIN, 3200.0)
        assert b2 - b1 == pytest.approx(np.log(2.0), abs=1e-12)

    def test_pixel_sum_oracle(self):
        covs = list(terrain())
        slopes = np.array([2.0, 0.75])
        b0 = calibrate_intercept(slopes, covs, WIN, 1600.0)
        # independent pixel-sum of the calibrated intensity
        lin = slopes[0] * covs[0].values + slopes[1] * covs[1].values
        total = covs[0].pixel_area * np.exp(b0 + lin).sum()
        assert abs(total - 1600.0) < 1e-10 * 1600.0


class TestThomas:
    def test_kernel_value_at_origin(self):
        assert gaussian_kernel(np.array([0.0, 0.0]), 20.0) == pytest.approx(
            1.0 / (2 * np.pi * 400.0))
        assert gaussian_kernel(np.array([0.0, 0.0]), 20.0) == pytest.approx(3.9789e-4,
                                                                            rel=1e-4)

    def test_kernel_integrates_to_one(self):
        xs = np.linspace(-100, 100, 401)
        gx, gy = np.meshgrid(xs, xs)
        d = np.column_stack([gx.ravel(), gy.ravel()])
        total = gaussian_kernel(d, 20.0).sum() * 0.5**2
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_parameter_validation(self):
        with pytest.raises(DomainError):
            ThomasParams(0.0, 20.0, np.zeros(1))
        with pytest.raises(DomainError):
            ThomasParams(5e-4, -1.0, np.zeros(1))

    def test_determinism(self):
        covs = list(terrain())
        slopes = np.array([2.0, 0.75])
        b0 = calibrate_intercept(slopes, covs, WIN, 400.0)
        params = ThomasParams(5e-4, 20.0, np.array([b0, *slopes]))
        a = simulate_thomas(params, covs, WIN, RngSeed(6, 5))
        b = simulate_thomas(params, covs, WIN, RngSeed(6, 5))
        assert np.array_equal(a.points, b.points)

    def test_subrectangle_intensity(self):
        # Monte Carlo count in a fixed subrectangle matches the intensity
        # integral within 4 standard errors
        covs = list(terrain())
        slopes = np.array([2.0, 0.75])
        b0 = calibrate_intercept(slopes, covs, WIN, 800.0)
        params = ThomasParams(5e-4, 20.0, np.array([b0, *slopes]))
        sub = Window(200.0, 700.0, 100.0, 400.0)
        lin = b0 + slopes[0] * covs[0].values + slopes[1] * covs[1].values
        cx, cy = covs[0].pixel_centers()
        in_sub = (cx[None, :] >= sub.x_min) & (cx[None, :] < sub.x_max) \
            & (cy[:, None] >= sub.y_min) & (cy[:, None] < sub.y_max)
        target = covs[0].pixel_area * np.exp(lin[in_sub]).sum()
        reps = 120
        counts = [len(simulate_thomas(params, covs, WIN, RngSeed(7, r)).subset(sub))
                  for r in range(reps)]
        se = np.std(counts, ddof=1) / np.sqrt(reps)
        assert abs(np.mean(counts) - target) < 4 * se


class TestScenarios:
    def test_gram_entries(self):
        om = scenario2_gram(20)
        assert om[0, 1] == 0.0 and om[1, 0] == 0.0
        assert om[0, 2] == pytest.approx(0.49)
        assert np.allclose(om, om.T)

    def test_cholesky_identity(self):
        om = scenario2_gram(20)
        v = np.linalg.cholesky(om).T
        assert np.allclose(v, np.triu(v))
        assert np.abs(v.T @ v - om).max() < 1e-10

    def test_scenario1_shapes(self):
        covs = gen_scenario_covariates(1, RngSeed(8), aux_rasters=list(terrain()))
        assert len(covs) == 20
        # base rasters standardized
        assert abs(covs[0].values.mean()) < 1e-12
        assert abs(covs[0].values.std(ddof=1) - 1) < 1e-12

    def test_scenario2_marginals(self):
        covs = gen_scenario_covariates(2, RngSeed(9), aux_rasters=list(terrain()))
        assert len(covs) == 20
        for j, f in enumerate(covs):
            assert abs(f.values.std(ddof=1) - 1.0) < 0.15, f"covariate {j}"
        # first two transformed covariates coincide with the base rasters
        elev = terrain()[0]
        assert np.allclose(covs[0].values, elev.values)

    def test_scenario_requires_rasters(self):
        with pytest.raises(ConfigurationError):
            gen_scenario_covariates(1, RngSeed(10))
        with pytest.raises(ConfigurationError):
            gen_scenario_covariates(3, RngSeed(10), aux_rasters=list(terrain()))

    def test_scenario3_standardizes(self):
        rng = np.random.default_rng(11)
        aux = [CovariateField(WIN, rng.normal(3, 2, (10, 20))) for _ in range(15)]
        covs = gen_scenario_covariates(3, RngSeed(11), aux_rasters=aux)
        assert len(covs) == 15
        for f in covs:
            assert abs(f.values.mean()) < 1e-12
            assert abs(f.values.std(ddof=1) - 1.0) < 1e-12


class TestDummyProcess:
    def test_binomial_exact_count(self):
        assert len(dummy_process("binomial", 20, WIN, RngSeed(12))) == 400

    def test_stratified_one_per_cell(self):
        win = Window(0, 1, 0, 1)
        pat = dummy_process("stratified", 2, win, RngSeed(13))
        assert len(pat) == 4
        quadrants = set()
        for x, y in pat.points:
            quadrants.add((int(x * 2), int(y * 2)))
        assert len(quadrants) == 4

    def test_poisson_mean(self):
        reps = 300
        counts = [len(dummy_process("poisson", 40, WIN, RngSeed(14, r))) for r in range(reps)]
        assert abs(np.mean(counts) - 1600) < 3 * 40 / np.sqrt(reps)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            dummy_process("hexagonal", 10, WIN, RngSeed(15))


class TestLogIntensityBound:
    def test_shared_grid_exact(self):
        covs = list(terrain())
        beta = np.array([-7.0, 2.0, 0.75])
        from ppr.simulate import log_intensity_bound
        want = (-7.0 + 2.0 * covs[0].values + 0.75 * covs[1].values).max()
        assert log_intensity_bound(beta, covs) == want

    def test_mixed_grids_conservative(self):
        from ppr.simulate import log_intensity_bound
        a = CovariateField(WIN, np.array([[0.0, 1.0]]))
        b = CovariateField(WIN, np.array([[1.0], [-1.0], [0.5]]))
        bound = log_intensity_bound(np.array([0.2, 1.0, 2.0]), [a, b])
        assert bound == 0.2 + 1.0 + 2.0
