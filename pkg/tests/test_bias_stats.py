import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awd3.bias_stats import (
    DegenerateModelError,
    GaussianErrorModel,
    ParameterDomainError,
    default_scan_grid,
    expected_min,
    expected_weighted_bias,
    mc_min_oracle,
    optimal_beta,
)

# brute-force 2-D grid quadrature (3601^2 nodes on [-9, 9]^2 in standard-normal
# coordinates) of E[min(D1, D2)] for mu=(0.3, -0.2), sigma=(1.0, 0.5), rho=0.4
QUADRATURE_MIN = -0.37060809098946423

mus = st.floats(-5, 5)
sigmas = st.floats(0.05, 5)
rhos = st.floats(-1, 1)


@st.composite
def models(draw):
    return GaussianErrorModel(draw(mus), draw(mus), draw(sigmas), draw(sigmas), draw(rhos))


class TestModel:
    @pytest.mark.parametrize("kwargs", [
        dict(sigma1=0.0), dict(sigma2=-1.0), dict(rho=1.01), dict(rho=-1.5), dict(mu1=math.nan),
    ])
    def test_rejects_invalid_parameters(self, kwargs):
        base = dict(mu1=0.0, mu2=0.0, sigma1=1.0, sigma2=1.0, rho=0.0)
        with pytest.raises(ParameterDomainError):
            GaussianErrorModel(**{**base, **kwargs})

    def test_sigma_d(self):
        m = GaussianErrorModel(0, 0, 1.0, 0.5, 0.4)
        assert m.sigma_d == pytest.approx(math.sqrt(1 + 0.25 - 2 * 0.4 * 0.5), rel=1e-15)

    def test_sigma_d_zero_only_for_identical_perfectly_correlated(self):
        assert GaussianErrorModel.iid(0.0, 2.0, 1.0).sigma_d == 0.0
        assert GaussianErrorModel(0, 0, 2.0, 1.0, 1.0).sigma_d == pytest.approx(1.0)
        assert GaussianErrorModel.iid(0.0, 2.0, 0.999).sigma_d > 0


class TestExpectedMin:
    @pytest.mark.parametrize("s", [0.1, 1.0, 10.0, 3.7])
    def test_iid_zero_mean(self, s):
        assert abs(expected_min(GaussianErrorModel.iid(0.0, s)) + s / math.sqrt(math.pi)) <= 1e-12

    @pytest.mark.parametrize("m,s", [(0.0, 1.0), (1.5, 0.3), (-2.0, 4.0)])
    def test_identical_variables(self, m, s):
        assert expected_min(GaussianErrorModel.iid(m, s, rho=1.0)) == m

    def test_degenerate_shift_returns_smaller_mean(self):
        assert expected_min(GaussianErrorModel(0.4, -0.1, 1.0, 1.0, 1.0)) == -0.1

    def test_matches_quadrature(self):
        m = GaussianErrorModel(0.3, -0.2, 1.0, 0.5, 0.4)
        assert expected_min(m) == pytest.approx(QUADRATURE_MIN, abs=1e-9)

    def test_matches_monte_carlo(self):
        m = GaussianErrorModel(0.3, -0.2, 1.0, 0.5, 0.4)
        mean, se = mc_min_oracle(m, 10_000_000, seed=17)
        assert abs(expected_min(m) - mean) <= 3 * se

    @settings(max_examples=300, deadline=None)
    @given(models())
    def test_dominated_by_min_and_average(self, m):
        e = expected_min(m)
        assert e <= min(m.mu1, m.mu2) + 1e-12
        assert e <= m.mean_average + 1e-12

    @settings(max_examples=300, deadline=None)
    @given(models())
    def test_swap_symmetry(self, m):
        assert expected_min(m.swapped()) == pytest.approx(expected_min(m), abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(models(), st.floats(-10, 10))
    def test_translation(self, m, c):
        assert expected_min(m.shifted(c)) == pytest.approx(expected_min(m) + c, abs=1e-11)


class TestWeightedBias:
    @settings(max_examples=100, deadline=None)
    @given(models())
    def test_endpoints(self, m):
        assert expected_weighted_bias(m, 0.0) == pytest.approx(m.mean_average, abs=1e-15)
        assert expected_weighted_bias(m, 1.0) == pytest.approx(expected_min(m), abs=1e-15)

    def test_optimal_beta_example(self):
        m = GaussianErrorModel.iid(0.5, 1.0)
        beta = optimal_beta(m)
        # sqrt(2 pi) / sqrt(2) * 0.5 = sqrt(pi) / 2
        assert beta == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-15)
        assert beta == pytest.approx(0.8862, abs=5e-5)
        assert abs(expected_weighted_bias(m, beta)) <= 1e-12

    @settings(max_examples=300, deadline=None)
    @given(mus, sigmas, st.floats(-0.99, 0.99))
    def test_optimal_beta_zeroes_bias(self, mu, s, rho):
        m = GaussianErrorModel.iid(mu, s, rho)
        assert abs(expected_weighted_bias(m, optimal_beta(m))) <= 1e-10

    def test_unbiased_needs_no_min(self):
        assert optimal_beta(GaussianErrorModel.iid(0.0, 1.0)) == 0.0

    def test_inverted_for_beta_one(self):
        s = 1.3
        sigma = s / math.sqrt(2)  # iid, rho = 0 gives sigma_d = s
        mu = s / math.sqrt(2 * math.pi)
        assert optimal_beta(GaussianErrorModel.iid(mu, sigma)) == pytest.approx(1.0, rel=1e-14)

    def test_can_exceed_one(self):
        assert optimal_beta(GaussianErrorModel.iid(1.0, 0.5)) > 1

    def test_degenerate(self):
        with pytest.raises(DegenerateModelError):
            optimal_beta(GaussianErrorModel.iid(0.2, 1.0, rho=1.0))


class TestOracle:
    def test_iid_standard(self):
        mean, se = mc_min_oracle(GaussianErrorModel.iid(0.0, 1.0), 10_000_000, seed=3)
        assert abs(mean + 1 / math.sqrt(math.pi)) <= 3 * se

    def test_perfectly_correlated_pair(self):
        m = GaussianErrorModel.iid(0.7, 0.4, rho=1.0)
        mean, se = mc_min_oracle(m, 100_000, seed=5)
        # min(D, D) = D, so the standard error is that of a single N(0.7, 0.4^2) mean
        assert se == pytest.approx(0.4 / math.sqrt(100_000), rel=0.02)
        assert abs(mean - 0.7) <= 3 * se

    def test_deterministic(self):
        m = GaussianErrorModel(0.1, 0.2, 1.0, 2.0, -0.3)
        assert mc_min_oracle(m, 50_000, 9) == mc_min_oracle(m, 50_000, 9)
        assert mc_min_oracle(m, 50_000, 9) != mc_min_oracle(m, 50_000, 10)

    def test_chunking_does_not_change_result(self):
        m = GaussianErrorModel(0.1, 0.2, 1.0, 2.0, -0.3)
        a = mc_min_oracle(m, 30_000, 9, chunk_size=30_000)
        b = mc_min_oracle(m, 30_000, 9, chunk_size=7_000)
        assert a[0] == pytest.approx(b[0], abs=0.05)

    def test_needs_a_sample(self):
        with pytest.raises(ValueError):
            mc_min_oracle(GaussianErrorModel.iid(0, 1), 0, 1)

    def test_single_sample(self):
        mean, se = mc_min_oracle(GaussianErrorModel.iid(0, 1), 1, 1)
        assert np.isfinite(mean) and math.isnan(se)


def test_default_grid_covers_27_points():
    grid = default_scan_grid()
    assert len(grid) == 27
    assert len({(m.mu1, m.sigma1, m.rho) for m in grid}) == 27
