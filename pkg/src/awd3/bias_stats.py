"""Expected bias of min / weighted-average combinations of two Gaussian critics.

The two critics' errors ``D_i = Q_i - Q*`` are modelled as a correlated
bivariate normal.  ``sigma_d`` is the standard deviation of ``D_1 - D_2``;
it is the scale that enters both the expected minimum and the optimal
weighting ``beta`` (a single-sigma formula is read with ``sigma = sigma_d``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)


class ParameterDomainError(ValueError):
    """Raised for sigma <= 0, |rho| > 1 or non-finite parameters."""


class DegenerateModelError(ValueError):
    """Raised when sigma_d == 0 and no finite beta exists."""


def norm_cdf(x: float) -> float:
    # erfc keeps precision in the lower tail where 1 + erf(x) cancels
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT_2PI


@dataclass(frozen=True)
class GaussianErrorModel:
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    rho: float

    def __post_init__(self):
        values = (self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho)
        if not all(math.isfinite(v) for v in values):
            raise ParameterDomainError(f"non-finite parameter in {values}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ParameterDomainError(
                f"sigmas must be positive, got {self.sigma1}, {self.sigma2}")
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterDomainError(f"rho must lie in [-1, 1], got {self.rho}")

    @classmethod
    def iid(cls, mu: float, sigma: float, rho: float = 0.0) -> "GaussianErrorModel":
        return cls(mu, mu, sigma, sigma, rho)

    @property
    def sigma_d(self) -> float:
        """Standard deviation of ``D_1 - D_2``."""
        # (s1 - s2)^2 + 2 (1 - rho) s1 s2 is the same quantity without the
        # cancellation of s1^2 + s2^2 - 2 rho s1 s2 near rho = 1
        var = (self.sigma1 - self.sigma2) ** 2 + 2.0 * (1.0 - self.rho) * self.sigma1 * self.sigma2
        return math.sqrt(max(var, 0.0))

    @property
    def mean_average(self) -> float:
        return 0.5 * (self.mu1 + self.mu2)

    def swapped(self) -> "GaussianErrorModel":
        return GaussianErrorModel(self.mu2, self.mu1, self.sigma2, self.sigma1, self.rho)

    def shifted(self, c: float) -> "GaussianErrorModel":
        return GaussianErrorModel(self.mu1 + c, self.mu2 + c, self.sigma1, self.sigma2, self.rho)

    def covariance(self) -> np.ndarray:
        off = self.rho * self.sigma1 * self.sigma2
        return np.array([[self.sigma1 ** 2, off], [off, self.sigma2 ** 2]])


def expected_min(model: GaussianErrorModel) -> float:
    """Closed-form ``E[min(D_1, D_2)]``.

    When ``sigma_d == 0`` the two errors differ by a constant, so the minimum
    is simply ``min(mu1, mu2)`` (the limit of the closed form).
    """
    mu1, mu2 = model.mu1, model.mu2
    s = model.sigma_d
    if s == 0.0:
        return min(mu1, mu2)
    z = (mu1 - mu2) / s
    return mu1 * norm_cdf(-z) + mu2 * norm_cdf(z) - s * norm_pdf(z)


def expected_weighted_bias(model: GaussianErrorModel, beta: float) -> float:
    """Expected error of ``beta * min + (1 - beta) * average``."""
    return beta * expected_min(model) + (1.0 - beta) * model.mean_average


def optimal_beta(model: GaussianErrorModel) -> float:
    """Weight that zeroes the expected combined error when ``mu1 ~= mu2``.

    Not clamped; values above 1 are legitimate (strong overestimation needs
    more than pure-min pessimism).
    """
    s = model.sigma_d
    if s == 0.0:
        raise DegenerateModelError(
            "sigma_d = 0: min and average coincide, no beta can cancel the bias")
    return SQRT_2PI / s * model.mean_average


def mc_min_oracle(model: GaussianErrorModel, n_samples: int, seed: int,
                  chunk_size: int = 1_000_000) -> tuple[float, float]:
    """Monte-Carlo estimate of ``E[min(D_1, D_2)]`` and its standard error.

    Pairs are drawn as ``mu + L z`` with ``L`` the lower Cholesky factor of the
    2x2 covariance, written out explicitly so that ``|rho| = 1`` works.
    Draws come from a PCG64 stream seeded with ``seed`` and are consumed in
    fixed-size chunks, so the result depends only on the arguments.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.Generator(np.random.PCG64(seed))
    l11 = model.sigma1
    l21 = model.rho * model.sigma2
    l22 = model.sigma2 * math.sqrt(max(1.0 - model.rho ** 2, 0.0))
    # accumulate around a shift to keep the sum of squares well conditioned
    shift = model.mean_average
    total = 0.0
    total_sq = 0.0
    remaining = n_samples
    while remaining > 0:
        m = min(chunk_size, remaining)
        z = rng.standard_normal((2, m))
        d1 = model.mu1 + l11 * z[0]
        d2 = model.mu2 + l21 * z[0] + l22 * z[1]
        x = np.minimum(d1, d2) - shift
        total += float(x.sum())
        total_sq += float(np.dot(x, x))
        remaining -= m
    mean = total / n_samples
    if n_samples == 1:
        return mean + shift, math.nan
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean + shift, math.sqrt(var / n_samples)


def default_scan_grid() -> list[GaussianErrorModel]:
    """27-point grid over shared bias, shared sigma and correlation."""
    return [GaussianErrorModel.iid(mu, sigma, rho)
            for mu in (-1.0, 0.0, 1.0)
            for sigma in (0.5, 1.0, 2.0)
            for rho in (-0.5, 0.0, 0.9)]


def scan_row(model: GaussianErrorModel, n_samples: int, seed: int) -> dict:
    """One ``bias-scan`` CSV row (``beta_opt`` is NaN for degenerate models)."""
    try:
        beta = optimal_beta(model)
    except DegenerateModelError:
        beta = math.nan
    mc_mean, mc_se = mc_min_oracle(model, n_samples, seed)
    return {
        "mu1": model.mu1, "mu2": model.mu2,
        "sigma1": model.sigma1, "sigma2": model.sigma2, "rho": model.rho,
        "expected_min": expected_min(model), "beta_opt": beta,
        "mc_mean": mc_mean, "mc_stderr": mc_se,
    }


SCAN_COLUMNS = ("mu1", "mu2", "sigma1", "sigma2", "rho",
                "expected_min", "beta_opt", "mc_mean", "mc_stderr")
