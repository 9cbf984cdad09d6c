"""Short-time field fluctuations: variational density, sampling, moments, uncertainty.

Over one step ``dt`` each site fluctuates independently with
``<omega_i omega_j> = hbar dt / (2 dx) delta_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .lattice import LatticeSpec, inner_product


class GridTooNarrowError(ValueError):
    """The fluctuation grid truncates a non-negligible part of the density."""


def fluctuation_variance(dt: float, hbar: float, dx: float) -> float:
    return hbar * dt / (2.0 * dx)


@dataclass(frozen=True)
class DiscreteTransitionDensity:
    """Single-site transition density on a uniform fluctuation grid.

    ``weights`` are density values, normalized so ``sum(weights) * step == 1``.
    ``log_offset`` is the omega-independent part of the stationarity
    condition (reference weight, constant and potential terms) that the
    normalization absorbs.
    """

    omega_grid: np.ndarray
    weights: np.ndarray
    log_offset: float = 0.0

    @property
    def step(self) -> float:
        return float(self.omega_grid[1] - self.omega_grid[0])

    def mean(self) -> float:
        return float(np.sum(self.omega_grid * self.weights) * self.step)

    def variance(self) -> float:
        mu = self.mean()
        return float(np.sum((self.omega_grid - mu) ** 2 * self.weights) * self.step)

    def cdf(self, x) -> np.ndarray:
        """Piecewise-linear CDF through the cell-centred cumulative weights."""
        cum = np.cumsum(self.weights) * self.step
        edges = self.omega_grid + 0.5 * self.step
        return np.interp(x, edges, cum, left=0.0, right=1.0)


def default_omega_grid(dt: float, hbar: float, dx: float, width: float = 12.0, n: int = 4001) -> np.ndarray:
    sd = np.sqrt(fluctuation_variance(dt, hbar, dx))
    return np.linspace(-width * sd, width * sd, n)


def minimize_short_time(
    omega_grid,
    v_offset: float,
    dt: float,
    hbar: float,
    dx: float,
    boundary_tol: float = 1e-10,
    check_boundary: bool = True,
) -> DiscreteTransitionDensity:
    """Minimize ``(1/(hbar dt)) E_p[omega^2 dx + 2 V dx dt^2] + E_p[ln(p/sigma)]`` over normalized ``p``.

    The stationarity condition gives
    ``ln(p/sigma) = -(omega^2 dx + 2 V dx dt^2)/(hbar dt) - 1``.  Only the
    first term depends on omega; the rest is a constant that normalization
    removes, so it is kept apart (``log_offset``) rather than added into the
    exponent where it would cost precision.
    """
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or omega.size < 3:
        raise ValueError("omega_grid must be a 1-D grid with at least 3 points")
    steps = np.diff(omega)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) or steps[0] <= 0:
        raise ValueError("omega_grid must be uniform and increasing")
    if dt <= 0 or hbar <= 0 or dx <= 0:
        raise ValueError("dt, hbar and dx must be positive")
    h = float(steps[0])
    reference = -np.log(omega[-1] - omega[0] + h)  # uniform prior on the truncated grid
    quadratic = -(omega**2) * dx / (hbar * dt)
    constant = reference - 2.0 * v_offset * dx * dt / hbar - 1.0
    shift = quadratic.max()
    unnorm = np.exp(quadratic - shift)
    norm = np.sum(unnorm) * h
    weights = unnorm / norm
    if check_boundary:
        edge = (weights[0] + weights[-1]) * h
        if edge >= boundary_tol:
            raise GridTooNarrowError(f"boundary mass {edge:.3g} exceeds {boundary_tol:.1g}; widen omega_grid")
    return DiscreteTransitionDensity(omega, weights, constant + shift - np.log(norm))


@dataclass(frozen=True)
class FluctuationBatch:
    omegas: np.ndarray  # (n_samples, n_sites)
    dt: float
    hbar: float
    seed: int

    def __post_init__(self):
        if self.dt <= 0 or self.hbar <= 0:
            raise ValueError("dt and hbar must be positive")
        if not np.all(np.isfinite(self.omegas)):
            raise ValueError("fluctuation samples must be finite")

    @property
    def n_samples(self) -> int:
        return self.omegas.shape[0]


def sample(spec: LatticeSpec, dt: float, hbar: float, n_samples: int, seed: int,
           shards: int = 1, workers: int = 1) -> FluctuationBatch:
    """Draw i.i.d. Gaussian site fluctuations with variance ``hbar dt / (2 dx)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sd = np.sqrt(fluctuation_variance(dt, hbar, spec.dx))

    def draw(rng, size):
        return sd * rng.standard_normal((size, spec.n_sites))

    return FluctuationBatch(_rng.sharded(seed, n_samples, draw, shards, workers), dt, hbar, seed)


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    n_samples: int


def moments(batch: FluctuationBatch, spec: LatticeSpec) -> Moments:
    """Sample mean and unbiased covariance, each with its standard error."""
    w = batch.omegas
    n, sites = w.shape
    if sites != spec.n_sites:
        raise ValueError("batch does not match the lattice")
    if n < 2:
        raise ValueError("moments need at least two samples")
    mean = w.mean(axis=0)
    centred = w - mean
    cov = centred.T @ centred / (n - 1)
    mean_se = np.sqrt(np.diag(cov) / n)
    cov_se = np.empty((sites, sites))
    for j in range(sites):
        for k in range(j, sites):
            prod = centred[:, j] * centred[:, k]
            cov_se[j, k] = cov_se[k, j] = np.std(prod, ddof=1) / np.sqrt(n)
    return Moments(mean, cov, mean_se, cov_se, n)


def sample_moments(x: np.ndarray) -> dict:
    """Standardized third and fourth moments with large-sample standard errors."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    z = (x - x.mean()) / x.std()
    return {
        "skewness": float(np.mean(z**3)),
        "skewness_se": float(np.sqrt(6.0 / n)),
        "excess_kurtosis": float(np.mean(z**4) - 3.0),
        "excess_kurtosis_se": float(np.sqrt(24.0 / n)),
    }


@dataclass(frozen=True)
class UncertaintyResult:
    sigma_phi_f: float
    sigma_pi_g: float
    bound: float
    product_se: float

    @property
    def product(self) -> float:
        return self.sigma_phi_f * self.sigma_pi_g

    def holds(self, n_se: float = 4.0) -> bool:
        return self.product >= self.bound - n_se * self.product_se


def smeared_uncertainty(batch: FluctuationBatch, f, g, spec: LatticeSpec) -> UncertaintyResult:
    """RMS spreads of ``dphi(f) = int omega f`` and ``dpi(g) = int (omega/dt) g`` against ``(hbar/2) <f|g>``.

    The product's standard error is propagated from the two second moments
    (and their covariance) by the delta method.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(f < 0) or np.any(g < 0):
        raise ValueError("test functions must be nonnegative")
    bound = 0.5 * batch.hbar * inner_product(f, g, spec)
    x = spec.dx * batch.omegas @ f
    y = spec.dx * (batch.omegas / batch.dt) @ g
    a = np.mean(x**2)
    b = np.mean(y**2)
    sigma_phi = float(np.sqrt(a))
    sigma_pi = float(np.sqrt(b))
    n = x.size
    c = np.cov(np.vstack([x**2, y**2]))
    var_log = 0.25 * (c[0, 0] / a**2 + c[1, 1] / b**2 + 2.0 * c[0, 1] / (a * b)) / n
    product_se = float(sigma_phi * sigma_pi * np.sqrt(max(var_log, 0.0)))
    return UncertaintyResult(sigma_phi, sigma_pi, bound, product_se)
