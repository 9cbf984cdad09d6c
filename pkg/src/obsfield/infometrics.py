"""Divergences between grid densities and the fluctuation information metric.

Densities are arrays on ``spec``'s tensor grid normalized with the uniform
product measure.  Quadrature is the trapezoid rule, which on the periodic
field grid is the plain node sum times the cell volume.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .classical import ensemble_action
from .fluctuations import sample
from .lattice import LatticeSpec, PotentialSpec, functional_derivative

KINDS = {"kl": _kernels.KIND_KL, "renyi": _kernels.KIND_RENYI, "tsallis": _kernels.KIND_TSALLIS}
TRUNCATION_TOL = 1e-10


class SupportError(ValueError):
    """``rho1 > 0`` where ``rho2 == 0``."""


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    std_error: float
    kind: str
    alpha: float
    n_samples: int


@dataclass(frozen=True)
class ObservabilityBreakdown:
    i_path: float
    i_fluct: float
    i_path_se: float = 0.0

    @property
    def total(self) -> float:
        return self.i_path + self.i_fluct


def _check_pair(rho1, rho2, spec: LatticeSpec, tol: float = 1e-8):
    rho1 = spec.check_grid(rho1).astype(float)
    rho2 = spec.check_grid(rho2).astype(float)
    for name, r in (("rho1", rho1), ("rho2", rho2)):
        if np.any(r < 0):
            raise ValueError(f"{name} has negative entries")
        mass = np.sum(r) * spec.measure
        if abs(mass - 1.0) > tol:
            raise ValueError(f"{name} is not normalized (mass {mass:.12g})")
    if np.any((rho1 > 0) & (rho2 == 0)):
        raise SupportError("rho1 is positive where rho2 vanishes")
    return rho1, rho2


def _check_alpha(alpha: float):
    if not alpha > 0 or alpha == 1.0 or not np.isfinite(alpha):
        raise ValueError("alpha must lie in (0, 1) or (1, inf); use the KL divergence for alpha = 1")


def _log_ratio_moment(rho1, rho2, spec, alpha):
    """``int rho1^alpha rho2^(1-alpha) - 1`` written as ``sum w expm1(...)`` to survive alpha -> 1."""
    pos = rho1 > 0
    w = rho1[pos] * spec.measure
    return float(np.sum(w * np.expm1((1.0 - alpha) * (np.log(rho2[pos]) - np.log(rho1[pos])))))


def kl_divergence(rho1, rho2, spec: LatticeSpec) -> float:
    rho1, rho2 = _check_pair(rho1, rho2, spec)
    pos = rho1 > 0
    return float(np.sum(rho1[pos] * (np.log(rho1[pos]) - np.log(rho2[pos]))) * spec.measure)


def renyi_divergence(rho1, rho2, alpha: float, spec: LatticeSpec) -> float:
    """``(alpha-1)^-1 ln int rho1^alpha rho2^(1-alpha)``."""
    _check_alpha(alpha)
    rho1, rho2 = _check_pair(rho1, rho2, spec)
    return float(np.log1p(_log_ratio_moment(rho1, rho2, spec, alpha)) / (alpha - 1.0))


def tsallis_divergence(rho1, rho2, alpha: float, spec: LatticeSpec) -> float:
    """``(alpha-1)^-1 [int rho1^alpha rho2^(1-alpha) - 1]``."""
    _check_alpha(alpha)
    rho1, rho2 = _check_pair(rho1, rho2, spec)
    return _log_ratio_moment(rho1, rho2, spec, alpha) / (alpha - 1.0)


def divergence(rho1, rho2, spec: LatticeSpec, kind: str = "kl", alpha: float = 1.0) -> float:
    if kind == "kl":
        return kl_divergence(rho1, rho2, spec)
    if kind == "renyi":
        return renyi_divergence(rho1, rho2, alpha, spec)
    if kind == "tsallis":
        return tsallis_divergence(rho1, rho2, alpha, spec)
    raise ValueError(f"unknown divergence kind {kind!r}")


def _log_density(rho: np.ndarray) -> np.ndarray:
    # Underflowed tail nodes carry no weight; the floor keeps the spline finite.
    floor = np.max(rho) * 1e-300
    return np.log(np.maximum(rho, floor))


def shifted_log_density(logrho: np.ndarray, omega, spec: LatticeSpec):
    """``log rho(phi + omega)`` by not-a-knot cubic splines along each axis, plus the out-of-range mask."""
    axis = spec.phi_axis()
    out = logrho
    outside = np.zeros(spec.grid_shape, dtype=bool)
    for i, w in enumerate(np.atleast_1d(omega)):
        target = axis + w
        out = CubicSpline(axis, out, axis=i, extrapolate=True)(target)
        bad = (target < axis[0]) | (target > axis[-1])
        shape = [1] * spec.n_sites
        shape[i] = spec.n_phi
        outside |= bad.reshape(shape)
    return out, outside


def _per_sample_divergences(rho, spec, omegas, kind, alpha):
    code = KINDS[kind]
    logrho = _log_density(rho)
    weight = rho * spec.measure
    if spec.n_sites == 1:
        spline = CubicSpline(spec.phi_axis(), logrho)
        return _kernels.shifted_divergences_1d(spline.c, logrho, weight, spec.h, omegas[:, 0], code, alpha)
    values = np.empty(len(omegas))
    dropped = np.empty(len(omegas))
    for s, om in enumerate(omegas):
        shifted, outside = shifted_log_density(logrho, om, spec)
        inside = ~outside
        delta = shifted[inside] - logrho[inside]
        w = weight[inside]
        dropped[s] = np.sum(weight[outside])
        if code == _kernels.KIND_KL:
            values[s] = -np.sum(w * delta)
        else:
            acc = np.sum(w * np.expm1((1.0 - alpha) * delta))
            values[s] = np.log1p(acc) / (alpha - 1.0) if code == _kernels.KIND_RENYI else acc / (alpha - 1.0)
    return values, dropped


def fluctuation_information(
    rho,
    dt: float,
    hbar: float,
    spec: LatticeSpec,
    kind: str = "kl",
    alpha: float = 1.0,
    n_samples: int = 100_000,
    seed: int = 0,
    shards: int = 1,
    workers: int = 1,
) -> DivergenceEstimate:
    """One-step fluctuation information ``<D(rho(.) || rho(. + omega))>_omega``.

    ``omega`` is drawn from the short-time fluctuation distribution; the
    shifted density comes from cubic-spline interpolation of ``log rho``
    (which keeps it positive).  Multiply by the number of steps for a window
    sum, or use ``window_information``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown divergence kind {kind!r}")
    if kind != "kl":
        _check_alpha(alpha)
    rho = spec.check_grid(rho).astype(float)
    if np.any(rho < 0):
        raise ValueError("rho has negative entries")
    batch = sample(spec, dt, hbar, n_samples, seed, shards, workers)
    values, dropped = _per_sample_divergences(rho, spec, batch.omegas, kind, alpha)
    worst = float(np.max(dropped))
    if worst > TRUNCATION_TOL:
        raise ValueError(
            f"shifted density leaves the truncated field range (dropped mass {worst:.3g}); "
            "widen phi_max or reduce dt"
        )
    se = float(np.std(values, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return DivergenceEstimate(float(np.mean(values)), se, kind, 1.0 if kind == "kl" else float(alpha), n_samples)


def window_information(one_step: DivergenceEstimate, n_steps: int) -> DivergenceEstimate:
    """Sum of ``n_steps`` identical per-hypersurface contributions."""
    return DivergenceEstimate(
        one_step.value * n_steps, one_step.std_error * n_steps, one_step.kind, one_step.alpha, one_step.n_samples
    )


def fisher_functional(rho, hbar: float, spec: LatticeSpec, method: str = "fd") -> float:
    """``(hbar/4) int (1/rho) (delta rho / delta phi(x))^2 d^3x D phi`` per unit time.

    ``rho`` must be positive away from the grid edges; edge nodes with
    ``rho == 0`` are skipped.
    """
    rho = spec.check_grid(rho).astype(float)
    interior = tuple(slice(1, -1) for _ in range(spec.n_sites))
    if np.any(rho[interior] <= 0) or np.any(rho < 0):
        raise ValueError("rho must be positive on interior nodes")
    pos = rho > 0
    total = 0.0
    for i in range(spec.n_sites):
        d = functional_derivative(rho, i, spec, method)
        total += spec.dx * np.sum(d[pos] ** 2 / rho[pos])
    return float(0.25 * hbar * total * spec.measure)


def alpha_ratio_check(
    rho,
    dt_sequence,
    alpha: float,
    hbar: float,
    spec: LatticeSpec,
    kind: str = "renyi",
    n_samples: int = 50_000,
    seed: int = 0,
) -> list[float]:
    """``I_f^alpha / I_f^KL`` along a decreasing sequence of steps.

    Both estimates reuse the same fluctuation draws (common random numbers),
    so the ratio is free of most Monte-Carlo noise.
    """
    dts = list(dt_sequence)
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("dt_sequence must be strictly decreasing")
    ratios = []
    for dt in dts:
        kl = fluctuation_information(rho, dt, hbar, spec, "kl", 1.0, n_samples, seed)
        other = fluctuation_information(rho, dt, hbar, spec, kind, alpha, n_samples, seed)
        ratios.append(other.value / kl.value)
    return ratios


def total_observability(
    rho,
    gen,
    pot: PotentialSpec,
    hbar: float,
    spec: LatticeSpec,
    t_start: float,
    t_end: float,
    samples: int = 100_000,
    seed: int = 0,
    method: str = "fd",
) -> ObservabilityBreakdown:
    """``I = (2/hbar) S_c + I_f`` over a time window for a stationary density.

    ``S_c`` is the Monte-Carlo ensemble action; ``I_f`` is the Fisher form
    integrated over the window.
    """
    action = ensemble_action(rho, spec, gen, pot, t_start, t_end, samples, seed)
    i_fluct = fisher_functional(rho, hbar, spec, method) * (t_end - t_start)
    return ObservabilityBreakdown(2.0 * action.value / hbar, i_fluct, 2.0 * action.std_error / hbar)
