"""Classical lattice scalar field: Lagrangian, Klein-Gordon flow, Hamilton-Jacobi.

Momenta are the field velocities ``pi_i = dphi_i/dt``; the spatially
integrated Hamiltonian is ``dx * sum_i pi_i^2/2 + potential_integral``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels, _rng
from .lattice import (
    FieldConfig,
    LatticeError,
    LatticeSpec,
    PotentialSpec,
    _values,
    functional_derivative,
    potential_integral,
)


@dataclass(frozen=True)
class ClassicalState:
    phi: FieldConfig
    pi: FieldConfig
    spec: LatticeSpec
    t: float = 0.0

    def __post_init__(self):
        if not isinstance(self.phi, FieldConfig):
            object.__setattr__(self, "phi", FieldConfig(self.phi))
        if not isinstance(self.pi, FieldConfig):
            object.__setattr__(self, "pi", FieldConfig(self.pi))
        if len(self.phi) != self.spec.n_sites or len(self.pi) != self.spec.n_sites:
            raise LatticeError("phi and pi must both have spec.n_sites entries")


@dataclass(frozen=True)
class Trajectory:
    """States at uniform spacing ``dt`` starting from ``t0``."""

    spec: LatticeSpec
    t0: float
    dt: float
    phi: np.ndarray  # (n_states, n_sites)
    pi: np.ndarray

    def __len__(self):
        return self.phi.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def __getitem__(self, k) -> ClassicalState:
        k = range(len(self))[k]
        return ClassicalState(self.phi[k], self.pi[k], self.spec, self.t0 + k * self.dt)

    @property
    def final(self) -> ClassicalState:
        return self[-1]

    def energies(self, pot: PotentialSpec) -> np.ndarray:
        return 0.5 * self.spec.dx * np.sum(self.pi**2, axis=1) + potential_integral(self.phi, self.spec, pot)


def lagrangian_density(state: ClassicalState, pot: PotentialSpec) -> float:
    """Spatially integrated Lagrangian ``dx sum pi^2/2 - potential_integral``."""
    kinetic = 0.5 * state.spec.dx * np.sum(state.pi.values**2)
    return float(kinetic - potential_integral(state.phi, state.spec, pot))


def hamiltonian(state: ClassicalState, pot: PotentialSpec) -> float:
    kinetic = 0.5 * state.spec.dx * np.sum(state.pi.values**2)
    return float(kinetic + potential_integral(state.phi, state.spec, pot))


def stability_bound(spec: LatticeSpec, pot: PotentialSpec) -> float:
    """Largest stable leapfrog step for the free lattice: ``2 / omega_max``."""
    return spec.dx / np.sqrt(1.0 + pot.m2 * spec.dx**2 / 4.0)


def evolve_kg(state: ClassicalState, pot: PotentialSpec, dt: float, steps: int) -> Trajectory:
    """Integrate the lattice Klein-Gordon equation with kick-drift-kick leapfrog.

    The step must satisfy ``dt < dx / sqrt(1 + m2 dx^2 / 4)`` (which implies
    ``dt < dx``); anharmonic couplings can tighten the real bound further.
    """
    spec = state.spec
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    bound = stability_bound(spec, pot)
    if dt >= bound:
        raise ValueError(f"dt={dt} violates the leapfrog stability bound {bound:.6g}")
    phis, pis = _kernels.leapfrog_kg(
        state.phi.values, state.pi.values, spec.dx, pot.m2, pot.lambda3, pot.lambda4, dt, int(steps)
    )
    return Trajectory(spec, state.t, dt, phis, pis)


@dataclass(frozen=True)
class QuadraticGenerator:
    """``S[phi, t] = dx * a(t) * sum_i phi_i^2 / 2 + c(t)``, with time derivatives supplied."""

    a: Callable[[float], float]
    a_dot: Callable[[float], float]
    c: Callable[[float], float] = lambda t: 0.0
    c_dot: Callable[[float], float] = lambda t: 0.0

    @classmethod
    def free(cls, t0: float = 0.0) -> "QuadraticGenerator":
        """``a = 1/(t - t0)``: solves the V = 0 Hamilton-Jacobi equation for ``t > t0``."""
        return cls(lambda t: 1.0 / (t - t0), lambda t: -1.0 / (t - t0) ** 2)

    @classmethod
    def harmonic(cls, m: float, t0: float = 0.0) -> "QuadraticGenerator":
        """``a = -m tan(m (t - t0))``: exact for a single site with ``V = m^2 phi^2 / 2``."""
        return cls(
            lambda t: -m * np.tan(m * (t - t0)),
            lambda t: -(m**2) / np.cos(m * (t - t0)) ** 2,
        )

    def value(self, phi, spec: LatticeSpec, t: float):
        phi = _values(phi, spec)
        return spec.dx * self.a(t) * 0.5 * np.sum(phi**2, axis=-1) + self.c(t)

    def time_derivative(self, phi, spec: LatticeSpec, t: float):
        phi = _values(phi, spec)
        return spec.dx * self.a_dot(t) * 0.5 * np.sum(phi**2, axis=-1) + self.c_dot(t)

    def functional_gradient(self, phi, spec: LatticeSpec, t: float):
        """``delta S / delta phi(x_i) = a(t) phi_i``."""
        return self.a(t) * _values(phi, spec)

    def _hj_terms(self, idx, phi, spec, t):
        grad = self.functional_gradient(phi, spec, t)
        return self.time_derivative(phi, spec, t), 0.5 * spec.dx * np.sum(grad**2, axis=-1)


@dataclass(frozen=True)
class GridGenerator:
    """Generator sampled on the tensor grid: ``S(phi, t) = s + s_dot * (t - t_ref)``."""

    s: np.ndarray
    s_dot: np.ndarray
    spec: LatticeSpec
    t_ref: float = 0.0
    method: str = "fd"

    def __post_init__(self):
        self.spec.check_grid(self.s)
        s_dot = np.broadcast_to(np.asarray(self.s_dot, dtype=float), self.spec.grid_shape)
        object.__setattr__(self, "s_dot", s_dot)

    def _gradients(self):
        cached = self.__dict__.get("_grads")
        if cached is None:
            cached = [
                (functional_derivative(self.s, i, self.spec, self.method).ravel(),
                 functional_derivative(np.array(self.s_dot), i, self.spec, self.method).ravel())
                for i in range(self.spec.n_sites)
            ]
            object.__setattr__(self, "_grads", cached)
        return cached

    def _hj_terms(self, idx, phi, spec, t):
        tau = t - self.t_ref
        kinetic = np.zeros(len(idx))
        for g0, g1 in self._gradients():
            kinetic += (g0[idx] + tau * g1[idx]) ** 2
        return self.s_dot.ravel()[idx], 0.5 * spec.dx * kinetic


def hj_residual(gen: QuadraticGenerator, config, pot: PotentialSpec, t: float, spec: LatticeSpec):
    """``dS/dt + int {(delta S/delta phi)^2/2 + V} d^3x`` at one (or a batch of) configuration."""
    phi = _values(config, spec)
    grad = gen.functional_gradient(phi, spec, t)
    return (
        gen.time_derivative(phi, spec, t)
        + 0.5 * spec.dx * np.sum(grad**2, axis=-1)
        + potential_integral(phi, spec, pot)
    )


def continuity_residual(ms, rho_dot, method: str = "fd") -> np.ndarray:
    """``drho/dt + int delta/delta phi (rho delta S/delta phi) d^3x`` on the tensor grid.

    ``ms`` is any object exposing ``rho``, ``s`` and ``spec`` grids (a
    ``MadelungState``); ``rho_dot`` is the time derivative of ``rho``.
    """
    spec = ms.spec
    rho = spec.check_grid(ms.rho)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    out = np.array(np.broadcast_to(rho_dot, spec.grid_shape), dtype=float)
    for i in range(spec.n_sites):
        flux = rho * functional_derivative(ms.s, i, spec, method)
        out += spec.dx * functional_derivative(flux, i, spec, method)
    return out


@dataclass(frozen=True)
class ActionEstimate:
    value: float
    std_error: float
    n_samples: int


def sample_grid_density(rho: np.ndarray, spec: LatticeSpec, n: int, seed: int, shards: int = 1, workers: int = 1):
    """Draw node indices (flat) from a normalized grid density by inverse CDF."""
    cdf = np.cumsum(np.ravel(rho) * spec.measure)
    cdf /= cdf[-1]

    def draw(rng, size):
        return np.searchsorted(cdf, rng.random(size), side="right").clip(0, cdf.size - 1)

    return _rng.sharded(seed, n, draw, shards, workers)


def ensemble_action(
    rho: np.ndarray,
    spec: LatticeSpec,
    gen,
    pot: PotentialSpec,
    t_start: float,
    t_end: float,
    samples: int,
    seed: int,
    n_time: int = 8,
    shards: int = 1,
    workers: int = 1,
) -> ActionEstimate:
    """Monte-Carlo estimate of the ensemble-averaged action over ``[t_start, t_end]``.

    Configurations are drawn from the (time-independent) grid density ``rho``;
    the time integral uses ``n_time``-point Gauss-Legendre quadrature.  The
    standard error is over configuration samples.
    """
    rho = spec.check_grid(rho)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    mass = float(np.sum(rho) * spec.measure)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"rho is not normalized (mass {mass:.12g})")
    idx = sample_grid_density(rho, spec, samples, seed, shards, workers)
    phi = spec.configs().reshape(-1, spec.n_sites)[idx]
    nodes, weights = np.polynomial.legendre.leggauss(n_time)
    half = 0.5 * (t_end - t_start)
    mid = 0.5 * (t_end + t_start)
    v = potential_integral(phi, spec, pot)
    per_sample = np.zeros(samples)
    for x, w in zip(nodes, weights):
        t = mid + half * x
        s_t, kinetic = gen._hj_terms(idx, phi, spec, t)
        per_sample += w * half * (s_t + kinetic + v)
    se = float(np.std(per_sample, ddof=1) / np.sqrt(samples)) if samples > 1 else float("nan")
    return ActionEstimate(float(np.mean(per_sample)), se, samples)
