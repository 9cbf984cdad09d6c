"""Spatial lattice, field configurations and discrete calculus.

All spatial integrals are taken on a periodic 1-D chain of ``n_sites`` sites
with spacing ``dx``: ``int d^3x f(x) -> dx * sum_i f_i``.  The functional
derivative is realized as ``delta/delta phi(x_i) = (1/dx) d/d phi_i``.

Wave functionals and densities live on a tensor grid of field values: each
site carries a uniform axis of ``n_phi`` points covering
``[-phi_max, phi_max)`` (the right endpoint is excluded so that the axis is
FFT-periodic and ``phi = 0`` is a node for even ``n_phi``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

DEFAULT_MAX_GRID_POINTS = 128**3


class LatticeError(ValueError):
    """Invalid lattice input (size mismatch, out-of-range site, bad spec)."""


@dataclass(frozen=True)
class LatticeSpec:
    n_sites: int
    dx: float
    phi_max: float = 8.0
    n_phi: int = 128
    boundary: str = "periodic"
    max_grid_points: int = field(default=DEFAULT_MAX_GRID_POINTS, compare=False)

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise LatticeError(f"n_sites must be a positive integer, got {self.n_sites}")
        if not np.isfinite(self.dx) or self.dx <= 0:
            raise LatticeError(f"dx must be positive, got {self.dx}")
        if not np.isfinite(self.phi_max) or self.phi_max <= 0:
            raise LatticeError(f"phi_max must be positive, got {self.phi_max}")
        if int(self.n_phi) != self.n_phi or self.n_phi < 3:
            raise LatticeError(f"n_phi must be an integer >= 3, got {self.n_phi}")
        if self.boundary != "periodic":
            raise LatticeError(f"only periodic boundaries are supported, got {self.boundary!r}")
        if self.grid_size > self.max_grid_points:
            raise LatticeError(
                f"tensor grid n_phi**n_sites = {self.grid_size} exceeds the memory "
                f"budget of {self.max_grid_points} points"
            )

    @property
    def grid_size(self) -> int:
        return int(self.n_phi) ** int(self.n_sites)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (int(self.n_phi),) * int(self.n_sites)

    @property
    def h(self) -> float:
        """Field-value grid step."""
        return 2.0 * self.phi_max / self.n_phi

    @property
    def measure(self) -> float:
        """Volume element of the uniform product measure on the tensor grid."""
        return self.h**self.n_sites

    def phi_axis(self) -> np.ndarray:
        return -self.phi_max + self.h * np.arange(self.n_phi)

    def mesh(self) -> list[np.ndarray]:
        """Per-site field values broadcastable over the tensor grid."""
        axis = self.phi_axis()
        out = []
        for i in range(self.n_sites):
            shape = [1] * self.n_sites
            shape[i] = self.n_phi
            out.append(axis.reshape(shape))
        return out

    def configs(self) -> np.ndarray:
        """Every grid node as a field configuration, shape ``grid_shape + (n_sites,)``."""
        return np.stack(np.broadcast_arrays(*self.mesh()), axis=-1)

    def check_grid(self, grid: np.ndarray) -> np.ndarray:
        grid = np.asarray(grid)
        if grid.shape != self.grid_shape:
            raise LatticeError(f"grid shape {grid.shape} does not match {self.grid_shape}")
        return grid


@dataclass(frozen=True)
class FieldConfig:
    """One real field value per site."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise LatticeError("FieldConfig values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise LatticeError("FieldConfig values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class PotentialSpec:
    """Coefficients of ``V = (grad phi)^2/2 + m2 phi^2/2 + lambda3 phi^3 + lambda4 phi^4``."""

    m2: float = 1.0
    lambda3: float = 0.0
    lambda4: float = 0.0

    def __post_init__(self):
        for name in ("m2", "lambda3", "lambda4"):
            if not np.isfinite(getattr(self, name)):
                raise LatticeError(f"{name} must be finite")
        if self.m2 < 0:
            raise LatticeError("m2 must be nonnegative")

    @property
    def is_free(self) -> bool:
        return self.lambda3 == 0.0 and self.lambda4 == 0.0

    def check_bounded_below(self):
        if not (self.lambda4 > 0 or (self.lambda3 == 0 and self.lambda4 == 0)):
            raise LatticeError("potential is not bounded below (need lambda4 > 0 or lambda3 = lambda4 = 0)")

    def local(self, phi):
        """On-site part ``m2 phi^2/2 + lambda3 phi^3 + lambda4 phi^4``."""
        phi = np.asarray(phi, dtype=float)
        return 0.5 * self.m2 * phi**2 + self.lambda3 * phi**3 + self.lambda4 * phi**4

    def local_force(self, phi):
        """``-dV_local/dphi``."""
        phi = np.asarray(phi, dtype=float)
        return -(self.m2 * phi + 3.0 * self.lambda3 * phi**2 + 4.0 * self.lambda4 * phi**3)


Configish = Union[FieldConfig, np.ndarray]


def _values(config: Configish, spec: LatticeSpec) -> np.ndarray:
    """Field values with sites on the last axis; leading axes are a batch."""
    values = config.values if isinstance(config, FieldConfig) else np.asarray(config, dtype=float)
    if values.ndim == 0 or values.shape[-1] != spec.n_sites:
        raise LatticeError(f"configuration has {np.shape(values)[-1:]} sites, spec has {spec.n_sites}")
    return values


def grad_sq(config: Configish, spec: LatticeSpec):
    """Sum over directed bonds of the squared forward difference."""
    phi = _values(config, spec)
    diff = (np.roll(phi, -1, axis=-1) - phi) / spec.dx
    return np.sum(diff**2, axis=-1)


def potential_integral(config: Configish, spec: LatticeSpec, pot: PotentialSpec):
    """``dx * sum_i [(grad phi)_i^2/2 + m2 phi_i^2/2 + lambda3 phi_i^3 + lambda4 phi_i^4]``."""
    phi = _values(config, spec)
    return spec.dx * (0.5 * grad_sq(phi, spec) + np.sum(pot.local(phi), axis=-1))


def potential_force(config: Configish, spec: LatticeSpec, pot: PotentialSpec) -> np.ndarray:
    """``-(1/dx) dU/dphi_i`` with ``U = potential_integral``: the lattice Klein-Gordon force."""
    phi = _values(config, spec)
    lap = (np.roll(phi, -1, axis=-1) + np.roll(phi, 1, axis=-1) - 2.0 * phi) / spec.dx**2
    return lap + pot.local_force(phi)


def potential_grid(spec: LatticeSpec, pot: PotentialSpec) -> np.ndarray:
    """``potential_integral`` evaluated at every tensor-grid node."""
    mesh = spec.mesh()
    out = np.zeros(spec.grid_shape)
    for i in range(spec.n_sites):
        j = (i + 1) % spec.n_sites
        out = out + 0.5 * ((mesh[j] - mesh[i]) / spec.dx) ** 2 + pot.local(mesh[i])
    return spec.dx * out


def coupling_matrix(spec: LatticeSpec, m2: float) -> np.ndarray:
    """``K = m2 + discrete -Laplacian`` so that ``potential_integral = dx/2 phi^T K phi`` for free fields."""
    n = spec.n_sites
    eye = np.eye(n)
    lap = 2.0 * eye - np.roll(eye, 1, axis=1) - np.roll(eye, -1, axis=1)
    return m2 * eye + lap / spec.dx**2


def mode_frequencies(spec: LatticeSpec, m2: float) -> np.ndarray:
    k = np.arange(spec.n_sites)
    return np.sqrt(m2 + (4.0 / spec.dx**2) * np.sin(np.pi * k / spec.n_sites) ** 2)


def _check_site(spec: LatticeSpec, site: int):
    if not 0 <= site < spec.n_sites:
        raise LatticeError(f"site {site} out of range for {spec.n_sites} sites")


def _spectral_derivative(grid: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    n = grid.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * grid.ndim
    shape[axis] = n
    factor = ((1j * k) ** order).reshape(shape)
    out = np.fft.ifft(np.fft.fft(grid, axis=axis) * factor, axis=axis)
    return out if np.iscomplexobj(grid) else out.real


def partial(grid: np.ndarray, site: int, spec: LatticeSpec, order: int = 1, method: str = "fd") -> np.ndarray:
    """Plain ``d^order/d phi_site^order`` of a tensor-grid function (no ``1/dx`` factor).

    ``method="fd"`` uses second-order central differences with second-order
    one-sided stencils on the grid edges; ``method="spectral"`` differentiates
    the FFT interpolant along the axis.
    """
    grid = spec.check_grid(grid)
    _check_site(spec, site)
    h = spec.h
    if method == "spectral":
        return _spectral_derivative(grid, site, h, order)
    if method != "fd":
        raise LatticeError(f"unknown derivative method {method!r}")
    if order == 1:
        return np.gradient(grid, h, axis=site, edge_order=2)
    if order != 2:
        raise LatticeError("finite differences are provided for orders 1 and 2")
    g = np.moveaxis(grid, site, 0)
    out = np.empty_like(g)
    out[1:-1] = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h**2
    if g.shape[0] >= 4:
        out[0] = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / h**2
        out[-1] = (2.0 * g[-1] - 5.0 * g[-2] + 4.0 * g[-3] - g[-4]) / h**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, site)


def functional_derivative(grid: np.ndarray, site: int, spec: LatticeSpec, method: str = "fd") -> np.ndarray:
    """``delta F / delta phi(x_site)`` on the tensor grid, i.e. ``(1/dx) dF/dphi_site``."""
    return partial(grid, site, spec, 1, method) / spec.dx


def second_functional_derivative(grid: np.ndarray, site: int, spec: LatticeSpec, method: str = "fd") -> np.ndarray:
    """``delta^2 F / delta phi(x_site)^2 = (1/dx^2) d^2F/dphi_site^2``."""
    return partial(grid, site, spec, 2, method) / spec.dx**2


def inner_product(f, g, spec: LatticeSpec) -> float:
    """``<f|g> = dx * sum_i f_i g_i`` for test functions sampled on the sites."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (spec.n_sites,) or g.shape != (spec.n_sites,):
        raise LatticeError(f"test functions must have shape ({spec.n_sites},)")
    return float(spec.dx * np.dot(f, g))


def integrate(grid: np.ndarray, spec: LatticeSpec):
    """Quadrature over the tensor grid with the uniform product measure."""
    return np.sum(spec.check_grid(grid)) * spec.measure
