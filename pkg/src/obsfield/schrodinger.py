"""Functional Schrodinger equation on a few-site lattice.

The lattice Hamiltonian acting on wave functionals sampled on the tensor grid
is

    H = -(hbar^2 / (2 dx)) sum_i d^2/dphi_i^2 + potential_integral(phi)

(the ``1/dx`` comes from ``delta/delta phi(x_i) = (1/dx) d/dphi_i`` and
``int d^3x -> dx sum_i``).  The order-``alpha`` generalization replaces the
kinetic prefactor by ``alpha hbar^2 / (2 dx)`` and the time-derivative
coefficient by ``sqrt(alpha) hbar``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .lattice import LatticeSpec, PotentialSpec, coupling_matrix, potential_grid

NORM_TOL = 1e-10
BOUNDARY_TOL = 1e-8
DENSE_LIMIT = 1024


class TruncationError(ValueError):
    """Wave functional is not negligible on the edge of the field grid."""


class NormDriftError(RuntimeError):
    """Propagation lost unitarity."""


class ConvergenceError(RuntimeError):
    pass


def boundary_ratio(amplitudes: np.ndarray) -> float:
    """Largest edge magnitude relative to the global maximum."""
    mag = np.abs(amplitudes)
    top = mag.max()
    if top == 0:
        return np.inf
    edge = 0.0
    for axis in range(mag.ndim):
        edge = max(edge, np.take(mag, 0, axis=axis).max(), np.take(mag, -1, axis=axis).max())
    return float(edge / top)


@dataclass(frozen=True)
class Wavefunctional:
    amplitudes: np.ndarray
    spec: LatticeSpec
    hbar: float = 1.0
    t: float = 0.0
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        self.spec.check_grid(amps)
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "amplitudes", amps)
        if self.check:
            norm = self.norm_sq()
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"wave functional is not normalized (norm^2 = {norm:.15g})")
            ratio = boundary_ratio(amps)
            if ratio >= BOUNDARY_TOL:
                raise TruncationError(f"edge amplitude ratio {ratio:.3g} >= {BOUNDARY_TOL:g}; widen phi_max")

    @classmethod
    def from_grid(cls, amplitudes, spec: LatticeSpec, hbar: float = 1.0, t: float = 0.0) -> "Wavefunctional":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.sqrt(np.sum(np.abs(amps) ** 2) * spec.measure)
        return cls(amps / norm, spec, hbar, t)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.spec.measure)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other: "Wavefunctional") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.spec.measure)

    def fidelity(self, other: "Wavefunctional") -> float:
        return abs(self.overlap(other))

    def mean_field(self) -> np.ndarray:
        rho = self.density()
        return np.array([np.sum(m * rho) * self.spec.measure for m in self.spec.mesh()])


def _k_squared(spec: LatticeSpec) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(spec.n_phi, d=spec.h)
    total = np.zeros(spec.grid_shape)
    for i in range(spec.n_sites):
        shape = [1] * spec.n_sites
        shape[i] = spec.n_phi
        total = total + (k**2).reshape(shape)
    return total


def _fd_minus_laplacian(grid: np.ndarray, h: float) -> np.ndarray:
    """``-sum_i d^2/dphi_i^2`` with three-point stencils and zero values beyond the grid."""
    out = np.zeros_like(grid)
    for axis in range(grid.ndim):
        g = np.moveaxis(grid, axis, 0)
        o = np.moveaxis(out, axis, 0)
        o += 2.0 * g
        o[1:] -= g[:-1]
        o[:-1] -= g[1:]
    return out / h**2


class GridHamiltonian:
    """Lattice Hamiltonian acting on tensor-grid wave functionals.

    ``kinetic="spectral"`` differentiates along each field axis by FFT (the
    propagation path); ``kinetic="fd"`` uses second-order differences with
    vanishing values beyond the grid (the cross-check path).
    """

    def __init__(self, spec: LatticeSpec, pot: PotentialSpec, hbar: float, kinetic: str = "spectral", alpha: float = 1.0):
        if kinetic not in ("spectral", "fd"):
            raise ValueError(f"unknown kinetic discretization {kinetic!r}")
        if hbar <= 0:
            raise ValueError("hbar must be positive")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.spec = spec
        self.pot = pot
        self.hbar = hbar
        self.alpha = alpha
        self.kinetic = kinetic
        self.kinetic_coeff = alpha * hbar**2 / (2.0 * spec.dx)
        self.potential = potential_grid(spec, pot)
        self.kinetic_symbol = self.kinetic_coeff * _k_squared(spec)

    @property
    def shape(self):
        return (self.spec.grid_size, self.spec.grid_size)

    def apply_kinetic(self, grid: np.ndarray) -> np.ndarray:
        if self.kinetic == "spectral":
            out = np.fft.ifftn(self.kinetic_symbol * np.fft.fftn(grid))
            return out if np.iscomplexobj(grid) else out.real
        return self.kinetic_coeff * _fd_minus_laplacian(grid, self.spec.h)

    def apply(self, grid: np.ndarray) -> np.ndarray:
        grid = self.spec.check_grid(grid)
        return self.apply_kinetic(grid) + self.potential * grid

    __call__ = apply

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        return complex(np.vdot(f, g) * self.spec.measure)

    def expectation(self, psi: Wavefunctional) -> float:
        amps = psi.amplitudes
        return float(np.real(np.vdot(amps, self.apply(amps))) * self.spec.measure)

    def residual(self, psi: Wavefunctional, energy: float) -> float:
        """``||H psi - E psi|| / ||psi||`` in the grid norm."""
        amps = psi.amplitudes
        r = self.apply(amps) - energy * amps
        return float(np.sqrt(np.sum(np.abs(r) ** 2) / np.sum(np.abs(amps) ** 2)))

    def as_linear_operator(self) -> spla.LinearOperator:
        shape = self.spec.grid_shape

        def matvec(v):
            return self.apply(np.asarray(v).reshape(shape)).ravel()

        return spla.LinearOperator(self.shape, matvec=matvec, rmatvec=matvec, dtype=float)

    def matrix(self) -> np.ndarray:
        n = self.spec.grid_size
        if n > 4096:
            raise ValueError("dense matrix limited to 4096 grid points")
        cols = [self.apply(e.reshape(self.spec.grid_shape)).ravel() for e in np.eye(n)]
        mat = np.array(cols).T
        return 0.5 * (mat + mat.T)

    def lowest(self, k: int = 1, v0: np.ndarray | None = None, tol: float = 1e-13):
        """Lowest ``k`` eigenpairs (eigenvalues ascending, eigenvectors as grids)."""
        n = self.spec.grid_size
        if n <= DENSE_LIMIT:
            vals, vecs = scipy.linalg.eigh(self.matrix(), subset_by_index=[0, k - 1])
        else:
            vals, vecs = spla.eigsh(self.as_linear_operator(), k=k, which="SA", v0=v0, tol=tol, maxiter=20 * n)
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        grids = [vecs[:, j].reshape(self.spec.grid_shape) for j in range(k)]
        return vals, grids


def build_hamiltonian(spec: LatticeSpec, pot: PotentialSpec, hbar: float, kinetic: str = "spectral",
                      alpha: float = 1.0) -> GridHamiltonian:
    return GridHamiltonian(spec, pot, hbar, kinetic, alpha)


@dataclass(frozen=True)
class GaussianKernelState:
    """Exact free-field ground state ``exp(-(dx/(2 hbar)) phi^T A phi)`` with ``A = sqrt(K)``."""

    kernel: np.ndarray
    energy: float
    hbar: float
    spec: LatticeSpec

    def amplitudes(self) -> np.ndarray:
        phi = self.spec.configs()
        quad = np.einsum("...i,ij,...j->...", phi, self.kernel, phi)
        return np.exp(-self.spec.dx * quad / (2.0 * self.hbar))

    def wavefunctional(self, t: float = 0.0) -> Wavefunctional:
        amps = self.amplitudes() * np.exp(-1j * self.energy * t / self.hbar)
        return Wavefunctional.from_grid(amps, self.spec, self.hbar, t)

    def density(self) -> np.ndarray:
        rho = self.amplitudes() ** 2
        return rho / (np.sum(rho) * self.spec.measure)


def free_field_oracle(spec: LatticeSpec, m2: float, hbar: float) -> GaussianKernelState:
    k = coupling_matrix(spec, m2)
    w, u = np.linalg.eigh(k)
    if np.min(w) <= 1e-14 * max(1.0, np.max(np.abs(w))):
        raise ValueError("coupling matrix is singular (massless zero mode); the Gaussian ground state does not exist")
    root = (u * np.sqrt(w)) @ u.T
    return GaussianKernelState(0.5 * (root + root.T), float(0.5 * hbar * np.sum(np.sqrt(w))), hbar, spec)


@dataclass
class GroundState:
    psi: Wavefunctional
    energy: float
    residual: float
    history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.psi, self.energy))


def _initial_guess(spec: LatticeSpec, pot: PotentialSpec, hbar: float) -> np.ndarray:
    """Uncoupled Gaussian with a mean-field width ``sqrt(m2 + 1/dx^2)``."""
    width = np.sqrt(pot.m2 + 1.0 / spec.dx**2)
    return np.exp(-spec.dx * width * sum(m**2 for m in spec.mesh()) / (2.0 * hbar))


def _positive_gauge(grid: np.ndarray) -> np.ndarray:
    idx = np.unravel_index(np.argmax(np.abs(grid)), grid.shape)
    return grid * (np.abs(grid[idx]) / grid[idx])


def ground_state(
    spec: LatticeSpec,
    pot: PotentialSpec,
    hbar: float = 1.0,
    method: str = "eigensolve",
    kinetic: str = "spectral",
    alpha: float = 1.0,
    residual_tol: float = 1e-6,
    dt_schedule=(0.05, 0.01, 2e-3, 5e-4),
    energy_tol: float = 1e-10,
    max_iter: int = 200_000,
) -> GroundState:
    """Numerical ground state of the lattice Hamiltonian.

    ``eigensolve`` diagonalizes (dense for small grids, Lanczos otherwise).
    ``imaginary_time`` applies renormalized Strang steps
    ``exp(-T dtau/2h) exp(-V dtau/h) exp(-T dtau/2h)``; each stage of
    ``dt_schedule`` runs until the energy changes by less than ``energy_tol``
    per step, and the last stage continues until the residual is below
    ``residual_tol``.  Each step size has its own split fixed point, so a step
    that raises the energy (beyond rounding) is rejected and the iteration
    moves on to the next, smaller step; past the end of the schedule the step
    is halved.  The recorded energy history is therefore nonincreasing.
    """
    pot.check_bounded_below()
    ham = GridHamiltonian(spec, pot, hbar, kinetic, alpha)
    guess = _initial_guess(spec, pot, hbar)
    if method == "eigensolve":
        vals, vecs = ham.lowest(1, v0=guess.ravel())
        psi = Wavefunctional.from_grid(_positive_gauge(vecs[0]), spec, hbar)
        energy = float(vals[0])
        res = ham.residual(psi, energy)
        return GroundState(psi, energy, res, [energy])
    if method != "imaginary_time":
        raise ValueError(f"unknown ground-state method {method!r}")
    if kinetic != "spectral":
        raise ValueError("imaginary-time propagation uses the spectral kinetic term")
    schedule = [float(d) for d in dt_schedule]
    if not schedule or min(schedule) <= 0:
        raise ValueError("dt_schedule must hold positive steps")
    amps = guess / np.sqrt(np.sum(guess**2) * spec.measure)
    hpsi = ham.apply(amps)
    energy = float(np.sum(amps * hpsi) * spec.measure)
    history = [energy]
    res = np.inf
    it = 0
    stage = 0
    h_eff = np.sqrt(alpha) * hbar  # imaginary time in units where the generator is H / (sqrt(alpha) hbar)
    while True:
        dtau = schedule[stage]
        kin = np.exp(-0.5 * dtau * ham.kinetic_symbol / h_eff)
        potf = np.exp(-dtau * ham.potential / h_eff)
        last = stage == len(schedule) - 1
        advance = False
        while True:
            if it >= max_iter:
                raise ConvergenceError(f"imaginary-time iteration did not converge in {max_iter} steps")
            it += 1
            trial = np.fft.ifftn(kin * np.fft.fftn(amps)).real
            trial = potf * trial
            trial = np.fft.ifftn(kin * np.fft.fftn(trial)).real
            trial /= np.sqrt(np.sum(trial**2) * spec.measure)
            htrial = ham.apply(trial)
            new = float(np.sum(trial * htrial) * spec.measure)
            if new > energy + 1e-13 * max(1.0, abs(energy)):
                if last:
                    schedule.append(0.5 * dtau)
                advance = True
                break
            delta = energy - new
            amps, hpsi, energy = trial, htrial, new
            history.append(energy)
            if delta < energy_tol:
                if not last:
                    advance = True
                    break
                res = float(np.sqrt(np.sum((hpsi - energy * amps) ** 2) / np.sum(amps**2)))
                if res < residual_tol:
                    break
        if not advance:
            break
        stage += 1
    psi = Wavefunctional.from_grid(_positive_gauge(amps), spec, hbar)
    return GroundState(psi, energy, res, history)


def _propagate(amps, kin_half, pot_full, steps, measure, record_every=None, check_every=1000):
    """Strang steps; consecutive kinetic half-steps are fused."""
    snapshots = [amps.copy()] if record_every else None
    norm0 = np.sum(np.abs(amps) ** 2) * measure
    if steps == 0:
        return amps.copy(), snapshots
    kin_full = kin_half * kin_half
    amps = np.fft.ifftn(kin_half * np.fft.fftn(amps))
    for s in range(1, steps + 1):
        amps = pot_full * amps
        k = np.fft.fftn(amps)
        closing = s == steps or (record_every and s % record_every == 0)
        if closing:
            amps = np.fft.ifftn(kin_half * k)
            if record_every and s % record_every == 0:
                snapshots.append(amps.copy())
            if s != steps:
                amps = np.fft.ifftn(kin_half * np.fft.fftn(amps))
        else:
            amps = np.fft.ifftn(kin_full * k)
        if s % check_every == 0 or s == steps:
            drift = abs(np.sum(np.abs(amps) ** 2) * measure - norm0)
            if not np.isfinite(drift) or drift > 1e-12 * max(s, 1) + 1e-13:
                raise NormDriftError(f"norm drift {drift:.3g} after {s} steps")
    return amps, snapshots


def _phases(spec, pot, dt, hbar_time, kinetic_coeff):
    ksym = kinetic_coeff * _k_squared(spec)
    kin_half = np.exp(-0.5j * dt * ksym / hbar_time)
    pot_full = np.exp(-1j * dt * potential_grid(spec, pot) / hbar_time)
    return kin_half, pot_full


def evolve(psi: Wavefunctional, pot: PotentialSpec, dt: float, steps: int, record_every: int | None = None):
    """Real-time Strang split-step propagation (kinetic half, potential, kinetic half).

    Returns the final state, or ``(final, snapshots)`` when ``record_every``
    is given (snapshots every that many steps, starting with the initial one).
    """
    if dt <= 0 or steps < 0:
        raise ValueError("dt must be positive and steps nonnegative")
    spec = psi.spec
    kin_half, pot_full = _phases(spec, pot, dt, psi.hbar, psi.hbar**2 / (2.0 * spec.dx))
    amps, snaps = _propagate(psi.amplitudes, kin_half, pot_full, int(steps), spec.measure, record_every)
    out = replace(psi, amplitudes=amps, t=psi.t + steps * dt, check=False)
    if record_every:
        return out, [replace(psi, amplitudes=a, t=psi.t + k * record_every * dt, check=False) for k, a in enumerate(snaps)]
    return out


def evolve_generalized(psi_alpha: Wavefunctional, pot: PotentialSpec, alpha: float, dt: float, steps: int,
                       record_every: int | None = None):
    """Propagate ``i sqrt(alpha) hbar dPsi/dt = [-(alpha hbar^2/(2 dx)) sum d^2 + V] Psi``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if dt <= 0 or steps < 0:
        raise ValueError("dt must be positive and steps nonnegative")
    spec = psi_alpha.spec
    hbar = psi_alpha.hbar
    kin_half, pot_full = _phases(spec, pot, dt, np.sqrt(alpha) * hbar, alpha * hbar**2 / (2.0 * spec.dx))
    amps, snaps = _propagate(psi_alpha.amplitudes, kin_half, pot_full, int(steps), spec.measure, record_every)
    out = replace(psi_alpha, amplitudes=amps, t=psi_alpha.t + steps * dt, check=False)
    if record_every:
        return out, [replace(psi_alpha, amplitudes=a, t=psi_alpha.t + k * record_every * dt, check=False)
                     for k, a in enumerate(snaps)]
    return out


def coherent_state(spec: LatticeSpec, m2: float, hbar: float, shift) -> Wavefunctional:
    """Free-field ground state displaced by ``shift`` (one value per site)."""
    oracle = free_field_oracle(spec, m2, hbar)
    phi = spec.configs() - np.asarray(shift, dtype=float)
    quad = np.einsum("...i,ij,...j->...", phi, oracle.kernel, phi)
    return Wavefunctional.from_grid(np.exp(-spec.dx * quad / (2.0 * hbar)), spec, hbar)
