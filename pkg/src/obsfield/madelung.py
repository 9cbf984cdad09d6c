"""Polar (rho, S) form of wave functionals: Bohm potential, quantum Hamilton-Jacobi, hydrodynamic flow.

``Psi = sqrt(rho) exp(i S / hbar)``.  With the lattice conventions of
``lattice`` the quantum Hamilton-Jacobi equation reads

    dS/dt + (1/(2 dx)) sum_i (dS/dphi_i)^2 + potential_integral
          - (alpha hbar^2 / (2 dx)) sum_i (d^2 R/dphi_i^2) / R = 0

and the continuity equation ``drho/dt + (1/dx) sum_i d(rho dS/dphi_i)/dphi_i = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeSpec, PotentialSpec, partial, potential_grid
from .schrodinger import NormDriftError, Wavefunctional

NODE_THRESHOLD = 1e-12
NODE_FRACTION = 1e-3
INTERIOR_FLOOR = 1e-6
CLOSURE_WINDOW = 8
CLOSURE_FLOOR = 1e-6


class MadelungNodeError(RuntimeError):
    """The density vanishes (or is lost) inside its support."""


def _enclosed(mask: np.ndarray) -> np.ndarray:
    """Nodes outside ``mask`` that sit between two ``mask`` nodes along some axis."""
    out = np.zeros(mask.shape, dtype=bool)
    for axis in range(mask.ndim):
        before = np.maximum.accumulate(mask, axis=axis)
        after = np.flip(np.maximum.accumulate(np.flip(mask, axis), axis=axis), axis)
        out |= before & after & ~mask
    return out


@dataclass(frozen=True)
class MadelungState:
    """Density ``rho`` and phase functional ``s`` (action units) on the tensor grid.

    ``s`` carries meaning only on the support ``rho > node_threshold * max(rho)``.
    """

    rho: np.ndarray
    s: np.ndarray
    spec: LatticeSpec
    hbar: float = 1.0
    t: float = 0.0
    node_threshold: float = NODE_THRESHOLD
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = np.asarray(self.spec.check_grid(self.rho), dtype=float)
        s = np.asarray(self.spec.check_grid(self.s), dtype=float)
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if not np.all(np.isfinite(rho)) or np.any(rho < 0):
            raise ValueError("rho must be finite and nonnegative")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "s", s)
        if self.check:
            mass = self.mass()
            if abs(mass - 1.0) > 1e-10:
                raise ValueError(f"rho is not normalized (mass {mass:.15g})")

    def mass(self) -> float:
        return float(np.sum(self.rho) * self.spec.measure)

    @property
    def amplitude(self) -> np.ndarray:
        return np.sqrt(self.rho)

    @property
    def support(self) -> np.ndarray:
        return self.rho > self.node_threshold * np.max(self.rho)

    def interior(self, floor: float = INTERIOR_FLOOR) -> np.ndarray:
        """Nodes with ``rho > floor * max(rho)`` off the grid edge, where derivative checks are meaningful.

        Edge nodes are excluded because their one-sided stencils differ from the bulk ones.
        """
        mask = self.rho > floor * np.max(self.rho)
        edge = np.zeros_like(mask)
        for axis in range(mask.ndim):
            idx = [slice(None)] * mask.ndim
            idx[axis] = [0, -1]
            edge[tuple(idx)] = True
        return mask & ~edge

    def check_nodeless(self):
        holes = _enclosed(self.support)
        if np.any(holes):
            idx = tuple(int(i) for i in np.argwhere(holes)[0])
            raise MadelungNodeError(f"density vanishes inside its support (first node at grid index {idx})")

    def compose(self, check: bool = True) -> Wavefunctional:
        amps = self.amplitude * np.exp(1j * self.s / self.hbar)
        return Wavefunctional(amps, self.spec, self.hbar, self.t, check=check)


def _unwrap_from(anchor, angles):
    """Unwrap ``angles`` (first entry replaced by ``anchor``) along axis 0."""
    seq = np.concatenate([np.asarray(anchor)[None], angles[1:]], axis=0)
    return np.unwrap(seq, axis=0)


def decompose(psi: Wavefunctional, node_threshold: float = NODE_THRESHOLD) -> MadelungState:
    """Split ``psi`` into ``(rho, S)``.

    The phase is unwrapped axis by axis, outward from the node of largest
    ``|psi|``, stopping at the edge of the support; support nodes those lines
    miss are then filled from already-unwrapped neighbours.  Outside the
    support ``S`` is continued by copying the nearest unwrapped value, which
    keeps difference stencils at the support edge free of jumps.  A node
    enclosed by the support, or a support region the unwrap cannot reach,
    raises ``MadelungNodeError``.
    """
    spec = psi.spec
    amps = psi.amplitudes
    rho = np.abs(amps) ** 2
    ms = MadelungState(rho, np.zeros(spec.grid_shape), spec, psi.hbar, psi.t, node_threshold, check=False)
    support = ms.support
    ms.check_nodeless()
    angle = np.angle(amps)
    theta = np.zeros(spec.grid_shape)
    done = np.zeros(spec.grid_shape, dtype=bool)
    centre = np.unravel_index(np.argmax(rho), rho.shape)
    theta[centre] = angle[centre]
    done[centre] = True
    for axis in range(spec.n_sites):
        c = centre[axis]
        th = np.moveaxis(theta, axis, 0)
        dn = np.moveaxis(done, axis, 0)
        ang = np.moveaxis(angle, axis, 0)
        sup = np.moveaxis(support, axis, 0)
        anchored = dn[c].copy()
        for sl in (slice(c, None), slice(c, None, -1)):
            seg = _unwrap_from(th[c], ang[sl])
            # stop each line at its first node outside the support
            reach = np.logical_and.accumulate(sup[sl], axis=0) & anchored[None]
            th[sl] = np.where(reach, seg, th[sl])
            dn[sl] |= reach
    _fill(theta, done, angle, support)
    if np.any(support & ~done):
        raise MadelungNodeError("phase unwrapping could not reach every support node")
    _fill(theta, done, theta, np.ones_like(support), wrap=False)
    s = psi.hbar * theta
    return MadelungState(rho, s, spec, psi.hbar, psi.t, node_threshold, check=False)


def _fill(theta, done, angle, support, wrap: bool = True):
    """Propagate the unwrapped phase to unreached ``support`` nodes through nearest neighbours.

    With ``wrap=False`` the neighbour's value is copied as is.
    """
    while True:
        todo = support & ~done
        if not np.any(todo):
            return
        grown = False
        for axis in range(theta.ndim):
            for step in (1, -1):
                src_done = np.roll(done, step, axis=axis)
                src_theta = np.roll(theta, step, axis=axis)
                # np.roll wraps around; the wrapped slab is not a neighbour
                edge = [slice(None)] * theta.ndim
                edge[axis] = 0 if step == 1 else -1
                src_done[tuple(edge)] = False
                take = todo & src_done
                if np.any(take):
                    if wrap:
                        d = angle[take] - src_theta[take]
                        theta[take] = src_theta[take] + (d - 2.0 * np.pi * np.round(d / (2.0 * np.pi)))
                    else:
                        theta[take] = src_theta[take]
                    done[take] = True
                    todo &= ~take
                    grown = True
        if not grown:
            return


def _r_curvature(ms: MadelungState, site: int, method: str, form: str) -> np.ndarray:
    """``(d^2 R / dphi_site^2) / R`` (plain derivatives)."""
    if form == "log":
        ell = 0.5 * np.log(np.maximum(ms.rho, np.finfo(float).tiny))
        d1 = partial(ell, site, ms.spec, 1, method)
        return partial(ell, site, ms.spec, 2, method) + d1**2
    if form == "direct":
        r = ms.amplitude
        with np.errstate(divide="ignore", invalid="ignore"):
            return partial(r, site, ms.spec, 2, method) / r
    raise ValueError(f"unknown form {form!r}")


def bohm_potential(ms: MadelungState, site: int, method: str = "fd", form: str = "log") -> np.ndarray:
    """``-(hbar^2 / (2R)) delta^2 R / delta phi(x_site)^2`` on the support (nan elsewhere).

    ``form="log"`` evaluates ``R''/R`` as ``l'' + l'^2`` with ``l = ln R``,
    which is exact under finite differences for Gaussian densities and never
    divides by a small ``R``; ``form="direct"`` differentiates ``R`` itself.
    """
    ms.check_nodeless()
    curv = _r_curvature(ms, site, method, form)
    out = -0.5 * ms.hbar**2 * curv / ms.spec.dx**2
    return np.where(ms.support, out, np.nan)


def bohm_term(ms: MadelungState, alpha: float = 1.0, method: str = "fd", form: str = "log") -> np.ndarray:
    """Integrated quantum potential ``alpha int -(hbar^2/2R) delta^2 R/delta phi^2 d^3x`` as a grid."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    ms.check_nodeless()
    spec = ms.spec
    shape_only = sum(_r_curvature(ms, i, method, form) for i in range(spec.n_sites))
    out = (-0.5 / spec.dx) * shape_only * (alpha * ms.hbar**2)
    return np.where(ms.support, out, np.nan)


def curvature_identity_residual(ms: MadelungState, method: str = "spectral", interior_floor: float = INTERIOR_FLOOR) -> float:
    """Max over interior nodes and sites of ``(rho'/rho)^2 - 2 rho''/rho + 4 R''/R``.

    Derivatives are functional (``1/dx`` per order).  Interior nodes are those
    with ``rho > interior_floor * max(rho)``; the default spectral derivatives
    resolve smooth densities to near machine precision, whereas second-order
    differences leave an ``O(h^2)`` residual.  The spectral path treats the
    field axis as periodic, so the density must fall to rounding level at the
    box edge; otherwise the wrapped edge jump, divided by the small interior
    ``rho``, dominates the residual.
    """
    ms.check_nodeless()
    spec = ms.spec
    mask = ms.interior(interior_floor)
    rho = ms.rho
    r = ms.amplitude
    worst = 0.0
    for i in range(spec.n_sites):
        d1 = partial(rho, i, spec, 1, method)[mask] / spec.dx
        d2 = partial(rho, i, spec, 2, method)[mask] / spec.dx**2
        r2 = partial(r, i, spec, 2, method)[mask] / spec.dx**2
        res = (d1 / rho[mask]) ** 2 - 2.0 * d2 / rho[mask] + 4.0 * r2 / r[mask]
        if res.size:
            worst = max(worst, float(np.max(np.abs(res))))
    return worst


def qhj_residual(
    ms: MadelungState,
    s_dot,
    pot: PotentialSpec,
    alpha: float = 1.0,
    method: str = "fd",
    form: str = "log",
    include_bohm: bool = True,
) -> np.ndarray:
    """``dS/dt + int {(delta S/delta phi)^2/2 + V - (alpha hbar^2/2R) delta^2 R/delta phi^2} d^3x``.

    ``s_dot`` is supplied by the caller (an analytic stationary rate or a
    centred difference of a trajectory).  Nodes outside the support are nan.
    ``include_bohm=False`` drops the quantum potential, giving the classical
    Hamilton-Jacobi residual of the same pair.
    """
    spec = ms.spec
    out = np.array(np.broadcast_to(np.asarray(s_dot, dtype=float), spec.grid_shape))
    for i in range(spec.n_sites):
        out += 0.5 * partial(ms.s, i, spec, 1, method) ** 2 / spec.dx
    out += potential_grid(spec, pot)
    if include_bohm:
        out += bohm_term(ms, alpha, method, form)
    else:
        ms.check_nodeless()
    return np.where(ms.support, out, np.nan)


def density_l2(rho1: np.ndarray, rho2: np.ndarray, spec: LatticeSpec) -> float:
    """``sqrt(int (rho1 - rho2)^2)`` with the grid measure."""
    return float(np.sqrt(np.sum((np.asarray(rho1) - np.asarray(rho2)) ** 2) * spec.measure))


def madelung_step_limit(spec: LatticeSpec, hbar: float, alpha: float = 1.0) -> float:
    """RK4 stability limit for the dispersive part of the flow on the difference grid."""
    omega_max = 2.0 * np.sqrt(alpha) * hbar / (spec.dx * spec.h**2)
    return 2.5 / omega_max


def _close_tails(f: np.ndarray, active: np.ndarray, window: int = CLOSURE_WINDOW) -> np.ndarray:
    """Continue ``f`` outside ``active`` with a least-squares quadratic along each axis.

    Each line is extended from a fit to its outermost ``window`` active nodes
    (a wide fit keeps rounding noise from being amplified into the tail);
    nodes filled along one axis count as active for the next.
    """
    out = f.copy()
    active = active.copy()
    n = f.shape[0]
    idx = np.arange(n)
    offs = np.arange(window, dtype=float)
    pinv = np.linalg.pinv(np.vander(offs, 3, increasing=True))  # (3, window)
    for axis in range(f.ndim):
        g = np.moveaxis(out, axis, -1)
        a = np.moveaxis(active, axis, -1)
        first = np.argmax(a, axis=-1)
        last = n - 1 - np.argmax(a[..., ::-1], axis=-1)
        ok = (a.any(axis=-1) & (last - first >= window - 1))[..., None]
        fills = []
        for edge, sign in ((last, -1), (first, 1)):
            pts = np.clip(edge[..., None] + sign * offs.astype(int), 0, n - 1)
            c = np.take_along_axis(g, pts, axis=-1) @ pinv.T
            x = sign * (edge[..., None] - idx)  # distance past the edge
            fill = ok & (x > 0)
            fills.append((fill, c[..., :1] - c[..., 1:2] * x + c[..., 2:3] * x**2))
        (fill_up, up), (fill_lo, lo) = fills
        g[...] = np.where(fill_up, up, np.where(fill_lo, lo, g))
        a |= fill_up | fill_lo
    return out


def _closed(u, s, log_threshold):
    active = u > np.max(u) + log_threshold
    return _close_tails(u, active), _close_tails(s, active)


def _rates(u, s, spec, vgrid, coeff, method):
    du = np.zeros_like(u)
    ds = np.array(vgrid, dtype=float)
    for i in range(spec.n_sites):
        su = partial(s, i, spec, 1, method)
        uu = partial(u, i, spec, 1, method)
        du -= (uu * su + partial(s, i, spec, 2, method)) / spec.dx
        ds += 0.5 * su**2 / spec.dx
        ds -= coeff * (0.5 * partial(u, i, spec, 2, method) + 0.25 * uu**2)
    return du, -ds


def evolve_madelung(
    ms: MadelungState,
    pot: PotentialSpec,
    dt: float,
    steps: int,
    alpha: float = 1.0,
    record_every: int | None = None,
    method: str = "fd",
    mass_tol: float = 1e-8,
    check_every: int = 10,
    closure_floor: float = CLOSURE_FLOOR,
):
    """Integrate the continuity and quantum Hamilton-Jacobi equations with classical RK4.

    The state is carried as ``(u, S)`` with ``u = ln rho``, so ``rho`` stays
    positive and Gaussian states are represented exactly by the difference
    stencils.  In this form a relative error moving outward grows like
    ``sqrt(max rho / rho)``, so the far tails (where ``S`` has no meaning and
    ``u`` carries no weight) would blow up long before the bulk is affected.
    Before every stage both fields are therefore continued below
    ``closure_floor * max rho`` by a least-squares quadratic from the
    adjacent nodes.  This is exact for Gaussian states and keeps a coherent
    state accurate for about one oscillator period; longer runs, or states
    with strongly non-Gaussian tails, are outside its range.

    Nodeless initial states only: the run aborts with ``MadelungNodeError``
    if values stop being finite or if more than 0.1% of the grid turns into
    nodes enclosed by the support, and with ``NormDriftError`` if the mass
    drifts by more than ``mass_tol``.

    Returns the final state, or ``(final, snapshots)`` with ``record_every``.
    """
    if dt <= 0 or steps < 0:
        raise ValueError("dt must be positive and steps nonnegative")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    spec = ms.spec
    limit = madelung_step_limit(spec, ms.hbar, alpha)
    if dt >= limit:
        raise ValueError(f"dt={dt} exceeds the stability limit {limit:.3g} of the hydrodynamic flow")
    ms.check_nodeless()
    if not 0 < closure_floor < 1:
        raise ValueError("closure_floor must lie in (0, 1)")
    if steps == 0:
        return (ms, [ms]) if record_every else ms
    log_thr = np.log(closure_floor)
    u = np.log(np.maximum(ms.rho, np.finfo(float).tiny))
    s = ms.s.copy()
    vgrid = potential_grid(spec, pot)
    coeff = alpha * ms.hbar**2 / (2.0 * spec.dx)
    mass0 = ms.mass()

    def rates(u_, s_):
        return _rates(*_closed(u_, s_, log_thr), spec, vgrid, coeff, method)

    def state(u_, s_, k):
        return MadelungState(np.exp(u_), s_.copy(), spec, ms.hbar, ms.t + k * dt, ms.node_threshold, check=False)

    snapshots = [state(u, s, 0)] if record_every else None
    for k in range(1, int(steps) + 1):
        k1 = rates(u, s)
        k2 = rates(u + 0.5 * dt * k1[0], s + 0.5 * dt * k1[1])
        k3 = rates(u + 0.5 * dt * k2[0], s + 0.5 * dt * k2[1])
        k4 = rates(u + dt * k3[0], s + dt * k3[1])
        u = u + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        s = s + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        u, s = _closed(u, s, log_thr)
        if k % check_every == 0 or k == steps:
            _guard(u, s, spec, mass0, mass_tol, ms.node_threshold, k)
        if record_every and k % record_every == 0:
            snapshots.append(state(u, s, k))
    out = state(u, s, int(steps))
    return (out, snapshots) if record_every else out


def _guard(u, s, spec, mass0, mass_tol, threshold, k):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s))):
        raise MadelungNodeError(f"hydrodynamic fields became non-finite after {k} steps")
    rho = np.exp(u)
    holes = _enclosed(rho > threshold * np.max(rho))
    frac = np.count_nonzero(holes) / holes.size
    if frac > NODE_FRACTION:
        raise MadelungNodeError(f"node formation: {frac:.2%} of the grid fell below the node threshold after {k} steps")
    drift = abs(np.sum(rho) * spec.measure - mass0)
    if drift > mass_tol:
        raise NormDriftError(f"probability drift {drift:.3g} after {k} steps")
