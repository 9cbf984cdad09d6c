"""Pure-numpy reference versions of the compiled kernels.

Semantics must match ``_ckernels.pyx`` exactly; the test-suite runs both
backends against each other.
"""
import numpy as np

KIND_KL = 0
KIND_RENYI = 1
KIND_TSALLIS = 2


def _force(phi, inv_dx2, m2, lam3, lam4):
    lap = (np.roll(phi, -1) + np.roll(phi, 1) - 2.0 * phi) * inv_dx2
    return lap - (m2 * phi + 3.0 * lam3 * phi * phi + 4.0 * lam4 * phi * phi * phi)


def leapfrog_kg(phi0, pi0, dx, m2, lam3, lam4, dt, steps):
    """Kick-drift-kick integration of the lattice Klein-Gordon equation.

    Returns ``(phis, pis)`` of shape ``(steps + 1, n_sites)``.
    """
    phi = np.array(phi0, dtype=np.float64)
    pi = np.array(pi0, dtype=np.float64)
    n = phi.shape[0]
    phis = np.empty((steps + 1, n))
    pis = np.empty((steps + 1, n))
    phis[0] = phi
    pis[0] = pi
    inv_dx2 = 1.0 / (dx * dx)
    half = 0.5 * dt
    force = _force(phi, inv_dx2, m2, lam3, lam4)
    for s in range(1, steps + 1):
        pi = pi + half * force
        phi = phi + dt * pi
        force = _force(phi, inv_dx2, m2, lam3, lam4)
        pi = pi + half * force
        phis[s] = phi
        pis[s] = pi
    return phis, pis


def shifted_divergences_1d(coef, logrho, weight, h, omegas, kind, alpha, chunk=2048):
    """Divergence between a 1-site density and its copies shifted by each omega.

    ``coef`` holds the piecewise-cubic coefficients of ``log rho`` (shape
    ``(4, M - 1)``, highest power first), ``weight = rho * h``.  Nodes whose
    shifted position falls outside the grid are dropped; their weight is
    returned per sample so callers can enforce the truncation budget.
    """
    coef = np.asarray(coef, dtype=np.float64)
    logrho = np.asarray(logrho, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    omegas = np.asarray(omegas, dtype=np.float64)
    m = logrho.shape[0]
    n = omegas.shape[0]
    values = np.empty(n)
    dropped = np.empty(n)
    nodes = np.arange(m)
    for start in range(0, n, chunk):
        om = omegas[start:start + chunk]
        pos = om / h
        k = np.floor(pos)
        x = ((pos - k) * h)[:, None]
        piece = nodes[None, :] + k.astype(np.int64)[:, None]
        valid = (piece >= 0) & (piece <= m - 2)
        p = np.clip(piece, 0, m - 2)
        shifted = ((coef[0][p] * x + coef[1][p]) * x + coef[2][p]) * x + coef[3][p]
        delta = np.where(valid, shifted - logrho[None, :], 0.0)
        w = np.where(valid, weight[None, :], 0.0)
        dropped[start:start + chunk] = np.sum(weight[None, :] - w, axis=1)
        if kind == KIND_KL:
            values[start:start + chunk] = -np.sum(w * delta, axis=1)
        else:
            acc = np.sum(w * np.expm1((1.0 - alpha) * delta), axis=1)
            if kind == KIND_RENYI:
                values[start:start + chunk] = np.log1p(acc) / (alpha - 1.0)
            else:
                values[start:start + chunk] = acc / (alpha - 1.0)
    return values, dropped
