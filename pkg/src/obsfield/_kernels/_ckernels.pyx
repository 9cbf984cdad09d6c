# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, expm1, log1p

cnp.import_array()

cdef enum:
    KIND_KL = 0
    KIND_RENYI = 1


cdef inline void _force(const double[::1] phi, double[::1] out, Py_ssize_t n,
                        double inv_dx2, double m2, double lam3, double lam4) noexcept nogil:
    cdef Py_ssize_t i, ip, im
    cdef double p
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        im = i - 1 if i > 0 else n - 1
        p = phi[i]
        out[i] = (phi[ip] + phi[im] - 2.0 * p) * inv_dx2 \
            - (m2 * p + 3.0 * lam3 * p * p + 4.0 * lam4 * p * p * p)


def leapfrog_kg(phi0, pi0, double dx, double m2, double lam3, double lam4,
                double dt, Py_ssize_t steps):
    cdef double[::1] phi = np.array(phi0, dtype=np.float64)
    cdef double[::1] pi = np.array(pi0, dtype=np.float64)
    cdef Py_ssize_t n = phi.shape[0]
    phis_arr = np.empty((steps + 1, n))
    pis_arr = np.empty((steps + 1, n))
    cdef double[:, ::1] phis = phis_arr
    cdef double[:, ::1] pis = pis_arr
    cdef double[::1] force = np.empty(n)
    cdef double inv_dx2 = 1.0 / (dx * dx)
    cdef double half = 0.5 * dt
    cdef Py_ssize_t s, i
    with nogil:
        for i in range(n):
            phis[0, i] = phi[i]
            pis[0, i] = pi[i]
        _force(phi, force, n, inv_dx2, m2, lam3, lam4)
        for s in range(1, steps + 1):
            for i in range(n):
                pi[i] = pi[i] + half * force[i]
                phi[i] = phi[i] + dt * pi[i]
            _force(phi, force, n, inv_dx2, m2, lam3, lam4)
            for i in range(n):
                pi[i] = pi[i] + half * force[i]
                phis[s, i] = phi[i]
                pis[s, i] = pi[i]
    return phis_arr, pis_arr


def shifted_divergences_1d(coef, logrho, weight, double h, omegas, int kind, double alpha):
    cdef double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef double[::1] lr = np.ascontiguousarray(logrho, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weight, dtype=np.float64)
    cdef double[::1] om = np.ascontiguousarray(omegas, dtype=np.float64)
    cdef Py_ssize_t m = lr.shape[0]
    cdef Py_ssize_t n = om.shape[0]
    values_arr = np.empty(n)
    dropped_arr = np.empty(n)
    cdef double[::1] values = values_arr
    cdef double[::1] dropped = dropped_arr
    cdef Py_ssize_t s, j, p, k
    cdef double pos, x, shifted, delta, acc, lost
    cdef double one_minus_alpha = 1.0 - alpha
    with nogil:
        for s in range(n):
            pos = om[s] / h
            k = <Py_ssize_t>floor(pos)
            x = (pos - floor(pos)) * h
            acc = 0.0
            lost = 0.0
            for j in range(m):
                p = j + k
                if p < 0 or p > m - 2:
                    lost = lost + w[j]
                    continue
                shifted = ((c[0, p] * x + c[1, p]) * x + c[2, p]) * x + c[3, p]
                delta = shifted - lr[j]
                if kind == KIND_KL:
                    acc = acc - w[j] * delta
                else:
                    acc = acc + w[j] * expm1(one_minus_alpha * delta)
            dropped[s] = lost
            if kind == KIND_KL:
                values[s] = acc
            elif kind == KIND_RENYI:
                values[s] = log1p(acc) / (alpha - 1.0)
            else:
                values[s] = acc / (alpha - 1.0)
    return values_arr, dropped_arr
