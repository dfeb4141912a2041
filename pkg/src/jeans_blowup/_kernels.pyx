# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled right-hand side of the quasilinear wave equation.

The equation, written for a generic time variable T, is

    rho_TT = G (lap rho + q d_1 rho) + c1 rho (1+rho) - c2 rho_T + c5 rho_T^2/(1+rho)
    G      = m2 rho_T^2/(1+rho)^2 + c4 (1+rho)

with fourth order central differences.  The outer two cells on every side
are left untouched; the caller pins them to the homogeneous solution.
The chart field obeys g_T = cg rho (1+rho)^e1 (-g)^e2 on every cell.
"""

from libc.math cimport exp, log, INFINITY


def wave_rhs_1d(const double[::1] rho, const double[::1] v, const double[::1] g,
                double[::1] drho, double[::1] dv, double[::1] dg,
                double h, double q, double m2, double c1, double c2, double c4, double c5,
                double cg, double e1, double e2):
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t i
    cdef double ih = 1.0 / (12.0 * h)
    cdef double ih2 = 1.0 / (12.0 * h * h)
    cdef double r, w, opr, G, lap, d1
    cdef double gmin = INFINITY
    for i in range(2, n - 2):
        r = rho[i]
        w = v[i]
        opr = 1.0 + r
        lap = (-rho[i - 2] + 16.0 * rho[i - 1] - 30.0 * r + 16.0 * rho[i + 1] - rho[i + 2]) * ih2
        d1 = (rho[i - 2] - 8.0 * rho[i - 1] + 8.0 * rho[i + 1] - rho[i + 2]) * ih
        G = m2 * w * w / (opr * opr) + c4 * opr
        if G < gmin:
            gmin = G
        drho[i] = w
        dv[i] = G * (lap + q * d1) + c1 * r * opr - c2 * w + c5 * w * w / opr
    for i in range(n):
        dg[i] = cg * rho[i] * exp(e1 * log(1.0 + rho[i]) + e2 * log(-g[i]))
    return gmin


def wave_rhs_2d(const double[:, ::1] rho, const double[:, ::1] v, const double[:, ::1] g,
                double[:, ::1] drho, double[:, ::1] dv, double[:, ::1] dg,
                double h, double q, double m2, double c1, double c2, double c4, double c5,
                double cg, double e1, double e2):
    cdef Py_ssize_t nx = rho.shape[0]
    cdef Py_ssize_t ny = rho.shape[1]
    cdef Py_ssize_t i, j
    cdef double ih = 1.0 / (12.0 * h)
    cdef double ih2 = 1.0 / (12.0 * h * h)
    cdef double r, w, opr, G, lap, d1
    cdef double gmin = INFINITY
    for i in range(2, nx - 2):
        for j in range(2, ny - 2):
            r = rho[i, j]
            w = v[i, j]
            opr = 1.0 + r
            lap = ((-rho[i - 2, j] + 16.0 * rho[i - 1, j] - 30.0 * r + 16.0 * rho[i + 1, j] - rho[i + 2, j])
                   + (-rho[i, j - 2] + 16.0 * rho[i, j - 1] - 30.0 * r + 16.0 * rho[i, j + 1] - rho[i, j + 2])) * ih2
            d1 = (rho[i - 2, j] - 8.0 * rho[i - 1, j] + 8.0 * rho[i + 1, j] - rho[i + 2, j]) * ih
            G = m2 * w * w / (opr * opr) + c4 * opr
            if G < gmin:
                gmin = G
            drho[i, j] = w
            dv[i, j] = G * (lap + q * d1) + c1 * r * opr - c2 * w + c5 * w * w / opr
    for i in range(nx):
        for j in range(ny):
            dg[i, j] = cg * rho[i, j] * exp(e1 * log(1.0 + rho[i, j]) + e2 * log(-g[i, j]))
    return gmin
