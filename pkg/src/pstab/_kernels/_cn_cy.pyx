# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the 1D Crank-Nicolson sweeps.

Same interface as _cn_py. Each implicit step is solved with the Thomas
algorithm (no pivoting; the implicit matrix I + dt/2 (A + E) is diagonally
dominant for the operators this package builds, and an exactly vanishing pivot
still raises SingularStep). The block sweep keeps the column index innermost so
the forward/backward substitutions stream through contiguous rows.
"""

import numpy as np

from libc.math cimport fabs

from ..errors import SingularStep

cdef double _TINY = 1e-300


def cn_evolve(off_o, diag_o, e_half_o, g_half_o, y0_o, double dt, int m):
    cdef double[::1] off = np.ascontiguousarray(off_o, dtype=np.float64)
    cdef double[::1] diag = np.ascontiguousarray(diag_o, dtype=np.float64)
    cdef Py_ssize_t n = diag.shape[0]
    cdef bint has_e = e_half_o is not None
    cdef bint has_g = g_half_o is not None
    cdef double[:, ::1] e_half = (
        np.ascontiguousarray(e_half_o, dtype=np.float64) if has_e
        else np.empty((1, 1))
    )
    cdef double[:, ::1] g_half = (
        np.ascontiguousarray(g_half_o, dtype=np.float64) if has_g
        else np.empty((1, 1))
    )
    out_np = np.empty((m + 1, n), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    y_np = np.array(y0_o, dtype=np.float64)
    cdef double[::1] y = y_np
    cdef double[::1] bd = np.empty(n, dtype=np.float64)
    cdef double[::1] cp = np.empty(n, dtype=np.float64)
    cdef double[::1] rhs = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, k
    cdef double half = 0.5 * dt
    cdef double d, acc, r, piv, lo

    for i in range(n):
        out[0, i] = y[i]
    for k in range(m):
        for i in range(n):
            d = diag[i] + (e_half[k, i] if has_e else 0.0)
            acc = d * y[i]
            if i > 0:
                acc += off[i - 1] * y[i - 1]
            if i < n - 1:
                acc += off[i] * y[i + 1]
            r = y[i] - half * acc
            if has_g:
                r += dt * g_half[k, i]
            rhs[i] = r
            bd[i] = 1.0 + half * d
        piv = bd[0]
        if fabs(piv) < _TINY:
            raise SingularStep(f"implicit system singular at step {k}")
        cp[0] = half * off[0] / piv if n > 1 else 0.0
        rhs[0] = rhs[0] / piv
        for i in range(1, n):
            lo = half * off[i - 1]
            piv = bd[i] - lo * cp[i - 1]
            if fabs(piv) < _TINY:
                raise SingularStep(f"implicit system singular at step {k}")
            cp[i] = (half * off[i] / piv) if i < n - 1 else 0.0
            rhs[i] = (rhs[i] - lo * rhs[i - 1]) / piv
        y[n - 1] = rhs[n - 1]
        for i in range(n - 2, -1, -1):
            y[i] = rhs[i] - cp[i] * y[i + 1]
        for i in range(n):
            out[k + 1, i] = y[i]
    return out_np


def cn_sweep_block(off_o, diag_o, e_half_o, y0_o, g_sp_o, g_tau_o, double dt, int m):
    cdef double[::1] off = np.ascontiguousarray(off_o, dtype=np.float64)
    cdef double[::1] diag = np.ascontiguousarray(diag_o, dtype=np.float64)
    cdef Py_ssize_t n = diag.shape[0]
    cdef bint has_e = e_half_o is not None
    cdef bint has_gs = g_sp_o is not None
    cdef bint has_gt = g_tau_o is not None
    cdef double[:, ::1] e_half = (
        np.ascontiguousarray(e_half_o, dtype=np.float64) if has_e
        else np.empty((1, 1))
    )
    y_np = np.array(y0_o, dtype=np.float64, order="C")
    if y_np.ndim != 2:
        raise ValueError("y0 must be a (n, k) column block")
    cdef double[:, ::1] Y = y_np
    cdef Py_ssize_t kc = Y.shape[1]
    cdef double[:, ::1] g_sp = (
        np.ascontiguousarray(g_sp_o, dtype=np.float64) if has_gs
        else np.empty((1, 1))
    )
    cdef double[::1] g_tau = (
        np.ascontiguousarray(g_tau_o, dtype=np.float64) if has_gt
        else np.empty(1)
    )
    rhs_np = np.empty((n, kc), dtype=np.float64)
    cdef double[:, ::1] rhs = rhs_np
    cdef double[::1] bd = np.empty(n, dtype=np.float64)
    cdef double[::1] cp = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double half = 0.5 * dt
    cdef double d, piv, lo, tau, scale

    for k in range(m):
        tau = 1.0
        if has_gt:
            tau = g_tau[k]
        for i in range(n):
            d = diag[i] + (e_half[k, i] if has_e else 0.0)
            bd[i] = 1.0 + half * d
            scale = 1.0 - half * d
            for j in range(kc):
                rhs[i, j] = scale * Y[i, j]
            if i > 0:
                lo = half * off[i - 1]
                for j in range(kc):
                    rhs[i, j] -= lo * Y[i - 1, j]
            if i < n - 1:
                lo = half * off[i]
                for j in range(kc):
                    rhs[i, j] -= lo * Y[i + 1, j]
            if has_gs and tau != 0.0:
                for j in range(kc):
                    rhs[i, j] += dt * tau * g_sp[i, j]
        piv = bd[0]
        if fabs(piv) < _TINY:
            raise SingularStep(f"implicit system singular at step {k}")
        cp[0] = half * off[0] / piv if n > 1 else 0.0
        for j in range(kc):
            rhs[0, j] = rhs[0, j] / piv
        for i in range(1, n):
            lo = half * off[i - 1]
            piv = bd[i] - lo * cp[i - 1]
            if fabs(piv) < _TINY:
                raise SingularStep(f"implicit system singular at step {k}")
            cp[i] = (half * off[i] / piv) if i < n - 1 else 0.0
            for j in range(kc):
                rhs[i, j] = (rhs[i, j] - lo * rhs[i - 1, j]) / piv
        for j in range(kc):
            Y[n - 1, j] = rhs[n - 1, j]
        for i in range(n - 2, -1, -1):
            for j in range(kc):
                Y[i, j] = rhs[i, j] - cp[i] * Y[i + 1, j]
    return y_np
