"""Pure NumPy/SciPy backend for the 1D Crank-Nicolson sweeps.

Interface contract shared with the compiled backend (_cn_cy):

    cn_evolve(off, diag, e_half, g_half, y0, dt, m)        -> (m+1, n) trajectory
    cn_sweep_block(off, diag, e_half, y0, g_sp, g_tau, dt, m) -> (n, k) states at T

``off``/``diag`` are the bands of the symmetric operator matrix, ``e_half`` the
zero-order perturbation sampled at half steps (m, n) or None, ``g_half`` the
forcing at half steps. cn_sweep_block advances a block of k columns at once
with an optional separable forcing g_sp (n, k) * g_tau (m,), which is what the
period-map and control-matrix assemblies need.
"""

import numpy as np
from scipy.linalg import solve_banded

from ..errors import SingularStep


def _step_matrices(off, diag, e_row, dt):
    """Implicit banded matrix (ab form) and explicit band scalings for one step."""
    n = diag.shape[0]
    d = diag if e_row is None else diag + e_row
    ab = np.zeros((3, n))
    ab[0, 1:] = 0.5 * dt * off
    ab[1, :] = 1.0 + 0.5 * dt * d
    ab[2, :-1] = 0.5 * dt * off
    return ab, d


def _apply_explicit(off, d, y, dt):
    """(I - dt/2 (A + E)) y for a vector or column block y."""
    out = y - 0.5 * dt * (d[:, None] * y if y.ndim == 2 else d * y)
    if y.ndim == 2:
        out[:-1] -= 0.5 * dt * off[:, None] * y[1:]
        out[1:] -= 0.5 * dt * off[:, None] * y[:-1]
    else:
        out[:-1] -= 0.5 * dt * off * y[1:]
        out[1:] -= 0.5 * dt * off * y[:-1]
    return out


def _solve(ab, rhs, step):
    try:
        return solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularStep(f"implicit system singular at step {step}") from exc


def cn_evolve(off, diag, e_half, g_half, y0, dt, m):
    n = diag.shape[0]
    out = np.empty((m + 1, n))
    out[0] = y0
    y = np.array(y0, dtype=float)
    for k in range(m):
        e_row = e_half[k] if e_half is not None else None
        ab, d = _step_matrices(off, diag, e_row, dt)
        rhs = _apply_explicit(off, d, y, dt)
        if g_half is not None:
            rhs += dt * g_half[k]
        y = _solve(ab, rhs, k)
        out[k + 1] = y
    return out


def cn_sweep_block(off, diag, e_half, y0, g_sp, g_tau, dt, m):
    y = np.array(y0, dtype=float)
    for k in range(m):
        e_row = e_half[k] if e_half is not None else None
        ab, d = _step_matrices(off, diag, e_row, dt)
        rhs = _apply_explicit(off, d, y, dt)
        if g_sp is not None:
            tau = 1.0 if g_tau is None else g_tau[k]
            if tau != 0.0:
                rhs += (dt * tau) * g_sp
        y = _solve(ab, rhs, k)
    return y
