"""Backend kernels: dense-matrix oracle, backend agreement, singular steps."""

import numpy as np
import pytest

import pstab._kernels as kernels
from pstab._kernels import _cn_py
from pstab.errors import SingularStep


def _random_problem(seed, n=40, m=24, cols=3):
    rng = np.random.default_rng(seed)
    off = -np.abs(rng.uniform(0.5, 2.0, n - 1)) * 30
    diag = np.abs(rng.uniform(1.0, 3.0, n)) * 60 + 5
    e_half = rng.uniform(-0.5, 0.5, (m, n))
    g_half = rng.uniform(-1.0, 1.0, (m, n))
    y0 = rng.standard_normal(n)
    y0_block = rng.standard_normal((n, cols))
    g_sp = rng.standard_normal((n, cols))
    g_tau = rng.uniform(0.0, 1.0, m)
    dt = 1.0 / m
    return off, diag, e_half, g_half, y0, y0_block, g_sp, g_tau, dt, m


def _dense_cn_oracle(off, diag, e_half, g_half, y0, dt, m):
    """Reference evolution with dense matrices and numpy.linalg.solve."""
    n = diag.shape[0]
    A = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    out = [np.array(y0, dtype=float)]
    y = out[0].copy()
    eye = np.eye(n)
    for k in range(m):
        Ak = A + (np.diag(e_half[k]) if e_half is not None else 0.0)
        rhs = (eye - 0.5 * dt * Ak) @ y
        if g_half is not None:
            rhs = rhs + dt * g_half[k]
        y = np.linalg.solve(eye + 0.5 * dt * Ak, rhs)
        out.append(y.copy())
    return np.stack(out)


def test_python_kernel_matches_dense_oracle():
    off, diag, e_half, g_half, y0, *_rest, dt, m = _random_problem(0)
    got = _cn_py.cn_evolve(off, diag, e_half, g_half, y0, dt, m)
    want = _dense_cn_oracle(off, diag, e_half, g_half, y0, dt, m)
    assert np.max(np.abs(got - want)) <= 1e-11 * max(1.0, np.max(np.abs(want)))


def test_python_kernel_without_fields():
    off, diag, _e, _g, y0, *_rest, dt, m = _random_problem(1)
    got = _cn_py.cn_evolve(off, diag, None, None, y0, dt, m)
    want = _dense_cn_oracle(off, diag, None, None, y0, dt, m)
    assert np.max(np.abs(got - want)) <= 1e-11


def test_block_sweep_matches_column_evolutions():
    off, diag, e_half, _g, _y0, y0_block, g_sp, g_tau, dt, m = _random_problem(2)
    end = _cn_py.cn_sweep_block(off, diag, e_half, y0_block, g_sp, g_tau, dt, m)
    for j in range(y0_block.shape[1]):
        g_half = g_tau[:, None] * g_sp[:, j][None, :]
        col = _cn_py.cn_evolve(off, diag, e_half, g_half, y0_block[:, j], dt, m)
        assert np.max(np.abs(end[:, j] - col[-1])) <= 1e-11


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled backend not built")
def test_backends_agree():
    from pstab._kernels import _cn_cy

    off, diag, e_half, g_half, y0, y0_block, g_sp, g_tau, dt, m = _random_problem(3)
    a = _cn_py.cn_evolve(off, diag, e_half, g_half, y0, dt, m)
    b = _cn_cy.cn_evolve(off, diag, e_half, g_half, y0, dt, m)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))
    a2 = _cn_py.cn_sweep_block(off, diag, e_half, y0_block, g_sp, g_tau, dt, m)
    b2 = _cn_cy.cn_sweep_block(off, diag, e_half, y0_block, g_sp, g_tau, dt, m)
    assert np.max(np.abs(a2 - b2)) <= 1e-12 * max(1.0, np.max(np.abs(a2)))


@pytest.mark.parametrize("impl_name", ["python", "cython"])
def test_singular_step_raises(impl_name):
    if impl_name == "cython" and kernels.BACKEND != "cython":
        pytest.skip("compiled backend not built")
    impl = _cn_py
    if impl_name == "cython":
        from pstab._kernels import _cn_cy as impl
    # n odd and e chosen so I + dt/2 (A + E) has an exactly zero diagonal:
    # that zero-diagonal tridiagonal is singular for odd n
    n, m, dt = 9, 16, 0.125
    off = -np.ones(n - 1)
    diag = np.full(n, 2.0)
    e_half = np.tile(-2.0 / dt - diag, (m, 1))
    y0 = np.ones(n)
    with pytest.raises(SingularStep):
        impl.cn_evolve(off, diag, e_half, None, y0, dt, m)


def test_inputs_not_mutated():
    off, diag, e_half, g_half, y0, y0_block, g_sp, g_tau, dt, m = _random_problem(4)
    snap = y0_block.copy()
    kernels.cn_sweep_block(off, diag, e_half, y0_block, g_sp, g_tau, dt, m)
    assert np.array_equal(y0_block, snap)
    snap = y0.copy()
    kernels.cn_evolve(off, diag, e_half, g_half, y0, dt, m)
    assert np.array_equal(y0, snap)
