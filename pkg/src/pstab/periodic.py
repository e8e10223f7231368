"""Head-constrained approximate-periodic solves.

A head size K splits the modal vector: modes 1..K (the head) are pinned to
prescribed initial data, modes above K (the tail) must return to their initial
value after one period. Stacking those conditions gives one n x n linear
system for the initial vector,

    rows 1..K:      y0_j = a_j
    rows K+1..n:    ((I - P) y0)_j = (q_off)_j,

solved by SVD with relative truncation. A resonant tail (singular values under
rcond * sigma_max) does not raise: the solve returns the minimum-norm
completion and reports, per truncated direction, the defect |u^T rhs| / T,
which is the period-averaged forcing component that no initial value can
absorb. The returned trajectory is a genuine re-evolution from the computed
initial vector, not the affine shortcut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoAdmissibleK, ValidationError

__all__ = [
    "HeadConstraint",
    "PeriodicSolveReport",
    "solve_k_approx_periodic",
    "choose_head_size",
    "periodicity_residual",
]


@dataclass(frozen=True)
class HeadConstraint:
    """Periodicity class: head size K and the K prescribed head values."""

    size: int
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if self.size != values.shape[0]:
            raise ValidationError(
                f"head size {self.size} does not match {values.shape[0]} values"
            )
        if self.size < 0:
            raise ValidationError("head size cannot be negative")
        if values.size and not np.all(np.isfinite(values)):
            raise ValidationError("head values must be finite")

    @classmethod
    def zero(cls, size):
        return cls(size=size, values=np.zeros(size))


@dataclass(frozen=True)
class PeriodicSolveReport:
    """Solve outcome: trajectory plus the diagnostics of the stitched system.

    ``defects`` holds (mode_index, |u^T rhs| / T) pairs for each truncated
    direction, mode_index being the dominant modal component of the
    unresolvable left singular vector (0-based).
    """

    trajectory: object
    head_size: int
    tail_residual: float
    head_residual: float
    condition_number: float
    rank_deficient: bool
    null_dim: int
    defects: tuple

    def to_dict(self):
        return {
            "head_size": self.head_size,
            "tail_residual": self.tail_residual,
            "head_residual": self.head_residual,
            "condition_number": self.condition_number,
            "rank_deficient": self.rank_deficient,
            "null_dim": self.null_dim,
            "defects": [
                {"mode": int(m) + 1, "defect": float(d)} for m, d in self.defects
            ],
        }


def stitched_system(pm, head):
    """The (matrix, rhs) pair of the head-data + tail-periodicity system."""
    n = pm.n_dof
    K = head.size
    if K > n:
        raise ValidationError(f"head size {K} exceeds {n} modes")
    M = np.eye(n) - pm.matrix
    M[:K] = 0.0
    M[np.arange(K), np.arange(K)] = 1.0
    rhs = np.concatenate([head.values, pm.offset[K:]])
    return M, rhs


class _TruncatedSolver:
    """SVD factorization of a stitched system, reusable across right sides."""

    def __init__(self, M, rcond, T):
        self.T = T
        U, s, Vt = np.linalg.svd(M)
        self.U, self.s, self.Vt = U, s, Vt
        sigma_max = s[0] if s.size else 0.0
        self.keep = s > rcond * sigma_max
        self.null_dim = int(np.sum(~self.keep))
        if s.size and s[-1] > 0:
            self.condition_number = float(sigma_max / s[-1])
        else:
            self.condition_number = float("inf")

    def solve(self, rhs):
        coeffs = self.U.T @ rhs
        y0 = self.Vt[self.keep].T @ (coeffs[self.keep] / self.s[self.keep])
        return y0

    def defects(self, rhs):
        out = []
        for i in np.flatnonzero(~self.keep):
            mode = int(np.argmax(np.abs(self.U[:, i])))
            out.append((mode, float(abs(self.U[:, i] @ rhs) / self.T)))
        return tuple(out)


def solve_k_approx_periodic(pm, head, rcond=1e-10):
    """Solve for the K-approximate periodic trajectory under the map ``pm``.

    Returns a PeriodicSolveReport; a resonant tail is reported (rank
    deficiency flag, null-space dimension, per-mode defects), never raised.
    """
    M, rhs = stitched_system(pm, head)
    solver = _TruncatedSolver(M, rcond, pm.tg.T)
    y0 = solver.solve(rhs)
    traj = pm.solution(y0)
    K = head.size
    tail_residual = float(
        np.linalg.norm(traj.final()[K:] - traj.initial()[K:])
    )
    head_residual = float(
        np.linalg.norm(traj.initial()[:K] - head.values) if K else 0.0
    )
    return PeriodicSolveReport(
        trajectory=traj,
        head_size=K,
        tail_residual=tail_residual,
        head_residual=head_residual,
        condition_number=solver.condition_number,
        rank_deficient=solver.null_dim > 0,
        null_dim=solver.null_dim,
        defects=solver.defects(rhs),
    )


def choose_head_size(pm, margin=0.5):
    """Smallest K whose tail block of the period map is a (1 - margin)
    contraction in spectral norm; raises NoAdmissibleK when none is."""
    if not (0.0 < margin <= 1.0):
        raise ValidationError(f"margin must lie in (0, 1], got {margin}")
    n = pm.n_dof
    for K in range(n):
        tail = pm.matrix[K:, K:]
        sigma = float(np.linalg.svd(tail, compute_uv=False)[0])
        if sigma <= 1.0 - margin:
            return K
    raise NoAdmissibleK(
        f"no head size up to {n - 1} brings the tail below {1.0 - margin:.3g}"
    )


def periodicity_residual(traj):
    """h-norm of y(T) - y(0) over all modes."""
    return float(np.linalg.norm(traj.final() - traj.initial()))
