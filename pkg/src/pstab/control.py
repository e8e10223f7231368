"""Synthesis of the finite-dimensional force that restores periodicity.

The controlled problem pins the first ``K0`` modal values at t = 0 to the
reference's head data and asks the remaining modes to be periodic. Writing the
deviation from the reference as the sum of a forced part (driven by the
perturbation acting on the reference) and a control part (driven by constant
modal forcings), the end-of-period head mismatch is affine in the control
vector u:

    mismatch(u) = offset + matrix @ u.

``matrix`` column j is the head state at T of the zero-head solve driven by
the j-th eigenvector as a constant force; ``offset`` is the same solve driven
by -e * y_ref. Setting the mismatch to the reference's own head drift and
solving the K0 x K0 system gives u; the returned trajectory is always a fresh
full solve of the controlled problem, never the sum of the pieces, so the
reported residual is an end-to-end measurement.

Localized variants multiply the control force by a spatial node mask and a
temporal indicator; the same affine identity holds with the masked columns.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptySubdomain,
    NearSingularControl,
    PerturbationTooLarge,
    ResidualCheckFailed,
    ValidationError,
)
from .evolution import (
    TimeGrid,
    as_field,
    energy_norms,
    period_map,
    perturbation_norm,
)
from .periodic import (
    HeadConstraint,
    _TruncatedSolver,
    periodicity_residual,
    solve_k_approx_periodic,
    stitched_system,
)
from .spectral import subdomain_mask

__all__ = [
    "ControlMap",
    "LocalizationSpec",
    "StabilizationReport",
    "PeriodicFlow",
    "build_reference",
    "compute_control_offset",
    "assemble_control_matrix",
    "synthesize_control",
    "synthesize_control_local",
]

# admissibility threshold: below this the control matrix is treated as
# singular and synthesis refuses to proceed
_SINGULAR_RATIO = 1e-6


@dataclass(frozen=True)
class ControlMap:
    """Affine head-mismatch map u -> offset + matrix @ u.

    ``condition_number`` and ``sigma_min`` describe ``matrix``; the condition
    number of the empty (K0 = 0) map is 1 by convention.
    """

    matrix: np.ndarray
    offset: np.ndarray
    condition_number: float
    sigma_min: float

    def __post_init__(self):
        k = self.matrix.shape[0]
        if self.matrix.shape != (k, k) or self.offset.shape != (k,):
            raise ValidationError(
                f"control map needs a square matrix and matching offset, got "
                f"{self.matrix.shape} and {self.offset.shape}"
            )
        if self.condition_number < 1.0:
            raise ValidationError(
                f"condition number must be >= 1, got {self.condition_number}"
            )

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def near_singular(self):
        if self.size == 0:
            return False
        return not self.sigma_min > _SINGULAR_RATIO * self._sigma_max

    @property
    def _sigma_max(self):
        return self.sigma_min * self.condition_number

    def solve(self, target):
        """u with matrix @ u = target; refuses when near singular."""
        if self.near_singular:
            raise PerturbationTooLarge(
                f"control matrix is numerically singular "
                f"(sigma_min = {self.sigma_min:.3e}, "
                f"condition number = {self.condition_number:.3e})"
            )
        if self.size == 0:
            return np.zeros(0)
        return np.linalg.solve(self.matrix, target)


@dataclass(frozen=True)
class LocalizationSpec:
    """Support of the control force: node mask in space, intervals in time.

    ``space_mask`` is 0/1 on interior grid nodes; ``time_intervals`` is a
    union of closed subintervals of [0, T] with total length ``measure``.
    """

    space_mask: np.ndarray
    time_intervals: tuple
    measure: float

    def __post_init__(self):
        if not np.any(self.space_mask):
            raise EmptySubdomain("control region masks out every grid node")
        if not self.measure > 0.0:
            raise ValidationError(
                f"control time set must have positive measure, got {self.measure}"
            )

    @classmethod
    def from_intervals(cls, domain, T, x_intervals=None, y_intervals=None,
                       t_intervals=None):
        """Build from coordinate intervals; None means the full extent."""
        if x_intervals is None and y_intervals is None:
            mask = np.ones(domain.n_dof)
        else:
            mask = subdomain_mask(domain, x_intervals, y_intervals)
        if t_intervals is None:
            t_intervals = ((0.0, T),)
        cleaned = []
        for iv in t_intervals:
            t0, t1 = float(iv[0]), float(iv[1])
            if not (0.0 <= t0 < t1 <= T):
                raise ValidationError(
                    f"time interval ({t0}, {t1}) must satisfy 0 <= t0 < t1 <= {T}"
                )
            cleaned.append((t0, t1))
        measure = sum(t1 - t0 for t0, t1 in cleaned)
        return cls(
            space_mask=mask,
            time_intervals=tuple(cleaned),
            measure=float(measure),
        )

    @classmethod
    def full(cls, domain, T):
        return cls.from_intervals(domain, T)

    def time_indicator(self, times):
        """0/1 samples of the temporal indicator at the given times."""
        times = np.asarray(times, dtype=float)
        out = np.zeros(times.shape)
        for t0, t1 in self.time_intervals:
            out[(times >= t0) & (times <= t1)] = 1.0
        return out


class PeriodicFlow:
    """Cached solve machinery for one perturbed operator over one period.

    Holds the homogeneous period map (the perturbation enters, no forcing)
    and one factorization of the zero-head stitched system, shared by every
    forcing-dependent solve. ``rcond`` is the relative singular value cutoff
    of that factorization.
    """

    def __init__(self, op, basis, e, tg, head_size, rcond=1e-10):
        self.op = op
        self.basis = basis
        self.tg = tg
        self.e = as_field(e, name="perturbation")
        self.head_size = int(head_size)
        if not 0 <= self.head_size <= op.n_dof:
            raise ValidationError(
                f"head size must lie in [0, {op.n_dof}], got {head_size}"
            )
        self.pm0 = period_map(op, basis, self.e, None, tg)
        M, _ = stitched_system(self.pm0, HeadConstraint.zero(self.head_size))
        self.solver = _TruncatedSolver(M, rcond, tg.T)

    def head_response(self, g_half):
        """Head values at T of the zero-head solve forced by ``g_half``.

        ``g_half`` holds grid samples of the forcing at half steps, shape
        (m, n_dof); None means no forcing (the response is then zero).
        """
        K = self.head_size
        if g_half is None:
            return np.zeros(K)
        pm = self.pm0.with_forcing(g_half)
        rhs = np.concatenate([np.zeros(K), pm.offset[K:]])
        y0 = self.solver.solve(rhs)
        return pm.propagate(y0)[:K]

    def reference_mid_states(self, y_ref):
        """Grid states of a trajectory at half steps (midpoint average)."""
        G = y_ref.grid_block()
        return 0.5 * (G[:, :-1] + G[:, 1:]).T


def build_reference(op, basis, f, tg, neutral_rcond=1e-4):
    """Periodic trajectory of the unperturbed system under forcing f.

    Solved with no pinned head modes; near-neutral directions of the period
    map (relative singular values below ``neutral_rcond``) are truncated with
    minimum-norm completion, which picks the zero-mean representative on a
    resonant operator.
    """
    pm = period_map(op, basis, None, f, tg)
    rep = solve_k_approx_periodic(pm, HeadConstraint.zero(0), rcond=neutral_rcond)
    return rep.trajectory


def compute_control_offset(flow, y_ref, head_size=None):
    """Head values at T of the zero-head solve forced by -e * y_ref.

    The product is sampled at half steps with the reference's midpoint
    states. Identically zero when the perturbation vanishes.
    """
    K = flow.head_size if head_size is None else int(head_size)
    if K != flow.head_size:
        raise ValidationError(
            f"flow was factored for head size {flow.head_size}, got {K}"
        )
    if flow.pm0.e_half is None:
        return np.zeros(K)
    mid = flow.reference_mid_states(y_ref)
    return flow.head_response(-flow.pm0.e_half * mid)


def assemble_control_matrix(flow, head_size=None, loc=None, column_order=None):
    """Head-mismatch matrix: column j is the head state at T of the
    zero-head solve driven by eigenvector j as a constant-in-time force
    (masked by ``loc`` when given).

    ``column_order`` only sequences the assembly (results are identical);
    the default is ascending. Emits a NearSingularControl warning when
    sigma_min < 1e-6 * sigma_max. The returned map has a zero offset; pair
    it with compute_control_offset for the full affine map.
    """
    K = flow.head_size if head_size is None else int(head_size)
    if K != flow.head_size:
        raise ValidationError(
            f"flow was factored for head size {flow.head_size}, got {K}"
        )
    if K == 0:
        return ControlMap(
            matrix=np.zeros((0, 0)),
            offset=np.zeros(0),
            condition_number=1.0,
            sigma_min=0.0,
        )
    if loc is not None and loc.space_mask.shape != (flow.op.n_dof,):
        raise ValidationError(
            f"space mask has {loc.space_mask.shape[0]} entries for "
            f"{flow.op.n_dof} grid nodes"
        )
    tau = (
        None
        if loc is None
        else loc.time_indicator(flow.tg.half_times())
    )
    order = range(K) if column_order is None else list(column_order)
    if column_order is not None and sorted(order) != list(range(K)):
        raise ValidationError(
            f"column order must permute 0..{K - 1}, got {column_order}"
        )
    matrix = np.empty((K, K))
    for j in order:
        sp = flow.basis.vectors[:, j]
        if loc is not None:
            sp = sp * loc.space_mask
        if tau is None:
            g_half = np.broadcast_to(sp, (flow.tg.m, sp.shape[0]))
        else:
            g_half = np.outer(tau, sp)
        matrix[:, j] = flow.head_response(np.ascontiguousarray(g_half))
    s = np.linalg.svd(matrix, compute_uv=False)
    sigma_max = float(s[0])
    sigma_min = float(s[-1])
    condition = float(sigma_max / sigma_min) if sigma_min > 0 else float("inf")
    cm = ControlMap(
        matrix=matrix,
        offset=np.zeros(K),
        condition_number=max(condition, 1.0),
        sigma_min=sigma_min,
    )
    if cm.near_singular:
        warnings.warn(
            f"control matrix nearly singular: sigma_min = {sigma_min:.3e}, "
            f"sigma_max = {sigma_max:.3e}",
            NearSingularControl,
            stacklevel=2,
        )
    return cm


@dataclass(frozen=True)
class StabilizationReport:
    """Everything measured about one synthesized control.

    ``deviation_ratio`` is (sup_dev_sq + dissipation_dev) divided by
    epsilon^2 * (1 + |head|^2 + f_norm_sq); ``control_ratio`` is norm_u_sq
    over the same denominator. Both are 0 when epsilon = 0.
    """

    u: np.ndarray
    head: np.ndarray
    trajectory: object
    reference: object
    control_map: ControlMap
    residual: float
    sup_norm: float
    norm_u: float
    norm_u_sq: float
    sup_dev_sq: float
    dissipation_dev: float
    epsilon: float
    q: float
    f_norm_sq: float
    deviation_ratio: float
    control_ratio: float
    m_E: float
    u_times_mE: float

    def __post_init__(self):
        finite = [
            self.residual,
            self.sup_norm,
            self.norm_u,
            self.norm_u_sq,
            self.sup_dev_sq,
            self.dissipation_dev,
            self.f_norm_sq,
        ]
        if self.residual < 0 or not all(np.isfinite(v) for v in finite):
            raise ValidationError("report norms must be finite and nonnegative")

    @property
    def head_size(self):
        return self.u.shape[0]

    def to_dict(self):
        return {
            "head_size": int(self.head_size),
            "u": [float(v) for v in self.u],
            "head": [float(v) for v in self.head],
            "residual": float(self.residual),
            "sup_norm": float(self.sup_norm),
            "norm_u": float(self.norm_u),
            "norm_u_sq": float(self.norm_u_sq),
            "sup_dev_sq": float(self.sup_dev_sq),
            "dissipation_dev": float(self.dissipation_dev),
            "epsilon": float(self.epsilon),
            "q": float(self.q),
            "f_norm_sq": float(self.f_norm_sq),
            "deviation_ratio": float(self.deviation_ratio),
            "control_ratio": float(self.control_ratio),
            "m_E": float(self.m_E),
            "u_times_mE": float(self.u_times_mE),
            "condition_number": float(self.control_map.condition_number),
            "sigma_min": float(self.control_map.sigma_min),
        }


def _forcing_norm_sq(f, domain, tg):
    """Space-time squared integral of the forcing on the step grid."""
    field = as_field(f, name="forcing")
    if field.is_zero:
        return 0.0
    samples = field.sample_steps(domain, tg.half_times())
    return float(tg.dt * np.sum(domain.weight * samples**2))


def _control_half_samples(flow, u, loc):
    """Grid half-step samples of the synthesized control force."""
    if u.shape[0] == 0:
        return None
    sp = flow.basis.vectors[:, : u.shape[0]] @ u
    if loc is not None:
        sp = sp * loc.space_mask
        tau = loc.time_indicator(flow.tg.half_times())
        return np.ascontiguousarray(np.outer(tau, sp))
    return np.ascontiguousarray(
        np.broadcast_to(sp, (flow.tg.m, sp.shape[0])).copy()
    )


def _synthesize(op, basis, e, f, y_ref, head_size, loc, q, rcond,
                residual_tol, column_order):
    tg = y_ref.tg
    K = int(head_size)
    flow = PeriodicFlow(op, basis, e, tg, K, rcond=rcond)
    offset = compute_control_offset(flow, y_ref)
    cm = assemble_control_matrix(flow, loc=loc, column_order=column_order)
    cm = dataclasses.replace(cm, offset=offset)

    # aim the head mismatch at cancelling the reference's own head drift,
    # so the controlled head returns exactly to its pinned start
    drift = y_ref.final()[:K] - y_ref.initial()[:K]
    u = cm.solve(-(offset + drift)) if K else np.zeros(0)

    head = y_ref.initial()[:K].copy()
    f_field = as_field(f, name="forcing")
    f_half = (
        None
        if f_field.is_zero
        else f_field.sample_steps(op.domain, tg.half_times())
    )
    ctrl_half = _control_half_samples(flow, u, loc)
    if f_half is None:
        g_half = ctrl_half
    elif ctrl_half is None:
        g_half = f_half
    else:
        g_half = f_half + ctrl_half
    pm = flow.pm0.with_forcing(g_half)
    rep = solve_k_approx_periodic(pm, HeadConstraint(K, head), rcond=rcond)
    traj = rep.trajectory

    residual = periodicity_residual(traj)
    sup_sq, _ = energy_norms(traj, op)
    sup_norm = float(np.sqrt(sup_sq))
    if residual > residual_tol * (1.0 + sup_norm):
        raise ResidualCheckFailed(
            f"controlled trajectory residual {residual:.3e} exceeds "
            f"{residual_tol:.1e} * (1 + {sup_norm:.3e})"
        )

    dev = dataclasses.replace(traj, modal=traj.modal - y_ref.modal)
    sup_dev_sq, dissipation_dev = energy_norms(dev, op)
    budget = perturbation_norm(e, q, tg, op.domain) if not flow.e.is_zero else None
    epsilon = budget.epsilon if budget is not None else 0.0
    f_norm_sq = _forcing_norm_sq(f, op.domain, tg)
    norm_u_sq = float(u @ u)
    denom = epsilon**2 * (1.0 + float(head @ head) + f_norm_sq)
    deviation_ratio = (sup_dev_sq + dissipation_dev) / denom if denom > 0 else 0.0
    control_ratio = norm_u_sq / denom if denom > 0 else 0.0
    measure = loc.measure if loc is not None else tg.T
    norm_u = float(np.sqrt(norm_u_sq))
    return StabilizationReport(
        u=u,
        head=head,
        trajectory=traj,
        reference=y_ref,
        control_map=cm,
        residual=residual,
        sup_norm=sup_norm,
        norm_u=norm_u,
        norm_u_sq=norm_u_sq,
        sup_dev_sq=float(sup_dev_sq),
        dissipation_dev=float(dissipation_dev),
        epsilon=float(epsilon),
        q=float(q),
        f_norm_sq=f_norm_sq,
        deviation_ratio=float(deviation_ratio),
        control_ratio=float(control_ratio),
        m_E=float(measure),
        u_times_mE=float(norm_u * measure),
    )


def synthesize_control(op, basis, e, f, y_ref, head_size, q=3.0,
                       rcond=1e-10, residual_tol=1e-8, column_order=None):
    """Solve for the control vector that makes the perturbed trajectory
    periodic again, and measure everything about the result.

    ``y_ref`` is a periodic trajectory of the unperturbed system (see
    build_reference); its first ``head_size`` modal values at t = 0 are the
    pinned head data. Raises PerturbationTooLarge when the control matrix is
    near singular and ResidualCheckFailed when the final trajectory misses
    residual <= residual_tol * (1 + sup norm).
    """
    return _synthesize(op, basis, e, f, y_ref, head_size, None, q, rcond,
                       residual_tol, column_order)


def synthesize_control_local(op, basis, e, f, y_ref, head_size, loc, q=3.0,
                             rcond=1e-10, residual_tol=1e-8,
                             column_order=None):
    """As synthesize_control with the force restricted to ``loc``'s node
    mask and time intervals; the report records norm_u * measure."""
    if loc is None:
        raise ValidationError("localized synthesis needs a LocalizationSpec")
    return _synthesize(op, basis, e, f, y_ref, head_size, loc, q, rcond,
                       residual_tol, column_order)
