"""Grids, elliptic operator assembly, eigenbasis, and Gram matrices.

The discretization is a conservative second-order finite difference scheme on
a uniform interior grid with homogeneous Dirichlet boundaries: the diffusion
coefficient is sampled at cell midpoints and differenced in flux form, so the
assembled matrix is exactly symmetric and its quadratic form is the discrete
Dirichlet energy. Quadrature weights are the uniform cell volumes h (or hx*hy),
and eigenvectors are rescaled so that <X_i, X_j>_h = delta_ij in the weighted
inner product <u, v>_h = sum_i u_i v_i w_i.

Rectangle domains use the tensor grid with the same flux-form stencil per axis
and a dense symmetric eigensolve, capped at 4096 degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from . import exprlang
from .errors import (
    ConvergenceFailure,
    DegenerateGram,
    EllipticityViolation,
    EmptySubdomain,
    GridTooCoarse,
    ValidationError,
)

__all__ = [
    "DomainSpec",
    "OperatorSpec",
    "DiscreteOperator",
    "EigenBasis",
    "GramMatrix",
    "build_operator",
    "eigendecompose",
    "gram_matrix",
    "indicator_from_intervals",
]


@dataclass(frozen=True)
class DomainSpec:
    """Interval (x0, x1) or rectangle (x0, x1) x (y0, y1) with interior grid.

    ``n`` is the number of interior points per axis (an int for intervals, a
    pair for rectangles); boundary nodes carry the Dirichlet condition and are
    not unknowns.
    """

    kind: str
    x_bounds: tuple
    y_bounds: tuple | None = None
    n: object = 64

    def __post_init__(self):
        if self.kind not in ("interval", "rectangle"):
            raise ValidationError(f"unknown domain kind {self.kind!r}")
        x0, x1 = self.x_bounds
        if not (np.isfinite(x0) and np.isfinite(x1) and x1 > x0):
            raise ValidationError(f"degenerate x bounds {self.x_bounds!r}")
        if self.kind == "rectangle":
            if self.y_bounds is None:
                raise ValidationError("rectangle domain needs y_bounds")
            y0, y1 = self.y_bounds
            if not (np.isfinite(y0) and np.isfinite(y1) and y1 > y0):
                raise ValidationError(f"degenerate y bounds {self.y_bounds!r}")
            nx, ny = self.n if isinstance(self.n, (tuple, list)) else (self.n, self.n)
            object.__setattr__(self, "n", (int(nx), int(ny)))
            for axis_n in self.n:
                if axis_n < 8:
                    raise GridTooCoarse(f"need >= 8 interior points per axis, got {axis_n}")
        else:
            if self.y_bounds is not None:
                raise ValidationError("interval domain cannot have y_bounds")
            if isinstance(self.n, (tuple, list)):
                (n_only,) = self.n
            else:
                n_only = self.n
            object.__setattr__(self, "n", int(n_only))
            if self.n < 8:
                raise GridTooCoarse(f"need >= 8 interior points, got {self.n}")

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    @property
    def nx(self):
        return self.n if self.kind == "interval" else self.n[0]

    @property
    def ny(self):
        return None if self.kind == "interval" else self.n[1]

    @property
    def hx(self):
        return (self.x_bounds[1] - self.x_bounds[0]) / (self.nx + 1)

    @property
    def hy(self):
        return None if self.kind == "interval" else (
            (self.y_bounds[1] - self.y_bounds[0]) / (self.ny + 1)
        )

    @property
    def n_dof(self):
        return self.nx if self.kind == "interval" else self.nx * self.ny

    @property
    def weight(self):
        """Uniform quadrature weight of one interior node (cell volume)."""
        return self.hx if self.kind == "interval" else self.hx * self.hy

    def axis_nodes(self, axis=0):
        if axis == 0:
            x0 = self.x_bounds[0]
            return x0 + self.hx * np.arange(1, self.nx + 1)
        y0 = self.y_bounds[0]
        return y0 + self.hy * np.arange(1, self.ny + 1)

    def node_coords(self):
        """Flat interior node coordinates: (x,) for 1D, (x, y) for 2D.

        2D flattening is x-fastest: flat index = i + nx * j.
        """
        if self.kind == "interval":
            return (self.axis_nodes(0),)
        xg, yg = np.meshgrid(self.axis_nodes(0), self.axis_nodes(1), indexing="xy")
        return (xg.ravel(), yg.ravel())

    def closure_coords(self):
        """Node coordinates including the boundary, with trapezoid weights."""
        x_all = self.x_bounds[0] + self.hx * np.arange(self.nx + 2)
        wx = np.full(self.nx + 2, self.hx)
        wx[0] = wx[-1] = 0.5 * self.hx
        if self.kind == "interval":
            return (x_all,), wx
        y_all = self.y_bounds[0] + self.hy * np.arange(self.ny + 2)
        wy = np.full(self.ny + 2, self.hy)
        wy[0] = wy[-1] = 0.5 * self.hy
        xg, yg = np.meshgrid(x_all, y_all, indexing="xy")
        return (xg.ravel(), yg.ravel()), np.outer(wy, wx).ravel()


@dataclass(frozen=True)
class OperatorSpec:
    """Divergence-form elliptic operator -d_j(a d_i y) + c y with ellipticity
    band lambda_star <= a <= 1/lambda_star.

    ``a`` and ``c`` accept an expression string, a float, a callable of the
    space variables, or an array sampled on the needed lattice. On rectangles
    ``a`` may also be a pair (ax, ay) for an axis-aligned diffusion tensor.
    """

    a: object = 1.0
    c: object = 0.0
    lambda_star: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.lambda_star <= 1.0):
            raise ValidationError(
                f"lambda_star must lie in (0, 1], got {self.lambda_star}"
            )


def _sample_spatial(source, coords, what):
    """Sample a spatial field source on coordinate arrays, validating finiteness."""
    if isinstance(source, str):
        source = exprlang.parse(source)
    if isinstance(source, exprlang.Expr):
        bad = exprlang.free_variables(source) - ({"x"} if len(coords) == 1 else {"x", "y"})
        if bad:
            raise ValidationError(
                f"{what}: spatial field uses variables {sorted(bad)}"
            )
        if len(coords) == 1:
            out = np.array([exprlang.evaluate(source, x=xi) for xi in coords[0]])
        else:
            out = np.array(
                [exprlang.evaluate(source, x=xi, y=yi) for xi, yi in zip(*coords)]
            )
    elif callable(source):
        out = np.asarray(source(*coords), dtype=float)
        out = np.broadcast_to(out, coords[0].shape).astype(float)
    elif np.isscalar(source):
        out = np.full(coords[0].shape, float(source))
    else:
        out = np.asarray(source, dtype=float)
        if out.shape != coords[0].shape:
            raise ValidationError(
                f"{what}: sampled array has shape {out.shape}, grid wants {coords[0].shape}"
            )
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{what}: field is not finite on the grid")
    return out


def _check_ellipticity(a_vals, lambda_star, where):
    lo, hi = float(np.min(a_vals)), float(np.max(a_vals))
    if lo < lambda_star:
        raise EllipticityViolation(
            f"a = {lo:.6g} < lambda_star = {lambda_star:.6g} at {where}"
        )
    if hi > 1.0 / lambda_star:
        raise EllipticityViolation(
            f"a = {hi:.6g} > 1/lambda_star = {1.0 / lambda_star:.6g} at {where}"
        )


@dataclass(frozen=True)
class DiscreteOperator:
    """Assembled symmetric operator matrix with its quadrature weights.

    1D storage is the (diag, off) band pair; 2D storage is a CSR matrix. The
    midpoint diffusion samples are kept for Dirichlet-energy evaluation.
    """

    domain: DomainSpec
    diag: np.ndarray | None = None
    off: np.ndarray | None = None
    sparse: object = None
    a_mid_x: np.ndarray | None = None  # (n+1,) in 1D, (ny, nx+1) in 2D
    a_mid_y: np.ndarray | None = None  # (ny+1, nx) in 2D
    c_nodes: np.ndarray | None = None
    lambda_star: float = 0.5

    @property
    def n_dof(self):
        return self.domain.n_dof

    @property
    def weight(self):
        return self.domain.weight

    def dense(self):
        if self.domain.kind == "interval":
            return (
                np.diag(self.diag)
                + np.diag(self.off, 1)
                + np.diag(self.off, -1)
            )
        return self.sparse.toarray()

    def matvec(self, v):
        if self.domain.kind == "interval":
            if v.ndim == 1:
                out = self.diag * v
                out[:-1] += self.off * v[1:]
                out[1:] += self.off * v[:-1]
            else:
                out = self.diag[:, None] * v
                out[:-1] += self.off[:, None] * v[1:]
                out[1:] += self.off[:, None] * v[:-1]
            return out
        return self.sparse @ v

    def shift_potential(self, delta):
        """Same operator with c replaced by c + delta (a constant)."""
        if self.domain.kind == "interval":
            return DiscreteOperator(
                domain=self.domain,
                diag=self.diag + delta,
                off=self.off,
                a_mid_x=self.a_mid_x,
                c_nodes=self.c_nodes + delta,
                lambda_star=self.lambda_star,
            )
        n = self.n_dof
        return DiscreteOperator(
            domain=self.domain,
            sparse=(self.sparse + delta * scipy.sparse.identity(n, format="csr")),
            a_mid_x=self.a_mid_x,
            a_mid_y=self.a_mid_y,
            c_nodes=self.c_nodes + delta,
            lambda_star=self.lambda_star,
        )

    def dirichlet_energy(self, grid_block):
        """sum_edges a_mid ((y_next - y_prev)/h)^2 * (edge volume), per column.

        ``grid_block`` is (n_dof,) or (n_dof, m); boundary values are zero.
        Includes no zero-order term: this is the gradient part only.
        """
        dom = self.domain
        v = grid_block if grid_block.ndim == 2 else grid_block[:, None]
        if dom.kind == "interval":
            h = dom.hx
            padded = np.zeros((dom.nx + 2, v.shape[1]))
            padded[1:-1] = v
            dif = np.diff(padded, axis=0) / h
            out = h * np.einsum("i,ij->j", self.a_mid_x, dif * dif)
        else:
            nx, ny, hx, hy = dom.nx, dom.ny, dom.hx, dom.hy
            cube = np.zeros((ny + 2, nx + 2, v.shape[1]))
            cube[1:-1, 1:-1] = v.reshape(ny, nx, v.shape[1])
            dx = np.diff(cube[1:-1], axis=1) / hx
            dy = np.diff(cube[:, 1:-1], axis=0) / hy
            out = hx * hy * (
                np.einsum("ji,jik->k", self.a_mid_x, dx * dx)
                + np.einsum("ji,jik->k", self.a_mid_y, dy * dy)
            )
        return out if grid_block.ndim == 2 else float(out[0])


def build_operator(domain, op_spec):
    """Assemble the flux-form finite difference matrix for ``op_spec``.

    Raises EllipticityViolation if the sampled diffusion leaves the band
    [lambda_star, 1/lambda_star], GridTooCoarse via DomainSpec validation.
    """
    lam = op_spec.lambda_star
    if domain.kind == "interval":
        n, h = domain.nx, domain.hx
        x0 = domain.x_bounds[0]
        x_mid = x0 + h * (np.arange(n + 1) + 0.5)
        a_mid = _sample_spatial(op_spec.a, (x_mid,), "operator.a")
        _check_ellipticity(a_mid, lam, "cell midpoints")
        c_nodes = _sample_spatial(op_spec.c, (domain.axis_nodes(0),), "operator.c")
        diag = (a_mid[:-1] + a_mid[1:]) / h**2 + c_nodes
        off = -a_mid[1:-1] / h**2
        return DiscreteOperator(
            domain=domain,
            diag=diag,
            off=off,
            a_mid_x=a_mid,
            c_nodes=c_nodes,
            lambda_star=lam,
        )

    nx, ny, hx, hy = domain.nx, domain.ny, domain.hx, domain.hy
    x0, y0 = domain.x_bounds[0], domain.y_bounds[0]
    ax_src, ay_src = op_spec.a if isinstance(op_spec.a, tuple) else (op_spec.a, op_spec.a)
    x_nodes, y_nodes = domain.axis_nodes(0), domain.axis_nodes(1)
    x_mid = x0 + hx * (np.arange(nx + 1) + 0.5)
    y_mid = y0 + hy * (np.arange(ny + 1) + 0.5)

    xm_g, ym_g = np.meshgrid(x_mid, y_nodes, indexing="xy")
    a_mid_x = _sample_spatial(ax_src, (xm_g.ravel(), ym_g.ravel()), "operator.a").reshape(ny, nx + 1)
    xm_g, ym_g = np.meshgrid(x_nodes, y_mid, indexing="xy")
    a_mid_y = _sample_spatial(ay_src, (xm_g.ravel(), ym_g.ravel()), "operator.a").reshape(ny + 1, nx)
    _check_ellipticity(a_mid_x, lam, "x-edge midpoints")
    _check_ellipticity(a_mid_y, lam, "y-edge midpoints")
    c_nodes = _sample_spatial(op_spec.c, domain.node_coords(), "operator.c")

    n = nx * ny
    diag = (
        (a_mid_x[:, :-1] + a_mid_x[:, 1:]) / hx**2
        + (a_mid_y[:-1, :] + a_mid_y[1:, :]) / hy**2
    ).ravel() + c_nodes

    rows, cols, vals = [np.arange(n)], [np.arange(n)], [diag]
    # x-neighbor couplings: nodes (i, j) and (i+1, j), one edge each, mirrored
    idx = (np.arange(nx - 1)[None, :] + nx * np.arange(ny)[:, None]).ravel()
    wx = (-a_mid_x[:, 1:-1] / hx**2).ravel()
    rows += [idx, idx + 1]
    cols += [idx + 1, idx]
    vals += [wx, wx]
    # y-neighbor couplings: nodes (i, j) and (i, j+1)
    idx = (np.arange(nx)[None, :] + nx * np.arange(ny - 1)[:, None]).ravel()
    wy = (-a_mid_y[1:-1, :] / hy**2).ravel()
    rows += [idx, idx + nx]
    cols += [idx + nx, idx]
    vals += [wy, wy]

    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    return DiscreteOperator(
        domain=domain,
        sparse=mat,
        a_mid_x=a_mid_x,
        a_mid_y=a_mid_y,
        c_nodes=c_nodes,
        lambda_star=lam,
    )


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvalues (ascending) and h-orthonormal eigenvectors, columnwise.

    ``vectors[:, j]`` is the j-th mode on the interior grid; the sign is fixed
    so the first entry of significant magnitude is positive.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    weight: float
    domain: DomainSpec

    @property
    def n_dof(self):
        return self.lambdas.shape[0]

    def project(self, grid_values):
        """Modal coefficients <g, X_j>_h of grid samples (vector or block)."""
        return self.weight * (self.vectors.T @ grid_values)

    def reconstruct(self, modal):
        """Grid samples of sum_j modal_j X_j (vector or block)."""
        return self.vectors @ modal

    def shift(self, delta):
        """Basis of the potential-shifted operator: same modes, lambdas + delta."""
        return EigenBasis(
            lambdas=self.lambdas + delta,
            vectors=self.vectors,
            weight=self.weight,
            domain=self.domain,
        )


_DENSE_EIG_CAP = 4096


def eigendecompose(op):
    """Full symmetric eigendecomposition of the assembled operator.

    1D uses the banded solver; 2D densifies (capped at 4096 dof). Eigenvectors
    come back h-orthonormal with a deterministic sign convention. Repeated
    eigenvalues give an orthonormal frame of the cluster subspace; quantities
    exposed by this package are invariant under rotations inside a cluster.
    """
    dom = op.domain
    try:
        if dom.kind == "interval":
            vals, vecs = scipy.linalg.eigh_tridiagonal(op.diag, op.off)
        else:
            if op.n_dof > _DENSE_EIG_CAP:
                raise ValidationError(
                    f"dense eigensolve capped at {_DENSE_EIG_CAP} dof, got {op.n_dof}"
                )
            vals, vecs = scipy.linalg.eigh(op.dense())
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigensolver failed: {exc}") from exc

    vecs = vecs / np.sqrt(op.weight)
    # deterministic sign: first non-negligible entry positive
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        pick = np.flatnonzero(np.abs(col) > 1e-8 * np.max(np.abs(col)))[0]
        if col[pick] < 0:
            vecs[:, j] = -col
    return EigenBasis(
        lambdas=vals, vectors=vecs, weight=op.weight, domain=dom
    )


@dataclass(frozen=True)
class GramMatrix:
    """Gram matrix of the first k modes restricted to a subdomain."""

    matrix: np.ndarray
    k: int
    node_count: int
    min_eig: float


def indicator_from_intervals(domain, intervals, axis=0):
    """Boolean mask over interior nodes for a union of closed intervals.

    1D only takes axis 0; a 2D indicator is the product of per-axis masks, so
    callers pass ``(x_intervals, y_intervals)`` through twice and combine.
    """
    nodes = domain.axis_nodes(axis)
    mask = np.zeros(nodes.shape, dtype=bool)
    lo_bound = domain.x_bounds if axis == 0 else domain.y_bounds
    for a, b in intervals:
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            raise ValidationError(f"degenerate interval ({a}, {b})")
        if a < lo_bound[0] - 1e-12 or b > lo_bound[1] + 1e-12:
            raise ValidationError(
                f"interval ({a}, {b}) leaves the domain {tuple(lo_bound)}"
            )
        mask |= (nodes >= a) & (nodes <= b)
    return mask


def subdomain_mask(domain, x_intervals, y_intervals=None):
    """Flat interior-node mask for a product of interval unions."""
    mx = indicator_from_intervals(domain, x_intervals, axis=0)
    if domain.kind == "interval":
        return mx
    if y_intervals is None:
        y_intervals = [tuple(domain.y_bounds)]
    my = indicator_from_intervals(domain, y_intervals, axis=1)
    return (my[:, None] & mx[None, :]).ravel()


def gram_matrix(basis, omega_mask, k):
    """Gram matrix G_ij = sum_{nodes in omega} X_i X_j w of the first k modes.

    Raises EmptySubdomain when the mask marks no nodes and DegenerateGram when
    the matrix cannot separate k modes on the marked nodes (minimum eigenvalue
    at or below 1e-12 * trace/k).
    """
    if k < 1 or k > basis.n_dof:
        raise ValidationError(f"mode count k = {k} outside 1..{basis.n_dof}")
    omega_mask = np.asarray(omega_mask, dtype=bool)
    count = int(omega_mask.sum())
    if count == 0:
        raise EmptySubdomain("subdomain indicator marks no interior nodes")
    head = basis.vectors[:, :k]
    g = (head[omega_mask].T * basis.weight) @ head[omega_mask]
    g = 0.5 * (g + g.T)
    min_eig = float(scipy.linalg.eigvalsh(g)[0])
    if min_eig <= 1e-12 * (np.trace(g) / k):
        raise DegenerateGram(
            f"{count} nodes cannot separate {k} modes (min eig {min_eig:.3e})"
        )
    return GramMatrix(matrix=g, k=k, node_count=count, min_eig=min_eig)
