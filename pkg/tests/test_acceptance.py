"""Acceptance gate: the eleven release criteria, one test each.

Every test prints one PASS/FAIL line (visible with ``pytest -s``) and runs
at full desk scale (n = 200 interval grid unless the criterion says
otherwise). Tolerances are the stated ones, not retuned; criterion 1 is
expected to fail for modes 4 and 5 on the second-order stencil, and the
reasoning lives outside the package in the build notes.
"""

import math

import numpy as np
import pytest

from pstab import exprlang
from pstab.control import (
    LocalizationSpec,
    PeriodicFlow,
    assemble_control_matrix,
    build_reference,
    synthesize_control,
    synthesize_control_local,
)
from pstab.errors import ExprError
from pstab.evolution import (
    SpaceTimeField,
    TimeGrid,
    default_steps,
    evolve,
    period_map,
    perturbation_norm,
)
from pstab.periodic import HeadConstraint, solve_k_approx_periodic
from pstab.scenarios import (
    base_operator,
    first_eigenvalue_perturbed,
    nonexistence_demo,
    run_sweep_epsilon,
    run_sweep_measure,
    stabilized_demo,
)
from pstab.spectral import (
    DomainSpec,
    OperatorSpec,
    build_operator,
    eigendecompose,
    gram_matrix,
    subdomain_mask,
)

from reference_eval import ref_eval
from test_exprlang import _corpus

N = 200
H = math.pi / (N + 1)


def conclude(num, label, checks):
    """Evaluate (description, bool) pairs; print one verdict line."""
    failed = [desc for desc, ok in checks if not ok]
    verdict = "PASS" if not failed else "FAIL (" + "; ".join(failed) + ")"
    print(f"[criterion {num:2d}] {label}: {verdict}")
    assert not failed, f"criterion {num}: {failed}"


def test_criterion_01_spectral_fidelity():
    checks = []
    errs = {}
    for n in (N, 2 * N):
        _, basis = base_operator(n)
        errs[n] = [abs(basis.lambdas[j] - ((j + 1) ** 2 - 1)) for j in range(5)]
    for j in range(5):
        checks.append(
            (f"|lambda_{j + 1} - {(j + 1) ** 2 - 1}| = {errs[N][j]:.3e} <= 5e-3",
             errs[N][j] <= 5e-3)
        )
    for j in range(5):
        factor = errs[N][j] / errs[2 * N][j]
        checks.append(
            (f"halving factor mode {j + 1} = {factor:.3f} in [3.5, 4.5]",
             3.5 <= factor <= 4.5)
        )
    conclude(1, "spectral fidelity", checks)


def test_criterion_02_eigenvalue_bound():
    tol = 10.0 * H**2
    checks = []
    for expr, max_abs in (("0.1*sin(x)", 0.1), ("0.05*cos(x)", 0.05), ("0.1", 0.1)):
        lam, _ = first_eigenvalue_perturbed(expr, N)
        checks.append(
            (f"e = {expr}: |lambda_e| = {abs(lam):.4e} <= max|e| + 10h^2",
             abs(lam) <= max_abs + tol)
        )
    c = 0.1
    lam_c, _ = first_eigenvalue_perturbed(repr(c), N)
    checks.append(
        (f"constant e = {c}: |lambda_e + c| = {abs(lam_c + c):.2e} <= 10h^2",
         abs(lam_c + c) <= tol)
    )
    conclude(2, "perturbed eigenvalue bound", checks)


def test_criterion_03_solvability_dichotomy():
    ok_rep = nonexistence_demo(None, "sin(2*x)", n=N)
    bad_rep = nonexistence_demo(None, "sin(x)", n=N)
    worst_ok = max(d for _, d in ok_rep.defects)
    worst_bad = max(d for _, d in bad_rep.defects)
    checks = [
        ("f = sin 2x solvable", ok_rep.exists),
        (f"null dimension {ok_rep.null_dim} == 1", ok_rep.null_dim == 1),
        (f"defect {worst_ok:.2e} <= 1e-8", worst_ok <= 1e-8),
        (f"f = sin x defect {worst_bad:.4f} >= 0.5", worst_bad >= 0.5),
        ("f = sin x nonexistence verdict", not bad_rep.exists),
    ]
    conclude(3, "solvability dichotomy", checks)


def test_criterion_04_stabilization_postcondition():
    demo = stabilized_demo(n=N)
    rep = demo.report
    traj = rep.trajectory
    K = rep.head_size
    init_gap = float(np.max(np.abs(traj.initial()[:K] - rep.head)))
    drift = float(np.max(np.abs(traj.final()[:K] - traj.initial()[:K])))
    head_scale = 1.0 + float(np.max(np.abs(rep.head)))
    checks = [
        (f"head size auto-selected ({K})", K >= 1),
        (f"residual {rep.residual:.3e} <= 1e-8 * (1 + sup)",
         rep.residual <= 1e-8 * (1.0 + rep.sup_norm)),
        (f"pinned data gap {init_gap:.2e} <= 1e-12 rel",
         init_gap <= 1e-12 * head_scale),
        (f"head drift {drift:.2e} <= 1e-12 rel",
         drift <= 1e-12 * (1.0 + rep.sup_norm)),
    ]
    conclude(4, "stabilization postcondition", checks)


@pytest.fixture(scope="module")
def epsilon_sweep():
    return run_sweep_epsilon(n=N)


def test_criterion_05_epsilon_scaling(epsilon_sweep):
    scales = np.log([0.0125, 0.025, 0.05, 0.1])
    slope_u = float(np.polyfit(scales, np.log([r.norm_u for r in epsilon_sweep]), 1)[0])
    slope_u_sq = float(
        np.polyfit(scales, np.log([r.norm_u_sq for r in epsilon_sweep]), 1)[0]
    )
    checks = [
        (f"slope log|u| vs log s = {slope_u:.4f} in [0.8, 1.2]",
         0.8 <= slope_u <= 1.2),
        (f"slope log|u|^2 = {slope_u_sq:.4f} in [1.6, 2.4]",
         1.6 <= slope_u_sq <= 2.4),
    ]
    conclude(5, "control size scales with perturbation", checks)


def test_criterion_06_deviation_scaling(epsilon_sweep):
    ratios = [r.deviation_ratio for r in epsilon_sweep]
    spread = max(ratios) / min(ratios)
    checks = [
        (f"deviation ratio spread {spread:.4f}x < 10x", spread < 10.0),
        ("ratios all finite and positive", all(0 < r < math.inf for r in ratios)),
    ]
    conclude(6, "deviation energy scaling", checks)


def test_criterion_07_control_matrix_limit():
    K, m = 4, 1024
    op, basis = base_operator(N)
    tg = TimeGrid(T=1.0, m=m)
    lam = basis.lambdas[:K]
    target = np.diag(-np.expm1(-lam * tg.T) / lam)
    dt_sq = (tg.T / m) ** 2

    cm0 = assemble_control_matrix(PeriodicFlow(op, basis, None, tg, K))
    offdiag = float(np.max(np.abs(cm0.matrix - np.diag(np.diag(cm0.matrix)))))
    diag_ok = all(
        abs(cm0.matrix[j, j] - target[j, j]) <= 1e-8 + dt_sq * lam[j] ** 2
        for j in range(K)
    )

    consts = []
    for s in (0.05, 0.1):
        e = SpaceTimeField("cos(x)").scaled(s)
        cm = assemble_control_matrix(PeriodicFlow(op, basis, e, tg, K))
        eps = perturbation_norm(e, 3.0, tg, op.domain).epsilon
        consts.append(float(np.max(np.abs(cm.matrix - target))) / eps)
    ratio = consts[0] / consts[1]
    checks = [
        ("unperturbed diagonal matches (1 - exp(-lam T))/lam within 1e-8 + O(dt^2)",
         diag_ok),
        (f"unperturbed off-diagonal {offdiag:.2e} <= 1e-10", offdiag <= 1e-10),
        (f"C stable across eps: {consts[0]:.5f} vs {consts[1]:.5f} "
         f"(ratio {ratio:.4f} in [0.5, 1.5])", 0.5 <= ratio <= 1.5),
    ]
    conclude(7, "control matrix diagonal limit", checks)


def test_criterion_08_gram_positivity():
    _, basis = base_operator(N)
    op, _ = base_operator(N)
    windows = [(0.0, math.pi / 2), (math.pi / 4, 3 * math.pi / 4), (0.0, math.pi)]
    checks = []
    for window in windows:
        mask = subdomain_mask(op.domain, [window])
        for k in range(1, 9):
            g = gram_matrix(basis, mask, k)
            if g.min_eig <= 0.0:
                checks.append(
                    (f"window {window} k={k} min eig {g.min_eig:.2e} > 0", False)
                )
    checks.append(("all windows and k <= 8 positive definite", not checks))

    full = gram_matrix(basis, subdomain_mask(op.domain, [windows[2]]), 8)
    identity_gap = float(np.max(np.abs(full.matrix - np.eye(8))))
    half = gram_matrix(basis, subdomain_mask(op.domain, [windows[0]]), 2)
    e11 = abs(half.matrix[0, 0] - 0.5)
    e12 = abs(half.matrix[0, 1] - 4.0 / (3.0 * math.pi))
    checks += [
        (f"full window identity gap {identity_gap:.2e} <= 1e-10",
         identity_gap <= 1e-10),
        (f"X11 error {e11:.2e} <= h^2", e11 <= H**2),
        (f"X12 error {e12:.2e} <= h^2", e12 <= H**2),
    ]
    conclude(8, "subdomain Gram matrices", checks)


def test_criterion_09_localized_consistency():
    op0, basis0 = base_operator(N)
    shift = -float(basis0.lambdas[0])
    op, basis = op0.shift_potential(shift), basis0.shift(shift)
    tg = TimeGrid(T=1.0, m=default_steps(op, 1.0))
    ref = build_reference(op, basis, "sin(2*x)", tg, neutral_rcond=1e-4)
    e = SpaceTimeField("cos(x)").scaled(0.05)

    global_rep = synthesize_control(op, basis, e, "sin(2*x)", ref, 1)
    local_rep = synthesize_control_local(
        op, basis, e, "sin(2*x)", ref, 1, LocalizationSpec.full(op.domain, tg.T)
    )
    gap = float(np.max(np.abs(global_rep.u - local_rep.u)))

    rows = run_sweep_measure(n=N, omega=((0.0, math.pi),))
    prods = [r.norm_u * r.m_E for r in rows]
    band = max(prods) / min(prods)
    residuals_ok = all(r.residual <= 1e-8 for r in rows)
    checks = [
        (f"full-window control matches global to {gap:.2e} <= 1e-8", gap <= 1e-8),
        (f"|u| * m(E) band {band:.4f}x within 10x", band <= 10.0),
        ("every measure-sweep run meets the residual postcondition", residuals_ok),
    ]
    conclude(9, "localized consistency and measure trend", checks)


def test_criterion_10_oracle_equivalence():
    dom = DomainSpec(kind="interval", x_bounds=(0.0, math.pi), n=12)
    op = build_operator(dom, OperatorSpec(a=1.0, c=-1.0, lambda_star=0.5))
    basis = eigendecompose(op)
    tg = TimeGrid(T=1.0, m=default_steps(op, 1.0))
    e = SpaceTimeField("0.1*sin(x)")
    f = SpaceTimeField("sin(2*x)")
    pm = period_map(op, basis, e, f, tg)

    K = 2
    head = HeadConstraint(size=K, values=np.array([0.3, -0.2]))
    rep = solve_k_approx_periodic(pm, head)
    n_dof = basis.n_dof
    M = np.eye(n_dof) - pm.matrix
    M[:K] = 0.0
    M[np.arange(K), np.arange(K)] = 1.0
    rhs = pm.offset.copy()
    rhs[:K] = head.values
    oracle, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    solve_gap = float(np.max(np.abs(rep.trajectory.initial() - oracle)))

    rng = np.random.default_rng(20260822)
    evolve_gap = 0.0
    for _ in range(5):
        y0 = rng.standard_normal(n_dof)
        direct = evolve(op, basis, e, f, None, y0, tg).final()
        evolve_gap = max(evolve_gap, float(np.max(np.abs(pm.propagate(y0) - direct))))
    checks = [
        (f"periodic solve vs dense oracle {solve_gap:.2e} <= 1e-9",
         solve_gap <= 1e-9),
        (f"period map vs direct evolution {evolve_gap:.2e} <= 1e-12",
         evolve_gap <= 1e-12),
    ]
    conclude(10, "dense oracle equivalence", checks)


def test_criterion_11_parser_robustness():
    corpus = _corpus(count=200, seed=20260822)
    points = [(0.3, 0.7, 0.0), (1.25, 0.0, 0.5), (-0.8, -1.5, 0.25)]
    round_trip_ok = True
    bit_exact_ok = True
    for src in corpus:
        tree = exprlang.parse(src)
        if exprlang.parse(exprlang.pretty_print(tree)) != tree:
            round_trip_ok = False
        for x, y, t in points:
            if exprlang.evaluate(tree, x=x, y=y, t=t) != ref_eval(src, x, y, t):
                bit_exact_ok = False

    rng = np.random.default_rng(20260822)
    crashes = 0
    for _ in range(300):
        size = int(rng.integers(1, 1024))
        blob = bytes(rng.integers(32, 127, size=size)).decode("ascii")
        try:
            exprlang.parse(blob)
        except ExprError:
            pass
        except Exception:
            crashes += 1
    checks = [
        ("200-case corpus round-trips structurally", round_trip_ok),
        ("reference evaluator agreement is bit-exact", bit_exact_ok),
        (f"fuzzed inputs never crash ({crashes} crashes)", crashes == 0),
    ]
    conclude(11, "expression parser robustness", checks)
