"""Canonical-experiment tests.

Most cases run at n=96 to stay fast; the default n=200 path is exercised
once through the stabilized demo in the acceptance suite. Eigenfunction
and defect identities below are exact for the discrete grid (the sine
quadrature sum telescopes), so tolerances are rounding-level.
"""

import json
import math

import numpy as np
import pytest

from pstab import scenarios as sc
from pstab.errors import BoundViolated, ValidationError

N = 96
H = math.pi / (N + 1)


def grid_x(n=N):
    return math.pi / (n + 1) * np.arange(1, n + 1)


@pytest.fixture(scope="module")
def demo():
    return sc.stabilized_demo(n=N)


@pytest.fixture(scope="module")
def eps_rows():
    return sc.run_sweep_epsilon(n=N)


@pytest.fixture(scope="module")
def measure_rows():
    return sc.run_sweep_measure(n=N)


class TestPerturbedEigenpair:
    def test_unperturbed_first_mode_is_discrete_sine(self):
        lam, vec = sc.first_eigenvalue_perturbed(None, N)
        assert abs(lam) <= 10.0 * H**2
        exact = np.sqrt(2.0 / math.pi) * np.sin(grid_x())
        assert np.max(np.abs(vec - exact)) <= 1e-8
        assert abs(H * np.sum(vec**2) - 1.0) <= 1e-10

    def test_constant_perturbation_shifts_exactly(self):
        lam0, _ = sc.first_eigenvalue_perturbed(None, N)
        lam_c, _ = sc.first_eigenvalue_perturbed("0.3", N)
        # constant e adds -e to the operator diagonal, nothing else moves
        assert abs(lam_c - (lam0 - 0.3)) <= 1e-10

    def test_time_dependent_perturbation_rejected(self):
        with pytest.raises(ValidationError):
            sc.first_eigenvalue_perturbed("t*sin(x)", N)


class TestEigenvalueBound:
    def test_smooth_perturbation_passes_with_halving_sweep(self):
        rep = sc.check_eigenvalue_bound("0.1*sin(x)", N)
        assert rep.monotone
        assert rep.slack > 0.0
        mags = [abs(lam) for _, lam in rep.sweep]
        for a, b in zip(mags, mags[1:]):
            assert 0.45 <= b / a <= 0.55
        assert rep.tolerance == pytest.approx(10.0 * H**2)

    def test_zero_perturbation_ties_allowed(self):
        rep = sc.check_eigenvalue_bound(None, N)
        assert rep.monotone
        assert rep.max_abs_e == 0.0

    def test_grid_floor_crossing_raises(self):
        # -1e-4 drags lambda_1 across zero inside the shrinking sweep, so
        # |lambda| turns back up once the h^2 offset dominates
        with pytest.raises(BoundViolated):
            sc.check_eigenvalue_bound("-0.0001", N)

    def test_report_serializes(self):
        rep = sc.check_eigenvalue_bound("0.1*sin(x)", N)
        blob = json.loads(json.dumps(rep.to_dict()))
        assert blob["monotone"] is True
        assert len(blob["sweep"]) == 4


class TestExistenceDemos:
    def test_orthogonal_forcing_admits_periodic_solution(self):
        rep = sc.nonexistence_demo(None, "sin(2*x)", n=N)
        assert rep.exists
        assert rep.null_dim == 1
        assert max(d for _, d in rep.defects) <= 1e-8
        assert all(abs(v) <= 1e-8 for _, v in rep.inner_products)

    def test_resonant_forcing_fails_with_exact_defect(self):
        rep = sc.nonexistence_demo(None, "sin(x)", n=N)
        assert not rep.exists
        assert rep.null_dim == 1
        # h * sum sin^2(x_j) = pi/2 exactly on this grid, so the defect is
        # sqrt(pi/2) to rounding
        defect = rep.defects[0][1]
        assert abs(defect - math.sqrt(math.pi / 2.0)) <= 1e-8

    def test_solver_defect_matches_direct_inner_product(self):
        rep = sc.nonexistence_demo(None, "sin(x)", n=N)
        inner = abs(rep.inner_products[0][1])
        assert abs(rep.defects[0][1] - inner) <= 1e-8

    def test_nonconstant_perturbation_still_blocks_resonant_forcing(self):
        rep = sc.nonexistence_demo("0.05*cos(x)", "sin(x)", n=N)
        assert not rep.exists
        assert rep.defects[0][1] >= 1.0

    def test_constant_perturbation_keeps_sine_null_vector(self):
        # shifting by lambda_e undoes a constant e exactly, so the null
        # direction is the pure first sine and sin 2x stays compatible
        rep = sc.nonexistence_demo("0.1", "sin(2*x)", n=N)
        assert rep.exists
        assert rep.null_dim == 1

    def test_report_serializes(self):
        rep = sc.nonexistence_demo(None, "sin(x)", n=N)
        blob = json.loads(json.dumps(rep.to_dict()))
        assert blob["exists"] is False
        assert blob["defects"][0][0] == 1


class TestStabilizedDemo:
    def test_head_size_auto_selects_one(self, demo):
        assert demo.head_size == 1

    def test_controlled_solve_is_periodic(self, demo):
        rep = demo.report
        assert rep.residual <= 1e-8 * (1.0 + rep.sup_norm)

    def test_control_cancels_neutral_forcing_component(self, demo):
        # one pinned mode, forcing sin x: the control must remove the
        # sqrt(pi/2)-sized component on the first eigenfunction
        assert abs(demo.report.u[0] + math.sqrt(math.pi / 2.0)) <= 1e-6

    def test_uncontrolled_problem_genuinely_fails(self):
        rep = sc.nonexistence_demo("0.05*cos(x)", "sin(x)", n=N)
        assert not rep.exists

    def test_serializes_with_eigenvalue(self, demo):
        blob = json.loads(json.dumps(demo.to_dict()))
        assert blob["lambda_e"] == pytest.approx(demo.lambda_e)
        assert blob["head_size"] == 1


class TestSweeps:
    def test_epsilon_rows_shape(self, eps_rows):
        assert len(eps_rows) == 4
        eps = [r.epsilon for r in eps_rows]
        assert eps == sorted(eps)
        assert all(r.head_size == 1 for r in eps_rows)
        assert all(r.m_E == pytest.approx(1.0) for r in eps_rows)

    def test_control_scales_linearly_in_perturbation(self, eps_rows):
        eps = np.log([r.epsilon for r in eps_rows])
        nu = np.log([r.norm_u for r in eps_rows])
        slope = np.polyfit(eps, nu, 1)[0]
        assert 0.9 <= slope <= 1.1

    def test_ratio_bounds_hold_across_epsilon(self, eps_rows):
        for r in eps_rows:
            assert r.deviation_ratio <= 5.0
            assert r.control_ratio <= 5.0
            assert r.residual <= 1e-10

    def test_measure_rows_shape(self, measure_rows):
        assert len(measure_rows) == 4
        assert [r.m_E for r in measure_rows] == pytest.approx(
            [1.0, 0.5, 0.25, 0.125]
        )
        assert all(r.residual <= 1e-10 for r in measure_rows)

    def test_control_size_times_measure_is_flat(self, measure_rows):
        prods = np.array([r.norm_u * r.m_E for r in measure_rows])
        assert prods.max() / prods.min() - 1.0 <= 1e-2

    def test_smallest_singular_value_tracks_measure(self, measure_rows):
        vals = np.array([r.sigma_min / r.m_E for r in measure_rows])
        assert vals.max() / vals.min() - 1.0 <= 1e-2


class TestPresets:
    def test_known_names(self):
        assert set(sc.PRESETS) == {
            "section3-exists",
            "section3-fails",
            "section3-stabilized",
            "sweep-epsilon",
            "sweep-mE",
        }

    def test_unknown_name_rejected(self):
        with pytest.raises(ValidationError):
            sc.run_preset("nope")

    def test_fails_preset_runs(self):
        rep = sc.run_preset("section3-fails", n=N)
        assert not rep.exists
