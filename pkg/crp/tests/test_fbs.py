# Test the forward-backward sweep
import numpy as np
from django.test import SimpleTestCase, tag

from crp.core import ControlPolicy, PowerLaw, ScaledArctan, ScaledLog
from crp.exceptions import InvalidParameterError
from crp.fbs import FbsConfig, maximize_hamiltonian, pointwise_optimal_control, sweep
from crp.instances import M1, M2, M3
from crp.ode import GridConfig, evaluate_objective


def random_maximisation(rng):
    """A random instance and Hamiltonian coefficient for the pointwise problem."""
    family = rng.integers(3)
    if family == 0:
        beta1 = ScaledArctan(rng.uniform(0.01, 0.1), rng.uniform(0.01, 1.0))
    elif family == 1:
        beta1 = ScaledLog(rng.uniform(0.01, 0.1), rng.uniform(0.01, 1.0))
    else:
        beta1 = PowerLaw(rng.uniform(0.01, 0.1), rng.uniform(0.1, 0.9))
    inst = M1.replace(beta1=beta1, omega1=rng.uniform(100.0, 1500.0), x_max=rng.uniform(1.0, 20.0))
    return inst, 10 ** rng.uniform(2.0, 7.0)


class BruteForceMixin:
    def assert_brute_force_agrees(self, inst, coeff, points=100001):
        xs = np.linspace(0.0, inst.x_max, points)
        gain = coeff * inst.beta1.value(xs) - inst.omega1 * xs
        best = xs[np.argmax(gain)]
        x = pointwise_optimal_control(coeff, inst)
        value = coeff * float(inst.beta1.value(x)) - inst.omega1 * x
        self.assertLessEqual(abs(x - best), 2 * inst.x_max / (points - 1))
        self.assertGreaterEqual(value, gain.max() - 1e-9 * max(1.0, abs(gain.max())))


class FbsConfigTest(SimpleTestCase):
    def test_rejects_bad_values(self):
        for kwargs in ({'epsilon': 0.0}, {'max_iterations': 0}, {'relaxation': 1.0}, {'relaxation': -0.1}):
            with self.subTest(**kwargs), self.assertRaises(InvalidParameterError):
                FbsConfig(**kwargs)


class PointwiseOptimumTest(BruteForceMixin, SimpleTestCase):
    def test_nonpositive_coefficient(self):
        self.assertEqual(pointwise_optimal_control(0.0, M1), 0.0)
        self.assertEqual(pointwise_optimal_control(-5e6, M1), 0.0)

    def test_large_coefficient_saturates(self):
        self.assertEqual(pointwise_optimal_control(1e9, M1), M1.x_max)

    def test_small_coefficient_stays_at_zero(self):
        # coeff * beta1'(0) = 1e4 * 0.015 < omega1
        self.assertEqual(pointwise_optimal_control(1e4, M1), 0.0)

    def test_interior_turning_point(self):
        """Test the stationary point of coeff * beta1(x) - omega1 * x"""
        coeff = M1.omega1 / float(M1.beta1.derivative(3.0))
        self.assertAlmostEqual(pointwise_optimal_control(coeff, M1), 3.0, places=9)

    def test_vectorised(self):
        coeff = np.array([-1.0, 1e4, 1e9])
        np.testing.assert_array_equal(maximize_hamiltonian(coeff, M1), [0.0, 0.0, 10.0])

    def test_matches_brute_force(self):
        """Test the closed form against dense grid maximisation"""
        rng = np.random.default_rng(7)
        for _ in range(300):
            self.assert_brute_force_agrees(*random_maximisation(rng))


class SweepTest(SimpleTestCase):
    def test_converges_on_coarse_grid(self):
        grid = GridConfig(N=500)
        report = sweep(M1, grid, FbsConfig())
        self.assertTrue(report.converged)
        self.assertEqual(len(report.iterates), report.iterations)
        self.assertLess(report.sup_norm_history[-1], 1e-6)
        self.assertGreaterEqual(report.final_policy.values.min(), 0.0)
        self.assertLessEqual(report.final_policy.values.max(), M1.x_max)
        self.assertAlmostEqual(report.objective, evaluate_objective(M1, report.final_policy, grid)[0])

    def test_self_consistent_at_convergence(self):
        """Test one more sweep step from the converged policy moves it by under 2 epsilon"""
        cfg = FbsConfig()
        report = sweep(M1, GridConfig(N=500), cfg)
        again = maximize_hamiltonian((report.adjoint.lambda1 - report.adjoint.lambda2) * report.state.I, M1)
        self.assertLess(np.abs(again - report.final_policy.values).max(), 2 * cfg.epsilon)

    def test_beats_constant_policies(self):
        grid = GridConfig(N=300)
        report = sweep(M1, grid, FbsConfig())
        times = grid.nodes(M1.T)
        for value in (0.0, 2.5, 5.0, 10.0):
            J = evaluate_objective(M1, ControlPolicy.constant(times, value), grid)[0]
            self.assertGreater(report.objective, J)

    def test_reports_non_convergence(self):
        report = sweep(M1, GridConfig(N=200), FbsConfig(max_iterations=1))
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 1)

    def test_zero_benefit(self):
        """Test omega2 = 0 gives the zero policy at once"""
        report = sweep(M1.replace(omega2=0.0), GridConfig(N=200), FbsConfig())
        self.assertTrue(report.converged)
        self.assertEqual(report.iterations, 1)
        self.assertFalse(np.any(report.final_policy.values))
        self.assertEqual(report.objective, 0.0)

    def test_relaxation_reaches_same_policy(self):
        grid = GridConfig(N=300)
        plain = sweep(M1, grid, FbsConfig())
        relaxed = sweep(M1, grid, FbsConfig(relaxation=0.5))
        self.assertTrue(relaxed.converged)
        np.testing.assert_allclose(relaxed.final_policy.values, plain.final_policy.values, atol=1e-3)


@tag('slow')
class ConvergenceInstanceTest(SimpleTestCase):
    grid = GridConfig(N=5000)

    def test_m1_objective(self):
        report = sweep(M1, self.grid, FbsConfig(epsilon=1e-6))
        self.assertTrue(report.converged)
        self.assertLessEqual(report.iterations, 10)
        self.assertAlmostEqual(report.objective / 4.06e6, 1.0, delta=0.03)

    def test_iteration_counts(self):
        """Test M2 and M3 converge at epsilon = 1e-6 within their observed budgets"""
        for inst, budget in ((M2, 16), (M3, 15)):
            with self.subTest(inst=inst):
                report = sweep(inst, self.grid, FbsConfig())
                self.assertTrue(report.converged)
                self.assertLessEqual(report.iterations, budget)

    def test_policy_starts_saturated_and_declines(self):
        for inst in (M1, M3):
            with self.subTest(inst=inst):
                x = sweep(inst, self.grid, FbsConfig()).final_policy.values
                self.assertEqual(x[0], inst.x_max)
                self.assertLessEqual(np.diff(x).max(), 1e-6 * inst.x_max)

    def test_power_law_policy_plateau(self):
        """Test M2 declines to an interior plateau that drifts up only slightly"""
        x = sweep(M2, self.grid, FbsConfig()).final_policy.values
        self.assertEqual(x[0], M2.x_max)
        first_half = x[:len(x) // 2]
        bottom = int(np.argmin(first_half))
        self.assertLessEqual(np.diff(x[:bottom + 1]).max(initial=0.0), 1e-6 * M2.x_max)
        rise = np.clip(np.diff(x), 0.0, None)
        self.assertLessEqual(rise.max(), 1e-5 * M2.x_max)
        self.assertLessEqual(rise.sum(), 0.02 * M2.x_max)
        self.assertLess(x[-1], x[0])


@tag('slow')
class ClosedFormAtScaleTest(BruteForceMixin, SimpleTestCase):
    def test_ten_thousand_draws(self):
        """Test the closed form over 10^4 random draws on a 10^5-point grid"""
        rng = np.random.default_rng(2024)
        for _ in range(10000):
            self.assert_brute_force_agrees(*random_maximisation(rng))
