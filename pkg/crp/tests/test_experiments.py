# Test the experiment harness
import numpy as np
from django.test import SimpleTestCase, tag

from crp.core import ControlPolicy
from crp.exceptions import InvalidParameterError
from crp.experiments import (
    SweepSpec,
    check_trend,
    compare_against_random,
    ordered_map,
    perturb_instance,
    random_feasible_policy,
    reference_sweep,
    replicate_superiority,
    replicate_trend,
    run_sweep,
)
from crp.fbs import FbsConfig
from crp.instances import M1, M2, M3, SENSITIVITY_BASE, SWEEP_VALUES
from crp.ode import GridConfig, evaluate_objective


class RandomPolicyTest(SimpleTestCase):
    def test_range_and_determinism(self):
        grid = GridConfig(N=100)
        first = random_feasible_policy(grid, 50.0, 10.0, seed=3)
        again = random_feasible_policy(grid, 50.0, 10.0, seed=3)
        other = random_feasible_policy(grid, 50.0, 10.0, seed=4)
        np.testing.assert_array_equal(first.values, again.values)
        self.assertFalse(np.array_equal(first.values, other.values))
        self.assertGreaterEqual(first.values.min(), 0.0)
        self.assertLessEqual(first.values.max(), 10.0)
        self.assertEqual(first.T, 50.0)

    def test_uniform_mean(self):
        policy = random_feasible_policy(GridConfig(N=9999), 1.0, 10.0, seed=11)
        self.assertGreaterEqual(policy.values.mean(), 4.8)
        self.assertLessEqual(policy.values.mean(), 5.2)


class CompareAgainstRandomTest(SimpleTestCase):
    def test_sweep_beats_random_policies(self):
        grid = GridConfig(N=200)
        result = compare_against_random(M1, grid, FbsConfig(), count=5, seed=1)
        self.assertTrue(result.converged)
        self.assertEqual(len(result.random_objectives), 5)
        self.assertEqual(result.fraction_beaten, 1.0)
        zero = evaluate_objective(M1, ControlPolicy.constant(grid.nodes(M1.T), 0.0), grid)[0]
        self.assertGreaterEqual(result.report.objective, zero)

    def test_independent_of_worker_count(self):
        grid = GridConfig(N=100)
        serial = compare_against_random(M1, grid, FbsConfig(), count=4, seed=9)
        pooled = compare_against_random(M1, grid, FbsConfig(), count=4, seed=9, workers=2)
        np.testing.assert_array_equal(serial.random_objectives, pooled.random_objectives)

    def test_rejects_empty_count(self):
        with self.assertRaises(InvalidParameterError):
            compare_against_random(M1, GridConfig(N=100), FbsConfig(), count=0, seed=1)


class CheckTrendTest(SimpleTestCase):
    def test_increasing(self):
        self.assertEqual(check_trend([1, 2, 3], [1, 2, 3], 'increasing').status, 'pass')

    def test_decreasing_failure_index(self):
        verdict = check_trend([1, 2, 3], [3, 2, 2.5], 'decreasing')
        self.assertEqual(verdict.status, 'fail')
        self.assertEqual(verdict.failed_at, 2)
        self.assertFalse(verdict.passed)

    def test_tolerates_rounding(self):
        self.assertTrue(check_trend([1, 2, 3], [1e6, 1e6 - 1e-3, 2e6], 'increasing').passed)

    def test_saturating(self):
        values = np.arange(11.0)
        self.assertTrue(check_trend(values, 1 - np.exp(-values), 'increasing_saturating').passed)
        verdict = check_trend(values, 2 * values, 'increasing_saturating')
        self.assertEqual(verdict.status, 'fail')

    def test_rejects_bad_input(self):
        with self.assertRaises(InvalidParameterError):
            check_trend([1, 2, 3], [1, 2], 'increasing')
        with self.assertRaises(InvalidParameterError):
            check_trend([1], [1], 'increasing')
        with self.assertRaises(InvalidParameterError):
            check_trend([1, 2], [1, 2], 'sideways')


class SweepSpecTest(SimpleTestCase):
    def test_validation(self):
        with self.assertRaises(InvalidParameterError):
            SweepSpec(base=M1, parameter='beta1', values=(1.0,))
        with self.assertRaises(InvalidParameterError):
            SweepSpec(base=M1, parameter='mu', values=())
        with self.assertRaises(InvalidParameterError):
            SweepSpec(base=M1, parameter='mu', values=(2.0, 1.0))

    def test_invalid_substitution_names_value(self):
        spec = SweepSpec(base=M1, parameter='T', values=(-1.0, 10.0))
        with self.assertRaisesMessage(InvalidParameterError, 'T = -1.0'):
            spec.instances()

    def test_reference_sweep(self):
        spec = reference_sweep('mu')
        self.assertEqual(spec.base, SENSITIVITY_BASE)
        self.assertEqual(spec.values, SWEEP_VALUES['mu'])
        self.assertEqual(len(spec.values), 11)
        self.assertEqual(spec.expected_trend, 'increasing')
        self.assertEqual(reference_sweep('x_max').expected_trend, 'increasing_saturating')


class RunSweepTest(SimpleTestCase):
    def test_single_value_is_trivial(self):
        result = run_sweep(SweepSpec(base=M1, parameter='T', values=(50.0,)), GridConfig(N=100), FbsConfig())
        self.assertEqual(len(result.records), 1)
        self.assertEqual(result.verdict.status, 'trivial')

    def test_cost_sweep_decreases(self):
        spec = SweepSpec(base=M1, parameter='omega1', values=(500.0, 1000.0, 1500.0))
        result = run_sweep(spec, GridConfig(N=200), FbsConfig())
        self.assertEqual(result.values, [500.0, 1000.0, 1500.0])
        self.assertEqual(result.verdict.status, 'pass')
        self.assertTrue(all(r.converged for r in result.records))


class ReplicateTest(SimpleTestCase):
    def test_perturbation(self):
        rng = np.random.default_rng(0)
        self.assertEqual(perturb_instance(M1, rng, 0.0), M1)
        inst = perturb_instance(M1, rng, 0.2)
        self.assertEqual((inst.A0, inst.I0, inst.beta1), (M1.A0, M1.I0, M1.beta1))
        for name in ('T', 'mu', 'alpha', 'omega1', 'omega2'):
            self.assertLessEqual(abs(getattr(inst, name) / getattr(M1, name) - 1), 0.2)
        with self.assertRaises(InvalidParameterError):
            perturb_instance(M1, rng, 1.0)

    def test_ordered_map(self):
        self.assertEqual(ordered_map(abs, [-3, 1, -2], workers=2), [3, 1, 2])

    def test_superiority_is_reproducible(self):
        args = (M1, GridConfig(N=100), FbsConfig(), 2, 3, 5, 0.1)
        first = replicate_superiority(*args)
        self.assertEqual([r.replicate for r in first], [1, 2])
        self.assertEqual(first, replicate_superiority(*args))

    def test_trend_records(self):
        records = replicate_trend('omega2', GridConfig(N=50), FbsConfig(), replicates=1, seed=2, spread=0.1)
        self.assertEqual(len(records), 1)
        self.assertIn(records[0].status, ('pass', 'fail'))


@tag('slow')
class ReferenceExperimentTest(SimpleTestCase):
    def test_superiority_on_convergence_instances(self):
        for inst in (M1, M2, M3):
            with self.subTest(inst=inst):
                result = compare_against_random(inst, GridConfig(N=5000), FbsConfig(), count=100, seed=20240101)
                self.assertEqual(result.fraction_beaten, 1.0)

    def test_sensitivity_trends(self):
        for parameter in SWEEP_VALUES:
            with self.subTest(parameter=parameter):
                result = run_sweep(reference_sweep(parameter), GridConfig(N=5000), FbsConfig())
                self.assertTrue(result.verdict.passed, result.verdict.detail)
