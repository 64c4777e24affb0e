# Test the crp management command
import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from crp.forms import serialize_instance
from crp.instances import M1
from crp.management.commands.crp import Command, sweep_values


class CrpCommandTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.instance = self.root / 'm1.txt'
        self.instance.write_text(serialize_instance(M1))

    def run_crp(self, subcommand, out, *extra):
        stdout = StringIO()
        call_command('crp', subcommand, '--instance', str(self.instance), '--out', str(self.root / out),
                     *extra, stdout=stdout)
        return stdout.getvalue()

    def report(self, out):
        return json.loads((self.root / out / 'report.json').read_text())

    def test_solve(self):
        """Test solve writes the policy, iterates and report"""
        output = self.run_crp('solve', 'm1', '--grid', '200')
        self.assertIn('results written', output)
        policy = pd.read_csv(self.root / 'm1' / 'policy.csv')
        self.assertEqual(list(policy.columns), ['t', 'x', 'A', 'I', 'lambda1', 'lambda2'])
        self.assertEqual(len(policy), 201)
        self.assertEqual((policy['A'][0], policy['I'][0]), (50.0, 10000.0))
        self.assertEqual(policy['lambda1'].iloc[-1], 0.0)

        report = self.report('m1')
        self.assertTrue(report['converged'])
        self.assertEqual(report['command'], 'solve')
        self.assertEqual(report['instance']['beta1'], 'arctan(0.05, 0.3)')
        self.assertEqual(report['config']['grid_N'], 200)
        self.assertNotIn('runtime_seconds', report)

        iterates = pd.read_csv(self.root / 'm1' / 'iterates.csv')
        self.assertEqual(list(iterates.columns), ['t'] + [f'x{k}' for k in range(1, report['iterations'] + 1)])

    def test_bundled_instance_name(self):
        call_command('crp', 'solve', '--instance', 'M2', '--grid', '100', '--out', str(self.root / 'm2'),
                     stdout=StringIO())
        self.assertEqual(self.report('m2')['instance']['beta1'], 'power(0.06, 0.25)')

    def test_outputs_are_reproducible(self):
        self.run_crp('compare', 'first', '--grid', '100', '--count', '3', '--seed', '4')
        self.run_crp('compare', 'second', '--grid', '100', '--count', '3', '--seed', '4')
        for name in ('random.csv', 'report.json'):
            self.assertEqual((self.root / 'first' / name).read_bytes(), (self.root / 'second' / name).read_bytes())

    def test_record_runtime(self):
        self.run_crp('solve', 'timed', '--grid', '100', '--record-runtime')
        self.assertIn('runtime_seconds', self.report('timed'))

    def test_simulate_zero_policy(self):
        self.run_crp('simulate', 'sim', '--grid', '100', '--policy', 'zero')
        trajectory = pd.read_csv(self.root / 'sim' / 'trajectory.csv')
        first = trajectory.iloc[0]
        self.assertEqual((first['t'], first['x'], first['A'], first['I']), (0.0, 0.0, 50.0, 10000.0))
        self.assertTrue(trajectory['lambda1'].isna().all())

    def test_simulate_policy_file(self):
        policy = self.root / 'policy.csv'
        policy.write_text("t,x\n0,10\n25,5\n50,0\n")
        self.run_crp('simulate', 'sim', '--grid', '100', '--policy', str(policy))
        trajectory = pd.read_csv(self.root / 'sim' / 'trajectory.csv')
        self.assertAlmostEqual(trajectory['x'][50], 5.0)

    def test_compare(self):
        self.run_crp('compare', 'cmp', '--grid', '100', '--count', '3')
        table = pd.read_csv(self.root / 'cmp' / 'random.csv', dtype={'policy_id': str})
        self.assertEqual(list(table['policy_id']), ['fbs', '1', '2', '3'])
        self.assertEqual(self.report('cmp')['fraction_beaten'], 1.0)

    def test_solve_dp(self):
        self.run_crp('solve-dp', 'dp', '--grid', '100', '--dp', '4,20,5,0.1', '--dp-mode', 'paper-literal')
        self.assertEqual(len(pd.read_csv(self.root / 'dp' / 'dp_policy.csv')), 5)
        self.assertEqual(len(pd.read_csv(self.root / 'dp' / 'policy.csv')), 101)
        self.assertEqual(self.report('dp')['config']['dp']['stage_reward_mode'], 'paper_literal')

    def test_compare_dp(self):
        self.run_crp('compare-dp', 'cdp', '--grid', '100', '--dp', '4,20,5,0.1')
        table = pd.read_csv(self.root / 'cdp' / 'comparison.csv')
        self.assertEqual(list(table['solver']), ['fbs', 'dp'])
        policies = pd.read_csv(self.root / 'cdp' / 'policies.csv')
        self.assertEqual(list(policies.columns), ['t', 'x_fbs', 'x_dp'])
        self.assertIn('ratio', self.report('cdp'))

    def test_compare_dp_without_benefit(self):
        """Test a zero sweep objective writes a null ratio instead of failing"""
        self.instance.write_text(serialize_instance(M1.replace(omega2=0.0)))
        output = self.run_crp('compare-dp', 'zero', '--grid', '100', '--dp', '4,20,5,0.1')
        self.assertIn('ratio is undefined', output)
        report = self.report('zero')
        self.assertIsNone(report['ratio'])
        self.assertEqual(report['J_fbs'], 0.0)
        self.assertFalse(report['grid_clamped'])

    @override_settings(CRP={'GRID_N': 40, 'MAX_ITERATIONS': 3})
    def test_defaults_from_settings(self):
        self.run_crp('solve', 'conf')
        config = self.report('conf')['config']
        self.assertEqual(config['grid_N'], 40)
        self.assertEqual(config['fbs']['max_iterations'], 3)
        self.assertEqual(config['fbs']['epsilon'], 1e-6)

    def test_sweep(self):
        self.run_crp('sweep', 'sw', '--grid', '100', '--param', 'omega1', '--values', '500:500:1500')
        table = pd.read_csv(self.root / 'sw' / 'sweep.csv')
        self.assertEqual(list(table['value']), [500.0, 1000.0, 1500.0])
        self.assertEqual(self.report('sw')['trend']['status'], 'pass')

    def test_replicate(self):
        self.run_crp('replicate', 'rep', '--grid', '50', '--claim', 'superiority',
                     '--replicates', '2', '--count', '2')
        table = pd.read_csv(self.root / 'rep' / 'replicates.csv')
        self.assertEqual(list(table['replicate']), [1, 2])

    def test_refuses_to_overwrite(self):
        self.run_crp('solve', 'm1', '--grid', '100')
        with self.assertRaisesMessage(CommandError, '--force'):
            self.run_crp('solve', 'm1', '--grid', '100')
        self.run_crp('solve', 'm1', '--grid', '100', '--force')

    def test_strict_non_convergence(self):
        with self.assertRaises(CommandError) as cm:
            self.run_crp('solve', 'strict', '--grid', '100', '--max-iter', '1', '--strict')
        self.assertEqual(cm.exception.returncode, 2)
        self.assertFalse(self.report('strict')['converged'])

    def test_non_convergence_without_strict(self):
        output = self.run_crp('solve', 'loose', '--grid', '100', '--max-iter', '1')
        self.assertIn('did not converge', output)

    def test_invalid_instance(self):
        self.instance.write_text(serialize_instance(M1).replace('alpha', 'gamma'))
        with self.assertRaises(CommandError) as cm:
            self.run_crp('solve', 'bad', '--grid', '100')
        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn('gamma', str(cm.exception))

    def test_invalid_option_values(self):
        for extra in (('--grid', '1'), ('--epsilon', '-1'), ('--dp', '4,20'), ('--bogus',)):
            with self.subTest(extra=extra), self.assertRaises(CommandError) as cm:
                self.run_crp('solve', 'opts', '--force', *extra)
            self.assertEqual(cm.exception.returncode, 1)

    def test_exit_status_from_command_line(self):
        command = Command(stdout=StringIO(), stderr=StringIO())
        with self.assertRaises(SystemExit) as cm:
            command.run_from_argv(['manage.py', 'crp', 'solve', '--instance', str(self.instance)])
        self.assertEqual(cm.exception.code, 1)


class SweepValuesTest(SimpleTestCase):
    def test_forms(self):
        self.assertEqual(sweep_values('10:1:20'), tuple(float(v) for v in range(10, 21)))
        self.assertEqual(sweep_values('1,2.5,4'), (1.0, 2.5, 4.0))
        self.assertEqual(sweep_values('reference'), 'reference')
