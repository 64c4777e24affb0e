"""
Management command driving the CRP solvers and experiments.

    python manage.py crp solve --instance instances/m1.txt --out m1/
    python manage.py crp sweep --instance instances/sensitivity.txt --param mu --values 10:1:20 --out sw/

Exit status is 0 on success, 1 on usage or input errors and 2 when a
sweep fails to converge and ``--strict`` is given.
"""
import argparse
import dataclasses
import sys
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

import pandas as pd
from django.core.management.base import BaseCommand, CommandError
from django.forms import ValidationError

from crp import outputs
from crp.conf import crp_settings
from crp.core import ControlPolicy, decline_onset, total_variation
from crp.dp import DpConfig
from crp.exceptions import CrpError
from crp.experiments import (
    SWEEPABLE,
    TREND_MODES,
    SweepSpec,
    compare_against_random,
    compare_fbs_dp,
    random_feasible_policy,
    replicate_superiority,
    replicate_trend,
    run_sweep,
    solve_dp_policy,
)
from crp.fbs import FbsConfig, sweep
from crp.forms import parse_instance
from crp.instances import BUNDLED_INSTANCES, M1, SENSITIVITY_BASE, SWEEP_VALUES, bundled_instance
from crp.ode import GridConfig, evaluate_objective

OUTPUT_FILES = {
    'solve': ('policy.csv', 'iterates.csv', 'report.json'),
    'solve-dp': ('policy.csv', 'dp_policy.csv', 'report.json'),
    'simulate': ('trajectory.csv', 'report.json'),
    'compare': ('random.csv', 'report.json'),
    'compare-dp': ('comparison.csv', 'policies.csv', 'report.json'),
    'sweep': ('sweep.csv', 'report.json'),
    'replicate': ('replicates.csv', 'report.json'),
}

DP_MODES = {'corrected': 'corrected', 'paper-literal': 'paper_literal'}


def dp_triple(text):
    """Parse ``N,M,P,lambda``."""
    parts = text.split(',')
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected N,M,P,lambda, got {text!r}")
    try:
        return int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers N,M,P and a real lambda, got {text!r}")


def sweep_values(text):
    """
    Parse ``a:step:b`` (inclusive), ``a,b,c`` or ``reference``.
    """
    if text == 'reference':
        return text
    try:
        if ':' in text:
            start, step, stop = (float(part) for part in text.split(':'))
            if step <= 0 or stop < start:
                raise argparse.ArgumentTypeError(f"need step > 0 and b >= a in {text!r}")
            count = int(round((stop - start) / step)) + 1
            values = tuple(start + i * step for i in range(count))
            if abs(values[-1] - stop) > 1e-9 * max(1.0, abs(stop)):
                raise argparse.ArgumentTypeError(f"{text!r}: the step does not land on b")
            return values
        return tuple(float(part) for part in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:step:b, a,b,c or 'reference', got {text!r}")


@contextmanager
def collected_warnings():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        yield caught


class Command(BaseCommand):
    help = 'Solve company response policy instances and run the experiments.'
    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # usage errors surface as CommandError (exit 1), not argparse's exit 2
        parser.called_from_command_line = False
        return parser

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except CommandError as exc:
            self.stderr.write(f"CommandError: {exc}")
            sys.exit(exc.returncode)

    def add_arguments(self, parser):
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--instance', help='Instance file (one key = value per line) or a bundled name: M1, M2, M3, sensitivity')
        common.add_argument('--out', required=True, help='Output directory')
        common.add_argument('--force', action='store_true', help='Overwrite existing output files')
        common.add_argument('--epsilon', type=float, help='Sup-norm stopping threshold')
        common.add_argument('--grid', type=int, help='Number of integration steps N')
        common.add_argument('--max-iter', type=int, dest='max_iter', help='Sweep iteration cap')
        common.add_argument('--relaxation', type=float, help='Weight of the previous iterate')
        common.add_argument('--seed', type=int, help='Seed of every random draw')
        common.add_argument('--count', type=int, help='Number of random baseline policies')
        common.add_argument('--dp', type=dp_triple, help='Dynamic programming grid N,M,P,lambda')
        common.add_argument('--dp-mode', choices=sorted(DP_MODES), dest='dp_mode', help='Stage reward')
        common.add_argument('--strict', action='store_true', help='Exit with status 2 on non-convergence')
        common.add_argument('--record-runtime', action='store_true', dest='record_runtime',
                            help='Write wall-clock runtime into report.json')

        subparsers = parser.add_subparsers(dest='subcommand', required=True)
        subparsers.add_parser('solve', parents=[common], help='Forward-backward sweep')
        subparsers.add_parser('solve-dp', parents=[common], help='Dynamic programming baseline')
        simulate = subparsers.add_parser('simulate', parents=[common], help='State trajectory under a policy')
        simulate.add_argument('--policy', default='zero',
                              help="zero, max, random or a CSV file with columns t and x")
        subparsers.add_parser('compare', parents=[common], help='Sweep against random policies')
        subparsers.add_parser('compare-dp', parents=[common], help='Sweep against dynamic programming')
        sweep_parser = subparsers.add_parser('sweep', parents=[common], help='Sensitivity sweep')
        sweep_parser.add_argument('--param', required=True, choices=SWEEPABLE)
        sweep_parser.add_argument('--values', type=sweep_values, default='reference',
                                  help="a:step:b, a,b,c or 'reference'")
        sweep_parser.add_argument('--trend', choices=TREND_MODES, help='Override the expected trend')
        replicate = subparsers.add_parser('replicate', parents=[common], help='Replicated experiments')
        replicate.add_argument('--claim', required=True, choices=('superiority',) + SWEEPABLE)
        replicate.add_argument('--replicates', type=int)
        replicate.add_argument('--spread', type=float)

    def handle(self, *args, **options):
        conf = crp_settings()
        subcommand = options['subcommand']
        out = self._prepare_out(options['out'], OUTPUT_FILES[subcommand], options['force'])

        handler = getattr(self, 'handle_' + subcommand.replace('-', '_'))
        started = time.perf_counter()
        with collected_warnings() as caught:
            try:
                report, converged = handler(options, conf, out)
            except (CrpError, ValueError) as exc:
                raise CommandError(str(exc))
        self._echo_warnings(caught)

        report['command'] = subcommand
        if options['record_runtime']:
            report['runtime_seconds'] = time.perf_counter() - started
        outputs.write_json(report, out / 'report.json')
        self.stdout.write(self.style.SUCCESS(f"{subcommand}: results written to {out}"))

        if not converged:
            message = f"{subcommand}: the sweep did not converge"
            if options['strict']:
                raise CommandError(message, returncode=2)
            self.stdout.write(self.style.WARNING(message))

    # ------------------------------------------------------------------
    # Subcommands. Each returns (report dict, converged flag).
    # ------------------------------------------------------------------

    def handle_solve(self, options, conf, out):
        inst = self._instance(options)
        grid, cfg = self._grid(options), self._fbs(options)
        report = sweep(inst, grid, cfg)
        self._csv(outputs.trajectory_frame(report.final_policy, report.state, report.adjoint),
                  out / 'policy.csv', conf)
        self._csv(outputs.iterates_frame(report), out / 'iterates.csv', conf)
        self.stdout.write(f"J = {report.objective:.6g} after {report.iterations} iteration(s)")
        return {
            'instance': inst.as_dict(),
            'config': self._config(grid, cfg),
            'J': report.objective,
            'iterations': report.iterations,
            'converged': report.converged,
            'sup_norm_history': list(report.sup_norm_history),
            'decline_onset': decline_onset(report.final_policy, inst.x_max),
        }, report.converged

    def handle_solve_dp(self, options, conf, out):
        inst = self._instance(options)
        grid, dp_cfg = self._grid(options), self._dp(options)
        run = solve_dp_policy(inst, grid, dp_cfg)
        self._csv(outputs.trajectory_frame(run.sampled, run.state), out / 'policy.csv', conf)
        self._csv(outputs.dp_policy_frame(run.policy), out / 'dp_policy.csv', conf)
        self.stdout.write(f"J = {run.objective:.6g} ({dp_cfg.stage_reward_mode} stage reward)")
        return {
            'instance': inst.as_dict(),
            'config': self._config(grid, dp=dp_cfg, S=float(run.tables.state_grid[-1])),
            'J': run.objective,
            'grid_clamped': run.grid_clamped,
            'total_variation': total_variation(run.policy),
        }, True

    def handle_simulate(self, options, conf, out):
        inst = self._instance(options)
        grid = self._grid(options)
        seed = self._option(options, 'seed', conf['SEED'])
        policy = self._policy(options['policy'], inst, grid, seed)
        objective, state, sampled = evaluate_objective(inst, policy, grid)
        self._csv(outputs.trajectory_frame(sampled, state), out / 'trajectory.csv', conf)
        self.stdout.write(f"J = {objective:.6g}")
        return {
            'instance': inst.as_dict(),
            'config': self._config(grid, policy=options['policy'], seed=seed),
            'J': objective,
            'final_state': {'A': float(state.A[-1]), 'I': float(state.I[-1])},
        }, True

    def handle_compare(self, options, conf, out):
        inst = self._instance(options)
        grid, cfg = self._grid(options), self._fbs(options)
        count = self._option(options, 'count', conf['RANDOM_COUNT'])
        seed = self._option(options, 'seed', conf['SEED'])
        result = compare_against_random(inst, grid, cfg, count, seed, workers=conf['THREADS'])
        self._csv(outputs.random_comparison_frame(result), out / 'random.csv', conf)
        beaten = round(result.fraction_beaten * count)
        self.stdout.write(f"sweep policy beats {beaten} of {count} random policies")
        return {
            'instance': inst.as_dict(),
            'config': self._config(grid, cfg, count=count, seed=seed),
            'J': result.report.objective,
            'iterations': result.report.iterations,
            'converged': result.converged,
            'fraction_beaten': result.fraction_beaten,
            'best_random_J': float(result.random_objectives.max()),
        }, result.converged

    def handle_compare_dp(self, options, conf, out):
        inst = self._instance(options)
        grid, cfg, dp_cfg = self._grid(options), self._fbs(options), self._dp(options)
        result = compare_fbs_dp(inst, grid, cfg, dp_cfg)
        dp_sampled = result.dp_policy.resample(grid.nodes(inst.T), hold='previous')
        self._csv(outputs.comparison_frame(result), out / 'comparison.csv', conf)
        self._csv(pd.DataFrame({
            't': result.fbs_report.final_policy.times,
            'x_fbs': result.fbs_report.final_policy.values,
            'x_dp': dp_sampled.values,
        }), out / 'policies.csv', conf)
        if result.ratio is None:
            self.stdout.write("J_FBS = 0; the objective ratio is undefined")
        else:
            self.stdout.write(f"J_DP / J_FBS = {result.ratio:.4f}")
        report = {
            'instance': inst.as_dict(),
            'config': self._config(grid, cfg, dp=dp_cfg),
            'J_fbs': result.fbs_report.objective,
            'J_dp': result.dp_objective,
            'ratio': result.ratio,
            'iterations': result.fbs_report.iterations,
            'converged': result.fbs_report.converged,
            'stage_reward_mode': result.stage_reward_mode,
            'grid_clamped': result.grid_clamped,
            'total_variation_fbs': result.fbs_variation,
            'total_variation_dp': result.dp_variation,
        }
        if options['record_runtime']:
            report['runtime_fbs_seconds'] = result.fbs_runtime
            report['runtime_dp_seconds'] = result.dp_runtime
        return report, result.fbs_report.converged

    def handle_sweep(self, options, conf, out):
        inst = self._instance(options, default=SENSITIVITY_BASE)
        grid, cfg = self._grid(options), self._fbs(options)
        values = options['values']
        if values == 'reference':
            values = SWEEP_VALUES[options['param']]
        spec = SweepSpec(base=inst, parameter=options['param'], values=values,
                         seed=self._option(options, 'seed', conf['SEED']), trend=options['trend'])
        result = run_sweep(spec, grid, cfg, workers=conf['THREADS'])
        self._csv(outputs.sweep_frame(result), out / 'sweep.csv', conf)

        verdict = result.verdict
        style = self.style.SUCCESS if verdict.passed else self.style.WARNING
        self.stdout.write(style(f"trend {verdict.mode}: {verdict.status}"))
        converged = all(r.converged for r in result.records)
        return {
            'instance': inst.as_dict(),
            'config': self._config(grid, cfg, parameter=spec.parameter, values=list(spec.values)),
            'trend': dataclasses.asdict(verdict),
            'converged': converged,
        }, converged

    def handle_replicate(self, options, conf, out):
        grid, cfg = self._grid(options), self._fbs(options)
        replicates = self._option(options, 'replicates', conf['REPLICATES'])
        spread = self._option(options, 'spread', conf['REPLICATE_SPREAD'])
        seed = self._option(options, 'seed', conf['SEED'])
        claim = options['claim']
        if replicates < 1:
            raise CommandError(f"--replicates must be >= 1, got {replicates}")

        if claim == 'superiority':
            inst = self._instance(options, default=M1)
            count = self._option(options, 'count', conf['RANDOM_COUNT'])
            records = replicate_superiority(inst, grid, cfg, replicates, count, seed, spread,
                                            workers=conf['THREADS'])
            held = sum(r.fraction_beaten == 1.0 for r in records)
            extra = {'count': count}
        else:
            inst = self._instance(options, default=SENSITIVITY_BASE)
            records = replicate_trend(claim, grid, cfg, replicates, seed, spread, base=inst,
                                      workers=conf['THREADS'])
            held = sum(r.status != 'fail' for r in records)
            extra = {}
        self._csv(outputs.replicate_frame(records), out / 'replicates.csv', conf)
        self.stdout.write(f"claim {claim!r} held on {held} of {replicates} randomised instances")
        converged = all(r.converged for r in records)
        return {
            'instance': inst.as_dict(),
            'config': self._config(grid, cfg, claim=claim, replicates=replicates,
                                   spread=spread, seed=seed, **extra),
            'held': held,
            'replicates': replicates,
            'converged': converged,
        }, converged

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _prepare_out(self, out, names, force):
        out = Path(out)
        if out.exists() and not out.is_dir():
            raise CommandError(f"{out} exists and is not a directory")
        taken = [name for name in names if (out / name).exists()]
        if taken and not force:
            raise CommandError(f"{out}: {', '.join(taken)} already exist(s); use --force to overwrite")
        out.mkdir(parents=True, exist_ok=True)
        return out

    def _instance(self, options, default=None):
        path = options['instance']
        if path is None:
            if default is None:
                raise CommandError("--instance is required")
            return default
        if path in BUNDLED_INSTANCES and not Path(path).exists():
            return bundled_instance(path)
        try:
            document = Path(path).read_text()
        except OSError as exc:
            raise CommandError(f"cannot read instance file {path}: {exc.strerror}")
        try:
            return parse_instance(document)
        except ValidationError as exc:
            raise CommandError(f"{path}: {'; '.join(exc.messages)}")

    def _policy(self, choice, inst, grid, seed):
        times = grid.nodes(inst.T)
        if choice == 'zero':
            return ControlPolicy.constant(times, 0.0)
        if choice == 'max':
            return ControlPolicy.constant(times, inst.x_max)
        if choice == 'random':
            return random_feasible_policy(grid, inst.T, inst.x_max, seed)
        if not Path(choice).is_file():
            raise CommandError(f"--policy must be zero, max, random or an existing CSV file, got {choice!r}")
        t, x = outputs.load_policy_csv(choice)
        return ControlPolicy(t, x)

    def _option(self, options, name, default):
        return default if options.get(name) is None else options[name]

    def _grid(self, options):
        grid = GridConfig.from_settings()
        if options['grid'] is not None:
            grid = GridConfig(N=options['grid'])
        return grid

    def _fbs(self, options):
        overrides = {
            field: options[option]
            for field, option in (('epsilon', 'epsilon'), ('max_iterations', 'max_iter'),
                                  ('relaxation', 'relaxation'))
            if options[option] is not None
        }
        return dataclasses.replace(FbsConfig.from_settings(), **overrides)

    def _dp(self, options):
        dp = DpConfig.from_settings()
        if options['dp'] is not None:
            N, M, P, lambda_reg = options['dp']
            dp = dataclasses.replace(dp, N=N, M=M, P=P, lambda_reg=lambda_reg)
        if options['dp_mode'] is not None:
            dp = dataclasses.replace(dp, stage_reward_mode=DP_MODES[options['dp_mode']])
        return dp

    def _config(self, grid, fbs=None, dp=None, **extra):
        config = {'grid_N': grid.N, **extra}
        if fbs is not None:
            config['fbs'] = dataclasses.asdict(fbs)
        if dp is not None:
            config['dp'] = dataclasses.asdict(dp)
        return config

    def _csv(self, df, path, conf):
        outputs.write_csv(df, path, float_format=conf['CSV_FLOAT_FORMAT'])

    def _echo_warnings(self, caught):
        for warning in caught:
            self.stdout.write(self.style.WARNING(f"warning: {warning.message}"))
