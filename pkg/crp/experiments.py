"""
Experiment harness: random-policy baselines, the sweep-versus-dynamic
programming comparison, sensitivity sweeps with trend checks, and
replicated versions of these claims on randomised instances.

Randomised results derive from numpy ``SeedSequence`` streams (PCG64), so
they depend only on the seed, never on the number of worker processes.
"""
from __future__ import annotations

import logging
import multiprocessing
import time
from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import (
    SCALAR_PARAMETERS,
    ControlPolicy,
    CrpInstance,
    SolveReport,
    StateTrajectory,
    decline_onset,
    total_variation,
)
from .dp import DpConfig, DpTables, dp_solve, trace_rollout
from .exceptions import InvalidParameterError
from .fbs import FbsConfig, sweep
from .instances import EXPECTED_TRENDS, SENSITIVITY_BASE, SWEEP_VALUES
from .ode import GridConfig, evaluate_objective

logger = logging.getLogger(__name__)

SWEEPABLE = ('T', 'x_max', 'mu', 'delta1', 'delta2', 'alpha', 'omega1', 'omega2')
TREND_MODES = ('increasing', 'decreasing', 'increasing_saturating')
TREND_TOLERANCE = 1e-6

_MP_CTX = multiprocessing.get_context(
    'fork' if 'fork' in multiprocessing.get_all_start_methods() else 'spawn'
)


def ordered_map(func, items, workers: int = 1) -> list:
    """Map in input order, over a process pool when ``workers`` > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with _MP_CTX.Pool(min(workers, len(items))) as pool:
        return pool.map(func, items)


# ---------------------------------------------------------------------------
# Random baselines
# ---------------------------------------------------------------------------

def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed)))


def random_feasible_policy(grid: GridConfig, T: float, x_max: float, seed) -> ControlPolicy:
    """Independent uniform draws on [0, x_max] at each grid point."""
    values = _generator(seed).uniform(0.0, x_max, grid.N + 1)
    return ControlPolicy(grid.nodes(T), values)


def _random_objective(stream, inst, grid):
    policy = random_feasible_policy(grid, inst.T, inst.x_max, stream)
    return evaluate_objective(inst, policy, grid)[0]


@dataclass(frozen=True)
class RandomComparison:
    report: SolveReport
    random_objectives: np.ndarray
    fraction_beaten: float

    @property
    def converged(self) -> bool:
        return self.report.converged


def compare_against_random(inst: CrpInstance, grid: GridConfig, cfg: FbsConfig, count: int,
                           seed, workers: int = 1) -> RandomComparison:
    """Solve by sweep and score ``count`` random feasible policies against it."""
    if count < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count!r}")
    report = sweep(inst, grid, cfg)
    streams = _seed_sequence(seed).spawn(count)
    objectives = np.array(ordered_map(partial(_random_objective, inst=inst, grid=grid), streams, workers))
    beaten = float(np.mean(report.objective > objectives))
    logger.info("sweep policy beats %d of %d random policies", round(beaten * count), count)
    return RandomComparison(report=report, random_objectives=objectives, fraction_beaten=beaten)


# ---------------------------------------------------------------------------
# Sweep against dynamic programming
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DpComparison:
    fbs_report: SolveReport
    dp_policy: ControlPolicy
    dp_objective: float
    stage_reward_mode: str
    grid_clamped: bool
    fbs_runtime: float
    dp_runtime: float

    @property
    def ratio(self) -> float | None:
        """J_DP / J_FBS, or None when the sweep objective is zero."""
        if self.fbs_report.objective == 0:
            return None
        return self.dp_objective / self.fbs_report.objective

    @property
    def fbs_variation(self) -> float:
        return total_variation(self.fbs_report.final_policy)

    @property
    def dp_variation(self) -> float:
        return total_variation(self.dp_policy)


@dataclass(frozen=True)
class DpRun:
    """Dynamic program tables, its rollout, and the rollout scored on the integration grid."""
    tables: DpTables
    policy: ControlPolicy
    grid_clamped: bool
    objective: float
    state: StateTrajectory
    sampled: ControlPolicy


def solve_dp_policy(inst: CrpInstance, grid: GridConfig, dp_cfg: DpConfig) -> DpRun:
    """Run the dynamic program and score its rollout on the integration grid."""
    tables = dp_solve(inst, dp_cfg)
    policy, clamped = trace_rollout(inst, dp_cfg, tables)
    objective, state, sampled = evaluate_objective(inst, policy, grid, hold='previous')
    return DpRun(tables=tables, policy=policy, grid_clamped=clamped,
                 objective=objective, state=state, sampled=sampled)


def compare_fbs_dp(inst: CrpInstance, grid: GridConfig, fbs_cfg: FbsConfig,
                   dp_cfg: DpConfig) -> DpComparison:
    started = time.perf_counter()
    report = sweep(inst, grid, fbs_cfg)
    fbs_runtime = time.perf_counter() - started

    started = time.perf_counter()
    run = solve_dp_policy(inst, grid, dp_cfg)
    dp_runtime = time.perf_counter() - started

    logger.info(
        "sweep J = %.6g, dynamic programming J = %.6g (%s stage reward)",
        report.objective, run.objective, dp_cfg.stage_reward_mode,
    )
    return DpComparison(
        fbs_report=report,
        dp_policy=run.policy,
        dp_objective=run.objective,
        stage_reward_mode=dp_cfg.stage_reward_mode,
        grid_clamped=run.grid_clamped,
        fbs_runtime=fbs_runtime,
        dp_runtime=dp_runtime,
    )


# ---------------------------------------------------------------------------
# Sensitivity sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    base: CrpInstance
    parameter: str
    values: tuple
    seed: int = 0
    trend: str | None = None

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise InvalidParameterError(
                f"cannot sweep {self.parameter!r}; choose from {', '.join(SWEEPABLE)}"
            )
        values = tuple(float(v) for v in self.values)
        if not values:
            raise InvalidParameterError("a sweep needs at least one value")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidParameterError("sweep values must be strictly increasing")
        object.__setattr__(self, 'values', values)
        if self.trend is not None and self.trend not in TREND_MODES:
            raise InvalidParameterError(f"unknown trend {self.trend!r}; choose from {', '.join(TREND_MODES)}")

    @property
    def expected_trend(self) -> str:
        return self.trend or EXPECTED_TRENDS[self.parameter]

    def instances(self) -> list[CrpInstance]:
        """Substituted instances, validated before any solving starts."""
        result = []
        for value in self.values:
            try:
                result.append(self.base.replace(**{self.parameter: value}))
            except InvalidParameterError as exc:
                raise InvalidParameterError(f"{self.parameter} = {value!r}: {exc}") from exc
        return result


@dataclass(frozen=True)
class SweepRecord:
    value: float
    objective: float
    iterations: int
    converged: bool
    decline_onset: float | None


@dataclass(frozen=True)
class TrendVerdict:
    mode: str
    status: str  # 'pass', 'fail' or 'trivial'
    failed_at: int | None = None
    detail: str = ''

    @property
    def passed(self) -> bool:
        return self.status != 'fail'


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    records: tuple
    verdict: TrendVerdict

    @property
    def values(self) -> list[float]:
        return [r.value for r in self.records]

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]


def reference_sweep(parameter: str, base: CrpInstance = SENSITIVITY_BASE, seed: int = 0) -> SweepSpec:
    """The sensitivity sweep of ``parameter`` with its reference value set."""
    if parameter not in SWEEP_VALUES:
        raise InvalidParameterError(f"no reference sweep for {parameter!r}")
    return SweepSpec(base=base, parameter=parameter, values=SWEEP_VALUES[parameter], seed=seed)


def check_trend(values, objectives, mode: str) -> TrendVerdict:
    """
    Check the direction of J along a sweep.

    Successive differences must have the expected sign up to a relative
    tolerance of 1e-6. ``increasing_saturating`` also needs the mean slope
    over the last quarter of the sweep to be below 25% of the mean slope
    over the first quarter.
    """
    values = np.asarray(values, dtype=float)
    objectives = np.asarray(objectives, dtype=float)
    if len(values) != len(objectives):
        raise InvalidParameterError(
            f"{len(values)} sweep values but {len(objectives)} objectives"
        )
    if len(values) < 2:
        raise InvalidParameterError("a trend needs at least two points")
    if mode not in TREND_MODES:
        raise InvalidParameterError(f"unknown trend {mode!r}; choose from {', '.join(TREND_MODES)}")

    sign = -1.0 if mode == 'decreasing' else 1.0
    diffs = np.diff(objectives)
    slack = TREND_TOLERANCE * np.maximum(np.abs(objectives[:-1]), np.abs(objectives[1:]))
    for i, (diff, tol) in enumerate(zip(diffs, slack)):
        if sign * diff < -tol:
            return TrendVerdict(mode, 'fail', failed_at=i + 1,
                                detail=f"J moves the wrong way between points {i} and {i + 1}")

    if mode == 'increasing_saturating':
        slopes = diffs / np.diff(values)
        quarter = max(1, len(slopes) // 4)
        first, last = slopes[:quarter].mean(), slopes[-quarter:].mean()
        if not last < 0.25 * first:
            return TrendVerdict(mode, 'fail', failed_at=len(values) - 1,
                                detail=f"no saturation: last-quarter slope {last:.6g} vs first {first:.6g}")
    return TrendVerdict(mode, 'pass')


def _solve_point(inst, grid, cfg, parameter):
    report = sweep(inst, grid, cfg)
    return SweepRecord(
        value=getattr(inst, parameter),
        objective=report.objective,
        iterations=report.iterations,
        converged=report.converged,
        decline_onset=decline_onset(report.final_policy, inst.x_max),
    )


def run_sweep(spec: SweepSpec, grid: GridConfig, cfg: FbsConfig, workers: int = 1) -> SweepResult:
    instances = spec.instances()
    for inst in instances:
        logger.info("sweep point %s = %g", spec.parameter, getattr(inst, spec.parameter))
    records = tuple(ordered_map(
        partial(_solve_point, grid=grid, cfg=cfg, parameter=spec.parameter), instances, workers,
    ))
    if len(records) == 1:
        verdict = TrendVerdict(spec.expected_trend, 'trivial', detail='single-value sweep')
    else:
        verdict = check_trend(spec.values, [r.objective for r in records], spec.expected_trend)
    return SweepResult(parameter=spec.parameter, records=records, verdict=verdict)


# ---------------------------------------------------------------------------
# Replicated claims on randomised instances
# ---------------------------------------------------------------------------

PERTURBED = tuple(name for name in SCALAR_PARAMETERS if name not in ('A0', 'I0'))


def perturb_instance(base: CrpInstance, rng: np.random.Generator, spread: float) -> CrpInstance:
    """Scale every rate, cost and horizon parameter by an independent U[1 - spread, 1 + spread]."""
    if not 0 <= spread < 1:
        raise InvalidParameterError(f"spread must lie in [0, 1), got {spread!r}")
    factors = rng.uniform(1.0 - spread, 1.0 + spread, len(PERTURBED))
    return base.replace(**{name: getattr(base, name) * f for name, f in zip(PERTURBED, factors)})


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    converged: bool
    iterations: int
    fraction_beaten: float | None = None
    status: str | None = None
    failed_at: int | None = None


def _random_bases(base, replicates, seed, spread):
    rng = _generator(seed)
    return [perturb_instance(base, rng, spread) for _ in range(replicates)]


def replicate_superiority(base: CrpInstance, grid: GridConfig, cfg: FbsConfig, replicates: int,
                          count: int, seed, spread: float, workers: int = 1) -> list[ReplicateRecord]:
    """Repeat the random-baseline comparison on randomised variants of ``base``."""
    records = []
    streams = _seed_sequence(seed).spawn(2)
    policy_seeds = streams[1].spawn(replicates)
    for n, inst in enumerate(_random_bases(base, replicates, streams[0], spread), start=1):
        result = compare_against_random(inst, grid, cfg, count, policy_seeds[n - 1], workers)
        logger.info("replicate %d/%d: %.0f%% of random policies beaten",
                    n, replicates, 100 * result.fraction_beaten)
        records.append(ReplicateRecord(
            replicate=n,
            converged=result.converged,
            iterations=result.report.iterations,
            fraction_beaten=result.fraction_beaten,
        ))
    return records


def replicate_trend(parameter: str, grid: GridConfig, cfg: FbsConfig, replicates: int, seed,
                    spread: float, base: CrpInstance = SENSITIVITY_BASE,
                    workers: int = 1) -> list[ReplicateRecord]:
    """Repeat the reference sweep of ``parameter`` on randomised variants of ``base``."""
    records = []
    for n, inst in enumerate(_random_bases(base, replicates, seed, spread), start=1):
        result = run_sweep(reference_sweep(parameter, base=inst), grid, cfg, workers)
        logger.info("replicate %d/%d: trend %s", n, replicates, result.verdict.status)
        records.append(ReplicateRecord(
            replicate=n,
            converged=all(r.converged for r in result.records),
            iterations=max(r.iterations for r in result.records),
            status=result.verdict.status,
            failed_at=result.verdict.failed_at,
        ))
    return records
