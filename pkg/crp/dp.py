"""
Dynamic-programming baseline over a discretised (time, A, I) grid.

Both state axes share the grid s_0 = 0 < ... < s_M = S. A candidate
control advances a grid state by one Runge-Kutta step of the state system,
the successor is snapped to the nearest grid cell, and the backward
recursion keeps the control with the best stage reward plus value-to-go.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ControlPolicy, CrpInstance
from .exceptions import GridBoundWarning, InvalidParameterError
from .ode import rk4_step, state_derivative

logger = logging.getLogger(__name__)

STAGE_REWARD_MODES = ('corrected', 'paper_literal')


@dataclass(frozen=True)
class DpConfig:
    """
    N: time steps. M: state-grid intervals per axis. P: control-grid
    intervals. S: community size bound in persons (None: derived from the
    instance, see ``size_bound``). lambda_reg: smoothness coefficient.
    """
    N: int = 50
    M: int = 400
    P: int = 50
    lambda_reg: float = 0.1
    S: float | None = None
    stage_reward_mode: str = 'corrected'

    def __post_init__(self):
        for name in ('N', 'M', 'P'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise InvalidParameterError(f"{name} must be an integer >= 1, got {value!r}")
        if not (math.isfinite(self.lambda_reg) and self.lambda_reg >= 0):
            raise InvalidParameterError(f"lambda_reg must be >= 0, got {self.lambda_reg!r}")
        if self.S is not None and not (math.isfinite(self.S) and self.S > 0):
            raise InvalidParameterError(f"S must be > 0, got {self.S!r}")
        if self.stage_reward_mode not in STAGE_REWARD_MODES:
            raise InvalidParameterError(
                f"stage_reward_mode must be one of {STAGE_REWARD_MODES}, got {self.stage_reward_mode!r}"
            )

    @classmethod
    def from_settings(cls) -> DpConfig:
        from .conf import crp_settings
        dp = crp_settings()['DP']
        return cls(N=int(dp['N']), M=int(dp['M']), P=int(dp['P']),
                   lambda_reg=float(dp['LAMBDA']), stage_reward_mode=dp['MODE'])

    def size_bound(self, inst: CrpInstance) -> float:
        """
        S, or 1.2 times the tighter of two bounds on A + I: the inflow and
        outflow balance max(A0 + I0, mu / min(delta1, delta2)) and the
        horizon-limited growth A0 + I0 + mu * T.
        """
        if self.S is not None:
            return float(self.S)
        start = inst.A0 + inst.I0
        balance = max(start, inst.mu / min(inst.delta1, inst.delta2))
        return 1.2 * min(balance, start + inst.mu * inst.T)

    def state_grid(self, inst: CrpInstance) -> np.ndarray:
        return np.linspace(0.0, self.size_bound(inst), self.M + 1)

    def control_grid(self, inst: CrpInstance) -> np.ndarray:
        return np.linspace(0.0, inst.x_max, self.P + 1)


@dataclass(frozen=True)
class DpTables:
    """
    control_index[i, j, k] indexes ``control_grid`` with the best control at
    time step i from cell (s_j, s_k); J_table holds the value-to-go, with
    the layer i = N identically zero.
    """
    control_index: np.ndarray
    J_table: np.ndarray
    state_grid: np.ndarray
    control_grid: np.ndarray

    @property
    def x_table(self) -> np.ndarray:
        return self.control_grid[self.control_index]


@dataclass(frozen=True)
class Transitions:
    """Successor cell (flat index) and stage reward for every control and cell."""
    successor: np.ndarray
    reward: np.ndarray


def snap_to_grid(values, step: float, M: int) -> np.ndarray:
    """Nearest grid index; exact midpoints resolve to the lower index."""
    index = np.ceil(np.asarray(values, dtype=float) / step - 0.5)
    return np.clip(index, 0, M).astype(np.int64)


def advance(inst: CrpInstance, A, I, x: float, dt: float):
    """One RK4 step of the state system under a constant control."""
    b1 = float(inst.beta1.value(x))

    def rhs(y, _):
        return state_derivative(inst, y, b1)

    return rk4_step(rhs, np.array((A, I), dtype=float), dt, None, None, None)


def stage_reward(inst: CrpInstance, cfg: DpConfig, A_next, I_next, x: float, dt: float):
    if cfg.stage_reward_mode == 'corrected':
        return (inst.omega2 * A_next - inst.omega1 * x - cfg.lambda_reg * x ** 2) * dt
    # omega2 * I' plus lambda * x**2, with no dt factor
    return inst.omega2 * I_next - inst.omega1 * x + cfg.lambda_reg * x ** 2


def transitions(inst: CrpInstance, cfg: DpConfig) -> Transitions:
    """
    The system is autonomous, so successors and stage rewards do not depend
    on the time step and are computed once for all layers.
    """
    grid = cfg.state_grid(inst)
    S, step, M = grid[-1], grid[1] - grid[0], cfg.M
    dt = inst.T / cfg.N
    A, I = np.meshgrid(grid, grid, indexing='ij')
    A, I = A.ravel(), I.ravel()

    controls = cfg.control_grid(inst)
    successor = np.empty((len(controls), A.size), dtype=np.int32)
    reward = np.empty((len(controls), A.size))
    overshoot = 0
    for p, x in enumerate(controls):
        A_next, I_next = advance(inst, A, I, x, dt)
        overshoot += int(np.count_nonzero((A_next > S) | (I_next > S)))
        A_next = np.clip(A_next, 0.0, S)
        I_next = np.clip(I_next, 0.0, S)
        successor[p] = snap_to_grid(A_next, step, M) * (M + 1) + snap_to_grid(I_next, step, M)
        reward[p] = stage_reward(inst, cfg, A_next, I_next, x, dt)

    # only the realized path counts as clamped, see trace_rollout
    if overshoot:
        logger.debug("%d table transitions exceed S = %g and were clamped", overshoot, S)
    return Transitions(successor=successor, reward=reward)


def dp_solve(inst: CrpInstance, cfg: DpConfig) -> DpTables:
    """Fill the control and value tables by backward recursion over i = N-1 ... 0."""
    move = transitions(inst, cfg)
    cells = (cfg.M + 1) ** 2
    control_index = np.zeros((cfg.N + 1, cells), dtype=np.int32)
    J_table = np.zeros((cfg.N + 1, cells))
    columns = np.arange(cells)

    for i in range(cfg.N - 1, -1, -1):
        scores = move.reward + J_table[i + 1][move.successor]
        # argmax keeps the first maximum, i.e. the smallest control on ties
        best = np.argmax(scores, axis=0)
        control_index[i] = best
        J_table[i] = scores[best, columns]
        logger.debug("dynamic programming layer %d done", i)

    shape = (cfg.N + 1, cfg.M + 1, cfg.M + 1)
    return DpTables(
        control_index=control_index.reshape(shape),
        J_table=J_table.reshape(shape),
        state_grid=cfg.state_grid(inst),
        control_grid=cfg.control_grid(inst),
    )


def trace_rollout(inst: CrpInstance, cfg: DpConfig, tables: DpTables) -> tuple[ControlPolicy, bool]:
    """
    Read the tables along the snapped trajectory from (A0, I0).

    Returns the policy of ``dp_rollout`` and whether the realized path,
    its start included, left [0, S] in A or I and was clamped to S. A
    clamped path emits a ``GridBoundWarning``.
    """
    grid = tables.state_grid
    S, step = grid[-1], grid[1] - grid[0]
    dt = inst.T / cfg.N
    clamped = bool(inst.A0 > S or inst.I0 > S)
    j, k = snap_to_grid([min(inst.A0, S), min(inst.I0, S)], step, cfg.M)

    values = np.empty(cfg.N + 1)
    for i in range(cfg.N):
        x = tables.control_grid[tables.control_index[i, j, k]]
        values[i] = x
        A_next, I_next = advance(inst, grid[j], grid[k], x, dt)
        if A_next > S or I_next > S:
            clamped = True
        j, k = snap_to_grid([min(max(A_next, 0.0), S), min(max(I_next, 0.0), S)], step, cfg.M)
    values[cfg.N] = values[cfg.N - 1]

    if clamped:
        warnings.warn(
            f"the rollout from (A0, I0) reached the grid bound S = {S:g}; states were clamped to S",
            GridBoundWarning,
            stacklevel=2,
        )
        logger.warning("dynamic programming rollout reached the grid bound S = %g; states clamped", S)
    return ControlPolicy(np.linspace(0.0, inst.T, cfg.N + 1), values), clamped


def dp_rollout(inst: CrpInstance, cfg: DpConfig, tables: DpTables) -> ControlPolicy:
    """
    The N table controls met along the trajectory from (A0, I0), the last
    repeated at t = T, as a policy on the N + 1 points of the time grid.
    It is piecewise constant in meaning.
    """
    return trace_rollout(inst, cfg, tables)[0]
