"""
Fixed-step integration of the community state and adjoint systems.

State, adjoint and control share one uniform grid. Stored functions are
read at Runge-Kutta stage times by linear interpolation, so a midpoint
stage sees the mean of its two neighbouring samples.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    AdjointTrajectory,
    ControlPolicy,
    CrpInstance,
    StateTrajectory,
    cost_benefit,
)
from .exceptions import GridMismatchError, IntegrationError, InvalidParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridConfig:
    """Uniform split of [0, T] into ``N`` subintervals."""
    N: int = 5000

    def __post_init__(self):
        if isinstance(self.N, bool) or not isinstance(self.N, int) or self.N < 2:
            raise InvalidParameterError(f"grid needs N >= 2 subintervals, got {self.N!r}")

    @classmethod
    def from_settings(cls) -> GridConfig:
        from .conf import crp_settings
        return cls(N=int(crp_settings()['GRID_N']))

    def step(self, T: float) -> float:
        return T / self.N

    def nodes(self, T: float) -> np.ndarray:
        return np.linspace(0.0, T, self.N + 1)


def state_derivative(inst: CrpInstance, y, b1):
    """
    Right-hand side of the state system.

    ``y`` stacks (A, I); ``b1`` is beta1 of the control at the stage time.
    Works on scalars and on arrays of states alike.
    """
    A, I = y[0], y[1]
    # beta2 is only defined on [0, inf); RK stages may dip below by rounding
    flow = (b1 + inst.beta2.value(np.maximum(A, 0.0))) * I
    return np.array((
        flow - (inst.alpha + inst.delta1) * A,
        inst.mu - flow + inst.alpha * A - inst.delta2 * I,
    ))


def adjoint_derivative(inst: CrpInstance, lam, inputs):
    """Right-hand side of the adjoint system; ``inputs`` = (I, b1 + b2, beta2'(A))."""
    l1, l2 = lam[0], lam[1]
    I, activation, b2p = inputs
    return np.array((
        -inst.omega2 + (inst.alpha + inst.delta1 - b2p * I) * l1 - (inst.alpha - b2p * I) * l2,
        -activation * l1 + (inst.delta2 + activation) * l2,
    ))


def rk4_step(rhs, y, h, start, middle, end):
    """One classical Runge-Kutta step with inputs given at t, t + h/2 and t + h."""
    k1 = rhs(y, start)
    k2 = rhs(y + 0.5 * h * k1, middle)
    k3 = rhs(y + 0.5 * h * k2, middle)
    k4 = rhs(y + h * k3, end)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(rhs, y0, h, nodes, midpoints, what='state'):
    """
    Integrate ``rhs`` over ``len(midpoints)`` steps of size ``h``.

    ``nodes[i]`` holds the inputs at grid point i and ``midpoints[i]`` those
    halfway between points i and i + 1. Returns the (N + 1, dim) solution.
    """
    n = len(midpoints)
    y = np.asarray(y0, dtype=float)
    out = np.empty((n + 1, len(y)))
    out[0] = y
    for i in range(n):
        y = rk4_step(rhs, y, h, nodes[i], midpoints[i], nodes[i + 1])
        if not np.all(np.isfinite(y)):
            raise IntegrationError(
                f"{what} became non-finite at step {i + 1} of {n}; "
                "check parameter magnitudes or refine the grid"
            )
        out[i + 1] = y
    return out


def _check_grid(times, grid: GridConfig, T: float, what: str):
    if len(times) != grid.N + 1 or not np.allclose(times, grid.nodes(T), rtol=1e-12, atol=1e-12):
        raise GridMismatchError(f"{what} is not sampled on the {grid.N}-step grid over [0, {T!r}]")


def integrate_state_forward(inst: CrpInstance, x: ControlPolicy, grid: GridConfig) -> StateTrajectory:
    """Solve the state system from (A0, I0) at t = 0 up to T under policy ``x``."""
    _check_grid(x.times, grid, inst.T, 'policy')
    inst.check_policy(x)
    b1_nodes = inst.beta1.value(x.values)
    b1_mid = inst.beta1.value(x.midpoints())

    def rhs(y, b1):
        return state_derivative(inst, y, b1)

    solution = rk4(rhs, (inst.A0, inst.I0), grid.step(inst.T), b1_nodes, b1_mid, what='state')
    return StateTrajectory(x.times, solution[:, 0], solution[:, 1])


def integrate_adjoint_backward(inst: CrpInstance, x: ControlPolicy, state: StateTrajectory,
                               grid: GridConfig) -> AdjointTrajectory:
    """
    Solve the adjoint system from lambda(T) = (0, 0) back to t = 0.

    The time-reversed system is integrated forward with the same RK4 code.
    """
    _check_grid(x.times, grid, inst.T, 'policy')
    _check_grid(state.times, grid, inst.T, 'state')

    def stage_inputs(A, I, u):
        A = np.maximum(A, 0.0)
        activation = inst.beta1.value(u) + inst.beta2.value(A)
        return np.column_stack((I, activation, inst.beta2.derivative(A)))

    nodes = stage_inputs(state.A, state.I, x.values)
    midpoints = stage_inputs(
        0.5 * (state.A[:-1] + state.A[1:]),
        0.5 * (state.I[:-1] + state.I[1:]),
        x.midpoints(),
    )

    def reversed_rhs(lam, inputs):
        return -adjoint_derivative(inst, lam, inputs)

    solution = rk4(reversed_rhs, (0.0, 0.0), grid.step(inst.T),
                   nodes[::-1], midpoints[::-1], what='adjoint')[::-1]
    return AdjointTrajectory(x.times, solution[:, 0], solution[:, 1])


def evaluate_objective(inst: CrpInstance, x: ControlPolicy, grid: GridConfig,
                       hold: str = 'linear') -> tuple[float, StateTrajectory, ControlPolicy]:
    """
    Cost benefit of ``x`` on ``grid``.

    A policy sampled on another grid is resampled first (see
    ``ControlPolicy.resample``). Returns (J, state, policy on the grid).
    """
    inst.check_policy(x)
    x = x.resample(grid.nodes(inst.T), hold=hold)
    state = integrate_state_forward(inst, x, grid)
    return cost_benefit(state, x, inst), state, x
