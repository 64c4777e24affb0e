"""
Forward-backward sweep for the CRP optimality system.

Each iteration integrates the state forward under the current policy, the
adjoint backward, and replaces the policy by the pointwise maximiser of the
Hamiltonian. Iteration stops once successive policies agree in sup norm.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import ControlPolicy, CrpInstance, SolveReport, cost_benefit
from .exceptions import InvalidParameterError
from .ode import GridConfig, integrate_adjoint_backward, integrate_state_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FbsConfig:
    """
    epsilon: sup-norm threshold on successive policies (units of x).
    relaxation: weight r in x_new = (1 - r) * candidate + r * previous.
    """
    epsilon: float = 1e-6
    max_iterations: int = 100
    relaxation: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidParameterError(f"epsilon must be > 0, got {self.epsilon!r}")
        if isinstance(self.max_iterations, bool) or not isinstance(self.max_iterations, int) \
                or self.max_iterations < 1:
            raise InvalidParameterError(f"max_iterations must be >= 1, got {self.max_iterations!r}")
        if not 0 <= self.relaxation < 1:
            raise InvalidParameterError(f"relaxation must lie in [0, 1), got {self.relaxation!r}")

    @classmethod
    def from_settings(cls) -> FbsConfig:
        from .conf import crp_settings
        conf = crp_settings()
        return cls(
            epsilon=float(conf['EPSILON']),
            max_iterations=int(conf['MAX_ITERATIONS']),
            relaxation=float(conf['RELAXATION']),
        )


def pointwise_optimal_control(coeff: float, inst: CrpInstance) -> float:
    """
    Maximise G(x) = coeff * beta1(x) - omega1 * x over [0, x_max],
    where coeff = (lambda1 - lambda2) * I at one instant.
    """
    beta1, omega1, x_max = inst.beta1, inst.omega1, inst.x_max
    if coeff <= 0:
        # G is non-increasing
        return 0.0
    if coeff * beta1.derivative(x_max) > omega1:
        return x_max
    if coeff * beta1.max_derivative() < omega1:
        return 0.0
    # Interior turning point; ties at either boundary land on that boundary.
    y = min(omega1 / coeff, beta1.max_derivative())
    return float(min(max(beta1.inverse_derivative(y), 0.0), x_max))


def maximize_hamiltonian(coeff, inst: CrpInstance) -> np.ndarray:
    """Apply ``pointwise_optimal_control`` at every grid point."""
    coeff = np.asarray(coeff, dtype=float)
    return np.fromiter((pointwise_optimal_control(c, inst) for c in coeff), dtype=float, count=len(coeff))


def sweep(inst: CrpInstance, grid: GridConfig, cfg: FbsConfig) -> SolveReport:
    """
    Run the sweep from x = 0.

    Non-convergence within ``cfg.max_iterations`` is reported through the
    ``converged`` flag of the result, never raised.
    """
    times = grid.nodes(inst.T)
    x = ControlPolicy.constant(times, 0.0)
    iterates = []
    history = []
    converged = False

    for k in range(1, cfg.max_iterations + 1):
        state = integrate_state_forward(inst, x, grid)
        adjoint = integrate_adjoint_backward(inst, x, state, grid)
        candidate = maximize_hamiltonian((adjoint.lambda1 - adjoint.lambda2) * state.I, inst)
        if cfg.relaxation:
            candidate = (1.0 - cfg.relaxation) * candidate + cfg.relaxation * x.values
        policy = ControlPolicy(times, np.clip(candidate, 0.0, inst.x_max))

        delta = float(np.max(np.abs(policy.values - x.values)))
        iterates.append(policy)
        history.append(delta)
        logger.debug("sweep iteration %d: sup-norm change %.3e", k, delta)
        x = policy
        if delta < cfg.epsilon:
            converged = True
            break

    if converged:
        logger.info("sweep converged in %d iterations", len(iterates))
    else:
        logger.warning(
            "sweep did not converge in %d iterations (last change %.3e); "
            "consider a relaxation of 0.5", cfg.max_iterations, history[-1],
        )

    state = integrate_state_forward(inst, x, grid)
    adjoint = integrate_adjoint_backward(inst, x, state, grid)
    return SolveReport(
        iterates=tuple(iterates),
        final_policy=x,
        state=state,
        adjoint=adjoint,
        objective=cost_benefit(state, x, inst),
        iterations=len(iterates),
        converged=converged,
        sup_norm_history=tuple(history),
    )
