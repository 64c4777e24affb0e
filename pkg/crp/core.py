"""
Domain types of the company response policy (CRP) model.

Holds the influence functions, the 12-parameter instance, sampled policies
and trajectories, and the scalar functionals evaluated on them: response
cost, cost benefit and the Hamiltonian.
"""
from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import ClassVar

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import GridMismatchError, InvalidParameterError, ParameterWarning

# Parameters that can be swept or perturbed, in instance order.
SCALAR_PARAMETERS = (
    'A0', 'I0', 'T', 'x_max', 'mu', 'delta1', 'delta2', 'alpha', 'omega1', 'omega2',
)


def _frozen(values):
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def _as_output(array):
    return float(array) if np.ndim(array) == 0 else array


def _require_positive(owner, **params):
    for name, value in params.items():
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise InvalidParameterError(f"{owner}: {name} must be a positive finite number, got {value!r}")


# ---------------------------------------------------------------------------
# Influence functions
# ---------------------------------------------------------------------------

class InfluenceFunction(ABC):
    """
    Monotone, concave activation rate with closed-form derivative and
    inverse derivative. Subclasses are immutable and vectorised over numpy
    arrays.
    """
    family: ClassVar[str]

    @property
    @abstractmethod
    def params(self) -> tuple[float, float]:
        ...

    @abstractmethod
    def value(self, z):
        ...

    @abstractmethod
    def derivative(self, z):
        ...

    @abstractmethod
    def inverse_derivative(self, y):
        ...

    def max_derivative(self) -> float:
        """Derivative at zero, the supremum of the derivative's range."""
        return float(self.derivative(0.0))

    def __str__(self):
        a, b = self.params
        return f"{self.family}({a!r}, {b!r})"


@dataclass(frozen=True)
class ScaledArctan(InfluenceFunction):
    """z -> a * arctan(b * z)"""
    a: float
    b: float
    family: ClassVar[str] = 'arctan'

    def __post_init__(self):
        _require_positive('arctan influence', a=self.a, b=self.b)

    @property
    def params(self):
        return self.a, self.b

    def value(self, z):
        return self.a * np.arctan(self.b * z)

    def derivative(self, z):
        return self.a * self.b / (1.0 + (self.b * z) ** 2)

    def inverse_derivative(self, y):
        return np.sqrt(np.maximum(0.0, self.a * self.b / y - 1.0)) / self.b


@dataclass(frozen=True)
class ScaledLog(InfluenceFunction):
    """z -> a * ln(b * z + 1)"""
    a: float
    b: float
    family: ClassVar[str] = 'log'

    def __post_init__(self):
        _require_positive('log influence', a=self.a, b=self.b)

    @property
    def params(self):
        return self.a, self.b

    def value(self, z):
        return self.a * np.log1p(self.b * z)

    def derivative(self, z):
        return self.a * self.b / (self.b * z + 1.0)

    def inverse_derivative(self, y):
        return np.maximum(0.0, self.a * self.b / y - 1.0) / self.b


@dataclass(frozen=True)
class PowerLaw(InfluenceFunction):
    """
    z -> a * z**p with 0 < p < 1.

    The derivative diverges at zero; ``derivative(0)`` returns ``inf``.
    """
    a: float
    p: float
    family: ClassVar[str] = 'power'

    def __post_init__(self):
        _require_positive('power influence', a=self.a, p=self.p)
        if self.p >= 1:
            raise InvalidParameterError(f"power influence: exponent p must be below 1, got {self.p!r}")

    @property
    def params(self):
        return self.a, self.p

    def value(self, z):
        return self.a * np.power(z, self.p)

    def derivative(self, z):
        with np.errstate(divide='ignore'):
            return self.a * self.p * np.power(np.asarray(z, dtype=float), self.p - 1.0)

    def inverse_derivative(self, y):
        return np.power(y / (self.a * self.p), 1.0 / (self.p - 1.0))


INFLUENCE_FAMILIES = {
    cls.family: cls for cls in (ScaledArctan, ScaledLog, PowerLaw)
}


def eval_influence(f: InfluenceFunction, z):
    """Evaluate ``f`` at ``z >= 0`` (scalar or array)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InvalidParameterError(f"{f}: influence functions are defined for z >= 0")
    return _as_output(f.value(z))


def eval_influence_derivative(f: InfluenceFunction, z):
    """Analytic derivative of ``f``; ``inf`` for a power law at zero."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InvalidParameterError(f"{f}: influence derivatives are defined for z >= 0")
    return _as_output(f.derivative(z))


def invert_influence_derivative(f: InfluenceFunction, y):
    """
    Return ``z >= 0`` with ``f'(z) == y``.

    ``y`` must lie in the derivative's range on [0, inf), that is
    ``0 < y <= f'(0)``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0) or np.any(y > f.max_derivative()):
        raise InvalidParameterError(
            f"{f}: {y!r} is outside the derivative range (0, {f.max_derivative()!r}]"
        )
    return _as_output(f.inverse_derivative(y))


# ---------------------------------------------------------------------------
# Instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrpInstance:
    """
    One instance of the CRP model.

    Initial counts are in persons, ``T`` in time units, ``x_max`` in
    responses per time, ``mu`` in persons per time, the outflow and
    inaction rates are per-capita probabilities per time, ``omega1`` is
    money per response-rate unit per time and ``omega2`` money per active
    person per time.
    """
    A0: float
    I0: float
    T: float
    x_max: float
    mu: float
    delta1: float
    delta2: float
    alpha: float
    beta1: InfluenceFunction
    beta2: InfluenceFunction
    omega1: float
    omega2: float

    def __post_init__(self):
        for name in SCALAR_PARAMETERS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be a finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ('A0', 'I0', 'omega2'):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        for name in ('T', 'x_max', 'mu', 'delta1', 'delta2', 'alpha', 'omega1'):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ('beta1', 'beta2'):
            if not isinstance(getattr(self, name), InfluenceFunction):
                raise InvalidParameterError(f"{name} must be an influence function, got {getattr(self, name)!r}")
        if self.A0 == 0 and not math.isfinite(self.beta2.max_derivative()):
            # the adjoint system carries beta2'(A), which diverges while A = 0
            raise InvalidParameterError(
                f"A0 = 0 needs a beta2 with finite derivative at zero; {self.beta2} is singular there"
            )
        if self.delta2 <= self.delta1:
            warnings.warn(
                f"delta2 ({self.delta2!r}) does not exceed delta1 ({self.delta1!r}); "
                "inactive participants are expected to leave faster than active ones",
                ParameterWarning,
                stacklevel=3,
            )

    def replace(self, **changes) -> CrpInstance:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        """Plain representation, influence functions written as expressions."""
        data = {name: getattr(self, name) for name in SCALAR_PARAMETERS}
        data['beta1'] = str(self.beta1)
        data['beta2'] = str(self.beta2)
        return data

    def check_policy(self, x: ControlPolicy) -> None:
        """Reject policies outside the feasible set [0, x_max] on [0, T]."""
        if not math.isclose(x.T, self.T, rel_tol=1e-12):
            raise GridMismatchError(f"policy horizon {x.T!r} differs from T = {self.T!r}")
        if x.values.max() > self.x_max * (1 + 1e-12):
            raise InvalidParameterError(
                f"policy exceeds x_max = {self.x_max!r} (max value {x.values.max()!r})"
            )


# ---------------------------------------------------------------------------
# Sampled functions of time
# ---------------------------------------------------------------------------

def _check_uniform(times):
    if times.ndim != 1 or len(times) < 2:
        raise InvalidParameterError("a time grid needs at least two points")
    if times[0] != 0.0:
        raise InvalidParameterError(f"time grids start at 0, got {times[0]!r}")
    steps = np.diff(times)
    if not (np.all(steps > 0) and np.allclose(steps, steps[0], rtol=1e-9, atol=0.0)):
        raise InvalidParameterError("time grid spacing must be uniform and positive")


def same_grid(first, second) -> bool:
    return len(first) == len(second) and np.allclose(first, second, rtol=1e-12, atol=1e-12)


def _check_same_grid(first, second, what):
    if not same_grid(first, second):
        raise GridMismatchError(f"{what} are sampled on different time grids")


@dataclass(frozen=True)
class ControlPolicy:
    """
    Response rate sampled on a uniform grid 0 = t0 < ... < tN = T.

    Values between grid points are defined by linear interpolation.
    """
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'times', _frozen(self.times))
        object.__setattr__(self, 'values', _frozen(self.values))
        _check_uniform(self.times)
        if self.values.shape != self.times.shape:
            raise InvalidParameterError("policy values and times differ in length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InvalidParameterError("policy values must be finite and nonnegative")

    @classmethod
    def constant(cls, times, value: float) -> ControlPolicy:
        return cls(times, np.full(len(times), float(value)))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def N(self) -> int:
        return len(self.times) - 1

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.values[:-1] + self.values[1:])

    def resample(self, times, hold: str = 'linear') -> ControlPolicy:
        """
        Sample onto another grid over the same horizon.

        ``hold='previous'`` keeps each value until the next grid point, the
        reading of a piecewise-constant policy.
        """
        times = np.asarray(times, dtype=float)
        if same_grid(times, self.times):
            return self
        if hold == 'linear':
            values = np.interp(times, self.times, self.values)
        elif hold == 'previous':
            index = np.searchsorted(self.times, times, side='right') - 1
            values = self.values[np.clip(index, 0, self.N)]
        else:
            raise InvalidParameterError(f"unknown hold {hold!r}; use 'linear' or 'previous'")
        return ControlPolicy(times, values)


@dataclass(frozen=True)
class StateTrajectory:
    """Active and inactive participant counts on the integration grid."""
    times: np.ndarray
    A: np.ndarray
    I: np.ndarray

    def __post_init__(self):
        for name in ('times', 'A', 'I'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (self.A.shape == self.I.shape == self.times.shape):
            raise InvalidParameterError("state samples and times differ in length")


@dataclass(frozen=True)
class AdjointTrajectory:
    times: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    def __post_init__(self):
        for name in ('times', 'lambda1', 'lambda2'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (self.lambda1.shape == self.lambda2.shape == self.times.shape):
            raise InvalidParameterError("adjoint samples and times differ in length")
        if self.lambda1[-1] != 0.0 or self.lambda2[-1] != 0.0:
            raise InvalidParameterError("adjoint must vanish at the final time")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one forward-backward sweep."""
    iterates: tuple
    final_policy: ControlPolicy
    state: StateTrajectory
    adjoint: AdjointTrajectory
    objective: float
    iterations: int
    converged: bool
    sup_norm_history: tuple = field(default=())


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

def policy_cost(x: ControlPolicy, omega1: float) -> float:
    """Total response cost omega1 * integral of x, composite trapezoid rule."""
    return float(omega1 * trapezoid(x.values, x.times))


def benefit(traj: StateTrajectory, omega2: float) -> float:
    return float(omega2 * trapezoid(traj.A, traj.times))


def cost_benefit(traj: StateTrajectory, x: ControlPolicy, inst: CrpInstance) -> float:
    """J(x) = omega2 * int A dt - omega1 * int x dt on the shared grid."""
    _check_same_grid(traj.times, x.times, 'trajectory and policy')
    return benefit(traj, inst.omega2) - policy_cost(x, inst.omega1)


def hamiltonian(A, I, x, lambda1, lambda2, inst: CrpInstance):
    if np.any(np.asarray(A) < 0) or np.any(np.asarray(I) < 0) or np.any(np.asarray(x) < 0):
        raise InvalidParameterError("the Hamiltonian is evaluated at nonnegative A, I and x")
    activation = (inst.beta1.value(x) + inst.beta2.value(A)) * I
    return _as_output(
        inst.omega2 * A - inst.omega1 * x
        + lambda1 * (activation - inst.alpha * A - inst.delta1 * A)
        + lambda2 * (inst.mu - activation + inst.alpha * A - inst.delta2 * I)
    )


def control_gradient(traj: StateTrajectory, adjoint: AdjointTrajectory,
                     x: ControlPolicy, inst: CrpInstance) -> np.ndarray:
    """Pointwise dH/dx = (lambda1 - lambda2) * I * beta1'(x) - omega1."""
    _check_same_grid(traj.times, x.times, 'trajectory and policy')
    _check_same_grid(adjoint.times, x.times, 'adjoint and policy')
    coeff = (adjoint.lambda1 - adjoint.lambda2) * traj.I
    return coeff * inst.beta1.derivative(x.values) - inst.omega1


def total_variation(x: ControlPolicy) -> float:
    return float(np.abs(np.diff(x.values)).sum())


def decline_onset(x: ControlPolicy, x_max: float, tol: float = 1e-9):
    """First grid time at which the policy falls below x_max, or None."""
    below = np.flatnonzero(x.values < x_max * (1 - tol))
    if len(below) == 0:
        return None
    return float(x.times[below[0]])
