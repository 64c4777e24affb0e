"""
Reference instances: the three convergence instances and the common base
of the sensitivity sweeps, with the value set and expected trend per swept
parameter.
"""
import numpy as np

from .core import CrpInstance, PowerLaw, ScaledArctan, ScaledLog

M1 = CrpInstance(
    A0=50, I0=10000, T=50, x_max=10, mu=12, delta1=0.0001, delta2=0.001, alpha=0.1,
    beta1=ScaledArctan(0.05, 0.3), beta2=ScaledLog(0.01, 0.01), omega1=1000, omega2=20,
)

M2 = CrpInstance(
    A0=100, I0=10000, T=80, x_max=15, mu=15, delta1=0.0001, delta2=0.001, alpha=0.15,
    beta1=PowerLaw(0.06, 0.25), beta2=PowerLaw(0.003, 1 / 3), omega1=1200, omega2=20,
)

M3 = CrpInstance(
    A0=150, I0=10000, T=100, x_max=20, mu=10, delta1=0.0003, delta2=0.001, alpha=0.2,
    beta1=ScaledLog(0.04, 1.0), beta2=ScaledArctan(0.04, 0.001), omega1=1000, omega2=25,
)

SENSITIVITY_BASE = CrpInstance(
    A0=100, I0=10000, T=100, x_max=15, mu=12, delta1=0.0001, delta2=0.001, alpha=0.1,
    beta1=ScaledArctan(0.05, 0.3), beta2=ScaledLog(0.01, 0.01), omega1=800, omega2=20,
)

BUNDLED_INSTANCES = {
    'M1': M1,
    'M2': M2,
    'M3': M3,
    'sensitivity': SENSITIVITY_BASE,
}


def _steps(start, stop, count):
    return tuple(float(v) for v in np.linspace(start, stop, count))


SWEEP_VALUES = {
    'T': _steps(100, 200, 11),
    'x_max': _steps(10, 20, 11),
    'mu': _steps(10, 20, 11),
    'delta1': _steps(0.0001, 0.001, 10),
    'delta2': _steps(0.001, 0.01, 10),
    'alpha': _steps(0.01, 0.1, 10),
    'omega1': _steps(100, 1000, 10),
    'omega2': _steps(10, 100, 10),
}

EXPECTED_TRENDS = {
    'T': 'increasing',
    'x_max': 'increasing_saturating',
    'mu': 'increasing',
    'delta1': 'decreasing',
    'delta2': 'decreasing',
    'alpha': 'decreasing',
    'omega1': 'decreasing',
    'omega2': 'increasing',
}


def bundled_instance(name: str) -> CrpInstance:
    try:
        return BUNDLED_INSTANCES[name]
    except KeyError:
        raise KeyError(f"unknown instance {name!r}; choose from {', '.join(BUNDLED_INSTANCES)}") from None
