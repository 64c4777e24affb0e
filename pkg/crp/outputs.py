"""
Utility functions for result files.
Builds pandas DataFrames for trajectories, iterates and experiment tables,
and writes them as CSV next to a JSON report.
"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ['t', 'x', 'A', 'I', 'lambda1', 'lambda2']


def trajectory_frame(policy, state=None, adjoint=None):
    """
    Build the t, x, A, I, lambda1, lambda2 table at every grid point.
    Missing state or adjoint columns are left empty.

    Args:
        policy: ControlPolicy
        state: StateTrajectory on the policy grid, optional
        adjoint: AdjointTrajectory on the policy grid, optional

    Returns:
        DataFrame
    """
    empty = np.full(len(policy.times), np.nan)
    return pd.DataFrame({
        't': policy.times,
        'x': policy.values,
        'A': state.A if state is not None else empty,
        'I': state.I if state is not None else empty,
        'lambda1': adjoint.lambda1 if adjoint is not None else empty,
        'lambda2': adjoint.lambda2 if adjoint is not None else empty,
    }, columns=TRAJECTORY_COLUMNS)


def iterates_frame(report):
    """
    One column per sweep iterate, x1 ... xK, against t.
    """
    columns = {'t': report.final_policy.times}
    for k, policy in enumerate(report.iterates, start=1):
        columns[f'x{k}'] = policy.values
    return pd.DataFrame(columns)


def random_comparison_frame(comparison):
    """
    Sweep policy first (policy_id 'fbs'), then the random policies 1 ... count.
    Iteration columns are empty for random policies.
    """
    report = comparison.report
    count = len(comparison.random_objectives)
    return pd.DataFrame({
        'policy_id': ['fbs'] + [str(n) for n in range(1, count + 1)],
        'J': np.concatenate(([report.objective], comparison.random_objectives)),
        'iterations': pd.array([report.iterations] + [None] * count, dtype='Int64'),
        'converged': pd.array([report.converged] + [None] * count, dtype='boolean'),
    })


def sweep_frame(result):
    return pd.DataFrame({
        'value': [r.value for r in result.records],
        'J': [r.objective for r in result.records],
        'iterations': [r.iterations for r in result.records],
        'converged': [r.converged for r in result.records],
        'decline_onset': [np.nan if r.decline_onset is None else r.decline_onset for r in result.records],
    })


def replicate_frame(records):
    return pd.DataFrame({
        'replicate': [r.replicate for r in records],
        'converged': [r.converged for r in records],
        'iterations': [r.iterations for r in records],
        'fraction_beaten': [np.nan if r.fraction_beaten is None else r.fraction_beaten for r in records],
        'status': [r.status or '' for r in records],
        'failed_at': pd.array([r.failed_at for r in records], dtype='Int64'),
    })


def comparison_frame(comparison):
    report = comparison.fbs_report
    return pd.DataFrame({
        'solver': ['fbs', 'dp'],
        'J': [report.objective, comparison.dp_objective],
        'iterations': pd.array([report.iterations, None], dtype='Int64'),
        'converged': pd.array([report.converged, None], dtype='boolean'),
        'total_variation': [comparison.fbs_variation, comparison.dp_variation],
    })


def dp_policy_frame(policy):
    return pd.DataFrame({'t': policy.times, 'x': policy.values})


def write_csv(df, path, float_format='%.12g'):
    """
    Save a DataFrame as CSV with a fixed float format.

    Args:
        df: pandas DataFrame
        path: Destination file
        float_format: printf-style format for floats
    """
    df.to_csv(path, index=False, float_format=float_format, na_rep='', lineterminator='\n')
    logger.info("wrote %s", path)


def write_json(payload, path):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n')
    logger.info("wrote %s", path)


def load_policy_csv(path):
    """
    Load a policy table with columns t and x.

    Returns:
        Tuple of (times, values) arrays
    """
    df = pd.read_csv(path)
    missing = {'t', 'x'} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
    return df['t'].to_numpy(dtype=float), df['x'].to_numpy(dtype=float)
