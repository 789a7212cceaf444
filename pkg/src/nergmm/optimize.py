"""Bounded derivative-free minimization used by all fits.

A quadratic-model trust-region method would work equally well; Powell's
method as shipped by scipy supports box bounds without derivatives and is
what every fit in this package funnels through, so convergence policy lives
in one place: relative objective change below 1e-8 or a hard evaluation cap.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import ConvergenceError

MAX_EVALS = 2000
REL_TOL = 1e-8


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    n_evals: int
    trace: list           # (eval count, objective) pairs, coarse


def minimize_bounded(objective, x0, bounds, max_evals=MAX_EVALS,
                     rel_tol=REL_TOL):
    """Minimize a scalar objective over a box.

    Parameters
    ----------
    objective : callable(ndarray) -> float
    x0 : array-like
        Start point, clipped into the box.
    bounds : list of (lo, hi)
    max_evals : int
    rel_tol : float
        Relative function-value convergence tolerance.

    Returns
    -------
    MinimizeResult

    Raises
    ------
    ConvergenceError
        When the optimizer stops on the evaluation cap instead of the
        tolerance; the message carries the trace tail for diagnosis.
    """
    x0 = np.asarray(x0, dtype=float)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x0 = np.clip(x0, lo, hi)

    trace = []
    count = [0]

    def wrapped(x):
        count[0] += 1
        val = float(objective(np.clip(x, lo, hi)))
        if count[0] % 25 == 1:
            trace.append((count[0], val))
        return val

    res = scipy.optimize.minimize(
        wrapped, x0, method="Powell",
        bounds=scipy.optimize.Bounds(lo, hi),
        options={"maxfev": max_evals, "xtol": 1e-10, "ftol": rel_tol},
    )
    trace.append((count[0], float(res.fun)))
    if not res.success:
        tail = ", ".join(f"({n}, {v:.6g})" for n, v in trace[-5:])
        raise ConvergenceError(
            f"optimizer stopped without converging after {count[0]} "
            f"evaluations: {res.message}; trace tail: {tail}")
    return MinimizeResult(x=np.clip(np.asarray(res.x, dtype=float), lo, hi),
                          fun=float(res.fun), n_evals=count[0], trace=trace)
