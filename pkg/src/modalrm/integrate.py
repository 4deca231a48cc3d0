"""Adaptive ODE integration with dense output.

Thin layer over scipy's DOP853 (an 8(5,3) embedded Runge-Kutta pair with a
7th-order continuous extension). The wrapper adds the failure semantics the
rest of the package relies on: non-finite derivatives and step-size
underflow raise :class:`IntegrationError` instead of returning a status code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError

DEFAULT_TOL = 1e-12

VectorField = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DenseSolution:
    """Continuous solution of an initial value problem on ``[t0, t1]``."""

    t0: float
    t1: float
    ts: np.ndarray
    ys: np.ndarray
    _interp: object
    nfev: int

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        lo, hi = min(self.t0, self.t1), max(self.t0, self.t1)
        span = hi - lo
        slack = 1e-9 * max(span, 1.0)
        if np.any(t_arr < lo - slack) or np.any(t_arr > hi + slack):
            raise ValueError(f"t outside integrated span [{lo}, {hi}]")
        return self._interp(np.clip(t_arr, lo, hi))

    @property
    def y_final(self) -> np.ndarray:
        return self.ys[:, -1].copy()


def integrate(
    f: VectorField,
    y0,
    t0: float,
    t1: float,
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
    max_step: float = np.inf,
    method: str = "DOP853",
) -> DenseSolution:
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1``.

    Args:
        f: Vector field ``f(t, y)`` returning an array shaped like ``y``.
        y0: Initial state (any 1-D array-like).
        t0: Initial time.
        t1: Final time; may be smaller than ``t0`` for backward integration.
        tol: Relative tolerance of the per-step error estimate.
        atol: Absolute tolerance; defaults to ``tol``.
        max_step: Optional cap on the step size.
        method: scipy method name; ``"Radau"`` for stiff problems.

    Returns:
        A :class:`DenseSolution` that can be evaluated anywhere on the span.

    Raises:
        IntegrationError: On non-finite derivatives or step-size underflow.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise IntegrationError("non-finite initial state")

    def rhs(t, y):
        dy = f(t, y)
        if not np.all(np.isfinite(dy)):
            raise IntegrationError(f"non-finite derivative at t={t!r}")
        return dy

    if t1 == t0:
        ys = y0[:, None]
        return DenseSolution(t0, t1, np.array([t0]), ys, lambda t: _constant(y0, t), 0)

    sol = solve_ivp(
        rhs,
        (t0, t1),
        y0,
        method=method,
        rtol=tol,
        atol=tol if atol is None else atol,
        dense_output=True,
        max_step=max_step,
    )
    if sol.status != 0:
        raise IntegrationError(f"integration failed: {sol.message}")
    return DenseSolution(t0, t1, sol.t, sol.y, sol.sol, sol.nfev)


def _constant(y0, t):
    t = np.asarray(t)
    if t.ndim == 0:
        return y0.copy()
    return np.repeat(y0[:, None], t.size, axis=1)
