"""Periodic reference (chief) orbits and dense transition-matrix caches."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .constants import MU_EARTH
from .errors import ValidationError
from .integrate import DEFAULT_TOL, DenseSolution, integrate


class DenseStm:
    """``Phi(t, t0)`` from a dense solution over one period, extended to any
    ``t`` through powers of the monodromy matrix."""

    def __init__(self, t0: float, period: float, evaluate: Callable[[float], np.ndarray]):
        self.t0 = float(t0)
        self.period = float(period)
        self._evaluate = evaluate
        self.monodromy = np.asarray(evaluate(self.t0 + self.period))

    @classmethod
    def from_solution(cls, sol: DenseSolution, t0: float, period: float, offset: int = 0) -> "DenseStm":
        def ev(t):
            return np.asarray(sol(t))[offset : offset + 36].reshape(6, 6)

        return cls(t0, period, ev)

    def split(self, t: float) -> tuple[int, float]:
        k = math.floor((t - self.t0) / self.period)
        s = t - k * self.period
        if s > self.t0 + self.period:
            k, s = k + 1, s - self.period
        return k, s

    def __call__(self, t: float) -> np.ndarray:
        k, s = self.split(t)
        phi = self._evaluate(s)
        if k == 0:
            return phi
        return phi @ np.linalg.matrix_power(self.monodromy, k)


def propagate_stm(
    A: Callable[[float], np.ndarray], t0: float, T: float, tol: float = DEFAULT_TOL
) -> DenseStm:
    """Integrate ``dPhi/dt = A(t) Phi`` over ``[t0, t0 + T]`` with dense output."""

    def rhs(t, y):
        return (A(t) @ y.reshape(6, 6)).ravel()

    sol = integrate(rhs, np.eye(6).ravel(), t0, t0 + T, tol)
    return DenseStm.from_solution(sol, t0, T)


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic chief trajectory.

    ``kind`` is ``"keplerian"`` (``mu`` in km^3/s^2, state in km, km/s, time
    in s) or ``"cr3bp"`` (``mu`` is the mass ratio, nondimensional units).
    """

    kind: str
    mu: float
    initial_state: np.ndarray
    period: float
    t0: float = 0.0
    tol: float = DEFAULT_TOL
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("keplerian", "cr3bp"):
            raise ValidationError(f"unknown orbit kind {self.kind!r}")
        object.__setattr__(self, "initial_state", np.asarray(self.initial_state, dtype=float).reshape(6))
        if not self.period > 0:
            raise ValidationError("period must be positive")

    # -- dense cache ----------------------------------------------------------

    @cached_property
    def _dense(self) -> DenseSolution:
        if self.kind == "cr3bp":
            from .cr3bp import state_stm_rhs

            y0 = np.concatenate([self.initial_state, np.eye(6).ravel()])
            return integrate(state_stm_rhs(self.mu), y0, self.t0, self.t0 + self.period, self.tol)
        from .orbits import two_body_rhs

        return integrate(two_body_rhs(self.mu), self.initial_state, self.t0, self.t0 + self.period, self.tol)

    @cached_property
    def elements(self):
        if self.kind != "keplerian":
            raise ValidationError("elements are defined for Keplerian orbits only")
        from .orbits import InertialState, state_to_elements

        return state_to_elements(InertialState.from_vector(self.initial_state), self.mu)

    def _reduce(self, t: float) -> float:
        k = math.floor((t - self.t0) / self.period)
        return t - k * self.period

    def state(self, t: float) -> np.ndarray:
        if self.kind == "keplerian":
            from .orbits import propagate_kepler

            s = propagate_kepler(self.elements, t - self.t0, self.mu)
            return s.as_vector()
        return np.asarray(self._dense(self._reduce(t)))[:6]

    @cached_property
    def stm(self) -> DenseStm:
        """Dense ``Phi(t, t0)`` of the orbit's own variational equations (CR3BP)."""
        if self.kind != "cr3bp":
            raise ValidationError("inertial STM cache is provided for CR3BP orbits only")
        return DenseStm.from_solution(self._dense, self.t0, self.period, offset=6)

    @property
    def monodromy(self) -> np.ndarray:
        return self.stm.monodromy

    def rate(self, t: float | None = None) -> np.ndarray:
        """Time derivative of the orbit state."""
        t = self.t0 if t is None else t
        y = self.state(t)
        if self.kind == "cr3bp":
            from .cr3bp import cr3bp_accel

            return np.concatenate([y[3:6], cr3bp_accel(y, self.mu)])
        from .orbits import two_body_accel

        return np.concatenate([y[3:6], two_body_accel(y[:3], self.mu)])

    def plant(self, t: float) -> np.ndarray:
        """Linearized plant along the orbit (CR3BP rotating coordinates)."""
        if self.kind != "cr3bp":
            raise ValidationError("use keplerian.keplerian_plant for LVLH relative motion")
        from .cr3bp import cr3bp_jacobian

        return cr3bp_jacobian(self.state(t), self.mu)

    def closure_error(self) -> float:
        if self.kind == "keplerian":
            return 0.0
        end = np.asarray(self._dense(self.t0 + self.period))[:6]
        return float(np.linalg.norm(end - self.initial_state) / np.linalg.norm(self.initial_state))

    # -- persistence ------------------------------------------------------------

    def to_dict(self) -> dict:
        key = "mu" if self.kind == "keplerian" else "mu_ratio"
        return {
            "kind": self.kind,
            key: self.mu,
            "initial_state": [float(v) for v in self.initial_state],
            "period": float(self.period),
            "t0": self.t0,
            "tolerances": {"integration": self.tol},
            "generator_metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodicOrbit":
        mu = d["mu"] if d["kind"] == "keplerian" else d["mu_ratio"]
        return cls(
            kind=d["kind"],
            mu=mu,
            initial_state=np.array(d["initial_state"], dtype=float),
            period=float(d["period"]),
            t0=float(d.get("t0", 0.0)),
            tol=float(d.get("tolerances", {}).get("integration", DEFAULT_TOL)),
            metadata=dict(d.get("generator_metadata", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PeriodicOrbit":
        return cls.from_dict(json.loads(text))


def keplerian_orbit(oe, mu: float = MU_EARTH) -> PeriodicOrbit:
    from .orbits import elements_to_state

    s = elements_to_state(oe, mu)
    return PeriodicOrbit("keplerian", mu, s.as_vector(), oe.period(mu), metadata={"elements": oe.as_array().tolist()})
