"""Keplerian orbit primitives, the LVLH frame and relative states.

Angles are radians, lengths km, times s. The LVLH triad is

    e_r = r / |r|,   e_n = h / |h|,   e_t = e_n x e_r

and relative velocities are frame derivatives (``rho' = d/dt`` as seen by
the rotating frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import MU_EARTH
from .errors import ConvergenceError, ValidationError

TWO_PI = 2.0 * math.pi

# below this eccentricity the argument of perigee is undefined and set to 0
ECC_DEGENERATE = 1e-11
INCL_DEGENERATE = 1e-12


@dataclass(frozen=True)
class OrbitElements:
    """Classical element set ``(a, e, i, raan, argp, f0)``."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    f0: float

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValidationError(f"semi-major axis must be positive, got {self.a}")
        if not (0.0 <= self.e < 1.0):
            raise ValidationError(f"eccentricity must satisfy 0 <= e < 1, got {self.e}")
        if not (0.0 <= self.i <= math.pi):
            raise ValidationError(f"inclination must lie in [0, pi], got {self.i}")

    @classmethod
    def from_degrees(cls, a, e, i_deg, raan_deg, argp_deg, f0_deg) -> "OrbitElements":
        return cls(a, e, *(math.radians(x) for x in (i_deg, raan_deg, argp_deg, f0_deg)))

    @property
    def q1(self) -> float:
        return self.e * math.cos(self.argp)

    @property
    def q2(self) -> float:
        return self.e * math.sin(self.argp)

    @property
    def p(self) -> float:
        return self.a * (1.0 - self.e**2)

    @property
    def eta(self) -> float:
        return math.sqrt(1.0 - self.q1**2 - self.q2**2)

    @property
    def theta0(self) -> float:
        """Argument of latitude at epoch."""
        return self.argp + self.f0

    @property
    def r0(self) -> float:
        return self.p / (1.0 + self.e * math.cos(self.f0))

    def h(self, mu: float = MU_EARTH) -> float:
        return math.sqrt(mu * self.p)

    def n(self, mu: float = MU_EARTH) -> float:
        return math.sqrt(mu / self.a**3)

    def period(self, mu: float = MU_EARTH) -> float:
        return TWO_PI / self.n(mu)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.e, self.i, self.raan, self.argp, self.f0])

    def replace(self, **changes) -> "OrbitElements":
        values = dict(a=self.a, e=self.e, i=self.i, raan=self.raan, argp=self.argp, f0=self.f0)
        values.update(changes)
        return OrbitElements(**values)


@dataclass(frozen=True)
class InertialState:
    r: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        if not np.linalg.norm(self.r) > 0:
            raise ValidationError("position vector must be nonzero")

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "InertialState":
        y = np.asarray(y, dtype=float)
        return cls(y[:3], y[3:6], t)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.v])


@dataclass(frozen=True)
class LvlhState:
    rho: np.ndarray
    rho_dot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float).reshape(3))
        object.__setattr__(self, "rho_dot", np.asarray(self.rho_dot, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.rho_dot))):
            raise ValidationError("relative state must be finite")

    @classmethod
    def from_vector(cls, x) -> "LvlhState":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.rho_dot])


# ---------------------------------------------------------------------------
# anomalies and Kepler's equation


def solve_kepler(mean_anomaly: float, e: float, tol: float = 1e-13, max_iter: int = 50) -> float:
    """Eccentric anomaly from mean anomaly by Newton iteration."""
    M = math.remainder(mean_anomaly, TWO_PI)
    E = M + e * math.sin(M) if e < 0.8 else math.copysign(math.pi, M) if M else 0.0
    for _ in range(max_iter):
        f = E - e * math.sin(E) - M
        dE = f / (1.0 - e * math.cos(E))
        E -= dE
        if abs(dE) < tol:
            return E + (mean_anomaly - M)
    raise ConvergenceError(f"Kepler iteration did not converge for M={mean_anomaly}, e={e}")


def true_to_eccentric(f: float, e: float) -> float:
    """Eccentric anomaly on the same revolution as the (unwrapped) true anomaly."""
    E = 2.0 * math.atan2(math.sqrt(1.0 - e) * math.sin(f / 2.0), math.sqrt(1.0 + e) * math.cos(f / 2.0))
    return E + TWO_PI * round((f - E) / TWO_PI)


def eccentric_to_true(E: float, e: float) -> float:
    f = 2.0 * math.atan2(math.sqrt(1.0 + e) * math.sin(E / 2.0), math.sqrt(1.0 - e) * math.cos(E / 2.0))
    return f + TWO_PI * round((E - f) / TWO_PI)


def true_to_mean(f: float, e: float) -> float:
    E = true_to_eccentric(f, e)
    return E - e * math.sin(E)


def true_anomaly_at(oe: OrbitElements, dt: float, mu: float = MU_EARTH) -> float:
    """Unwrapped true anomaly ``dt`` seconds after the epoch of ``oe``."""
    M = true_to_mean(oe.f0, oe.e) + oe.n(mu) * dt
    return eccentric_to_true(solve_kepler(M, oe.e), oe.e)


def time_since_epoch(oe: OrbitElements, f: float, mu: float = MU_EARTH) -> float:
    """Inverse of :func:`true_anomaly_at` for unwrapped ``f``."""
    return (true_to_mean(f, oe.e) - true_to_mean(oe.f0, oe.e)) / oe.n(mu)


# ---------------------------------------------------------------------------
# element <-> state conversion


def _perifocal_rotation(i: float, raan: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    co, so = math.cos(argp), math.sin(argp)
    ci, si = math.cos(i), math.sin(i)
    return np.array(
        [
            [cO * co - sO * so * ci, -cO * so - sO * co * ci, sO * si],
            [sO * co + cO * so * ci, -sO * so + cO * co * ci, -cO * si],
            [so * si, co * si, ci],
        ]
    )


def elements_to_state(oe: OrbitElements, mu: float = MU_EARTH, t: float = 0.0) -> InertialState:
    """Inertial position and velocity at true anomaly ``oe.f0``."""
    if oe.e >= 1.0 or oe.a <= 0.0:
        raise ValidationError("only bound elliptic orbits are supported")
    p = oe.p
    cf, sf = math.cos(oe.f0), math.sin(oe.f0)
    r = p / (1.0 + oe.e * cf)
    vfac = math.sqrt(mu / p)
    rot = _perifocal_rotation(oe.i, oe.raan, oe.argp)
    r_vec = rot @ np.array([r * cf, r * sf, 0.0])
    v_vec = rot @ np.array([-vfac * sf, vfac * (oe.e + cf), 0.0])
    return InertialState(r_vec, v_vec, t)


def _angle_about(a: np.ndarray, b: np.ndarray, axis: np.ndarray) -> float:
    """Angle from ``a`` to ``b`` measured positively about ``axis``, in [0, 2pi)."""
    ang = math.atan2(float(axis @ np.cross(a, b)), float(a @ b))
    return ang % TWO_PI


def state_to_elements(s: InertialState, mu: float = MU_EARTH) -> OrbitElements:
    """Classical elements of an inertial state.

    Degenerate angles: for ``e`` below ``ECC_DEGENERATE`` the argument of
    perigee is 0 and ``f0`` is the argument of latitude; for equatorial
    orbits the node is taken along inertial x.
    """
    r_vec, v_vec = s.r, s.v
    r = float(np.linalg.norm(r_vec))
    h_vec = np.cross(r_vec, v_vec)
    h = float(np.linalg.norm(h_vec))
    if h <= 1e-12 * r * max(float(np.linalg.norm(v_vec)), 1e-300):
        raise ValidationError("rectilinear state has zero angular momentum")
    h_hat = h_vec / h
    v2 = float(v_vec @ v_vec)
    e_vec = ((v2 - mu / r) * r_vec - float(r_vec @ v_vec) * v_vec) / mu
    e = float(np.linalg.norm(e_vec))
    if e >= 1.0:
        raise ValidationError(f"state is not on a bound elliptic orbit (e={e})")
    energy = 0.5 * v2 - mu / r
    a = -mu / (2.0 * energy)
    i = math.acos(max(-1.0, min(1.0, h_hat[2])))

    node = np.cross([0.0, 0.0, 1.0], h_hat)
    if np.linalg.norm(node) < INCL_DEGENERATE:
        node_hat = np.array([1.0, 0.0, 0.0])
        raan = 0.0
    else:
        node_hat = node / np.linalg.norm(node)
        raan = math.atan2(node_hat[1], node_hat[0]) % TWO_PI

    if e < ECC_DEGENERATE:
        argp = 0.0
        f = _angle_about(node_hat, r_vec, h_hat)
    else:
        argp = _angle_about(node_hat, e_vec, h_hat)
        f = _angle_about(e_vec, r_vec, h_hat)
    return OrbitElements(a, e, i, raan, argp, f)


def propagate_kepler(oe: OrbitElements, dt: float, mu: float = MU_EARTH) -> InertialState:
    f = true_anomaly_at(oe, dt, mu)
    return elements_to_state(oe.replace(f0=f), mu, t=dt)


def two_body_accel(r: np.ndarray, mu: float = MU_EARTH) -> np.ndarray:
    rn = np.linalg.norm(r)
    return -mu * r / rn**3


def two_body_gradient(r: np.ndarray, mu: float = MU_EARTH) -> np.ndarray:
    rn = np.linalg.norm(r)
    rh = r / rn
    return mu / rn**3 * (3.0 * np.outer(rh, rh) - np.eye(3))


def two_body_rhs(mu: float = MU_EARTH):
    def rhs(t, y):
        return np.concatenate([y[3:6], two_body_accel(y[:3], mu)])

    return rhs


def two_body_energy(y, mu: float = MU_EARTH) -> float:
    y = np.asarray(y)
    return 0.5 * float(y[3:6] @ y[3:6]) - mu / float(np.linalg.norm(y[:3]))


# ---------------------------------------------------------------------------
# LVLH frame


@dataclass(frozen=True)
class LvlhFrame:
    """Rotation inertial->LVLH plus frame rate and acceleration (LVLH axes)."""

    dcm: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray
    r: float = field(default=0.0)
    h: float = field(default=0.0)


def lvlh_frame(
    chief: InertialState,
    mu: float = MU_EARTH,
    accel: np.ndarray | None = None,
    jerk: np.ndarray | None = None,
) -> LvlhFrame:
    """LVLH frame of the chief.

    ``accel`` and ``jerk`` default to point-mass gravity, for which the frame
    rotates about e_n only at ``h / r**2``. A force with a cross-track
    component adds a rotation about e_r of ``r a_n / h``.

    Returns:
        :class:`LvlhFrame` with ``dcm`` mapping inertial components to LVLH.
    """
    r_vec, v_vec = chief.r, chief.v
    r = float(np.linalg.norm(r_vec))
    h_vec = np.cross(r_vec, v_vec)
    h = float(np.linalg.norm(h_vec))
    if h <= 0.0:
        raise ValidationError("rectilinear chief state: LVLH frame undefined")
    e_r = r_vec / r
    e_n = h_vec / h
    e_t = np.cross(e_n, e_r)
    dcm = np.vstack([e_r, e_t, e_n])

    if accel is None:
        accel = two_body_accel(r_vec, mu)
    if jerk is None:
        jerk = two_body_gradient(r_vec, mu) @ v_vec
    a_l = dcm @ accel
    j_l = dcm @ jerk
    r_dot = float(r_vec @ v_vec) / r
    h_dot = r * a_l[1]
    w_n = h / r**2
    w_r = r * a_l[2] / h
    an_dot = j_l[2] - w_r * a_l[1]
    wdot_n = h_dot / r**2 - 2.0 * h * r_dot / r**3
    wdot_r = r_dot * a_l[2] / h + r * an_dot / h - r * a_l[2] * h_dot / h**2
    return LvlhFrame(dcm, np.array([w_r, 0.0, w_n]), np.array([wdot_r, 0.0, wdot_n]), r, h)


def relative_state(
    chief: InertialState,
    deputy: InertialState,
    mu: float = MU_EARTH,
    frame: LvlhFrame | None = None,
) -> LvlhState:
    """Exact LVLH relative state of ``deputy`` with respect to ``chief``."""
    if abs(chief.t - deputy.t) > 1e-9 * max(1.0, abs(chief.t)):
        raise ValidationError(f"epoch mismatch: chief t={chief.t}, deputy t={deputy.t}")
    if frame is None:
        frame = lvlh_frame(chief, mu)
    rho = frame.dcm @ (deputy.r - chief.r)
    rho_dot = frame.dcm @ (deputy.v - chief.v) - np.cross(frame.omega, rho)
    return LvlhState(rho, rho_dot)


def deputy_from_relative(
    chief: InertialState,
    rel: LvlhState,
    mu: float = MU_EARTH,
    frame: LvlhFrame | None = None,
) -> InertialState:
    """Inverse of :func:`relative_state`."""
    if frame is None:
        frame = lvlh_frame(chief, mu)
    dr = frame.dcm.T @ rel.rho
    dv = frame.dcm.T @ (rel.rho_dot + np.cross(frame.omega, rel.rho))
    return InertialState(chief.r + dr, chief.v + dv, chief.t)
