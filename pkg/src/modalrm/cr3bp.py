"""Circular restricted three-body problem: dynamics, variational equations,
libration points and halo-orbit generation.

Nondimensional rotating frame with the primaries at ``(-mu, 0, 0)`` and
``(1 - mu, 0, 0)``; effective potential
``U = (x^2 + y^2)/2 + (1 - mu)/r1 + mu/r2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .constants import MU_EARTH_MOON, days_to_tu
from .errors import ConvergenceError, ValidationError
from .integrate import DEFAULT_TOL, integrate
from .periodic import PeriodicOrbit

SINGULAR_DISTANCE = 1e-8


@dataclass(frozen=True)
class Cr3bpState:
    xi: np.ndarray
    xi_dot: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).reshape(3))
        object.__setattr__(self, "xi_dot", np.asarray(self.xi_dot, dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.xi, self.xi_dot])

    @classmethod
    def from_vector(cls, y, tau: float = 0.0) -> "Cr3bpState":
        y = np.asarray(y, dtype=float)
        return cls(y[:3], y[3:6], tau)


def _distances(x, y, z, mu):
    r1 = math.sqrt((x + mu) ** 2 + y * y + z * z)
    r2 = math.sqrt((x - 1.0 + mu) ** 2 + y * y + z * z)
    if r1 < SINGULAR_DISTANCE or r2 < SINGULAR_DISTANCE:
        raise ValidationError("state lies at a primary singularity")
    return r1, r2


def cr3bp_accel(y, mu: float = MU_EARTH_MOON) -> np.ndarray:
    x, yy, z, xd, yd, zd = y[:6]
    r1, r2 = _distances(x, yy, z, mu)
    a1 = (1.0 - mu) / r1**3
    a2 = mu / r2**3
    return np.array(
        [
            2.0 * yd + x - a1 * (x + mu) - a2 * (x - 1.0 + mu),
            -2.0 * xd + yy - a1 * yy - a2 * yy,
            -a1 * z - a2 * z,
        ]
    )


def potential_hessian(r, mu: float = MU_EARTH_MOON) -> np.ndarray:
    """Second derivatives of the effective potential."""
    x, y, z = r[:3]
    r1, r2 = _distances(x, y, z, mu)
    d1 = np.array([x + mu, y, z])
    d2 = np.array([x - 1.0 + mu, y, z])
    H = (
        np.diag([1.0, 1.0, 0.0])
        - ((1.0 - mu) / r1**3 + mu / r2**3) * np.eye(3)
        + 3.0 * (1.0 - mu) / r1**5 * np.outer(d1, d1)
        + 3.0 * mu / r2**5 * np.outer(d2, d2)
    )
    return H


_CORIOLIS = np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def cr3bp_jacobian(y, mu: float = MU_EARTH_MOON) -> np.ndarray:
    """Jacobian of the CR3BP vector field (the variational plant matrix)."""
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3:, :3] = potential_hessian(y, mu)
    A[3:, 3:] = _CORIOLIS
    return A


def cr3bp_rhs(s, mu_ratio: float = MU_EARTH_MOON, stm=None):
    """State derivative; with ``stm`` given also returns ``d(stm)/dtau``."""
    y = s.as_vector() if isinstance(s, Cr3bpState) else np.asarray(s, dtype=float)
    dy = np.concatenate([y[3:6], cr3bp_accel(y, mu_ratio)])
    if stm is None:
        return dy
    return dy, cr3bp_jacobian(y, mu_ratio) @ np.asarray(stm)


def state_rhs(mu: float = MU_EARTH_MOON):
    def f(t, y):
        return np.concatenate([y[3:6], cr3bp_accel(y, mu)])

    return f


def state_stm_rhs(mu: float = MU_EARTH_MOON):
    def f(t, y):
        dy = np.empty(42)
        dy[:3] = y[3:6]
        dy[3:6] = cr3bp_accel(y, mu)
        dy[6:] = (cr3bp_jacobian(y, mu) @ y[6:].reshape(6, 6)).ravel()
        return dy

    return f


def jacobi_constant(y, mu: float = MU_EARTH_MOON) -> float:
    x, yy, z, xd, yd, zd = np.asarray(y, dtype=float)[:6]
    r1, r2 = _distances(x, yy, z, mu)
    U = 0.5 * (x * x + yy * yy) + (1.0 - mu) / r1 + mu / r2
    return 2.0 * U - (xd * xd + yd * yd + zd * zd)


def libration_point(which: str, mu: float = MU_EARTH_MOON) -> np.ndarray:
    """Position of the collinear point ``'L1'``, ``'L2'`` or ``'L3'``."""

    def gx(x):
        r1 = abs(x + mu)
        r2 = abs(x - 1.0 + mu)
        return x - (1.0 - mu) * (x + mu) / r1**3 - mu * (x - 1.0 + mu) / r2**3

    which = which.upper()
    if which == "L1":
        x = brentq(gx, -mu + 1e-6, 1.0 - mu - 1e-6, xtol=1e-15)
    elif which == "L2":
        x = brentq(gx, 1.0 - mu + 1e-6, 2.0, xtol=1e-15)
    elif which == "L3":
        x = brentq(gx, -2.0, -mu - 1e-6, xtol=1e-15)
    else:
        raise ValidationError(f"unknown collinear point {which!r}")
    return np.array([x, 0.0, 0.0])


def propagate(y0, tau: float, mu: float = MU_EARTH_MOON, tol: float = DEFAULT_TOL, with_stm: bool = False):
    if with_stm:
        y0 = np.concatenate([np.asarray(y0, dtype=float)[:6], np.eye(6).ravel()])
        return integrate(state_stm_rhs(mu), y0, 0.0, tau, tol)
    return integrate(state_rhs(mu), y0, 0.0, tau, tol)


# ---------------------------------------------------------------------------
# analytic halo approximation


def richardson_halo(point: str, az_lu: float, northern: bool = True, mu: float = MU_EARTH_MOON):
    """Third-order analytic halo approximation at the x-z plane crossing.

    Returns ``(state, period)`` in nondimensional units. ``az_lu`` is the
    out-of-plane amplitude in LU.
    """
    point = point.upper()
    xl = libration_point(point, mu)[0]
    if point == "L1":
        gamma = 1.0 - mu - xl
        sgn = -1.0
    elif point == "L2":
        gamma = xl - 1.0 + mu
        sgn = 1.0
    else:
        raise ValidationError("halo approximation implemented for L1 and L2 only")

    def cn(n):
        if point == "L1":
            return (mu + (-1) ** n * (1 - mu) * gamma ** (n + 1) / (1 - gamma) ** (n + 1)) / gamma**3
        return ((-1) ** n * mu + (-1) ** n * (1 - mu) * gamma ** (n + 1) / (1 + gamma) ** (n + 1)) / gamma**3

    c2, c3, c4 = cn(2), cn(3), cn(4)
    lam = math.sqrt((2 - c2 + math.sqrt((c2 - 2) ** 2 + 4 * (c2 - 1) * (1 + 2 * c2))) / 2)
    k = 2 * lam / (lam**2 + 1 - c2)
    delta = lam**2 - c2
    d1 = 3 * lam**2 / k * (k * (6 * lam**2 - 1) - 2 * lam)
    d2 = 8 * lam**2 / k * (k * (11 * lam**2 - 1) - 2 * lam)
    a21 = 3 * c3 * (k**2 - 2) / (4 * (1 + 2 * c2))
    a22 = 3 * c3 / (4 * (1 + 2 * c2))
    a23 = -3 * c3 * lam / (4 * k * d1) * (3 * k**3 * lam - 6 * k * (k - lam) + 4)
    a24 = -3 * c3 * lam / (4 * k * d1) * (2 + 3 * k * lam)
    b21 = -3 * c3 * lam / (2 * d1) * (3 * k * lam - 4)
    b22 = 3 * c3 * lam / d1
    d21 = -c3 / (2 * lam**2)
    a31 = -9 * lam / (4 * d2) * (4 * c3 * (k * a23 - b21) + k * c4 * (4 + k**2)) + (9 * lam**2 + 1 - c2) / (
        2 * d2
    ) * (3 * c3 * (2 * a23 - k * b21) + c4 * (2 + 3 * k**2))
    a32 = -1 / d2 * (
        9 * lam / 4 * (4 * c3 * (k * a24 - b22) + k * c4)
        + 1.5 * (9 * lam**2 + 1 - c2) * (c3 * (k * b22 + d21 - 2 * a24) - c4)
    )
    b31 = 3 / (8 * d2) * (
        8 * lam * (3 * c3 * (k * b21 - 2 * a23) - c4 * (2 + 3 * k**2))
        + (9 * lam**2 + 1 + 2 * c2) * (4 * c3 * (k * a23 - b21) + k * c4 * (4 + k**2))
    )
    b32 = 1 / d2 * (
        9 * lam * (c3 * (k * b22 + d21 - 2 * a24) - c4)
        + 3 / 8 * (9 * lam**2 + 1 + 2 * c2) * (4 * c3 * (k * a24 - b22) + k * c4)
    )
    d31 = 3 / (64 * lam**2) * (4 * c3 * a24 + c4)
    d32 = 3 / (64 * lam**2) * (4 * c3 * (a23 - d21) + c4 * (4 + k**2))
    den = 2 * lam * (lam * (1 + k**2) - 2 * k)
    s1 = (1.5 * c3 * (2 * a21 * (k**2 - 2) - a23 * (k**2 + 2) - 2 * k * b21) - 3 / 8 * c4 * (3 * k**4 - 8 * k**2 + 8)) / den
    s2 = (1.5 * c3 * (2 * a22 * (k**2 - 2) + a24 * (k**2 + 2) + 2 * k * b22 + 5 * d21) + 3 / 8 * c4 * (12 - k**2)) / den
    a1 = -1.5 * c3 * (2 * a21 + a23 + 5 * d21) - 3 / 8 * c4 * (12 - k**2)
    a2 = 1.5 * c3 * (a24 - 2 * a22) + 9 / 8 * c4
    l1 = a1 + 2 * lam**2 * s1
    l2 = a2 + 2 * lam**2 * s2

    Az = az_lu / gamma
    Ax2 = -(l2 * Az**2 + delta) / l1
    if Ax2 <= 0:
        raise ValidationError("requested amplitude below the halo bifurcation")
    Ax = math.sqrt(Ax2)
    nu = 1 + s1 * Ax**2 + s2 * Az**2
    dn = 1.0 if northern else -1.0

    # tau1 = 0: x-z plane crossing
    x = a21 * Ax**2 + a22 * Az**2 - Ax + (a23 * Ax**2 - a24 * Az**2) + (a31 * Ax**3 - a32 * Ax * Az**2)
    z = dn * Az + dn * d21 * Ax * Az * (1 - 3) + dn * (d32 * Az * Ax**2 - d31 * Az**3)
    yd = lam * nu * (
        k * Ax + 2 * (b21 * Ax**2 - b22 * Az**2) + 3 * (b31 * Ax**3 - b32 * Ax * Az**2)
    )
    # Richardson's x axis points away from the nearer primary for L2 and toward it for L1
    X = xl + sgn * gamma * x
    Z = gamma * z
    YD = sgn * gamma * yd
    period = 2 * math.pi / (lam * nu)
    return np.array([X, 0.0, Z, 0.0, YD, 0.0]), period


# ---------------------------------------------------------------------------
# symmetric halo correction and continuation
#
# Free variables v = (x0, z0, ydot0, T/2) of a perpendicular x-z plane
# crossing; the half-period residual is (y, xdot, zdot) at T/2.

_RES_ROWS = [1, 3, 5]
_FREE_COLS = [0, 2, 4]
NEWTON_TOL = 1e-12
# the Earth-Moon L1/L2 halo families end in collision orbits with the Moon;
# stop the sweep once a member passes inside its radius (1737.4 km)
MIN_SECONDARY_DISTANCE = 1737.4 / 384400.0
MAX_NEWTON = 50


def _initial(v) -> np.ndarray:
    return np.array([v[0], 0.0, v[1], 0.0, v[2], 0.0])


def _half_period_map(v, mu, tol):
    sol = propagate(_initial(v), v[3], mu, tol, with_stm=True)
    yT = sol.y_final
    phi = yT[6:].reshape(6, 6)
    f = np.concatenate([yT[3:6], cr3bp_accel(yT, mu)])
    g = yT[_RES_ROWS]
    D = np.zeros((3, 4))
    D[:, :3] = phi[np.ix_(_RES_ROWS, _FREE_COLS)]
    D[:, 3] = f[_RES_ROWS]
    return g, D, yT[:6]


def _newton(v, mu, tol, free: list[int], extra=None):
    """Newton iterations on the half-period residual.

    ``free`` indexes the variables that are corrected; ``extra`` optionally
    appends one scalar constraint ``(value_fn, gradient)`` (pseudo-arclength).
    """
    v = np.array(v, dtype=float)
    for it in range(MAX_NEWTON):
        g, D, _ = _half_period_map(v, mu, tol)
        rows = [g]
        J = D[:, free]
        if extra is not None:
            val, grad = extra
            rows.append([val(v)])
            J = np.vstack([J, grad[free]])
        r = np.concatenate(rows)
        if np.linalg.norm(r) < NEWTON_TOL:
            return v, it, D
        dv = np.linalg.lstsq(J, -r, rcond=None)[0]
        v[free] += dv
        if not np.all(np.isfinite(v)) or v[3] <= 0:
            break
    raise ConvergenceError(f"halo corrector did not converge in {MAX_NEWTON} iterations")


def _tangent(D, prev=None) -> np.ndarray:
    _, _, Vt = np.linalg.svd(D)
    t = Vt[-1]
    if prev is not None and t @ prev < 0:
        t = -t
    return t


@dataclass(frozen=True)
class HaloMember:
    v: np.ndarray
    period: float


def halo_family(
    point: str = "L2",
    northern: bool = True,
    mu: float = MU_EARTH_MOON,
    stop=None,
    az_start: float = 2e-3,
    ds: float = 5e-3,
    max_steps: int = 2000,
    tol: float = DEFAULT_TOL,
    min_distance: float = MIN_SECONDARY_DISTANCE,
) -> list[HaloMember]:
    """Pseudo-arclength continuation of a halo family.

    Starts from the analytic approximation at ``az_start`` (LU) and walks
    toward growing out-of-plane amplitude. ``stop(prev, new)`` ends the sweep
    when it returns True; a member whose x-z crossing lies within
    ``min_distance`` of the secondary ends it with an error.
    """
    guess, T = richardson_halo(point, az_start, northern, mu)
    v0 = np.array([guess[0], guess[2], guess[4], T / 2])
    v, _, D = _newton(v0, mu, tol, free=[0, 2, 3])
    t = _tangent(D)
    if t[1] * v[1] < 0:  # grow the out-of-plane amplitude
        t = -t
    members = [HaloMember(v.copy(), 2 * v[3])]
    step = ds
    for _ in range(max_steps):
        pred = v + step * t
        extra = (lambda w, pred=pred, t=t: float(t @ (w - pred)), t)
        try:
            v_new, its, D = _newton(pred, mu, tol, free=[0, 1, 2, 3], extra=extra)
        except ConvergenceError:
            step /= 2
            if step < 1e-8:
                raise
            continue
        t = _tangent(D, t)
        v = v_new
        member = HaloMember(v.copy(), 2 * v[3])
        if math.hypot(v[0] - (1.0 - mu), v[1]) < min_distance:
            raise ConvergenceError("halo family reached the secondary before the target period was bracketed")
        members.append(member)
        if stop is not None and stop(members[-2], member):
            return members
        if its <= 3:
            step = min(step * 1.5, 0.05)
        elif its > 6:
            step /= 2
    if stop is not None:
        raise ConvergenceError("target not bracketed by the family sweep")
    return members


def correct_fixed_period(v_guess, period: float, mu: float = MU_EARTH_MOON, tol: float = DEFAULT_TOL):
    v = np.array(v_guess, dtype=float)
    v[3] = period / 2
    v, _, _ = _newton(v, mu, tol, free=[0, 1, 2])
    return v


def find_periodic_orbit(
    family: str = "L2",
    branch: str = "northern",
    target_period_days: float | None = None,
    mu_ratio: float = MU_EARTH_MOON,
    tu_seconds: float | None = None,
    target_period_tu: float | None = None,
    tol: float = DEFAULT_TOL,
) -> PeriodicOrbit:
    """Halo orbit of the requested family with the requested period.

    The family is swept from small amplitude until the period is bracketed;
    the member is then corrected at fixed period. If the period occurs more
    than once the smallest-amplitude member is returned (first bracket).
    The epoch is the perpendicular x-z crossing of largest ``|z|``.
    """
    from .constants import TU_EARTH_MOON

    tu = TU_EARTH_MOON if tu_seconds is None else tu_seconds
    if target_period_tu is None:
        if target_period_days is None:
            raise ValidationError("a target period is required")
        target = days_to_tu(target_period_days, tu)
    else:
        target = float(target_period_tu)
    branch = branch.lower()
    if branch not in ("northern", "southern"):
        raise ValidationError(f"branch must be 'northern' or 'southern', got {branch!r}")
    northern = branch == "northern"

    def stop(prev, new):
        return (prev.period - target) * (new.period - target) <= 0

    members = halo_family(family, northern, mu_ratio, stop=stop, tol=tol)
    a, b = members[-2], members[-1]
    w = (target - a.period) / (b.period - a.period)
    v = correct_fixed_period(a.v + w * (b.v - a.v), target, mu_ratio, tol)

    x0 = _initial(v)
    _, _, other = _half_period_map(v, mu_ratio, tol)
    if abs(other[2]) > abs(x0[2]):
        x0 = other.copy()
        x0[[1, 3, 5]] = 0.0
    # the vertical mirror image of a halo is the opposite branch
    if (x0[2] > 0) != northern:
        x0[[2, 5]] *= -1.0
    orbit = PeriodicOrbit(
        "cr3bp",
        mu_ratio,
        x0,
        target,
        tol=tol,
        metadata={
            "family": family.upper(),
            "branch": branch,
            "target_period_days": target_period_days,
            "target_period_tu": target,
            "tu_seconds": tu,
            "z_amplitude": float(abs(x0[2])),
            "continuation_members": len(members),
            "epoch": "x-z plane crossing of maximum |z|",
        },
    )
    return orbit
