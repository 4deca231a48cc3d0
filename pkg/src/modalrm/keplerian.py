"""Closed-form Keplerian modal machinery.

Two decompositions are provided:

* the Clohessy-Wiltshire basis for circular chiefs (already LTI, so the
  Lyapunov-Floquet transform is the identity);
* the eccentric spherical-coordinate basis for ``0 < e < 1``, built in the
  spherical relative coordinates ``(dr, theta_r, phi_r, dr', theta_r', phi_r')``
  and mapped linearly to Cartesian LVLH coordinates.

The eccentric modes are functions of the argument of latitude ``theta``;
time evaluation goes through Kepler's equation.

Mode ordering (both bases): 1 along-track, 2 out-of-plane, 3 teardrop
(CW: in-plane ellipse), 4 out-of-plane rate, 5 offset circle, 6 drift. For
CW the column order follows the classical closed form instead (see
:func:`cw_psi`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import MU_EARTH
from .errors import SingularityError, ValidationError
from .modal import ModalBasis
from .orbits import (
    InertialState,
    LvlhFrame,
    OrbitElements,
    lvlh_frame,
    propagate_kepler,
    true_anomaly_at,
    two_body_gradient,
)

SINGULARITY_EPS = 1e-6


# ---------------------------------------------------------------------------
# linearized plant


def plant_matrix_lvlh(frame: LvlhFrame, grad_g_inertial: np.ndarray) -> np.ndarray:
    """Linearized relative-motion plant in LVLH axes.

    ``A = [[0, I], [grad_g - (W_dot + W W), -2 W]]`` with ``W`` the
    cross-product matrix of the frame angular velocity and ``grad_g`` the
    gravity gradient rotated into LVLH.
    """
    W = _skew(frame.omega)
    Wd = _skew(frame.omega_dot)
    G = frame.dcm @ grad_g_inertial @ frame.dcm.T
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3:, :3] = G - Wd - W @ W
    A[3:, 3:] = -2.0 * W
    return A


def keplerian_plant(oe: OrbitElements, mu: float = MU_EARTH):
    """Callback ``A(t)`` for the point-mass plant about an unperturbed chief."""

    def A(t: float) -> np.ndarray:
        chief = propagate_kepler(oe, t, mu)
        frame = lvlh_frame(chief, mu)
        return plant_matrix_lvlh(frame, two_body_gradient(chief.r, mu))

    return A


def cw_plant(n: float) -> np.ndarray:
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3, 0] = 3.0 * n**2
    A[3, 4] = 2.0 * n
    A[4, 3] = -2.0 * n
    A[5, 2] = -(n**2)
    return A


def _skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


# ---------------------------------------------------------------------------
# Clohessy-Wiltshire


def cw_psi(n: float, t: float) -> np.ndarray:
    """Unnormalized CW fundamental matrix (columns are the six modes)."""
    s, c = math.sin(n * t), math.cos(n * t)
    return np.array(
        [
            [0.0, -2.0 / (3.0 * n), -c / n, s / n, 0.0, 0.0],
            [1.0, t, 2.0 * s / n, 2.0 * c / n, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 2.0 * s / n, 2.0 * c / n],
            [0.0, 0.0, s, c, 0.0, 0.0],
            [0.0, 1.0, 2.0 * c, -2.0 * s, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 2.0 * c, -2.0 * s],
        ]
    )


def cw_constants_raw(x0, n: float) -> np.ndarray:
    """Unnormalized CW constants of the state ``x0`` at ``t = 0``."""
    x, y, z, xd, yd, zd = np.asarray(x0, dtype=float)
    return np.array(
        [
            y - 2.0 / n * xd,
            -6.0 * n * x - 3.0 * yd,
            3.0 * n * x + 2.0 * yd,
            xd,
            zd / 2.0,
            n / 2.0 * z,
        ]
    )


def cw_stm(n: float, t: float) -> np.ndarray:
    """Classical closed-form CW state transition matrix."""
    s, c = math.sin(n * t), math.cos(n * t)
    return np.array(
        [
            [4 - 3 * c, 0, 0, s / n, 2 * (1 - c) / n, 0],
            [6 * (s - n * t), 1, 0, -2 * (1 - c) / n, (4 * s - 3 * n * t) / n, 0],
            [0, 0, c, 0, 0, s / n],
            [3 * n * s, 0, 0, c, 2 * s, 0],
            [-6 * n * (1 - c), 0, 0, -2 * s, 4 * c - 3, 0],
            [0, 0, -n * s, 0, 0, c],
        ]
    )


class CWBasis(ModalBasis):
    """CW modal basis for mean motion ``n`` with epoch ``t0``."""

    kind = "cw"

    def __init__(self, n: float, t0: float = 0.0):
        if not n > 0:
            raise ValidationError("mean motion must be positive")
        self.n = float(n)
        super().__init__(t0=t0, period=2.0 * math.pi / self.n)

    def raw_psi(self, t: float) -> np.ndarray:
        return cw_psi(self.n, t - self.t0)

    def raw_lf_transform(self, t: float) -> np.ndarray:
        return np.eye(6)

    def plant(self, t: float) -> np.ndarray:
        return cw_plant(self.n)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "t0": self.t0, "scales": self.scales.tolist()}


def cw_basis(n: float, t0: float = 0.0) -> CWBasis:
    return CWBasis(n, t0)


def cw_constants(x0, n: float, basis: CWBasis | None = None) -> np.ndarray:
    """Normalized CW constants of ``x0`` (an :class:`LvlhState` or 6-vector)."""
    if hasattr(x0, "as_vector"):
        x0 = x0.as_vector()
    if basis is None:
        basis = CWBasis(n)
    return cw_constants_raw(x0, n) * basis.scales


# ---------------------------------------------------------------------------
# eccentric spherical-coordinate decomposition


@dataclass(frozen=True)
class SphericalRelState:
    dr: float
    theta_r: float
    phi_r: float
    dr_dot: float
    theta_r_dot: float
    phi_r_dot: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.dr, self.theta_r, self.phi_r, self.dr_dot, self.theta_r_dot, self.phi_r_dot])

    @classmethod
    def from_vector(cls, v) -> "SphericalRelState":
        return cls(*(float(x) for x in v))


def cartesian_to_spherical_matrix(r: float, r_dot: float) -> np.ndarray:
    """Linear map from Cartesian LVLH to spherical relative coordinates."""
    if not r > 0:
        raise ValidationError("radius must be positive")
    F = np.eye(6)
    F[1, 1] = F[2, 2] = 1.0 / r
    F[4, 4] = F[5, 5] = 1.0 / r
    F[4, 1] = F[5, 2] = -r_dot / r**2
    return F


def spherical_to_cartesian_matrix(r: float, r_dot: float) -> np.ndarray:
    Fi = np.eye(6)
    Fi[1, 1] = Fi[2, 2] = r
    Fi[4, 4] = Fi[5, 5] = r
    Fi[4, 1] = Fi[5, 2] = r_dot
    return Fi


@dataclass(frozen=True)
class EccentricContext:
    """Chief-orbit scalars shared by the eccentric basis formulas.

    ``q1`` may differ from ``e cos(argp)`` when the singularity guard has
    shifted it; ``guard`` records what was changed.
    """

    oe: OrbitElements
    mu: float
    q1: float
    q2: float
    guard: dict = field(default_factory=dict)

    @property
    def a(self) -> float:
        return self.oe.a

    @property
    def e2(self) -> float:
        return self.q1**2 + self.q2**2

    @property
    def eta(self) -> float:
        return math.sqrt(1.0 - self.e2)

    @property
    def p(self) -> float:
        return self.a * (1.0 - self.e2)

    @property
    def h(self) -> float:
        return math.sqrt(self.mu * self.p)

    @property
    def n(self) -> float:
        return math.sqrt(self.mu / self.a**3)

    @property
    def theta0(self) -> float:
        return self.oe.theta0

    def kappa(self, theta: float) -> float:
        return 1.0 + self.q1 * math.cos(theta) + self.q2 * math.sin(theta)

    def radius(self, theta: float) -> float:
        return self.p / self.kappa(theta)

    def radial_rate(self, theta: float) -> float:
        return self.h / self.p * (self.q1 * math.sin(theta) - self.q2 * math.cos(theta))

    def theta_rate(self, theta: float) -> float:
        return self.h / self.radius(theta) ** 2

    # constants of the modal eigenvectors
    @property
    def A(self) -> float:
        t0 = self.theta0
        return self.q2 * math.cos(t0) - self.q1 * math.sin(t0)

    @property
    def B(self) -> float:
        t0 = self.theta0
        return self.q1 * math.cos(t0) + self.q2 * math.sin(t0)

    @property
    def gamma(self) -> float:
        return self.A**2 + self.B**2 - 1.0

    @property
    def r0(self) -> float:
        return self.radius(self.theta0)

    @property
    def R21(self) -> float:
        return -3.0 * self.a * self.eta / (2.0 * self.r0**2)

    @property
    def C(self) -> float:
        return self.h * self.r0**2 / (self.a * self.mu * self.gamma)


def eccentric_context(oe: OrbitElements, mu: float = MU_EARTH, eps: float = SINGULARITY_EPS) -> EccentricContext:
    """Build the context, applying the near-singularity guard.

    The formulation is singular at ``q1 = 0`` and at ``e sin f0 = 0``. Inputs
    within ``eps`` of either are shifted to a sign-preserving ``eps``: ``q1``
    directly, and ``e sin f0`` through a small change of ``f0``.
    """
    if not oe.e > 0:
        raise ValidationError("eccentric basis requires e > 0; use the CW basis for circular chiefs")
    guard = {}
    q1, q2 = oe.q1, oe.q2
    if abs(q1) < eps:
        new_q1 = math.copysign(eps, q1) if q1 != 0 else eps
        guard["q1"] = {"from": q1, "to": new_q1}
        q1 = new_q1
        q2 = math.copysign(math.sqrt(max(oe.e**2 - q1**2, 0.0)), q2 if q2 != 0 else 1.0)
    esf = oe.e * math.sin(oe.f0)
    if abs(esf) < eps:
        target = math.copysign(eps, esf) if esf != 0 else eps
        f0 = oe.f0 + (target - esf) / (oe.e * math.cos(oe.f0))
        guard["e_sin_f0"] = {"from": esf, "to": target, "f0": f0}
        oe = oe.replace(f0=f0)
    if guard:
        argp = math.atan2(q2, q1) % (2 * math.pi)
        e = math.hypot(q1, q2)
        oe = oe.replace(argp=argp, e=e, f0=oe.theta0 - argp)
    return EccentricContext(oe, mu, q1, q2, guard)


def _check_nonsingular(ctx: EccentricContext):
    esf0 = -ctx.A  # A = q2 cos(theta0) - q1 sin(theta0) = -e sin f0
    if ctx.q1 == 0.0 or esf0 == 0.0:
        raise SingularityError(
            "eccentric basis is singular at q1 = 0 or e sin f0 = 0; "
            "shift the offending quantity by a small epsilon (see eccentric_context)"
        )


def gs_matrix(ctx: EccentricContext, theta: float) -> np.ndarray:
    """Linear map from nonsingular element differences
    ``(da, dtheta, di, dq1, dq2, draan)`` to spherical relative coordinates."""
    a, p, h, q1, q2 = ctx.a, ctx.p, ctx.h, ctx.q1, ctx.q2
    inc = ctx.oe.i
    r = ctx.radius(theta)
    vr = ctx.radial_rate(theta)
    vt = h / r
    td = ctx.theta_rate(theta)
    s, c = math.sin(theta), math.cos(theta)
    G = np.zeros((6, 6))
    G[0] = [r / a, vr / vt * r, 0.0, -r / p * (2 * a * q1 + r * c), -r / p * (2 * a * q2 + r * s), 0.0]
    G[1] = [0.0, 1.0, 0.0, 0.0, 0.0, math.cos(inc)]
    G[2] = [0.0, 0.0, s, 0.0, 0.0, -c * math.sin(inc)]
    G[3] = [-vr / (2 * a), (1 / r - 1 / p) * h, 0.0, (vr * a * q1 + h * s) / p, (vr * a * q2 - h * c) / p, 0.0]
    G[4] = [-3 * td / (2 * a), -2 * vr / r, 0.0, td / p * (3 * a * q1 + 2 * r * c), td / p * (3 * a * q2 + 2 * r * s), 0.0]
    G[5] = [0.0, 0.0, td * c, 0.0, 0.0, td * s * math.sin(inc)]
    return G


def _unwrapped_half_angle_atan(ctx: EccentricContext, theta: float) -> float:
    u = theta / 2.0
    val = math.atan((ctx.q2 + (1.0 - ctx.q1) * math.tan(u)) / ctx.eta)
    return val + math.pi * round((u - val) / math.pi)


def _F21(ctx: EccentricContext, theta: float) -> float:
    q1, q2, eta = ctx.q1, ctx.q2, ctx.eta
    k = ctx.kappa(theta)
    return 6.0 / eta**3 * (_unwrapped_half_angle_atan(ctx, theta) - theta / 2.0) + 3.0 * (
        q2 + ctx.e2 * math.sin(theta)
    ) / (q1 * (ctx.e2 - 1.0) * k)


def _F24(ctx: EccentricContext, theta: float) -> float:
    k = ctx.kappa(theta)
    s = math.sin(theta)
    return 4.0 * (ctx.q2 + s) / k**2 + 4.0 * s / k


def _F25(ctx: EccentricContext, theta: float) -> float:
    q1, q2 = ctx.q1, ctx.q2
    k = ctx.kappa(theta)
    s = math.sin(theta)
    return 4.0 * (1.0 - q1**2 + q2 * s) / (q1 * k**2) + 4.0 * q2 * s / (q1 * k)


def p_doe_matrix(ctx: EccentricContext, theta: float) -> np.ndarray:
    """Periodic Lyapunov-Floquet transform of the element differences."""
    t0 = ctx.theta0
    k2 = ctx.kappa(theta) ** 2
    k02 = ctx.kappa(t0) ** 2
    P = np.eye(6)
    P[1, 0] = k2 / (2.0 * ctx.a) * (_F21(ctx, t0) - _F21(ctx, theta))
    P[1, 1] = k2 / k02
    P[1, 3] = k2 / (4.0 * (ctx.e2 - 1.0)) * (_F24(ctx, t0) - _F24(ctx, theta))
    P[1, 4] = k2 / (4.0 * (ctx.e2 - 1.0)) * (_F25(ctx, t0) - _F25(ctx, theta))
    return P


def modal_vectors(ctx: EccentricContext) -> np.ndarray:
    """Columns ``v1..v6`` of the spherical-coordinate eigenvector matrix."""
    A, B, C, g, a, R21 = ctx.A, ctx.B, ctx.C, ctx.gamma, ctx.a, ctx.R21
    k = 2.0 * R21 * a / g
    V = np.zeros((6, 6))
    V[1, 0] = 1.0
    V[2, 1] = 1.0
    V[3, 2] = 1.0
    V[4, 2] = -A / (g * a)
    V[5, 3] = 1.0
    V[:, 4] = [k * A * C * g * a, k * (B + 1.0) ** 2 * C, 0.0, k * B * g * a, -2.0 * k * A * (B + 1.0), 0.0]
    V[4, 5] = 1.0
    return V


def eccentric_lti_matrix(ctx: EccentricContext) -> np.ndarray:
    """LTI plant (per radian of theta) in spherical coordinates at theta0."""
    G0 = gs_matrix(ctx, ctx.theta0)
    lam_doe = np.zeros((6, 6))
    lam_doe[1, 0] = ctx.R21
    return G0 @ lam_doe @ np.linalg.inv(G0)


class EccentricBasis(ModalBasis):
    """Spherical-coordinate Keplerian modes mapped to Cartesian LVLH.

    Evaluated at time ``t`` (seconds since the chief epoch) or directly at
    an unwrapped argument of latitude via :meth:`raw_psi_theta`.
    """

    kind = "eccentric"

    def __init__(self, oe: OrbitElements, mu: float = MU_EARTH, eps: float = SINGULARITY_EPS, t0: float = 0.0):
        self.ctx = eccentric_context(oe, mu, eps)
        _check_nonsingular(self.ctx)
        self.mu = mu
        self.eps = eps
        self.oe = self.ctx.oe
        self._V = modal_vectors(self.ctx)
        self._Gs0_inv = np.linalg.inv(gs_matrix(self.ctx, self.ctx.theta0))
        super().__init__(t0=t0, period=self.oe.period(mu))

    @property
    def guard(self) -> dict:
        return dict(self.ctx.guard)

    def theta_at(self, t: float) -> float:
        """Unwrapped argument of latitude at time ``t``."""
        return self.oe.argp + true_anomaly_at(self.oe, t - self.t0, self.mu)

    def lf_transform_spherical(self, theta: float) -> np.ndarray:
        return gs_matrix(self.ctx, theta) @ p_doe_matrix(self.ctx, theta) @ self._Gs0_inv

    def raw_psi_theta(self, theta: float) -> np.ndarray:
        ctx = self.ctx
        Pxs = self.lf_transform_spherical(theta)
        V = self._V.copy()
        V[:, 5] = V[:, 4] * (theta - ctx.theta0) + V[:, 5]
        Fi = spherical_to_cartesian_matrix(ctx.radius(theta), ctx.radial_rate(theta))
        return Fi @ Pxs @ V

    def raw_psi(self, t: float) -> np.ndarray:
        return self.raw_psi_theta(self.theta_at(t))

    def raw_lf_transform(self, t: float) -> np.ndarray:
        """Cartesian LF transform ``F(theta)^-1 P_xs(theta) F(theta0)``."""
        ctx = self.ctx
        theta = self.theta_at(t)
        Fi = spherical_to_cartesian_matrix(ctx.radius(theta), ctx.radial_rate(theta))
        F0 = cartesian_to_spherical_matrix(ctx.r0, ctx.radial_rate(ctx.theta0))
        return Fi @ self.lf_transform_spherical(theta) @ F0

    def chief_state(self, t: float) -> InertialState:
        return propagate_kepler(self.oe, t - self.t0, self.mu)

    def plant(self, t: float) -> np.ndarray:
        chief = self.chief_state(t)
        return plant_matrix_lvlh(lvlh_frame(chief, self.mu), two_body_gradient(chief.r, self.mu))

    def to_dict(self) -> dict:
        oe = self.oe
        return {
            "kind": self.kind,
            "elements": [oe.a, oe.e, oe.i, oe.raan, oe.argp, oe.f0],
            "mu": self.mu,
            "eps": self.eps,
            "t0": self.t0,
            "guard": self.guard,
            "scales": self.scales.tolist(),
        }


def eccentric_basis(oe: OrbitElements, mu: float = MU_EARTH, eps: float = SINGULARITY_EPS) -> EccentricBasis:
    return EccentricBasis(oe, mu, eps)


def spherical_state(x, oe: OrbitElements, mu: float = MU_EARTH, theta: float | None = None) -> SphericalRelState:
    """Spherical relative coordinates of a Cartesian LVLH state."""
    if hasattr(x, "as_vector"):
        x = x.as_vector()
    ctx = eccentric_context(oe, mu, 0.0) if oe.e > 0 else None
    if theta is None:
        theta = oe.theta0
    if ctx is None:
        r, rd = oe.a, 0.0
    else:
        r, rd = ctx.radius(theta), ctx.radial_rate(theta)
    return SphericalRelState.from_vector(cartesian_to_spherical_matrix(r, rd) @ np.asarray(x, dtype=float))


def eccentric_constants_raw(xs: SphericalRelState, ctx: EccentricContext) -> np.ndarray:
    """Closed-form (unnormalized) constants from the epoch spherical state."""
    t0 = ctx.theta0
    r0 = ctx.r0
    vr0 = ctx.radial_rate(t0)
    vt0 = ctx.h / r0
    if vr0 == 0.0:
        raise SingularityError("apsis singularity: radial velocity is zero at epoch")
    p, a, n, mu, h, C = ctx.p, ctx.a, ctx.n, ctx.mu, ctx.h, ctx.C
    dr, thr, phr, drd, thrd, phrd = xs.as_vector()
    c1 = -vt0 / (vr0 * r0) * dr + thr
    c2 = phr
    c3 = ((1.0 - r0 / p) * vt0 / vr0 * dr + C * drd) / C
    c4 = phrd
    c5 = -vt0 / (3.0 * vr0 * a) * n * (r0 / p) * dr
    c6 = mu / (h * r0**2) * (1.0 + p / r0) * dr + vr0 / (vt0 * r0) * drd + thrd
    return np.array([c1, c2, c3, c4, c5, c6])


def eccentric_constants(
    x0, oe: OrbitElements, mu: float = MU_EARTH, basis: EccentricBasis | None = None
) -> np.ndarray:
    """Normalized modal constants of an epoch relative state.

    ``x0`` may be a :class:`SphericalRelState` or a Cartesian LVLH state
    (:class:`LvlhState` or 6-vector).
    """
    if basis is None:
        basis = EccentricBasis(oe, mu)
    ctx = basis.ctx
    if not isinstance(x0, SphericalRelState):
        vec = x0.as_vector() if hasattr(x0, "as_vector") else np.asarray(x0, dtype=float)
        F0 = cartesian_to_spherical_matrix(ctx.r0, ctx.radial_rate(ctx.theta0))
        x0 = SphericalRelState.from_vector(F0 @ vec)
    return eccentric_constants_raw(x0, ctx) * basis.scales
