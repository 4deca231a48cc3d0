"""Variation of parameters for the modal constants.

With ``x(t) = Psi(t) c(t)`` the osculating condition gives
``c_dot = Psi^-1 (f(x, u, t) - A*(t) x)``, where ``A*`` is the plant the basis
was built from. Here the truth ``f`` is the relative motion linearized about
the actual (possibly J2-perturbed) chief, integrated in parallel with the
constants; a fully nonlinear truth is available for validation.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad_vec

from .constants import J2_EARTH, MU_EARTH, R_EARTH
from .errors import ValidationError
from .integrate import DEFAULT_TOL, integrate
from .keplerian import plant_matrix_lvlh
from .modal import COND_WARN, ModalBasis
from .orbits import InertialState, LvlhState, deputy_from_relative, lvlh_frame

LINEAR_REGIME_BOUND = 1e-3

K_HAT = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# J2 force model


def j2_model(r, v, mu: float = MU_EARTH, j2: float = J2_EARTH, radius: float = R_EARTH):
    """Point mass plus J2: acceleration, its position gradient and the jerk.

    Returns ``(a, G, j)`` with ``j = G v``.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = float(np.linalg.norm(r))
    if rn == 0.0:
        raise ValidationError("position must be nonzero")
    rh = r / rn
    s = float(rh @ K_HAT)
    k = 1.5 * mu * j2 * radius**2
    a = -mu / rn**3 * r - k / rn**4 * ((1.0 - 5.0 * s * s) * rh + 2.0 * s * K_HAT)
    G_pm = mu / rn**3 * (3.0 * np.outer(rh, rh) - np.eye(3))
    G_j2 = -k / rn**5 * (
        (1.0 - 5.0 * s * s) * np.eye(3)
        + 2.0 * np.outer(K_HAT, K_HAT)
        + 5.0 * (7.0 * s * s - 1.0) * np.outer(rh, rh)
        - 10.0 * s * (np.outer(K_HAT, rh) + np.outer(rh, K_HAT))
    )
    G = G_pm + G_j2
    return a, G, G @ v


@dataclass(frozen=True)
class PerturbationModel:
    """Chief force model: total gravitational acceleration with its gradient."""

    mu: float = MU_EARTH
    j2: float = J2_EARTH
    radius: float = R_EARTH

    def evaluate(self, r, v):
        return j2_model(r, v, self.mu, self.j2, self.radius)

    def accel(self, r) -> np.ndarray:
        return self.evaluate(r, np.zeros(3))[0]

    def scaled(self, factor: float) -> "PerturbationModel":
        return PerturbationModel(self.mu, self.j2 * factor, self.radius)


KEPLERIAN = PerturbationModel(j2=0.0)


def chief_rhs(model: PerturbationModel):
    def f(t, y):
        return np.concatenate([y[3:6], model.accel(y[:3])])

    return f


def plant_along(model: PerturbationModel, chief: InertialState) -> np.ndarray:
    """Relative-motion plant linearized about a chief under ``model``."""
    a, G, j = model.evaluate(chief.r, chief.v)
    frame = lvlh_frame(chief, model.mu, accel=a, jerk=j)
    return plant_matrix_lvlh(frame, G)


def nonlinear_relative_rhs(model: PerturbationModel, chief: InertialState, x, u=None) -> np.ndarray:
    """Exact LVLH relative dynamics of a deputy about a chief under ``model``."""
    a_c, _, j_c = model.evaluate(chief.r, chief.v)
    frame = lvlh_frame(chief, model.mu, accel=a_c, jerk=j_c)
    dep = deputy_from_relative(chief, LvlhState(x[:3], x[3:6]), model.mu, frame)
    da = frame.dcm @ (model.accel(dep.r) - a_c)
    if u is not None:
        da = da + u
    rho, rho_dot = x[:3], x[3:6]
    w, wd = frame.omega, frame.omega_dot
    acc = da - 2.0 * np.cross(w, rho_dot) - np.cross(wd, rho) - np.cross(w, np.cross(w, rho))
    return np.concatenate([rho_dot, acc])


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class CTrajectory:
    """Sampled modal constants with the reconstructed relative state."""

    t: np.ndarray
    c: np.ndarray
    x: np.ndarray
    flags: list[str] = field(default_factory=list)
    chief: np.ndarray | None = None
    events: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def c_final(self) -> np.ndarray:
        return self.c[-1]

    def to_csv(self, stream=None) -> str | None:
        """Write rows ``t, c1..c6, x, y, z, xd, yd, zd, flags``."""
        out = io.StringIO() if stream is None else stream
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t"] + [f"c{i}" for i in range(1, 7)] + ["x", "y", "z", "xd", "yd", "zd", "flags"])
        for k in range(len(self.t)):
            row = [repr(float(self.t[k]))]
            row += [repr(float(v)) for v in self.c[k]]
            row += [repr(float(v)) for v in self.x[k]]
            row.append(self.flags[k] if k < len(self.flags) else "")
            w.writerow(row)
        return out.getvalue() if stream is None else None


def _flags_for(basis: ModalBasis, t: float, x, chief_r: float | None, bound: float) -> str:
    out = []
    if chief_r is not None and np.linalg.norm(x[:3]) / chief_r > bound:
        out.append("nonlinear")
    if basis.condition(t) > COND_WARN:
        out.append("ill_conditioned")
    return ";".join(out)


def _sample_times(t0: float, t1: float, n_out: int | None, t_eval) -> np.ndarray:
    if t_eval is not None:
        ts = np.asarray(t_eval, dtype=float)
        if np.any(ts < t0) or np.any(ts > t1):
            raise ValidationError("output times outside the propagation span")
        return ts
    return np.linspace(t0, t1, n_out or 201)


def _split_by_events(t0: float, t1: float, events: Sequence[float]) -> list[tuple[float, float]]:
    pts = sorted({t0, t1, *[e for e in events if t0 < e < t1]})
    return list(zip(pts[:-1], pts[1:]))


def propagate_constants_full(
    basis: ModalBasis,
    c0,
    t_span: tuple[float, float],
    model: PerturbationModel = PerturbationModel(),
    chief0: InertialState | None = None,
    control: Callable[[float, np.ndarray], np.ndarray] | None = None,
    impulses: Sequence[tuple[float, np.ndarray]] = (),
    dynamics: str = "linearized",
    n_out: int | None = None,
    t_eval=None,
    tol: float = 1e-11,
    linear_bound: float = LINEAR_REGIME_BOUND,
    reinit_times: Sequence[float] = (),
    rebuild: Callable[[InertialState, float], ModalBasis] | None = None,
) -> CTrajectory:
    """Osculating modal constants about a chief integrated under ``model``.

    ``basis`` must be a Keplerian LVLH basis (its plant is ``A*``) and
    ``chief0`` the chief state at ``t_span[0]`` (default: the basis chief).
    ``control(t, x)`` returns an LVLH acceleration; ``impulses`` are
    ``(t_i, dv_i)`` pairs applied as jumps ``B_c(t_i) dv_i``.
    ``dynamics`` selects the truth ``f``: ``"linearized"`` about the actual
    chief or ``"nonlinear"`` relative motion.

    ``reinit_times`` with ``rebuild(chief_state, t)`` re-initializes the
    basis at the given epochs, carrying the state over exactly.
    """
    if dynamics not in ("linearized", "nonlinear"):
        raise ValidationError("dynamics must be 'linearized' or 'nonlinear'")
    if reinit_times and rebuild is None:
        raise ValidationError("re-initialization requires a rebuild callback")
    t0, t1 = map(float, t_span)
    if chief0 is None:
        chief0 = basis.chief_state(t0)
    c = np.asarray(c0, dtype=float).copy()
    ts_out = _sample_times(t0, t1, n_out, t_eval)
    imp = sorted((float(t), np.asarray(dv, dtype=float)) for t, dv in impulses)
    cuts = _split_by_events(t0, t1, [t for t, _ in imp] + list(map(float, reinit_times)))

    def rhs_factory(b: ModalBasis):
        def rhs(t, y):
            chief = InertialState(y[:3], y[3:6], t)
            cc = y[6:]
            psi = b.psi(t)
            x = psi @ cc
            a_c = model.accel(chief.r)
            u = None if control is None else np.asarray(control(t, x), dtype=float)
            if dynamics == "linearized":
                f = plant_along(model, chief) @ x
                if u is not None:
                    f[3:] += u
            else:
                f = nonlinear_relative_rhs(model, chief, x, u)
            dc = sla.lu_solve(sla.lu_factor(psi), f - b.plant(t) @ x)
            return np.concatenate([y[3:6], a_c, dc])

        return rhs

    y = np.concatenate([chief0.r, chief0.v, c])
    b = basis
    out_t, out_c, out_x, out_chief, flags, events = [], [], [], [], [], []
    for a, z in cuts:
        sol = integrate(rhs_factory(b), y, a, z, tol)
        last = z == t1
        for t in ts_out[(ts_out >= a) & ((ts_out < z) | (last & (ts_out <= z)))]:
            yt = sol(t)
            x = b.psi(t) @ yt[6:]
            out_t.append(t)
            out_c.append(yt[6:].copy())
            out_x.append(x)
            out_chief.append(yt[:6].copy())
            flags.append(_flags_for(b, t, x, float(np.linalg.norm(yt[:3])), linear_bound))
        y = sol.y_final.copy()
        for ti, dv in imp:
            if ti == z:
                y[6:] += b.control_influence(z) @ dv
                events.append({"t": z, "kind": "impulse", "dv": dv.tolist()})
        if any(float(tr) == z for tr in reinit_times) and not last:
            x = b.psi(z) @ y[6:]
            b = rebuild(InertialState(y[:3], y[3:6], z), z)
            y[6:] = b.constants_from_state(x, z)
            events.append({"t": z, "kind": "reinit"})
    if any("nonlinear" in f for f in flags):
        warnings.warn("relative state left the linear regime bound", RuntimeWarning, stacklevel=2)
    return CTrajectory(
        np.array(out_t), np.array(out_c), np.array(out_x), flags, np.array(out_chief), events
    )


def propagate_constants_linear(
    basis: ModalBasis,
    c0,
    t_span: tuple[float, float],
    delta_A: Callable[[float], np.ndarray] | None = None,
    control: Callable[[float], np.ndarray] | None = None,
    impulses: Sequence[tuple[float, np.ndarray]] = (),
    n_out: int | None = None,
    t_eval=None,
    tol: float = 1e-11,
) -> CTrajectory:
    """``c_dot = Psi^-1 dA Psi c + B_c u`` (linear in ``c``).

    With ``delta_A`` and ``control`` both absent the constants are returned
    unchanged at every sample (apart from impulsive jumps).
    """
    t0, t1 = map(float, t_span)
    c = np.asarray(c0, dtype=float).copy()
    ts_out = _sample_times(t0, t1, n_out, t_eval)
    imp = sorted((float(t), np.asarray(dv, dtype=float)) for t, dv in impulses)
    cuts = _split_by_events(t0, t1, [t for t, _ in imp])

    def rhs(t, cc):
        lu = basis.psi_lu(t)
        d = np.zeros(6)
        if delta_A is not None:
            d += delta_A(t) @ (basis.psi(t) @ cc)
        if control is not None:
            d[3:] += np.asarray(control(t), dtype=float)
        return sla.lu_solve(lu, d)

    static = delta_A is None and control is None
    out_t, out_c = [], []
    for a, z in cuts:
        last = z == t1
        sel = ts_out[(ts_out >= a) & ((ts_out < z) | (last & (ts_out <= z)))]
        if static:
            out_t += list(sel)
            out_c += [c.copy() for _ in sel]
        else:
            sol = integrate(rhs, c, a, z, tol)
            for t in sel:
                out_t.append(t)
                out_c.append(np.asarray(sol(t)))
            c = sol.y_final.copy()
        for ti, dv in imp:
            if ti == z:
                c = c + basis.control_influence(z) @ dv
    cs = np.array(out_c)
    xs = np.array([basis.psi(t) @ cc for t, cc in zip(out_t, cs)])
    flags = [_flags_for(basis, t, x, None, LINEAR_REGIME_BOUND) for t, x in zip(out_t, xs)]
    return CTrajectory(np.array(out_t), cs, xs, flags)


def delta_plant(basis: ModalBasis, model: PerturbationModel, t_span, chief0: InertialState | None = None, tol=DEFAULT_TOL):
    """``dA(t) = A(t) - A*(t)`` along the chief integrated under ``model``."""
    t0, t1 = map(float, t_span)
    if chief0 is None:
        chief0 = basis.chief_state(t0)
    sol = integrate(chief_rhs(model), np.concatenate([chief0.r, chief0.v]), t0, t1, tol)

    def dA(t: float) -> np.ndarray:
        y = sol(t)
        return plant_along(model, InertialState(y[:3], y[3:6], t)) - basis.plant(t)

    return dA


def omega_matrix(basis: ModalBasis, delta_A: Callable[[float], np.ndarray]):
    """``Omega(t) = Psi^-1 dA Psi`` (the perturbation seen in ``c``)."""

    def Om(t: float) -> np.ndarray:
        psi = basis.psi(t)
        return sla.lu_solve(basis.psi_lu(t), delta_A(t) @ psi)

    return Om


def first_order_solution(
    basis: ModalBasis,
    c0,
    Omega: Callable[[float], np.ndarray] | None,
    t: float,
    epsilon: float = 1.0,
    t0: float | None = None,
    epsrel: float = 1e-10,
) -> np.ndarray:
    """``x(t) ~ Psi(t) (I + eps int Omega) c0`` by adaptive quadrature."""
    t0 = basis.t0 if t0 is None else t0
    c0 = np.asarray(c0, dtype=float)
    if Omega is None or t == t0:
        return basis.psi(t) @ c0
    integral, err = quad_vec(Omega, t0, t, epsrel=epsrel, epsabs=0.0, limit=2000)
    if not np.all(np.isfinite(integral)):
        raise ValidationError("quadrature of Omega failed")
    return basis.psi(t) @ (c0 + epsilon * integral @ c0)


def first_order_constants(basis: ModalBasis, c0, Omega: Callable[[float], np.ndarray], ts, epsrel: float = 1e-10) -> np.ndarray:
    """First-order constants ``c0 + int Omega c0`` from ``ts[0]`` to each of ``ts``.

    The integral accumulates segment by segment, so the cost is one pass.
    """
    c0 = np.asarray(c0, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) < 0):
        raise ValidationError("times must be nondecreasing")

    def g(t):
        return Omega(t) @ c0

    out = np.empty((ts.size, 6))
    acc = np.zeros(6)
    prev = ts[0]
    for k, t in enumerate(ts):
        if t > prev:
            seg, _ = quad_vec(g, prev, t, epsrel=epsrel, epsabs=0.0, limit=2000)
            acc = acc + seg
            prev = t
        out[k] = c0 + acc
    return out
