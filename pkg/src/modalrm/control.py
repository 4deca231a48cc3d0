"""Maneuver planning in modal-constant space.

Impulses ``dv_j`` at times ``t_j`` change the constants by
``sum_j B_c(t_j) dv_j``. The fuel-optimal plan for a required change ``dc``
follows from the dual reachable-set problem

    maximize  eta' dc   s.t.  |B_c(t_j)' eta| <= 1  for every grid time,

whose optimum equals the minimum total delta-V. Burns sit where the
constraint is active, along ``B_c(t_j)' eta``; their magnitudes come from a
nonnegative least-squares fit of the resulting linear system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import ConvergenceError, NumericalError, SingularityError, ValidationError
from .integrate import integrate
from .modal import ModalBasis
from .socp import SocpResult, solve_socp

ACTIVE_TOL = 1e-6
RESIDUAL_TOL = 1e-8
MAX_REFINEMENTS = 3
REACH_TOL = 1e-9
# the SOCP dual residual only affects its own impulse estimate, which is not used
DUAL_FEAS_TOL = 1e-9
RICCATI_BLOWUP = 1e12
# relative singular-value cutoff for the range of the stacked influences
RANK_TOL = 1e-12


def control_influence(basis: ModalBasis, t: float) -> np.ndarray:
    """``B_c(t) = Psi(t)^-1 B_x``: constants change per unit velocity impulse."""
    return basis.control_influence(t)


# ---------------------------------------------------------------------------
# problem and plan


@dataclass
class ImpulsivePlanProblem:
    """Move the constants from ``c0`` to ``c_target`` with impulses on a grid."""

    basis: ModalBasis
    c0: np.ndarray
    c_target: np.ndarray
    window: tuple[float, float]
    grid: np.ndarray | None = None
    n_grid: int = 100
    active_tol: float = ACTIVE_TOL

    def __post_init__(self):
        self.c0 = np.asarray(self.c0, dtype=float).reshape(6)
        self.c_target = np.asarray(self.c_target, dtype=float).reshape(6)
        t0, tf = map(float, self.window)
        if not tf > t0:
            raise ValidationError("maneuver window must have tf > t0")
        self.window = (t0, tf)
        if self.grid is None:
            if self.n_grid < 2:
                raise ValidationError("the time grid needs at least two points")
            self.grid = np.linspace(t0, tf, self.n_grid)
        self.grid = np.asarray(self.grid, dtype=float).ravel()
        if self.grid.size < 1 or np.any(np.diff(self.grid) <= 0):
            raise ValidationError("time grid must be nonempty and strictly increasing")
        span = tf - t0
        if self.grid[0] < t0 - 1e-12 * span or self.grid[-1] > tf + 1e-12 * span:
            raise ValidationError("time grid leaves the maneuver window")

    @property
    def delta_c(self) -> np.ndarray:
        return self.c_target - self.c0

    def influences(self, grid=None) -> np.ndarray:
        """Stack of ``B_c(t_j)``, shape (k, 6, 3)."""
        grid = self.grid if grid is None else grid
        return np.array([self.basis.control_influence(t) for t in grid])

    def with_grid(self, grid) -> "ImpulsivePlanProblem":
        return ImpulsivePlanProblem(self.basis, self.c0, self.c_target, self.window, np.asarray(grid), active_tol=self.active_tol)

    def grid_spec(self) -> dict:
        g = self.grid
        uniform = g.size > 1 and np.allclose(np.diff(g), g[1] - g[0], rtol=1e-9, atol=0.0)
        return {"window": list(self.window), "points": int(g.size), "uniform": bool(uniform), "times": g.tolist()}


@dataclass
class ManeuverPlan:
    burns: list[tuple[float, np.ndarray]]
    total_dv: float
    dual: np.ndarray
    achieved_dc: np.ndarray
    residual: float
    grid_spec: dict = field(default_factory=dict)
    objective: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.burns])

    @property
    def n_burns(self) -> int:
        return len(self.burns)

    def to_dict(self) -> dict:
        return {
            "burns": [{"t": float(t), "dv": [float(v) for v in dv]} for t, dv in self.burns],
            "total_dv": float(self.total_dv),
            "dual": [float(v) for v in self.dual],
            "residual": float(self.residual),
            "achieved_dc": [float(v) for v in self.achieved_dc],
            "objective": None if self.objective is None else float(self.objective),
            "grid_spec": self.grid_spec,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ManeuverPlan":
        return cls(
            burns=[(float(b["t"]), np.array(b["dv"], dtype=float)) for b in d["burns"]],
            total_dv=float(d["total_dv"]),
            dual=np.array(d["dual"], dtype=float),
            achieved_dc=np.array(d.get("achieved_dc", [0.0] * 6), dtype=float),
            residual=float(d["residual"]),
            grid_spec=dict(d.get("grid_spec", {})),
            objective=d.get("objective"),
        )

    def impulses(self) -> list[tuple[float, np.ndarray]]:
        return [(t, dv.copy()) for t, dv in self.burns]


def _empty_plan(p: ImpulsivePlanProblem) -> ManeuverPlan:
    return ManeuverPlan([], 0.0, np.zeros(6), np.zeros(6), 0.0, p.grid_spec(), 0.0)


# ---------------------------------------------------------------------------
# dual SOCP


@dataclass(frozen=True)
class DualSolution:
    eta: np.ndarray
    objective: float
    relative_gap: float
    max_constraint: float
    socp: SocpResult


def _row_scaling(Bs: np.ndarray) -> np.ndarray:
    s = np.max(np.linalg.norm(Bs, axis=2), axis=0)
    return np.where(s > 0, s, 1.0)


def solve_dual_socp(p: ImpulsivePlanProblem, grid=None) -> DualSolution:
    """Optimal dual direction ``eta`` and the minimum total delta-V."""
    grid = p.grid if grid is None else np.asarray(grid, dtype=float)
    dc = p.delta_c
    if not np.any(dc):
        raise ValidationError("target equals the initial constants; nothing to plan")
    Bs = np.array([p.basis.control_influence(t) for t in grid])
    # equilibrate the rows of c and the size of dc; the problem is invariant
    rs = _row_scaling(Bs)
    Bt = Bs / rs[None, :, None]
    dt = dc / rs
    dnorm = np.linalg.norm(dt)
    dt = dt / dnorm
    M = Bt.transpose(1, 0, 2).reshape(6, -1)
    proj = M @ np.linalg.lstsq(M, dt, rcond=None)[0]
    if np.linalg.norm(proj - dt) > REACH_TOL:
        raise ValidationError("target change is not reachable from this grid (dual problem unbounded)")
    # directions of eta outside the range of the influences are free and
    # earn nothing (dt lies in the range); solve for the minimum-norm optimum
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    U = U[:, sv > RANK_TOL * sv[0]]
    k = grid.size
    G = np.zeros((4 * k, U.shape[1]))
    h = np.zeros(4 * k)
    for j in range(k):
        h[4 * j] = 1.0
        G[4 * j + 1 : 4 * j + 4] = -Bt[j].T @ U
    res = solve_socp(-(U.T @ dt), G, h, 4, feas_tol=DUAL_FEAS_TOL)
    eta_t = U @ res.x
    # undo the row scaling; eta' dc and |B_c' eta| are unchanged by it
    eta = eta_t / rs
    objective = float(-res.primal_objective) * dnorm
    cons = np.linalg.norm(np.einsum("kij,i->kj", Bs, eta), axis=1)
    return DualSolution(eta, objective, res.relative_gap, float(cons.max()), res)


# ---------------------------------------------------------------------------
# primal plan from the dual


def _polish(Bs: np.ndarray, dc: np.ndarray, eta: np.ndarray, mags: np.ndarray, iters: int = 20):
    """Newton solve of the optimality conditions on a fixed active set.

    Unknowns ``eta`` and the magnitudes ``m_j``; equations
    ``|B_j' eta| = 1`` and ``sum_j m_j B_j u_j = dc`` with
    ``u_j = B_j' eta / |B_j' eta|``. Returns ``None`` when it fails to converge.
    """
    n = mags.size
    x = np.concatenate([eta, mags])
    scale = max(np.linalg.norm(dc), 1e-300)
    for _ in range(iters):
        e, m = x[:6], x[6:]
        g = np.einsum("kij,i->kj", Bs, e)
        gn = np.linalg.norm(g, axis=1)
        u = g / gn[:, None]
        F = np.concatenate([gn - 1.0, np.einsum("kij,kj,k->i", Bs, u, m) - dc])
        if np.linalg.norm(F[:n]) < 1e-14 and np.linalg.norm(F[n:]) < 1e-14 * scale:
            return e, m
        Jac = np.zeros((n + 6, 6 + n))
        Jac[:n, :6] = np.einsum("kj,kij->ki", u, Bs)
        Jac[n:, 6:] = np.einsum("kij,kj->ik", Bs, u)
        for k in range(n):
            proj = (np.eye(3) - np.outer(u[k], u[k])) / gn[k]
            Jac[n:, :6] += m[k] * Bs[k] @ proj @ Bs[k].T
        dx = np.linalg.lstsq(Jac, -F, rcond=None)[0]
        x = x + dx
        if not np.all(np.isfinite(x)):
            return None
    e, m = x[:6], x[6:]
    g = np.einsum("kij,i->kj", Bs, e)
    gn = np.linalg.norm(g, axis=1)
    F = np.concatenate([gn - 1.0, np.einsum("kij,kj,k->i", Bs, g / gn[:, None], m) - dc])
    if np.linalg.norm(F[:n]) < 1e-10 and np.linalg.norm(F[n:]) < RESIDUAL_TOL * scale:
        return e, m
    return None


def _magnitudes(Bs: np.ndarray, dirs: np.ndarray, dc: np.ndarray):
    M = np.einsum("kij,kj->ik", Bs, dirs)
    mags, _ = nnls(M, dc)
    return mags, M @ mags - dc


def _refine(grid: np.ndarray, active: np.ndarray, window) -> np.ndarray:
    pts = set(grid.tolist())
    for j in np.flatnonzero(active):
        if j > 0:
            pts.add(0.5 * (grid[j - 1] + grid[j]))
        if j < grid.size - 1:
            pts.add(0.5 * (grid[j] + grid[j + 1]))
    return np.array(sorted(p for p in pts if window[0] <= p <= window[1]))


def extract_plan(p: ImpulsivePlanProblem, dual: DualSolution | None = None, max_refinements: int = MAX_REFINEMENTS) -> ManeuverPlan:
    """Burn times, directions and magnitudes from the optimal dual.

    Active grid points are those with ``|B_c' eta| = 1`` within the active
    tolerance. If their magnitudes cannot reproduce ``dc`` the grid is
    refined around them and the dual re-solved.
    """
    dc = p.delta_c
    if not np.any(dc):
        return _empty_plan(p)
    grid = p.grid
    last = ""
    for attempt in range(max_refinements + 1):
        if dual is None or attempt > 0:
            dual = solve_dual_socp(p, grid)
        Bs = np.array([p.basis.control_influence(t) for t in grid])
        # work in the equilibrated coordinates used by the solver
        rs = _row_scaling(Bs)
        Bt = Bs / rs[None, :, None]
        dt = dc / rs
        u = np.einsum("kij,i->kj", Bs, dual.eta)
        nu = np.linalg.norm(u, axis=1)
        active = np.abs(nu - 1.0) < p.active_tol
        if not np.any(active):
            last = "no active grid points"
            grid = _refine(grid, nu >= nu.max() - p.active_tol, p.window)
            continue
        idx = np.flatnonzero(active)
        dirs = u[idx] / nu[idx, None]
        mags, r = _magnitudes(Bt[idx], dirs, dt)
        # spurious active points carry zero weight; drop them
        keep = mags > 0.0
        idx, dirs, mags = idx[keep], dirs[keep], mags[keep]
        eta = dual.eta
        if idx.size and np.linalg.norm(r) > RESIDUAL_TOL * np.linalg.norm(dt):
            # the interior-point dual is accurate to its gap only; sharpen it on the active set
            pol = _polish(Bt[idx], dt, dual.eta * rs, mags)
            if pol is not None and np.all(pol[1] > 0.0):
                eta = pol[0] / rs
                u_p = np.einsum("kij,i->kj", Bs[idx], eta)
                dirs = u_p / np.linalg.norm(u_p, axis=1)[:, None]
                mags, r = _magnitudes(Bt[idx], dirs, dt)
        if np.linalg.norm(r) <= RESIDUAL_TOL * np.linalg.norm(dt):
            burns = [(float(grid[j]), m * d) for j, m, d in zip(idx, mags, dirs)]
            achieved = sum(Bs[j] @ dv for j, (_, dv) in zip(idx, burns)) if burns else np.zeros(6)
            total = float(np.sum(mags))
            sub = p.with_grid(grid)
            return ManeuverPlan(
                burns,
                total,
                eta,
                achieved,
                float(np.linalg.norm(achieved - dc)),
                sub.grid_spec(),
                dual.objective,
            )
        last = f"active-set system residual {np.linalg.norm(r) / np.linalg.norm(dt):.3e}"
        grid = _refine(grid, active, p.window)
    raise ConvergenceError(f"could not extract a consistent burn plan after {max_refinements} refinements: {last}")


def refine_around(grid, times, factor: int = 10) -> np.ndarray:
    """Subdivide the grid intervals touching ``times`` into ``factor`` parts."""
    grid = np.asarray(grid, dtype=float)
    pts = set(grid.tolist())
    for t in times:
        j = int(np.argmin(np.abs(grid - t)))
        for a, b in ((j - 1, j), (j, j + 1)):
            if 0 <= a and b < grid.size:
                pts.update(np.linspace(grid[a], grid[b], factor + 1)[1:-1].tolist())
    return np.array(sorted(pts))


def plan_impulsive(p: ImpulsivePlanProblem, refine_factor: int | None = None) -> ManeuverPlan:
    """Solve, extract and optionally re-solve on a grid refined near the burns."""
    if not np.any(p.delta_c):
        return _empty_plan(p)
    plan = extract_plan(p, solve_dual_socp(p))
    if refine_factor and refine_factor > 1 and plan.burns:
        fine = p.with_grid(refine_around(p.grid, plan.times, refine_factor))
        plan = extract_plan(fine, solve_dual_socp(fine))
    return plan


# ---------------------------------------------------------------------------
# two-burn baseline


def _stm_between(source, t0: float, tf: float) -> np.ndarray:
    if isinstance(source, ModalBasis):
        return source.stm(tf, t0)
    if callable(source):
        return np.asarray(source(tf, t0), dtype=float)
    return np.asarray(source, dtype=float)


def two_burn_baseline(source, x0, x_target, t0: float, tf: float, basis: ModalBasis | None = None) -> ManeuverPlan:
    """Classic two-impulse transfer between fixed times.

    ``source`` is a basis, a callable ``Phi(tf, t0)`` or the 6x6 matrix
    itself. The first burn puts the coast on the target position at ``tf``;
    the second matches the target velocity.
    """
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(x_target, dtype=float)
    phi = _stm_between(source, t0, tf)
    rr, rv, vr, vv = phi[:3, :3], phi[:3, 3:], phi[3:, :3], phi[3:, 3:]
    if np.linalg.cond(rv) > 1e12:
        raise SingularityError("position-to-velocity block of the STM is singular for this transfer time")
    v0_req = np.linalg.solve(rv, xf[:3] - rr @ x0[:3])
    dv1 = v0_req - x0[3:]
    vf = vr @ x0[:3] + vv @ v0_req
    dv2 = xf[3:] - vf
    total = float(np.linalg.norm(dv1) + np.linalg.norm(dv2))
    basis = source if basis is None and isinstance(source, ModalBasis) else basis
    if basis is not None:
        achieved = basis.control_influence(t0) @ dv1 + basis.control_influence(tf) @ dv2
        dc = basis.constants_from_state(xf, tf) - basis.constants_from_state(x0, t0)
        residual = float(np.linalg.norm(achieved - dc))
    else:
        achieved = np.zeros(6)
        xe = phi @ np.concatenate([x0[:3], v0_req])
        xe[3:] += dv2
        residual = float(np.linalg.norm(xe - xf))
    spec = {"window": [t0, tf], "points": 2, "uniform": True, "times": [t0, tf]}
    return ManeuverPlan([(float(t0), dv1), (float(tf), dv2)], total, np.zeros(6), achieved, residual, spec, total)


# ---------------------------------------------------------------------------
# continuous LQR in c-space


@dataclass
class LqrPolicy:
    """Finite-horizon regulator ``u = -R^-1 B_c' K (c - c_ref)``."""

    basis: ModalBasis
    c_ref: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    t_span: tuple[float, float]
    _K: Callable[[float], np.ndarray]

    def gain(self, t: float) -> np.ndarray:
        return self._K(t)

    def __call__(self, t: float, c) -> np.ndarray:
        Bc = self.basis.control_influence(t)
        dc = np.asarray(c, dtype=float) - self.c_ref
        return -np.linalg.solve(self.R, Bc.T @ (self.gain(t) @ dc))


def _check_weights(Q, R, S):
    for name, M in (("Q", Q), ("S", S)):
        if M.shape != (6, 6) or np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) < -1e-12:
            raise ValidationError(f"{name} must be a 6x6 positive semidefinite matrix")
    if R.shape != (3, 3) or np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
        raise ValidationError("R must be a 3x3 positive definite matrix")


def lqr_cspace(basis: ModalBasis, c_ref, Q=None, R=None, S=None, t_span=None, tol: float = 1e-10) -> LqrPolicy:
    """Backward Riccati sweep ``K' = K B_c R^-1 B_c' K - Q``, ``K(tf) = S``.

    Defaults: ``Q = I``, ``S = 10 I``, ``R = I`` (see :func:`default_lqr_weights`
    for the bounded-acceleration choice of ``R``).
    """
    Q = np.eye(6) if Q is None else np.asarray(Q, dtype=float)
    S = 10.0 * np.eye(6) if S is None else np.asarray(S, dtype=float)
    R = np.eye(3) if R is None else np.asarray(R, dtype=float)
    _check_weights(Q, R, S)
    if t_span is None:
        t_span = (basis.t0, basis.t0 + basis.period)
    t0, tf = map(float, t_span)
    Rinv = np.linalg.inv(R)

    def rhs(t, k):
        K = k.reshape(6, 6)
        if not np.all(np.isfinite(K)) or np.abs(K).max() > RICCATI_BLOWUP:
            raise NumericalError(f"Riccati solution blew up at t={t!r}")
        Bc = basis.control_influence(t)
        dK = K @ Bc @ Rinv @ Bc.T @ K - Q
        return (0.5 * (dK + dK.T)).ravel()

    # large gains make the sweep stiff; an implicit method keeps it stable
    sol = integrate(rhs, S.ravel(), tf, t0, tol, method="Radau")
    return LqrPolicy(basis, np.asarray(c_ref, dtype=float), Q, R, S, (t0, tf), lambda t: np.asarray(sol(t)).reshape(6, 6))


@dataclass
class LqrRun:
    t: np.ndarray
    c: np.ndarray
    u: np.ndarray

    @property
    def peak_u(self) -> float:
        return float(np.max(np.linalg.norm(self.u, axis=1)))


def simulate_lqr(policy: LqrPolicy, c0, n_out: int = 201, tol: float = 1e-10) -> LqrRun:
    """Closed loop ``c' = B_c u`` for the unperturbed plant."""
    t0, tf = policy.t_span
    basis = policy.basis

    def rhs(t, c):
        return basis.control_influence(t) @ policy(t, c)

    sol = integrate(rhs, np.asarray(c0, dtype=float), t0, tf, tol, method="Radau")
    ts = np.linspace(t0, tf, n_out)
    cs = np.array([sol(t) for t in ts])
    us = np.array([policy(t, c) for t, c in zip(ts, cs)])
    return LqrRun(ts, cs, us)


def default_lqr_weights(
    basis: ModalBasis, c_ref, c0, t_span, u_max: float, iterations: int = 6, tol: float = 1e-6, rho_max: float = 1e12, rho_min: float = 1e-12
):
    """``Q = I``, ``S = 10 I`` and ``R = rho I`` with the smallest ``rho`` whose
    closed loop keeps the peak acceleration under ``u_max``.

    ``rho`` steps down from ``rho_max`` one decade at a time (small weights
    make the Riccati sweep stiff, so the search never goes further than it
    must) and the last decade is then bisected in log space.
    """
    Q, S = np.eye(6), 10.0 * np.eye(6)

    def ok(log_rho):
        try:
            pol = lqr_cspace(basis, c_ref, Q, 10.0**log_rho * np.eye(3), S, t_span, tol=tol)
            return simulate_lqr(pol, c0, n_out=101, tol=tol).peak_u <= u_max
        except NumericalError:
            return False

    hi = np.log10(rho_max)
    if not ok(hi):
        raise ValidationError("no admissible control weight keeps the acceleration bound")
    lo = hi - 1.0
    while lo >= np.log10(rho_min) and ok(lo):
        hi, lo = lo, lo - 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return Q, 10.0**hi * np.eye(3), S
