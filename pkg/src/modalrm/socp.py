"""Small dense second-order cone programs.

Solves the conic pair

    primal:  minimize  c'x   s.t.  G x + s = h,  s in K
    dual:    maximize -h'z   s.t.  G'z + c = 0,  z in K

where ``K`` is a product of second-order cones
``{(u0, u1) : u0 >= |u1|}``. The method is an infeasible-start primal-dual
path-following scheme with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step; the reduced Newton system has the size of ``x``,
which is tiny for the impulsive planning problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConvergenceError

GAP_TOL = 1e-9
FEAS_TOL = 1e-10
MAX_ITER = 200
STEP_FRACTION = 0.99
MIN_STEP = 1e-12
# accepted loosening of the tolerances when the iteration stalls at roundoff
REDUCED_ACCURACY = 1e3


@dataclass(frozen=True)
class SocpResult:
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    iterations: int
    status: str = "optimal"

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, abs(self.primal_objective))


def _jdot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hyperbolic inner products ``u0 v0 - u1.v1`` per cone (rows)."""
    return u[:, 0] * v[:, 0] - np.einsum("ij,ij->i", u[:, 1:], v[:, 1:])


def _cone_norm(u: np.ndarray) -> np.ndarray:
    """``sqrt(u0^2 - |u1|^2)`` in factored form, accurate near the boundary."""
    r = np.linalg.norm(u[:, 1:], axis=1)
    return np.sqrt((u[:, 0] - r) * (u[:, 0] + r))


def _jordan(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    out[:, 0] = np.einsum("ij,ij->i", u, v)
    out[:, 1:] = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
    return out


def _jordan_solve(lam: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve ``lam o u = r`` for ``u`` cone by cone (closed-form arrow inverse)."""
    l0 = lam[:, 0]
    l1 = lam[:, 1:]
    r0 = r[:, 0]
    r1 = r[:, 1:]
    det = l0 * l0 - np.einsum("ij,ij->i", l1, l1)
    l1r1 = np.einsum("ij,ij->i", l1, r1)
    u0 = (l0 * r0 - l1r1) / det
    u1 = (r1 - l1 * u0[:, None]) / l0[:, None]
    return np.column_stack([u0, u1])


class _NtScaling:
    """Nesterov-Todd scaling ``W`` with ``W s = W^-1 z = lambda``.

    Per cone ``W^-1 = beta (2 v v' - J)`` with ``v`` of unit hyperbolic norm
    (a hyperbolic Householder reflection), so both ``W`` and its inverse
    are applied in O(n).
    """

    def __init__(self, s: np.ndarray, z: np.ndarray):
        a = _cone_norm(s)
        b = _cone_norm(z)
        sb = s / a[:, None]
        zb = z / b[:, None]
        gam = np.sqrt((1.0 + np.einsum("ij,ij->i", sb, zb)) / 2.0)
        w = np.empty_like(s)
        w[:, 0] = sb[:, 0] + zb[:, 0]
        w[:, 1:] = sb[:, 1:] - zb[:, 1:]
        w /= (2.0 * gam)[:, None]
        v = w.copy()
        v[:, 0] += 1.0
        v /= np.sqrt(2.0 * v[:, 0])[:, None]
        self.beta = np.sqrt(a / b)
        self.v = v

    def _apply(self, u: np.ndarray, reflect_j: bool, factor: np.ndarray) -> np.ndarray:
        v = self.v.copy()
        if reflect_j:
            v[:, 1:] *= -1.0
        vu = np.einsum("ij,ij->i", v, u)
        out = 2.0 * v * vu[:, None]
        out[:, 0] -= u[:, 0]
        out[:, 1:] += u[:, 1:]
        return out * factor[:, None]

    def mul(self, u):
        # W = (2 Jv (Jv)' - J) / beta
        return self._apply(u, True, 1.0 / self.beta)

    def inv(self, u):
        return self._apply(u, False, self.beta)


def _interior_shift(u: np.ndarray) -> float:
    """Multiple of the identity that moves ``u`` strictly inside the cones."""
    t = float(np.max(np.linalg.norm(u[:, 1:], axis=1) - u[:, 0]))
    return 0.0 if t < 0.0 else 1.0 + t


def _max_step(u: np.ndarray, du: np.ndarray) -> float:
    """Largest ``alpha`` keeping ``u + alpha du`` in the cone (``u`` interior)."""
    a = _jdot(du, du)
    b = _jdot(u, du)
    c = _jdot(u, u)
    alpha = np.inf
    for ai, bi, ci, u0, d0 in zip(a, b, c, u[:, 0], du[:, 0]):
        cands = []
        if d0 < 0:
            cands.append(-u0 / d0)
        if abs(ai) < 1e-300:
            if bi < 0:
                cands.append(-ci / (2.0 * bi))
        else:
            disc = bi * bi - ai * ci
            if disc >= 0:
                sq = np.sqrt(disc)
                # stable roots of a t^2 + 2 b t + c
                q = -(bi + np.copysign(sq, bi))
                roots = [q / ai, ci / q if q != 0 else np.inf]
                cands += [r for r in roots if r > 0]
        if cands:
            alpha = min(alpha, min(cands))
    return float(alpha)


def _stalled(best, gap_tol: float, feas_tol: float) -> SocpResult:
    x, s, z, pcost, dcost, gap, it, pres, dres, rel_gap = best
    f = REDUCED_ACCURACY
    if pres < f * feas_tol and dres < f * feas_tol and rel_gap < f * gap_tol:
        return SocpResult(x, s.ravel(), z.ravel(), pcost, dcost, gap, it, "reduced_accuracy")
    raise ConvergenceError(
        f"SOCP interior-point method stalled at iteration {it} "
        f"(gap {gap:.3e}, primal res {pres:.3e}, dual res {dres:.3e})"
    )


def solve_socp(
    c: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    cone_dim: int,
    gap_tol: float = GAP_TOL,
    feas_tol: float = FEAS_TOL,
    max_iter: int = MAX_ITER,
) -> SocpResult:
    """Primal-dual interior-point solution of a product-of-cones SOCP.

    All cones share the dimension ``cone_dim``; ``G`` has ``m * cone_dim``
    rows ordered cone by cone.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n = c.size
    m = h.size // cone_dim
    if h.size != m * cone_dim or G.shape != (h.size, n):
        raise ValueError("inconsistent SOCP dimensions")
    Gb = G.reshape(m, cone_dim, n)
    hb = h.reshape(m, cone_dim)

    e = np.zeros((m, cone_dim))
    e[:, 0] = 1.0
    # least-squares primal and least-norm dual points pushed into the cones
    x = np.linalg.lstsq(G, h, rcond=None)[0]
    s = hb - (Gb @ x)
    z = np.linalg.lstsq(G.T, -c, rcond=None)[0].reshape(m, cone_dim)
    s = s + _interior_shift(s) * e
    z = z + _interior_shift(z) * e

    resx0 = max(1.0, np.linalg.norm(c))
    resz0 = max(1.0, np.linalg.norm(h))
    for it in range(max_iter + 1):
        rx = np.einsum("kin,ki->n", Gb, z) + c
        rz = (Gb @ x) + s - hb
        gap = float(np.sum(s * z))
        pcost = float(c @ x)
        dcost = float(-np.sum(hb * z))
        pres = np.linalg.norm(rz) / resz0
        dres = np.linalg.norm(rx) / resx0
        rel_gap = gap / max(1.0, abs(pcost), abs(dcost))
        if pres < feas_tol and dres < feas_tol and rel_gap < gap_tol:
            return SocpResult(x, s.ravel(), z.ravel(), pcost, dcost, gap, it)
        if it == max_iter:
            break
        best = (x, s, z, pcost, dcost, gap, it, pres, dres, rel_gap)

        with np.errstate(divide="ignore", invalid="ignore"):
            W = _NtScaling(s, z)
        if not (np.all(np.isfinite(W.beta)) and np.all(np.isfinite(W.v))):
            return _stalled(best, gap_tol, feas_tol)
        lam = W.mul(s)
        mu = gap / m
        # scaled Newton system solved through a QR factorization of W G
        A = np.stack([W.mul(Gb[:, :, i]) for i in range(n)], axis=-1).reshape(m * cone_dim, n)
        Q, R = np.linalg.qr(A)
        wrz = W.mul(rz).ravel()

        def solve_newton(rc):
            # lam o (W ds + W^-1 dz) = rc
            bvec = _jordan_solve(lam, rc).ravel() + wrz
            y = solve_triangular(R, -rx, trans="T")
            dx = solve_triangular(R, -(Q.T @ bvec) - y)
            dz = W.mul((bvec + A @ dx).reshape(m, cone_dim))
            # primal block taken directly so feasibility is not lost to W conditioning
            ds = -rz - Gb @ dx
            return dx, ds, dz

        # predictor
        dx_a, ds_a, dz_a = solve_newton(-_jordan(lam, lam))
        a_aff = min(1.0, _max_step(s, ds_a), _max_step(z, dz_a))
        gap_aff = float(np.sum((s + a_aff * ds_a) * (z + a_aff * dz_a)))
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3
        # corrector
        rc = -_jordan(lam, lam) - _jordan(W.mul(ds_a), W.inv(dz_a)) + sigma * mu * e
        dx, ds, dz = solve_newton(rc)
        alpha = min(1.0, STEP_FRACTION * min(_max_step(s, ds), _max_step(z, dz)))
        if not (alpha > MIN_STEP and np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
            return _stalled(best, gap_tol, feas_tol)
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz

    raise ConvergenceError(
        f"SOCP interior-point method did not converge in {max_iter} iterations "
        f"(gap {gap:.3e}, primal res {pres:.3e}, dual res {dres:.3e})"
    )
