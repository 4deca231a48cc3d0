"""Lyapunov-Floquet machinery for periodic linear systems.

Given a periodic reference orbit and its linearized plant ``A(t)``, the
monodromy matrix is decomposed into its real Jordan structure, the LTI
generator ``Lambda = ln(Phi(t0 + T, t0)) / T`` is assembled blockwise and the
fundamental modal solutions ``psi_i(t) = P(t) eta_i(t - t0)`` follow with
``P(t) = Phi(t, t0) exp(-Lambda (t - t0))``.

Mode ordering: trivial (periodic), drift, center pairs by decreasing
frequency, then real modes (stable before unstable). Any extra unity
multipliers (the Keplerian case) are trivial modes placed after the drift
pair.

Eigenvector conventions (they fix the otherwise arbitrary sign and phase of
each mode): every eigenvector is scaled to unit Euclidean norm with its
largest-magnitude component real and positive; the representative of a
center pair is the multiplier with positive imaginary part, ``e^{i w T}``
with ``w > 0``, written ``v = v_R + i v_I``. For the unity pair ``v1`` is the unit state rate at the
epoch when one is available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import SingularityError, ValidationError
from .modal import ModalBasis
from .periodic import DenseStm, PeriodicOrbit, propagate_stm

UNITY_TOL = 1e-4
DET_TOL = 1e-6
VBAR_COND_MAX = 1e12
RANK_RTOL = 1e-8

TRIVIAL = "trivial"
DRIFT = "drift"
CENTER = "center"
STABLE = "stable"
UNSTABLE = "unstable"


def _phase_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    v[k] = abs(v[k])
    return v


def _sign_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v if v[k] > 0 else -v


@dataclass(frozen=True)
class Monodromy:
    """Eigenstructure of ``Phi(t0 + T, t0)`` arranged in mode order.

    ``eigenvalues[i]`` and ``eigenvectors[:, i]`` belong to mode ``i``; for a
    center pair the two slots hold the representative and its conjugate.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    classification: tuple[str, ...]
    v1: np.ndarray
    v2: np.ndarray
    defective: bool
    det: float
    pairing_error: float

    @property
    def multipliers(self) -> np.ndarray:
        return self.eigenvalues


def _pairing_error(w: np.ndarray) -> float:
    """Largest deviation of the multipliers from reciprocal pairing."""
    w = np.asarray(w, dtype=complex)
    used = np.zeros(len(w), dtype=bool)
    worst = 0.0
    for i in np.argsort(-np.abs(w)):
        if used[i]:
            continue
        used[i] = True
        cand = [j for j in range(len(w)) if not used[j]]
        if not cand:
            worst = max(worst, abs(w[i] - 1.0))
            break
        errs = [abs(w[i] * w[j] - 1.0) for j in cand]
        j = cand[int(np.argmin(errs))]
        used[j] = True
        worst = max(worst, min(errs))
    return float(worst)


def analyze_monodromy(phi_T, rate=None, unity_tol: float = UNITY_TOL) -> Monodromy:
    """Classify the Floquet multipliers and build the Jordan basis.

    ``rate`` is the orbit state rate at the epoch; for an autonomous system
    it spans the eigenspace of the unity multiplier. Without it the unity
    chain is taken from the range of ``Phi - I``.
    """
    M = np.asarray(phi_T, dtype=float)
    if M.shape != (6, 6) or not np.all(np.isfinite(M)):
        raise ValidationError("monodromy must be a finite 6x6 matrix")
    det = float(np.linalg.det(M))
    if abs(det - 1.0) > DET_TOL:
        raise ValidationError(f"monodromy determinant {det:.12g} differs from 1")
    N = M - np.eye(6)
    scale = max(1.0, np.abs(M).max())
    if np.abs(N).max() < 1e-10 * scale:
        raise ValidationError(
            "monodromy equals the identity: every multiplier is unity and the "
            "system has no drift structure (outside the supported orbit classes)"
        )

    w, V = np.linalg.eig(M)
    unity = np.abs(w - 1.0) < unity_tol
    n_unity = int(unity.sum())
    if n_unity not in (2, 4, 6):
        raise ValidationError(f"expected a unity multiplier pair, found {n_unity} multipliers near 1")

    # Jordan chain of the unity eigenvalue
    U, s, Wt = np.linalg.svd(N)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    defect = 6 - n_unity  # rank of N expected if the unity block is one 2x2 Jordan block
    if rank <= defect:
        raise ValidationError("unity multipliers are not defective; drift mode undefined")
    if rank > defect + 1:
        raise ValidationError("more than one defective unity block")
    defective = True

    Z = Wt[rank:].T  # null space of Phi - I
    if rate is not None and n_unity == 2:
        v1 = np.asarray(rate, dtype=float) / np.linalg.norm(rate)
    else:
        # eigenvector heading the chain: in the null space and in the range
        Ur = U[:, :rank]
        resid = Z - Ur @ (Ur.T @ Z)
        z = np.linalg.svd(resid)[2][-1]
        v1 = _sign_normalize(Z @ z)

    # (Phi - I) v2 = v1 restricted to the range of (Phi - I)
    sinv = np.where(np.arange(6) < rank, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    v2 = Wt.T @ (sinv * (U.T @ v1))
    v2 = v2 - (v1 @ v2) * v1

    slots_vals: list[complex] = [1.0 + 0j, 1.0 + 0j]
    slots_vecs: list[np.ndarray] = [v1.astype(complex), v2.astype(complex)]
    classes: list[str] = [TRIVIAL, DRIFT]

    # remaining trivial modes: unity eigenspace orthogonal to v1
    if n_unity > 2:
        null = Z - np.outer(v1, v1 @ Z)
        q, r = np.linalg.qr(null)
        keep = np.abs(np.diag(r)) > 1e-6
        q = q[:, keep][:, : n_unity - 2]
        if q.shape[1] != n_unity - 2:
            raise ValidationError("could not resolve the unity eigenspace")
        for k in range(q.shape[1]):
            slots_vals.append(1.0 + 0j)
            slots_vecs.append(_sign_normalize(q[:, k]).astype(complex))
            classes.append(TRIVIAL)

    rest = [i for i in range(6) if not unity[i]]
    centers, reals = [], []
    used = set()
    for i in rest:
        if i in used:
            continue
        lam = w[i]
        if abs(lam.imag) > 1e-9 * max(1.0, abs(lam)):
            j = min((k for k in rest if k != i and k not in used), key=lambda k: abs(w[k] - np.conj(lam)))
            used.update((i, j))
            if abs(abs(lam) - 1.0) > 1e-4:
                raise ValidationError("complex multiplier quadruplet off the unit circle is not supported")
            k = i if lam.imag > 0 else j
            centers.append((w[k], V[:, k]))
        else:
            used.add(i)
            if lam.real < 0:
                raise ValidationError(
                    f"negative real multiplier {lam.real:.6g} needs a complex logarithm branch; unsupported"
                )
            reals.append((lam.real, V[:, i].real))

    centers.sort(key=lambda p: -np.angle(p[0]))  # highest frequency first
    for lam, vec in centers:
        u = _phase_normalize(vec)
        slots_vals += [lam, np.conj(lam)]
        slots_vecs += [u, np.conj(u)]
        classes += [CENTER, CENTER]
    reals.sort(key=lambda p: p[0])
    for lam, vec in reals:
        if abs(lam - 1.0) < unity_tol:
            raise ValidationError("unexpected extra unity multiplier")
        slots_vals.append(complex(lam))
        slots_vecs.append(_sign_normalize(vec).astype(complex))
        classes.append(STABLE if lam < 1.0 else UNSTABLE)

    return Monodromy(
        matrix=M,
        eigenvalues=np.array(slots_vals),
        eigenvectors=np.column_stack(slots_vecs),
        classification=tuple(classes),
        v1=v1,
        v2=v2,
        defective=defective,
        det=det,
        pairing_error=_pairing_error(w),
    )


@dataclass(frozen=True)
class LtiBlock:
    kind: str  # "jordan", "trivial", "center", "real"
    columns: tuple[int, ...]
    rate: float = 0.0  # omega for centers, ln(lambda)/T for real modes


@dataclass(frozen=True)
class LtiForm:
    """Real LTI generator ``Lambda`` with its block structure.

    ``W`` holds the real Jordan basis (``v1, v2, u_R, u_I, ..., v_real``) and
    ``B`` the block-diagonal generator in that basis: ``Lambda = W B W^-1``.
    """

    Lambda: np.ndarray
    W: np.ndarray
    B: np.ndarray
    blocks: tuple[LtiBlock, ...]
    period: float

    @property
    def frequencies(self) -> list[float]:
        return [b.rate for b in self.blocks if b.kind == "center"]

    @property
    def exponents(self) -> list[float]:
        return [b.rate for b in self.blocks if b.kind == "real"]

    def expm_error(self, phi_T) -> float:
        return float(np.abs(sla.expm(self.Lambda * self.period) - np.asarray(phi_T)).max())


def compute_lti(m: Monodromy, T: float) -> LtiForm:
    """Blockwise real logarithm of the monodromy matrix."""
    T = float(T)
    W = np.zeros((6, 6))
    B = np.zeros((6, 6))
    blocks = []
    cls = m.classification
    i = 0
    while i < 6:
        c = cls[i]
        if c == DRIFT:
            i += 1
            continue
        if c == TRIVIAL and i + 1 < 6 and cls[i + 1] == DRIFT:
            W[:, i], W[:, i + 1] = m.v1, m.v2
            B[i, i + 1] = 1.0 / T
            blocks.append(LtiBlock("jordan", (i, i + 1)))
            i += 2
        elif c == TRIVIAL:
            W[:, i] = m.eigenvectors[:, i].real
            blocks.append(LtiBlock("trivial", (i,)))
            i += 1
        elif c == CENTER:
            u = m.eigenvectors[:, i]
            omega = np.angle(m.eigenvalues[i]) / T
            W[:, i], W[:, i + 1] = u.real, u.imag
            # Lambda u = i omega u
            B[i + 1, i] = -omega
            B[i, i + 1] = omega
            blocks.append(LtiBlock("center", (i, i + 1), float(omega)))
            i += 2
        else:
            lam = m.eigenvalues[i].real
            W[:, i] = m.eigenvectors[:, i].real
            B[i, i] = np.log(lam) / T
            blocks.append(LtiBlock("real", (i,), float(np.log(lam) / T)))
            i += 1
    Lam = W @ B @ np.linalg.inv(W)
    return LtiForm(Lambda=Lam, W=W, B=B, blocks=tuple(blocks), period=T)


def lf_transform(stm: DenseStm, lti: LtiForm, t: float) -> np.ndarray:
    """``P(t) = Phi(t, t0) exp(-Lambda (t - t0))``."""
    tau = t - stm.t0
    return stm(t) @ sla.expm(-lti.Lambda * tau)


def modal_matrix(lti: LtiForm) -> np.ndarray:
    """``V_bar``: initial values of the real generators (centers doubled)."""
    V = lti.W.copy()
    for b in lti.blocks:
        if b.kind == "center":
            i, j = b.columns
            V[:, i] = 2.0 * lti.W[:, i]
            V[:, j] = -2.0 * lti.W[:, j]
    return V


def eta(lti: LtiForm, tau: float) -> np.ndarray:
    """Real generators ``eta_i(tau) = exp(Lambda tau) V_bar e_i`` in closed form."""
    W, T = lti.W, lti.period
    out = np.zeros((6, 6))
    for b in lti.blocks:
        if b.kind == "jordan":
            i, j = b.columns
            out[:, i] = W[:, i]
            out[:, j] = W[:, i] * tau / T + W[:, j]
        elif b.kind == "trivial":
            out[:, b.columns[0]] = W[:, b.columns[0]]
        elif b.kind == "center":
            i, j = b.columns
            ct, st = np.cos(b.rate * tau), np.sin(b.rate * tau)
            uR, uI = W[:, i], W[:, j]
            out[:, i] = 2.0 * (uR * ct - uI * st)
            out[:, j] = -2.0 * (uR * st + uI * ct)
        else:
            k = b.columns[0]
            out[:, k] = W[:, k] * np.exp(b.rate * tau)
    return out


class FloquetBasis(ModalBasis):
    """Numerical modal basis of a periodic orbit.

    ``raw_psi(t) = P(t) eta(t - t0) = Phi(t, t0) V_bar``; columns at the epoch
    are the unit eigenvectors (centers doubled), and the normalized basis
    divides by each mode's maximum position norm over one period.
    """

    kind = "floquet"

    def __init__(self, orbit: PeriodicOrbit, stm: DenseStm, plant=None, plant_name: str | None = None, rate=None):
        self.orbit = orbit
        self._stm = stm
        self._plant = plant
        self.plant_name = plant_name
        self.monodromy = analyze_monodromy(stm.monodromy, rate=rate)
        self.lti = compute_lti(self.monodromy, stm.period)
        self.V_bar = modal_matrix(self.lti)
        cond = np.linalg.cond(self.V_bar)
        if not np.isfinite(cond) or cond > VBAR_COND_MAX:
            raise SingularityError(f"modal matrix ill-conditioned (cond = {cond:.3g})")
        super().__init__(stm.t0, stm.period)

    @property
    def classification(self) -> tuple[str, ...]:
        return self.monodromy.classification

    @property
    def frequencies(self) -> list[float]:
        return self.lti.frequencies

    def state_stm(self, t: float) -> np.ndarray:
        return self._stm(t)

    def raw_psi(self, t: float) -> np.ndarray:
        return self._stm(t) @ self.V_bar

    def raw_lf_transform(self, t: float) -> np.ndarray:
        return lf_transform(self._stm, self.lti, t)

    def eta(self, t: float) -> np.ndarray:
        return eta(self.lti, t - self.t0)

    def plant(self, t: float) -> np.ndarray:
        if self._plant is None:
            raise ValidationError("basis has no plant callback")
        return self._plant(t)

    def stm(self, t: float, t_from: float | None = None) -> np.ndarray:
        if t_from is None or t_from == self.t0:
            return self._stm(t)
        return self._stm(t) @ np.linalg.inv(self._stm(t_from))

    # -- persistence ------------------------------------------------------------

    def to_dict(self) -> dict:
        if self.plant_name is None:
            raise ValidationError("only bases built on a named plant can be serialized")
        return {
            "kind": self.kind,
            "plant": self.plant_name,
            "orbit": self.orbit.to_dict(),
            "classification": list(self.classification),
            "frequencies": self.frequencies,
            "scales": self.scales.tolist(),
            # informational: reloading rebuilds these from the orbit
            "Lambda": self.lti.Lambda.tolist(),
            "blocks": [{"kind": b.kind, "columns": list(b.columns), "rate": b.rate} for b in self.lti.blocks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FloquetBasis":
        """Rebuild from the orbit description; the STM is re-integrated."""
        if d.get("kind") != cls.kind:
            raise ValidationError("not a serialized Floquet basis")
        return build_modal_basis(PeriodicOrbit.from_dict(d["orbit"]))

    @classmethod
    def from_json(cls, text: str) -> "FloquetBasis":
        return cls.from_dict(json.loads(text))


def build_modal_basis(orbit: PeriodicOrbit, plant=None, tol: float | None = None) -> FloquetBasis:
    """Modal basis of ``orbit``.

    Without ``plant`` the orbit's own linearization is used: the CR3BP
    variational equations in rotating coordinates, or the LVLH relative
    motion plant for a Keplerian chief.
    """
    tol = orbit.tol if tol is None else tol
    if plant is None:
        if orbit.kind == "cr3bp":
            return FloquetBasis(orbit, orbit.stm, orbit.plant, "cr3bp", rate=orbit.rate(orbit.t0))
        from .keplerian import keplerian_plant

        plant = keplerian_plant(orbit.elements, orbit.mu)
        return FloquetBasis(orbit, propagate_stm(plant, orbit.t0, orbit.period, tol), plant, "keplerian-lvlh")
    return FloquetBasis(orbit, propagate_stm(plant, orbit.t0, orbit.period, tol), plant)
