"""Common interface for modal bases.

A basis supplies ``raw_psi(t)``: the 6x6 fundamental matrix whose columns
are the unnormalized modes. Normalization divides each column by the
maximum position norm that mode reaches over one period starting at the
epoch, so ``psi(t) = raw_psi(t) / scales`` and normalized constants are
``c_bar = c * scales`` (same physical state).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .errors import SingularityError

NORM_SAMPLES = 720
COND_WARN = 1e10


class ModalBasis:
    """Six fundamental solutions of a periodic linear relative-motion system.

    Subclasses implement :meth:`raw_psi` (and usually :meth:`plant` and
    :meth:`raw_lf_transform`). Construction computes the normalization.
    """

    kind = "abstract"

    def __init__(self, t0: float, period: float, scales=None):
        self.t0 = float(t0)
        self.period = float(period)
        if scales is None:
            scales = self._position_maxima()
        self.scales = np.asarray(scales, dtype=float)

    def raw_psi(self, t: float) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def plant(self, t: float) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def raw_lf_transform(self, t: float) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _position_maxima(self) -> np.ndarray:
        ts = self.t0 + np.linspace(0.0, self.period, NORM_SAMPLES + 1)
        norms = np.array([np.linalg.norm(self.raw_psi(t)[:3], axis=0) for t in ts])
        h = ts[1] - ts[0]
        out = np.empty(6)
        for i in range(6):
            k = int(np.argmax(norms[:, i]))
            lo, hi = max(ts[0], ts[k] - h), min(ts[-1], ts[k] + h)
            res = minimize_scalar(
                lambda t, i=i: -np.linalg.norm(self.raw_psi(t)[:3, i]),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-10 * self.period},
            )
            out[i] = max(norms[k, i], -res.fun)
        if np.any(out <= 0):
            raise SingularityError("a mode has zero position extent; cannot normalize")
        return out

    # -- normalized evaluation ---------------------------------------------

    def psi(self, t: float) -> np.ndarray:
        """Normalized fundamental matrix at time ``t``."""
        return self.raw_psi(t) / self.scales

    def mode(self, i: int, t: float) -> np.ndarray:
        """Normalized mode ``i`` (1-based) at time ``t``."""
        return self.psi(t)[:, i - 1]

    def lf_transform(self, t: float) -> np.ndarray:
        return self.raw_lf_transform(t)

    def psi_lu(self, t: float):
        psi = self.psi(t)
        lu = sla.lu_factor(psi)
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
            raise SingularityError(f"fundamental matrix singular at t={t}")
        return lu

    def constants_from_state(self, x, t: float | None = None) -> np.ndarray:
        """Normalized constants ``c`` with ``psi(t) c = x``."""
        t = self.t0 if t is None else t
        x = x.as_vector() if hasattr(x, "as_vector") else np.asarray(x, dtype=float)
        return sla.lu_solve(self.psi_lu(t), x)

    def state_from_constants(self, c, t: float | None = None) -> np.ndarray:
        t = self.t0 if t is None else t
        return self.psi(t) @ np.asarray(c, dtype=float)

    def control_influence(self, t: float) -> np.ndarray:
        """``B_c(t) = psi(t)^-1 [0; I]``: change in c per unit velocity impulse."""
        lu = self.psi_lu(t)
        Bx = np.vstack([np.zeros((3, 3)), np.eye(3)])
        return sla.lu_solve(lu, Bx)

    def condition(self, t: float) -> float:
        return float(np.linalg.cond(self.psi(t)))

    def stm(self, t: float, t_from: float | None = None) -> np.ndarray:
        """Transition matrix of the linear system implied by the basis."""
        t_from = self.t0 if t_from is None else t_from
        return self.raw_psi(t) @ np.linalg.inv(self.raw_psi(t_from))
