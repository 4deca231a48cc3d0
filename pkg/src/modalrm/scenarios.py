"""Scenario descriptions and the reference cases.

A scenario names one chief (Keplerian elements, a stored periodic orbit or
a halo family member) and one deputy (element offsets, an LVLH state or
modal constants), plus optional command sections. Files are TOML with
angles in degrees; CR3BP quantities are in LU/TU, and modal constants may
be given in units of ``alpha`` (applied only at input and output).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import tomli

from .constants import ALPHA_CR3BP, MU_EARTH, MU_EARTH_MOON
from .errors import ValidationError
from .integrate import DEFAULT_TOL, integrate
from .modal import ModalBasis
from .orbits import OrbitElements, elements_to_state, relative_state
from .periodic import PeriodicOrbit

CHIEF_KINDS = ("elements", "orbit_file", "halo")
DEPUTY_KINDS = ("delta_elements", "lvlh", "constants")
CONSTANT_UNITS = ("normalized", "raw")


@dataclass(frozen=True)
class ChiefSpec:
    kind: str
    elements: OrbitElements | None = None
    path: str | None = None
    family: str = "L2"
    branch: str = "northern"
    period_days: float | None = None
    mu: float | None = None


@dataclass(frozen=True)
class DeputySpec:
    kind: str
    values: tuple[float, ...]
    units: str = "normalized"
    factor: float = 1.0


@dataclass
class Scenario:
    name: str
    chief: ChiefSpec
    deputy: DeputySpec
    perturbation: str = "none"
    units: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    @property
    def is_cr3bp(self) -> bool:
        return self.chief.kind == "halo" or (self.chief.kind == "orbit_file" and _orbit_kind(self.chief.path) == "cr3bp")

    @property
    def alpha(self) -> float:
        return float(self.units.get("alpha", ALPHA_CR3BP if self.is_cr3bp else 1.0))

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    # -- construction ---------------------------------------------------------

    def orbit(self) -> PeriodicOrbit | None:
        c = self.chief
        if c.kind == "halo":
            return _halo(c.family, c.branch, float(c.period_days), self.tol)
        if c.kind == "orbit_file":
            return PeriodicOrbit.from_json(Path(c.path).read_text())
        return None

    def basis(self) -> ModalBasis:
        c = self.chief
        if c.kind == "elements":
            from .keplerian import CWBasis, EccentricBasis

            mu = c.mu or MU_EARTH
            if c.elements.e == 0.0:
                return CWBasis(c.elements.n(mu))
            return EccentricBasis(c.elements, mu)
        orbit = self.orbit()
        if orbit.kind == "keplerian":
            from .keplerian import EccentricBasis

            return EccentricBasis(orbit.elements, orbit.mu)
        return _floquet(orbit)

    def elements(self) -> OrbitElements:
        if self.chief.kind == "elements":
            return self.chief.elements
        orbit = self.orbit()
        if orbit is None or orbit.kind != "keplerian":
            raise ValidationError("this scenario has no Keplerian chief")
        return orbit.elements

    def initial_state(self, basis: ModalBasis) -> np.ndarray:
        """Deputy relative state at the basis epoch."""
        d = self.deputy
        v = np.asarray(d.values, dtype=float)
        if d.kind == "lvlh":
            return v * d.factor
        if d.kind == "constants":
            return basis.state_from_constants(self.to_normalized(basis, v, d.units, d.factor))
        oe = self.elements()
        mu = self.chief.mu or MU_EARTH
        od = OrbitElements(
            oe.a + v[0],
            oe.e + v[1],
            oe.i + math.radians(v[2]),
            oe.raan + math.radians(v[3]),
            oe.argp + math.radians(v[4]),
            oe.f0 + math.radians(v[5]),
        )
        return relative_state(elements_to_state(oe, mu), elements_to_state(od, mu), mu).as_vector()

    def initial_constants(self, basis: ModalBasis) -> np.ndarray:
        d = self.deputy
        if d.kind == "constants":
            return self.to_normalized(basis, np.asarray(d.values, dtype=float), d.units, d.factor)
        return basis.constants_from_state(self.initial_state(basis))

    @staticmethod
    def to_normalized(basis: ModalBasis, values, units: str, factor: float = 1.0) -> np.ndarray:
        v = np.asarray(values, dtype=float) * factor
        if units == "raw":
            return v * basis.scales
        if units == "normalized":
            return v
        raise ValidationError(f"unknown constant units {units!r}")


@lru_cache(maxsize=8)
def _halo(family: str, branch: str, period_days: float, tol: float) -> PeriodicOrbit:
    from .cr3bp import find_periodic_orbit

    return find_periodic_orbit(family, branch, period_days, tol=tol)


def _floquet(orbit: PeriodicOrbit):
    from .floquet import build_modal_basis

    return build_modal_basis(orbit)


def _orbit_kind(path: str | None) -> str:
    if path is None:
        raise ValidationError("orbit_file chief needs a path")
    return json.loads(Path(path).read_text()).get("kind", "")


# ---------------------------------------------------------------------------
# parsing


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ValidationError(f"missing '{key}' in [{where}]")
    return d[key]


def _six(values, where: str) -> tuple[float, ...]:
    try:
        v = tuple(float(x) for x in values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"[{where}] values must be numbers") from exc
    if len(v) != 6:
        raise ValidationError(f"[{where}] needs exactly six values")
    return v


def scenario_from_dict(d: dict, name: str = "scenario", base_dir: Path | None = None) -> Scenario:
    chief_d = dict(_require(d, "chief", "top level"))
    deputy_d = dict(_require(d, "deputy", "top level"))
    kind = chief_d.get("type", "elements")
    if kind not in CHIEF_KINDS:
        raise ValidationError(f"chief type must be one of {CHIEF_KINDS}")
    if kind == "elements":
        keys = ("a", "e", "i", "raan", "argp", "f0")
        missing = [k for k in keys if k not in chief_d]
        if missing:
            raise ValidationError(f"[chief] is missing {missing}")
        oe = OrbitElements.from_degrees(*(float(chief_d[k]) for k in keys))
        chief = ChiefSpec("elements", elements=oe, mu=chief_d.get("mu"))
    elif kind == "orbit_file":
        path = Path(_require(chief_d, "path", "chief"))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        chief = ChiefSpec("orbit_file", path=str(path))
    else:
        chief = ChiefSpec(
            "halo",
            family=str(chief_d.get("family", "L2")),
            branch=str(chief_d.get("branch", "northern")),
            period_days=float(_require(chief_d, "period_days", "chief")),
            mu=float(chief_d.get("mu_ratio", MU_EARTH_MOON)),
        )
    dkind = deputy_d.get("type", "delta_elements")
    if dkind not in DEPUTY_KINDS:
        raise ValidationError(f"deputy type must be one of {DEPUTY_KINDS}")
    units = d.get("units", {})
    dunits = str(deputy_d.get("units", "normalized"))
    if dkind == "constants" and dunits not in CONSTANT_UNITS:
        raise ValidationError(f"constant units must be one of {CONSTANT_UNITS}")
    factor = float(units.get("alpha", ALPHA_CR3BP)) if deputy_d.get("in_alpha", False) else 1.0
    deputy = DeputySpec(dkind, _six(_require(deputy_d, "values", "deputy"), "deputy"), dunits, factor)
    if dkind == "delta_elements" and kind == "halo":
        raise ValidationError("element offsets need a Keplerian chief")
    pert = str(d.get("perturbation", {}).get("model", "none")).lower()
    if pert not in ("none", "j2"):
        raise ValidationError("perturbation model must be 'none' or 'j2'")
    sections = {k: v for k, v in d.items() if k not in ("chief", "deputy", "perturbation", "units", "output", "name", "tolerances")}
    return Scenario(
        name=str(d.get("name", name)),
        chief=chief,
        deputy=deputy,
        perturbation=pert,
        units=dict(units),
        output=dict(d.get("output", {})),
        sections=sections,
        tol=float(d.get("tolerances", {}).get("integration", DEFAULT_TOL)),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    try:
        d = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return scenario_from_dict(d, name=path.stem, base_dir=path.parent)


# ---------------------------------------------------------------------------
# reference cases

TABLE1_ELEMENTS_DEG = (8600.0, 0.2, 25.0, 0.0, 270.001, 90.0)
TABLE1_DELTA = (0.0, 0.0002, 0.02, 0.0, 0.0, 0.003)
TABLE1_CONSTANTS = (4.3, 0.0, 7.07, 3.60, 3.61, -0.014)
TRANSFER_TARGET = (0.0, 0.0, 0.0, 0.0, 3.61, 0.0)
TRANSFER_WINDOW = (1590.6, 12724.7)
TRANSFER_GRID_POINTS = 100

STABLE_HALO_DAYS = 9.504
UNSTABLE_HALO_DAYS = 14.676
HALO_WINDOW = (1.90, 5.08)
# 15 samples; the tabulated maneuver times sit on this grid
HALO_GRID_START = 1.903
HALO_GRID_STEP = 0.2115
HALO_GRID_POINTS = 15

_TABLE1 = {
    "chief": dict(zip(("a", "e", "i", "raan", "argp", "f0"), TABLE1_ELEMENTS_DEG), type="elements"),
    "deputy": {"type": "delta_elements", "values": list(TABLE1_DELTA)},
}

BUILTIN = {
    "table1": {**_TABLE1, "name": "table1"},
    "table1-j2": {**_TABLE1, "name": "table1-j2", "perturbation": {"model": "j2"}, "propagate": {"periods": 3}},
    "keplerian-transfer": {
        **_TABLE1,
        "name": "keplerian-transfer",
        "plan": {
            "target": list(TRANSFER_TARGET),
            "window": list(TRANSFER_WINDOW),
            "grid_points": TRANSFER_GRID_POINTS,
            "two_burn": True,
        },
    },
    "cw": {
        "name": "cw",
        "chief": {"type": "elements", "a": 7000.0, "e": 0.0, "i": 30.0, "raan": 0.0, "argp": 0.0, "f0": 0.0},
        "deputy": {"type": "lvlh", "values": [0.5, 0.0, 0.2, 0.0, -0.001, 0.0]},
    },
    "halo-stable": {
        "name": "halo-stable",
        "chief": {"type": "halo", "family": "L2", "branch": "northern", "period_days": STABLE_HALO_DAYS},
        "deputy": {"type": "constants", "values": [0, 0, 0.2, 0.1, 0.08, 0], "units": "raw", "in_alpha": True},
        "modes": {"periods": 240, "points_per_period": 500},
    },
    "table2": {
        "name": "table2",
        "chief": {"type": "halo", "family": "L2", "branch": "northern", "period_days": STABLE_HALO_DAYS},
        "deputy": {"type": "constants", "values": [0, 0, 0.2, 0.1, 0.08, 0], "units": "raw", "in_alpha": True},
    },
    "table3": {
        "name": "table3",
        "chief": {"type": "halo", "family": "L2", "branch": "northern", "period_days": UNSTABLE_HALO_DAYS},
        "deputy": {"type": "constants", "values": [0.0] * 6, "units": "raw", "in_alpha": True},
        "plan": {
            "target": [0, 0, 0.3, 0, 0, 0],
            "target_units": "raw",
            "target_in_alpha": True,
            "window": list(HALO_WINDOW),
            "grid_start": HALO_GRID_START,
            "grid_step": HALO_GRID_STEP,
            "grid_points": HALO_GRID_POINTS,
        },
    },
    "table4": {
        "name": "table4",
        "chief": {"type": "halo", "family": "L2", "branch": "northern", "period_days": UNSTABLE_HALO_DAYS},
        "deputy": {"type": "constants", "values": [0.2, 0, 0, 0, 0, 0], "units": "raw", "in_alpha": True},
        "plan": {
            "target": [0.0] * 6,
            "target_units": "raw",
            "target_in_alpha": True,
            "window": list(HALO_WINDOW),
            "grid_start": HALO_GRID_START,
            "grid_step": HALO_GRID_STEP,
            "grid_points": HALO_GRID_POINTS,
        },
    },
}


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN:
        raise ValidationError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN)}")
    return scenario_from_dict(json.loads(json.dumps(BUILTIN[name])), name=name)


# ---------------------------------------------------------------------------
# planning helpers


def plan_grid(section: dict) -> tuple[tuple[float, float], np.ndarray]:
    window = tuple(float(x) for x in _require(section, "window", "plan"))
    if len(window) != 2:
        raise ValidationError("[plan] window needs two times")
    n = int(section.get("grid_points", 100))
    if "grid_step" in section:
        start = float(section.get("grid_start", window[0]))
        grid = start + float(section["grid_step"]) * np.arange(n)
    else:
        grid = np.linspace(window[0], window[1], n)
    return window, grid


def plan_problem(scn: Scenario, basis: ModalBasis, section: dict | None = None):
    from .control import ImpulsivePlanProblem

    section = scn.section("plan") if section is None else section
    window, grid = plan_grid(section)
    c0 = scn.initial_constants(basis)
    factor = scn.alpha if section.get("target_in_alpha", False) else 1.0
    target = Scenario.to_normalized(basis, _six(_require(section, "target", "plan"), "plan"), section.get("target_units", "normalized"), factor)
    return ImpulsivePlanProblem(basis, c0, target, window, grid=grid, active_tol=float(section.get("active_tol", 1e-6)))


@dataclass
class PlanCheck:
    t: np.ndarray
    x: np.ndarray
    c: np.ndarray
    c_final: np.ndarray
    closure: float
    # |x(tf) - Psi(tf) c*| relative to the larger of the target and free-drift
    # states at tf: insensitive to the conditioning of Psi(tf)
    state_closure: float = float("nan")
    condition: float = float("nan")


def verify_plan(basis: ModalBasis, c0, burns, t_span, c_target=None, n_out: int = 400, tol: float = 1e-12) -> PlanCheck:
    """Apply the burns to the state-space linear dynamics ``x' = A(t) x``.

    This integrates the plant directly (not the modal basis), so it is an
    independent check of the planned change in constants.
    """
    t0, tf = map(float, t_span)
    x = basis.state_from_constants(c0, t0)
    events = sorted((float(t), np.asarray(dv, dtype=float)) for t, dv in burns)
    cuts = sorted({t0, tf, *[t for t, _ in events if t0 < t < tf]})
    ts_out = np.linspace(t0, tf, n_out)
    out_t, out_x = [], []
    # linear dynamics: the absolute tolerance follows the size of the motion
    size = max([np.linalg.norm(x)] + [np.linalg.norm(dv) for _, dv in events])
    if c_target is not None:
        size = max(size, np.linalg.norm(basis.state_from_constants(c_target, tf)))
    atol = tol * size if size > 0 else tol

    def rhs(t, y):
        return basis.plant(t) @ y

    for a, b in zip(cuts[:-1], cuts[1:]):
        for t, dv in events:
            if t == a:
                x = x + np.concatenate([np.zeros(3), dv])
        sol = integrate(rhs, x, a, b, tol, atol=atol)
        sel = ts_out[(ts_out >= a) & ((ts_out < b) | (b == tf))]
        for t in sel:
            out_t.append(t)
            out_x.append(np.asarray(sol(t)))
        x = sol.y_final
    for t, dv in events:
        if t == tf:
            x = x + np.concatenate([np.zeros(3), dv])
    if out_t and out_t[-1] == tf:
        out_x[-1] = x.copy()
    xs = np.array(out_x)
    cs = np.array([basis.constants_from_state(xx, t) for t, xx in zip(out_t, xs)])
    c_final = basis.constants_from_state(x, tf)
    closure = state_closure = float("nan")
    if c_target is not None:
        closure = float(np.linalg.norm(c_final - np.asarray(c_target)))
        x_target = basis.state_from_constants(c_target, tf)
        ref = max(np.linalg.norm(x_target), np.linalg.norm(basis.state_from_constants(c0, tf)), 1e-300)
        state_closure = float(np.linalg.norm(x - x_target) / ref)
    return PlanCheck(np.array(out_t), xs, cs, c_final, closure, state_closure, basis.condition(tf))
