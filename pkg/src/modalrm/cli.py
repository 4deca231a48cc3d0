"""Command-line front end.

Commands: ``modes``, ``constants``, ``propagate``, ``plan``, ``sweep`` and
``halo``. A scenario comes from ``--config file.toml`` or a built-in
``--scenario name``. Exit codes: 0 success, 2 validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .integrate import DEFAULT_TOL
from .scenarios import BUILTIN, Scenario, builtin_scenario, load_scenario, plan_problem, verify_plan

log = logging.getLogger("modalrm")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

MODE_POINTS_PER_PERIOD = 500
STATE_COLS = ["x", "y", "z", "xd", "yd", "zd"]
C_COLS = [f"c{i}" for i in range(1, 7)]


# ---------------------------------------------------------------------------
# output helpers


def _write_table(path: Path, header: list[str], rows, fmt: str) -> Path:
    path = path.with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        data = [dict(zip(header, r)) for r in rows]
        path.write_text(json.dumps({"columns": header, "rows": data}, indent=1))
        return path
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2))
    return path


def _emit(report: dict, fmt: str, text: str):
    if fmt == "json":
        print(json.dumps(report, indent=2))
    else:
        print(text)


def _vec(v, digits: int = 6) -> str:
    return "(" + ", ".join(f"{float(x):.{digits}g}" for x in v) + ")"


# ---------------------------------------------------------------------------
# context


class Context:
    def __init__(self, args):
        self.args = args
        self.fmt = getattr(args, "format", None) or "csv"
        self.scenario = _scenario(args)
        if getattr(args, "tol", None) is not None:
            self.scenario.tol = float(args.tol)
        out = getattr(args, "out", None) or self.scenario.output.get("dir", "out")
        self.out = Path(out)
        self._basis = None

    @property
    def basis(self):
        if self._basis is None:
            self._basis = self.scenario.basis()
        return self._basis

    @property
    def time_scale(self) -> str:
        return "TU" if self.scenario.is_cr3bp else "s"

    def c_in_table_units(self, c) -> np.ndarray:
        """Constants as tabulated: raw eigenvector units in alpha for CR3BP."""
        if self.scenario.is_cr3bp:
            return np.asarray(c) / self.basis.scales / self.scenario.alpha
        return np.asarray(c)


def _scenario(args) -> Scenario:
    cfg = getattr(args, "config", None)
    name = getattr(args, "scenario", None)
    if cfg and name:
        raise ValidationError("give either --config or --scenario, not both")
    if cfg:
        return load_scenario(cfg)
    if name:
        return builtin_scenario(name)
    raise ValidationError("a scenario is required (--config FILE or --scenario NAME)")


# ---------------------------------------------------------------------------
# commands


def cmd_modes(ctx: Context) -> int:
    sec = ctx.scenario.section("modes")
    periods = float(ctx.args.periods or sec.get("periods", 3))
    ppp = int(sec.get("points_per_period", MODE_POINTS_PER_PERIOD))
    if ppp < MODE_POINTS_PER_PERIOD:
        raise ValidationError(f"at least {MODE_POINTS_PER_PERIOD} points per period are required")
    b = ctx.basis
    n = int(round(periods * ppp)) + 1
    ts = b.t0 + np.linspace(0.0, periods * b.period, n)
    psis = np.array([b.psi(t) for t in ts])
    files = []
    for i in range(6):
        rows = [[t, *psis[k, :, i]] for k, t in enumerate(ts)]
        files.append(str(_write_table(ctx.out / f"mode_{i + 1}", ["t", *STATE_COLS], rows, ctx.fmt)))
    basis_file = _write_json(ctx.out / "basis.json", b.to_dict())
    report = {
        "scenario": ctx.scenario.name,
        "kind": b.kind,
        "period": b.period,
        "scales": b.scales.tolist(),
        "mode_files": files,
        "basis_file": str(basis_file),
    }
    if hasattr(b, "classification"):
        report["classification"] = list(b.classification)
        report["frequencies"] = b.frequencies
    _emit(report, ctx.fmt, f"wrote {len(files)} mode traces ({n} samples over {periods:g} periods) and {basis_file}")
    return EXIT_OK


def cmd_constants(ctx: Context) -> int:
    scn, b = ctx.scenario, ctx.basis
    c = scn.initial_constants(b)
    report = {
        "scenario": scn.name,
        "basis": b.kind,
        "normalization": "columns divided by the maximum position norm over one period",
        "scales": b.scales.tolist(),
        "c_normalized": c.tolist(),
        "c_raw": (c / b.scales).tolist(),
    }
    lines = [f"scenario {scn.name} ({b.kind} basis)", f"  c (normalized)   = {_vec(c)}"]
    if scn.is_cr3bp:
        ca = ctx.c_in_table_units(c)
        report["c_raw_alpha"] = ca.tolist()
        report["alpha"] = scn.alpha
        lines.append(f"  c (raw, alpha)   = {_vec(ca)}")
    elif b.kind == "eccentric":
        from .keplerian import eccentric_constants

        ca = eccentric_constants(scn.initial_state(b), b.oe, b.mu, basis=b)
        report["c_closed_form"] = ca.tolist()
        report["guard"] = b.guard
        lines.append(f"  c (closed form)  = {_vec(ca)}")
        if b.guard:
            lines.append(f"  singularity guard applied: {b.guard}")
    lines.append(f"  scales           = {_vec(b.scales)}")
    _write_json(ctx.out / "constants.json", report)
    _emit(report, ctx.fmt, "\n".join(lines))
    return EXIT_OK


def _chief0(scn: Scenario, b):
    from .orbits import elements_to_state

    if hasattr(b, "chief_state"):
        return b.chief_state(b.t0)
    return elements_to_state(scn.elements())


def cmd_propagate(ctx: Context) -> int:
    from . import vop

    scn, b = ctx.scenario, ctx.basis
    sec = scn.section("propagate")
    mode = ctx.args.mode or sec.get("mode", "full")
    periods = float(ctx.args.periods or sec.get("periods", 3))
    samples = int(sec.get("samples", 601))
    t_span = (b.t0, b.t0 + periods * b.period)
    ts = np.linspace(*t_span, samples)
    c0 = scn.initial_constants(b)
    j2 = scn.perturbation == "j2"
    tol = min(scn.tol * 10.0, 1e-9)
    if scn.is_cr3bp and (mode != "linear" or j2):
        raise ValidationError("CR3BP scenarios support only the unperturbed linear propagator")
    model = vop.PerturbationModel() if j2 else vop.KEPLERIAN
    extra_cols: list[str] = []
    if mode == "full":
        traj = vop.propagate_constants_full(b, c0, t_span, model=model, chief0=None if scn.is_cr3bp else _chief0(scn, b), t_eval=ts, tol=tol)
        cs, xs, flags = traj.c, traj.x, traj.flags
        extra = [[] for _ in ts]
    elif mode == "linear":
        dA = None
        if j2:
            dA = vop.delta_plant(b, model, t_span, _chief0(scn, b))
        traj = vop.propagate_constants_linear(b, c0, t_span, delta_A=dA, t_eval=ts, tol=tol)
        cs, xs, flags = traj.c, traj.x, traj.flags
        extra = [[] for _ in ts]
    elif mode == "first-order":
        dA = vop.delta_plant(b, model, t_span, _chief0(scn, b))
        cs = vop.first_order_constants(b, c0, vop.omega_matrix(b, dA), ts)
        xs = np.array([b.psi(t) @ c for t, c in zip(ts, cs)])
        full = vop.propagate_constants_full(b, c0, t_span, model=model, chief0=_chief0(scn, b), t_eval=ts, tol=tol)
        diff = np.linalg.norm(cs - full.c, axis=1)
        flags = full.flags
        extra_cols = ["dc_vs_full"]
        extra = [[d] for d in diff]
    else:
        raise ValidationError("mode must be full, linear or first-order")
    rows = [[t, *c, *x, *e, f] for t, c, x, e, f in zip(ts, cs, xs, extra, flags)]
    path = _write_table(ctx.out / f"trajectory_{mode}", ["t", *C_COLS, *STATE_COLS, *extra_cols, "flags"], rows, ctx.fmt)
    drift = np.max(np.abs(cs - c0), axis=0)
    report = {"scenario": scn.name, "mode": mode, "perturbation": scn.perturbation, "t_span": list(t_span), "file": str(path), "max_abs_dc": drift.tolist()}
    if extra_cols:
        report["max_dc_vs_full"] = float(np.max(diff))
    _emit(report, ctx.fmt, f"{mode} propagation over {periods:g} periods -> {path}\n  max |c - c0| = {_vec(drift, 4)}")
    return EXIT_OK


def cmd_plan(ctx: Context) -> int:
    from .control import plan_impulsive, two_burn_baseline

    scn, b = ctx.scenario, ctx.basis
    sec = scn.section("plan")
    if not sec:
        raise ValidationError("scenario has no [plan] section")
    p = plan_problem(scn, b, sec)
    refine = int(ctx.args.refine if ctx.args.refine is not None else sec.get("refine", 0))
    plan = plan_impulsive(p, refine_factor=refine or None)
    check = verify_plan(b, p.c0, plan.burns, p.window, p.c_target, tol=min(scn.tol, 1e-12))
    scale = max(np.linalg.norm(p.c0), np.linalg.norm(p.c_target), 1e-300)
    cond = check.condition
    report = {
        "scenario": scn.name,
        "plan": plan.to_dict(),
        "closure": check.closure,
        "closure_relative": check.closure / scale,
        "closure_state_relative": check.state_closure,
        "psi_condition_at_tf": cond,
    }
    unit = "alpha" if scn.is_cr3bp else "m/s"
    conv = scn.alpha if scn.is_cr3bp else 1e-3
    lines = [f"plan for {scn.name}: {plan.n_burns} burns, total dv = {plan.total_dv / conv:.6g} {unit}"]
    for t, dv in plan.burns:
        lines.append(f"  t = {t:.6g} {ctx.time_scale}  dv = {_vec(dv / conv, 4)} {unit}")
    lines.append(f"  verified closure |c(tf) - c*| / |c| = {check.closure / scale:.3e}, state {check.state_closure:.3e} (cond psi(tf) = {cond:.2e})")
    if sec.get("two_burn", False):
        xa = b.state_from_constants(p.c0, p.window[0])
        xb = b.state_from_constants(p.c_target, p.window[1])
        tb = two_burn_baseline(b, xa, xb, *p.window)
        report["two_burn"] = tb.to_dict()
        lines.append(f"  two-burn baseline over the window: {tb.total_dv / conv:.6g} {unit}")
    plan_path = _write_json(ctx.out / "plan.json", report)
    rows = [[t, *c, *x, ""] for t, c, x in zip(check.t, check.c, check.x)]
    traj_path = _write_table(ctx.out / "plan_trajectory", ["t", *C_COLS, *STATE_COLS, "flags"], rows, ctx.fmt)
    lines.append(f"  wrote {plan_path} and {traj_path}")
    _emit(report, ctx.fmt, "\n".join(lines))
    return EXIT_OK


def _sweep_member(b, c: np.ndarray, ts: np.ndarray) -> np.ndarray:
    return np.array([b.psi(t) @ c for t in ts])


def cmd_sweep(ctx: Context) -> int:
    scn, b = ctx.scenario, ctx.basis
    sec = scn.section("sweep")
    param = ctx.args.param or sec.get("parameter")
    if param is None or not (len(param) == 2 and param[0] == "c" and param[1] in "123456"):
        raise ValidationError("sweep parameter must be one of c1..c6")
    idx = int(param[1]) - 1
    rng = ctx.args.range or sec.get("range")
    if rng is None or len(rng) != 3:
        raise ValidationError("sweep range must be (start, stop, count)")
    values = np.linspace(float(rng[0]), float(rng[1]), int(rng[2]))
    rescale = bool(ctx.args.rescale or sec.get("rescale", False))
    c0 = scn.initial_constants(b)
    norm0 = np.linalg.norm(c0)
    members = []
    for v in values:
        c = c0.copy()
        c[idx] = v
        if rescale:
            nc = np.linalg.norm(c)
            if nc == 0:
                raise ValidationError("cannot rescale a zero constant vector")
            c *= norm0 / nc
        members.append(c)
    periods = float(sec.get("periods", 1))
    ts = b.t0 + np.linspace(0.0, periods * b.period, int(sec.get("samples", 501)))
    workers = int(sec.get("workers", 4))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        traces = list(pool.map(lambda c: _sweep_member(b, c, ts), members))
    files = []
    for k, (c, xs) in enumerate(zip(members, traces)):
        rows = [[t, *x] for t, x in zip(ts, xs)]
        files.append(str(_write_table(ctx.out / f"sweep_{param}_{k:03d}", ["t", *STATE_COLS], rows, ctx.fmt)))
    summary = {
        "scenario": scn.name,
        "parameter": param,
        "values": values.tolist(),
        "rescale": rescale,
        "members": [
            {"c": c.tolist(), "norm": float(np.linalg.norm(c)), "x_extent": float(np.ptp(xs[:, 0])), "file": f}
            for c, xs, f in zip(members, traces, files)
        ],
    }
    _write_json(ctx.out / f"sweep_{param}.json", summary)
    _emit(summary, ctx.fmt, f"sweep of {param} over {len(values)} values -> {ctx.out}")
    return EXIT_OK


def cmd_halo(ctx_args) -> int:
    from .cr3bp import find_periodic_orbit
    from .floquet import build_modal_basis

    args = ctx_args
    family, branch, days = args.family, args.branch, args.period_days
    if getattr(args, "config", None) or getattr(args, "scenario", None):
        scn = _scenario(args)
        if scn.chief.kind != "halo":
            raise ValidationError("scenario chief is not a halo orbit")
        family = family or scn.chief.family
        branch = branch or scn.chief.branch
        days = days or scn.chief.period_days
    if days is None:
        raise ValidationError("a target period is required (--period-days)")
    tol = args.tol if getattr(args, "tol", None) is not None else DEFAULT_TOL
    orbit = find_periodic_orbit(family or "L2", branch or "northern", float(days), tol=tol)
    basis = build_modal_basis(orbit)
    out = Path(getattr(args, "out", None) or "out")
    orbit_file = _write_json(out / "orbit.json", orbit.to_dict())
    basis_file = _write_json(out / "basis.json", basis.to_dict())
    report = {
        "orbit": orbit.to_dict(),
        "closure_error": orbit.closure_error(),
        "classification": list(basis.classification),
        "frequencies": basis.frequencies,
        "orbit_file": str(orbit_file),
        "basis_file": str(basis_file),
    }
    text = (
        f"{orbit.metadata['family']} {orbit.metadata['branch']} halo, T = {orbit.period:.6f} TU\n"
        f"  x0 = {_vec(orbit.initial_state, 10)}\n"
        f"  classification = {', '.join(basis.classification)}\n"
        f"  frequencies = {', '.join(f'{w:.5f}' for w in basis.frequencies)}\n"
        f"  wrote {orbit_file} and {basis_file}"
    )
    _emit(report, getattr(args, "format", None) or "csv", text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="scenario TOML file")
    p.add_argument("--scenario", default=d, choices=sorted(BUILTIN), help="built-in scenario")
    p.add_argument("--out", default=d, help="output directory (default: out)")
    p.add_argument("--tol", type=float, default=d, help="integration tolerance")
    p.add_argument("--format", default=d, choices=("csv", "json"), help="table and report format")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modalrm", description="Modal relative-motion toolkit", parents=[_common(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(True)

    p = sub.add_parser("modes", parents=[common], help="mode traces and the serialized basis")
    p.add_argument("--periods", type=float)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("constants", parents=[common], help="modal constants of the deputy")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("propagate", parents=[common], help="variation-of-parameters propagation")
    p.add_argument("--mode", choices=("full", "linear", "first-order"))
    p.add_argument("--periods", type=float)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("plan", parents=[common], help="fuel-optimal impulsive plan")
    p.add_argument("--refine", type=int, help="local grid refinement factor near the burns")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", parents=[common], help="family of relative orbits varying one constant")
    p.add_argument("--param", help="c1..c6")
    p.add_argument("--range", nargs=3, type=float, metavar=("START", "STOP", "COUNT"))
    p.add_argument("--rescale", action="store_true", help="keep |c| fixed across the family")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("halo", parents=[common], help="corrected halo orbit and its modal basis")
    p.add_argument("--family", choices=("L1", "L2"))
    p.add_argument("--branch", choices=("northern", "southern"))
    p.add_argument("--period-days", type=float)
    p.set_defaults(func=cmd_halo, raw_args=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if getattr(args, "raw_args", False):
            return args.func(args)
        return args.func(Context(args))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
