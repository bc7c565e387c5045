"""
Command line runner
===================

``fel <command> --config path.json [--out dir]``

The config is validated before anything is computed or written; schema
errors exit with status 2 and leave no files behind. Numerical failures exit
with status 1 and write only ``diagnostic.json``. Otherwise the JSON report
and CSV tables are written and the status is 0 iff every verdict passed.

Reports carry no timestamps, so identical configs give byte-identical
outputs. ``FEL_THREADS`` caps the number of corpus or sweep members
evaluated concurrently.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .config import COMMANDS, ExperimentConfig, build, load_config

TWO_PI2 = 2 * math.pi**2


@dataclass
class Outcome:
    results: dict
    passed: bool
    tables: dict = field(default_factory=dict)  # filename -> (header, rows)
    fields: dict = field(default_factory=dict)  # filename -> json document


def threads() -> int:
    raw = os.environ.get("FEL_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def pmap(fn, items):
    """Ordered map over at most ``FEL_THREADS`` workers."""
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _f(x):
    return float(x)


# --- commands -----------------------------------------------------------------

def run_energy(cfg: ExperimentConfig) -> Outcome:
    from .frames import coordinate_frame, coulomb_project, frame_energy
    from .geometry import build_geometry

    imm = build(cfg.immersion, cfg.grid, cfg.seed)
    cache = build_geometry(imm)
    coord = frame_energy(cache, coordinate_frame(cache))
    frame, defect = coulomb_project(cache, coordinate_frame(cache))
    e = frame_energy(cache, frame)
    tol = cfg.tolerances
    checks = {
        "decomposition": abs(e.gap) <= tol.decomposition * e.F,
        "willmore_gap": abs(e.quarter_II2 - e.W) <= tol.willmore_gap * e.W,
        "lower_bound": e.F >= TWO_PI2 * (1 - tol.rel_tol) - tol.allowance,
    }
    res = {
        "coulomb": e.to_json(), "coordinate": coord.to_json(), "coulomb_defect": _f(defect),
        "gauge_residual": _f(cache.conformality_residual), "two_pi_squared": TWO_PI2,
        "relative_error_to_2pi2": abs(e.F - TWO_PI2) / TWO_PI2, "checks": checks,
    }
    return Outcome(res, all(checks.values()))


BOUND_COLUMNS = ("member", "seed", "tau1", "tau2", "theta", "F", "F_T", "W", "lhs_LB0", "rhs_LB0",
                 "f_value", "in_omega", "fenchel_min", "pass_F", "pass_LB0", "pass_fenchel")


def run_bound(cfg: ExperimentConfig) -> Outcome:
    from .bounds import verify_theorem_lb

    tol = cfg.tolerances

    def member(i):
        seed = cfg.seed + i
        imm = build(cfg.immersion, cfg.grid, seed)
        rep = verify_theorem_lb(imm, tol.rel_tol, tol.allowance)
        ok_lb0 = rep.lhs_LB0 >= rep.rhs_LB0 * (1 - tol.rel_tol)
        ok_fen = rep.fenchel_min >= 2 * math.pi - tol.fenchel
        return (i, seed, rep.tau[0], rep.tau[1], rep.theta, rep.F, rep.F_T, rep.W, rep.lhs_LB0,
                rep.rhs_LB0, rep.f_value, rep.in_omega, rep.fenchel_min, rep.verdict, ok_lb0, ok_fen)

    rows = pmap(member, range(cfg.count))
    passed = all(r[13] and r[14] and r[15] for r in rows)
    res = {"count": len(rows), "passed_members": sum(1 for r in rows if r[13] and r[14] and r[15]),
           "min_F": min((r[5] for r in rows), default=None)}
    return Outcome(res, passed, {cfg.output.table: (BOUND_COLUMNS, rows)})


def run_gradcheck(cfg: ExperimentConfig) -> Outcome:
    from .gauge import restore_conformal_gauge
    from .variation import coefficient_check, gradient_check

    imm = build(cfg.immersion, cfg.grid, cfg.seed)
    spec, tol = cfg.gradcheck, cfg.tolerances
    conf, _ = restore_conformal_gauge(imm)
    pairs = gradient_check(conf, range(cfg.seed, cfg.seed + spec.pairs), spec.h,
                                   gauge_tol=spec.gauge_tol) if spec.pairs else []
    coeff = coefficient_check(imm, [tuple(m) for m in spec.modes], spec.coefficient_h)
    cols = ("seed", "dFT", "dFT_fd", "rel_FT", "dW", "dW_fd", "rel_W", "dF", "dF_fd", "rel_F")
    rows = [tuple(p[c] for c in cols) for p in pairs]
    ccols = ("component", "k", "l", "kind", "exact", "fd", "rel")
    crows = [tuple(c["mode"]) + (c["exact"], c["fd"], c["rel"]) for c in coeff]
    worst = max((max(p["rel_FT"], p["rel_W"], p["rel_F"]) for p in pairs), default=0.0)
    cworst = max((c["rel"] for c in coeff), default=0.0)
    res = {"pairs": len(pairs), "max_rel_variation": worst, "max_rel_coefficient": cworst,
           "tolerance_variation": tol.gradcheck, "tolerance_coefficient": tol.coefficient}
    passed = worst < tol.gradcheck and cworst < tol.coefficient
    return Outcome(res, passed, {cfg.output.table: (cols, rows), "coefficients.csv": (ccols, crows)})


def _descend(cfg: ExperimentConfig, imm):
    from .variation import DescentOptions, minimize

    opts = dict(cfg.descent)
    opts.setdefault("seed", cfg.seed)
    return minimize(imm, DescentOptions.from_dict(opts))


def run_minimize(cfg: ExperimentConfig) -> Outcome:
    from .grid import field_to_json
    from .variation import TRAJECTORY_COLUMNS, trajectory_summary

    imm = build(cfg.immersion, cfg.grid, cfg.seed)
    st = _descend(cfg, imm)
    summ = trajectory_summary(st.trajectory)
    tol = cfg.tolerances
    checks = {
        "converged": st.converged,
        "monotone": summ["monotone"],
        "class_constant": summ["class_constant"],
        "lower_bound": st.energy.E >= TWO_PI2 * (1 - tol.rel_tol) - tol.allowance,
    }
    res = {"message": st.message, "steps": st.step, "restorations": st.restorations,
           "F": st.energy.E, "F_T": st.energy.F_T, "class_label": st.class_label,
           "el_residual": st.el_residual, "gauge_residual": st.gauge_residual,
           "tau": list(st.imm.grid.tau), "summary": summ, "checks": checks}
    cols = TRAJECTORY_COLUMNS + ("restore_jump",)
    rows = [tuple(r[c] for c in cols) for r in st.trajectory]
    doc = field_to_json(st.imm.samples, st.imm.grid, label="minimizer")
    return Outcome(res, all(checks.values()), {cfg.output.table: (cols, rows)}, {cfg.output.field: doc})


def run_conservation(cfg: ExperimentConfig) -> Outcome:
    from .conservation import conservation_report, delta_lambda_residual
    from .gauge import restore_conformal_gauge
    from .geometry import build_geometry

    imm = build(cfg.immersion, cfg.grid, cfg.seed)
    if cfg.minimize_first:
        imm = _descend(cfg, imm).imm
    conf, _ = restore_conformal_gauge(imm)
    cache = build_geometry(conf)
    tol = cfg.tolerances
    dlam = delta_lambda_residual(cache)
    state = conservation_report(cache, tol.critical)
    out = state.to_json()
    bound = tol.consistency_factor * state.L.el_relative + tol.discretization
    keys = ("curlL", "gradS_eq", "gradR_eq", "deltaS_eq", "deltaR_eq", "deltaD_eq", "deltaPhi_eq")
    checks = {k: out[k] <= bound for k in keys}
    checks["curl_S"] = out["curl_S"] <= bound
    checks["curl_R"] = out["curl_R"] <= bound
    checks["deltaLambda_eq"] = out["deltaLambda_eq"] <= tol.discretization
    res = {"residuals": out, "consistency_bound": bound, "delta_lambda_maxnorm": dlam, "checks": checks}
    return Outcome(res, all(checks.values()))


def run_classify(cfg: ExperimentConfig) -> Outcome:
    from .homotopy import classify

    lab = classify(build(cfg.immersion, cfg.grid, cfg.seed))
    res = dict(lab.to_json(), offsets=[float(o) for o in lab.offsets], expect=cfg.expect)
    return Outcome(res, cfg.expect is None or lab.label == cfg.expect)


def run_sweep(cfg: ExperimentConfig) -> Outcome:
    axes = cfg.sweep.axes()
    names = [a[0] for a in axes]
    points = list(itertools.product(*[a[1] for a in axes])) if axes else []
    tol = cfg.tolerances
    if cfg.sweep.quantity == "f":
        return _sweep_f(cfg, names, points)

    def member(p):
        from .frames import coordinate_frame, coulomb_project, frame_energy
        from .geometry import build_geometry

        over = dict(zip(names, p))
        if "seed" in over:
            over["seed"] = int(over["seed"])
        spec = cfg.immersion.model_copy(update=over)
        cache = build_geometry(build(spec, cfg.grid, cfg.seed))
        frame, _ = coulomb_project(cache, coordinate_frame(cache))
        e = frame_energy(cache, frame)
        return tuple(p) + (e.F, e.F_T, e.W, e.F >= TWO_PI2 * (1 - tol.rel_tol) - tol.allowance)

    rows = pmap(member, points)
    cols = tuple(names) + ("F", "F_T", "W", "pass")
    return Outcome({"points": len(rows)}, all(r[-1] for r in rows), {cfg.output.table: (cols, rows)})


def _sweep_f(cfg, names, points):
    from .bounds import f_moduli_array, in_omega_array, in_strip_array

    rows = []
    best = None
    for p in points:
        d = dict(zip(names, p))
        tau2, theta = d["tau2"], d["theta"]
        tau1 = math.cos(theta)
        fv = float(f_moduli_array(tau2, theta))
        in_m = bool(in_strip_array(tau1, tau2))
        in_o = bool(in_omega_array(tau1, tau2))
        outside = in_m and not in_o
        if outside and (best is None or fv < best[0]):
            best = (fv, tau2, theta)
        rows.append((tau2, theta, tau1, fv, in_m, in_o, outside))
    cols = ("tau2", "theta", "tau1", "f", "in_M", "in_omega", "outside_omega")
    res = {"points": len(rows), "min_outside_omega": best[0] if best else None,
           "argmin": [best[1], best[2]] if best else None}
    passed = best is None or best[0] >= 2 - 1e-12
    return Outcome(res, passed, {cfg.output.table: (cols, rows)})


RUNNERS = {
    "energy": run_energy, "bound": run_bound, "gradcheck": run_gradcheck, "minimize": run_minimize,
    "conservation": run_conservation, "classify": run_classify, "sweep": run_sweep,
}


# --- output -------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else _jsonable(v) for v in r])
    return buf.getvalue()


def report(cfg: ExperimentConfig, outcome: Outcome) -> dict:
    return {
        "command": cfg.command, "version": __version__, "config_hash": cfg.config_hash(),
        "config": cfg.model_dump(mode="json"), "grid": cfg.grid.model_dump(mode="json"),
        "tolerances": cfg.tolerances.model_dump(mode="json"), "passed": outcome.passed,
        "results": outcome.results,
    }


def execute(cfg: ExperimentConfig, out: Path) -> int:
    """Run ``cfg`` and write its outputs under ``out``; returns the exit status."""
    try:
        outcome = RUNNERS[cfg.command](cfg)
    except Exception as exc:  # numerical failure: diagnostic only
        out.mkdir(parents=True, exist_ok=True)
        diag = {"command": cfg.command, "config_hash": cfg.config_hash(), "error": type(exc).__name__,
                "message": str(exc), "diagnostic": getattr(exc, "diagnostic", None)}
        (out / "diagnostic.json").write_text(dumps(diag))
        print(f"fel: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out.mkdir(parents=True, exist_ok=True)
    (out / cfg.output.report).write_text(dumps(report(cfg, outcome)))
    for name, (header, rows) in outcome.tables.items():
        (out / name).write_text(csv_text(header, rows))
    for name, doc in outcome.fields.items():
        (out / name).write_text(json.dumps(doc, sort_keys=True) + "\n")
    return 0 if outcome.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fel", description="Frame energy experiment runner")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError, ValidationError, ValueError) as exc:
        print(f"fel: invalid config: {exc}", file=sys.stderr)
        return 2
    if cfg.command != args.command:
        print(f"fel: config command {cfg.command!r} does not match {args.command!r}", file=sys.stderr)
        return 2
    return execute(cfg, Path(args.out or cfg.output.dir))


if __name__ == "__main__":
    sys.exit(main())
