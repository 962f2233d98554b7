"""Command-line interface: ``subrumin <group> <action> [options]``.

Exit codes: 0 success, 2 invalid input, 3 solver did not converge,
4 ambiguous Chern recovery.  Errors are printed as
``{"error": {"code", "message", "context"}}``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .chern import AmbiguousRecoveryError, SingularSystemError, SpectralOracle, normalize_potentials, recover_chern
from .eigensolve import ConvergenceError
from .expr import FieldDomainError, FieldParseError
from .fields import ExprField, as_field
from .geometry import CircleChart, NilmanifoldChart
from .nilmanifold import (
    UNIT_LANDAU_CONSTANT,
    calibrate_landau,
    calibration_path,
    landau_constant,
    load_calibration,
    nil_lambda1_3d,
    nil_lambda1_closed,
    nil_lambda1_sector,
    save_calibration,
    upper_bound_report,
)
from .rumin import (
    NonPeriodicError,
    OneForm,
    UnsupportedPotentialError,
    d_H,
    decompose,
    delta_J,
    exterior_d_field,
    flux_quantized,
    rumin_d_field,
)
from .torus import (
    TorusPotential,
    circle_lambda1_exact,
    circle_lambda1_fd,
    torus_lambda1_exact,
    torus_lambda1_fd,
)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_AMBIGUOUS = 0, 2, 3, 4
SIG_DIGITS = 12


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, context: dict | None = None):
        super().__init__(message)
        self.code, self.kind, self.context = code, kind, context or {}


def invalid(message: str, **context) -> CliError:
    return CliError(EXIT_INVALID, "validation", message, context)


# --- problem files -----------------------------------------------------------

_NUM_OR_EXPR = {"type": ["number", "string"]}

PROBLEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["geometry"],
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["torus", "nilmanifold", "circle"]},
                "k": {"type": "integer", "minimum": 1},
                "circumference": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": _NUM_OR_EXPR,
                "b": _NUM_OR_EXPR,
                "h": _NUM_OR_EXPR,
                "f_gauge": {"type": "string"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["exact", "sector", "grid3d", "fd"]},
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1, "maxItems": 3},
                "sectors": {"type": "integer", "minimum": 0, "maximum": 16},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}

_METHODS = {"circle": ("exact", "fd"), "torus": ("exact", "fd"), "nilmanifold": ("exact", "sector", "grid3d")}
_DEFAULT_METHOD = {"circle": "exact", "torus": "exact", "nilmanifold": "sector"}
_GRID_LEN = {"fd": None, "sector": 2, "grid3d": 3}


def _default_grid(geom: str, method: str, k: int):
    if geom == "circle":
        return [1024]
    if method == "grid3d":
        return [24 * k, 24, 24 * k]
    return [128, 64]


def _json_path(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def validate_problem(doc) -> dict:
    """Schema check, semantic checks, and materialized defaults."""
    v = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise invalid(f"problem file: {e.message}", location=_json_path(e.absolute_path),
                      errors=[{"location": _json_path(x.absolute_path), "message": x.message} for x in errors])
    doc = copy.deepcopy(doc)
    geom = doc["geometry"]
    gtype = geom["type"]
    geom.setdefault("k", 1)
    if gtype == "circle":
        geom.setdefault("circumference", 2.0 * math.pi)
    elif "circumference" in geom:
        raise invalid("circumference applies to the circle only", location="geometry.circumference")
    pot = doc.setdefault("potential", {})
    for key in ("a", "b", "h"):
        pot.setdefault(key, 0.0)
    solver = doc.setdefault("solver", {})
    method = solver.setdefault("method", _DEFAULT_METHOD[gtype])
    if method not in _METHODS[gtype]:
        raise invalid(f"method {method!r} is not available for {gtype}", location="solver.method")
    solver.setdefault("grid", _default_grid(gtype, method, geom["k"]))
    solver.setdefault("sectors", 2)
    solver.setdefault("tol", 1e-8)
    solver.setdefault("seed", 0)

    for key in ("a", "b", "h", "f_gauge"):
        val = pot.get(key)
        if isinstance(val, str):
            try:
                ExprField(val)
            except FieldParseError as exc:
                raise invalid(f"potential.{key}: {exc}", location=f"potential.{key}", offset=exc.offset) from exc
    grid = solver["grid"]
    if gtype == "circle":
        if len(grid) != 1:
            raise invalid("circle grids have one entry", location="solver.grid")
        if any(isinstance(pot[key], str) for key in ("a", "b", "h")) or pot["b"] or pot["h"] or "f_gauge" in pot:
            raise invalid("the circle takes a constant potential a only", location="potential")
    else:
        need = 3 if method == "grid3d" else 2
        if len(grid) != need:
            raise invalid(f"method {method!r} needs a grid of {need} sizes", location="solver.grid")
        if method in ("fd", "sector") and min(grid) < 8:
            raise invalid("grid sizes must be at least 8", location="solver.grid")
        if method == "exact" and (any(isinstance(pot[key], str) for key in ("a", "b")) or "f_gauge" in pot):
            raise invalid("the exact method needs constant a and b", location="potential")
        if gtype == "torus" and (pot["h"] != 0.0 and pot["h"] != 0):
            raise invalid("the torus has no vertical part h", location="potential.h")
    return doc


def load_problem(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise invalid(f"cannot read problem file: {exc}", location=str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise invalid(f"problem file is not JSON: {exc.msg}", location=f"line {exc.lineno} column {exc.colno}") from exc
    return validate_problem(doc)


# --- output --------------------------------------------------------------------

def _round(x: float):
    if not math.isfinite(x):
        return str(x)
    if x == 0.0:
        return 0.0
    return float(f"{x:.{SIG_DIGITS}g}")


def clean(obj):
    """Round floats to 12 significant digits and make everything JSON-serializable."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    return obj


def emit(record: dict, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(clean(record), allow_nan=False) + "\n")


def write_csv(path, rows: list, columns: list | None = None) -> None:
    rows = [clean(r) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            for key in r:
                if key not in columns:
                    columns.append(key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            out = []
            for c in columns:
                v = r.get(c, "")
                if isinstance(v, (list, dict)):
                    v = json.dumps(v)
                elif v is None:
                    v = ""
                out.append(v)
            w.writerow(out)


# --- argument helpers ------------------------------------------------------------

def _num_or_expr(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def _int_list(text: str) -> list:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _grid_list(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        try:
            out.append([int(t) for t in tok.split("x")])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad grid entry {tok!r}") from exc
    if not out:
        raise argparse.ArgumentTypeError("empty grid list")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise invalid(message, usage=self.format_usage().strip())


def _landau(args) -> tuple[float, dict]:
    """Lambda to use plus the lambda_convention record."""
    choice = getattr(args, "landau", "calibrated")
    if choice == "unit":
        return UNIT_LANDAU_CONSTANT, {"unit": UNIT_LANDAU_CONSTANT, "calibrated": None, "used": "unit"}
    if choice not in (None, "calibrated"):
        try:
            val = float(choice)
        except ValueError as exc:
            raise invalid("--landau takes 'unit', 'calibrated' or a positive number", location="--landau") from exc
        if not val > 0:
            raise invalid("--landau must be positive", location="--landau")
        return val, {"unit": UNIT_LANDAU_CONSTANT, "calibrated": None, "used": "explicit", "value": val}
    lam, prov = landau_constant()
    prov = {k: v for k, v in prov.items() if k != "source"}
    return lam, {"unit": UNIT_LANDAU_CONSTANT, "calibrated": lam, "used": "calibrated", "provenance": prov}


def _problem_from_args(args, gtype: str) -> dict:
    if getattr(args, "problem", None):
        doc = load_problem(args.problem)
        if doc["geometry"]["type"] != gtype:
            raise invalid(f"problem file describes a {doc['geometry']['type']}, command expects {gtype}",
                          location="geometry.type")
        return doc
    method = args.method
    if method == "closed":
        method = "exact"
    doc = {"geometry": {"type": gtype, "k": args.k},
           "potential": {"a": args.a, "b": args.b},
           "solver": {"method": method, "tol": args.tol, "seed": args.seed}}
    if getattr(args, "h", None) is not None:
        doc["potential"]["h"] = args.h
    if getattr(args, "f_gauge", None):
        doc["potential"]["f_gauge"] = args.f_gauge
    if args.grid is not None:
        doc["solver"]["grid"] = args.grid
    if getattr(args, "sectors", None) is not None:
        doc["solver"]["sectors"] = args.sectors
    return validate_problem(doc)


def _potential_form(pot: dict) -> OneForm:
    w = OneForm.of(pot["a"], pot["b"], pot.get("h", 0.0))
    if pot.get("f_gauge"):
        g = d_H(pot["f_gauge"])
        w = OneForm(w.p + g.p, w.q + g.q, w.h)
    return w


# --- solving a problem --------------------------------------------------------------

def solve_problem(doc: dict, grid=None, landau_args=None) -> dict:
    geom, pot, solver = doc["geometry"], doc["potential"], doc["solver"]
    gtype, k, method = geom["type"], geom["k"], solver["method"]
    grid = list(grid if grid is not None else solver["grid"])
    tol, seed = solver["tol"], solver["seed"]
    max_iter = doc.get("_max_iter", 20000)
    rec: dict = {"method": method, "seed": seed, "tol": tol}
    if gtype == "circle":
        chart = CircleChart(geom["circumference"])
        alpha = float(pot["a"])
        if method == "exact":
            rec.update(lambda1=circle_lambda1_exact(alpha, chart), grid=None, residual=0.0)
        else:
            r = circle_lambda1_fd(alpha, grid[0], chart, tol=tol, seed=seed, max_iter=max_iter)
            rec.update(lambda1=r.value, grid=list(r.grid), residual=r.residual, iterations=r.iterations)
        return rec
    w = _potential_form(pot)
    if gtype == "torus":
        if method == "exact":
            a, b = w.constants()
            ex = torus_lambda1_exact(a, b, k)
            rec.update(lambda1=ex.value, grid=None, residual=0.0, lattice_point=list(ex.nearest_point),
                       lattice_index=list(ex.nearest), ties=[list(t) for t in ex.ties])
        else:
            r = torus_lambda1_fd(TorusPotential(w.p, w.q), k, grid[0], grid[1], tol=tol, seed=seed, max_iter=max_iter)
            rec.update(lambda1=r.value, grid=list(r.grid), residual=r.residual, iterations=r.iterations)
            if w.is_constant:
                ex = torus_lambda1_exact(*w.constants(), k)
                rec.update(lattice_point=list(ex.nearest_point), lattice_index=list(ex.nearest))
        return rec
    # nilmanifold
    if method == "exact":
        a, b = w.constants()
        lam, conv = landau_args if landau_args is not None else _landau(argparse.Namespace(landau="calibrated"))
        ex = torus_lambda1_exact(a, b, k)
        rec.update(lambda1=nil_lambda1_closed(k, a, b, lam), grid=None, residual=0.0,
                   lattice_point=list(ex.nearest_point), lattice_index=list(ex.nearest),
                   distance_sq=ex.value, lambda_convention=conv)
        return rec
    if method == "sector":
        r = nil_lambda1_sector(k, w, m_max=solver["sectors"], grid=grid, tol=tol, seed=seed, max_iter=max_iter)
        rec.update(lambda1=r.value, grid=list(r.grid), residual=r.residual, iterations=r.iterations,
                   per_sector={str(m): v for m, v in sorted(r.per_sector.items())})
        rec.update({k_: v for k_, v in r.extra.items()})
        return rec
    r = nil_lambda1_3d(k, w, *grid, tol=tol, seed=seed, max_iter=max_iter)
    rec.update(lambda1=r.value, grid=list(r.grid), residual=r.residual, iterations=r.iterations)
    return rec


def study_convergence(doc: dict, grid_list: list) -> list:
    """One row per grid with lambda1, the error against the exact value when known, and the observed order."""
    geom, pot, solver = doc["geometry"], doc["potential"], doc["solver"]
    if solver["method"] == "exact":
        row = solve_problem(doc)
        return [{"N": None, "lambda1": row["lambda1"], "error_vs_exact": 0.0, "observed_order": None}]
    if len(grid_list) < 3:
        raise invalid("a convergence study needs at least three grids", location="--grids")
    k = geom["k"]
    grids = []
    for g in grid_list:
        if len(g) == 1:
            n = g[0]
            if geom["type"] == "circle":
                grids.append([n])
            elif solver["method"] == "grid3d":
                grids.append([k * n, n, k * n])
            else:
                grids.append([k * n, n])
        else:
            grids.append(list(g))
    exact = None
    if geom["type"] == "circle":
        exact = circle_lambda1_exact(float(pot["a"]), CircleChart(geom["circumference"]))
    elif geom["type"] == "torus" and not any(isinstance(pot[key], str) for key in ("a", "b")) and "f_gauge" not in pot:
        exact = torus_lambda1_exact(float(pot["a"]), float(pot["b"]), k).value
    rows = []
    for g in grids:
        rec = solve_problem(doc, grid=g)
        rows.append({"N": g[0], "grid": g, "lambda1": rec["lambda1"],
                     "error_vs_exact": None if exact is None else abs(rec["lambda1"] - exact),
                     "observed_order": None})
    for i in range(1, len(rows)):
        ratio = rows[i]["N"] / rows[i - 1]["N"]
        if exact is not None:
            e0, e1 = rows[i - 1]["error_vs_exact"], rows[i]["error_vs_exact"]
            if e0 > 0 and e1 > 0:
                rows[i]["observed_order"] = math.log(e0 / e1) / math.log(ratio)
        elif i >= 2:
            d0 = rows[i - 1]["lambda1"] - rows[i - 2]["lambda1"]
            d1 = rows[i]["lambda1"] - rows[i - 1]["lambda1"]
            if d0 != 0 and d1 != 0 and d0 / d1 > 0:
                rows[i]["observed_order"] = math.log(d0 / d1) / math.log(ratio)
    return rows


# --- commands -----------------------------------------------------------------------

def _wrap(rec: dict, t0: float) -> dict:
    rec["runtime_ms"] = 1e3 * (time.perf_counter() - t0)
    rec["version"] = __version__
    return rec


def cmd_lambda1(args, gtype):
    t0 = time.perf_counter()
    doc = _problem_from_args(args, gtype)
    landau_args = None
    if gtype == "nilmanifold" and doc["solver"]["method"] == "exact":
        landau_args = _landau(args)
    run_doc = dict(doc, _max_iter=args.max_iter)
    rec = solve_problem(run_doc, landau_args=landau_args)
    rec["config"] = doc
    if args.csv:
        write_csv(args.csv, [{k: v for k, v in rec.items() if k != "config"}])
    return _wrap(rec, t0)


def cmd_calibrate(args):
    t0 = time.perf_counter()
    cal = calibrate_landau(k_list=args.k_list, m_list=args.m_list, grid_list=args.grids, tol=args.tol, seed=args.seed)
    if args.save:
        save_calibration(cal)
    rec = {"calibration": cal.to_dict(with_timestamp=False), "saved_to": str(calibration_path()) if args.save else None,
           "seed": args.seed, "tol": args.tol}
    if args.csv:
        write_csv(args.csv, cal.estimates, ["k", "m", "N", "nx", "ny", "value", "iterations"])
    return _wrap(rec, t0)


def cmd_bound(args):
    t0 = time.perf_counter()
    lam, conv = _landau(args)
    w = OneForm.of(args.a, args.b)
    rep = upper_bound_report(args.k, w, grid=tuple(args.grid or (128, 64)), tol=args.sharp_tol, landau=lam,
                             m_max=args.sectors, seed=args.seed)
    d = rep.to_dict()
    rec = {"lambda1": rep.lambda1_numeric, "method": "sector", "grid": list(args.grid or (128, 64)),
           "bound": rep.bound_value, "sharp": rep.sharp, "holds": rep.holds,
           "lattice_point": d["nearest_lattice_point"], "lattice_index": d["nearest_lattice_index"],
           "ties": d["ties"], "per_sector": d["per_sector"], "coexact_norm": rep.coexact_norm,
           "harmonic_part": [rep.a, rep.b], "lambda_convention": conv, "seed": args.seed, "tol": args.sharp_tol}
    if args.csv:
        write_csv(args.csv, [{k: v for k, v in rec.items() if k not in ("per_sector", "lambda_convention")}])
    return _wrap(rec, t0)


def cmd_flux(args):
    t0 = time.perf_counter()
    w = OneForm.of(args.p, args.q, args.h)
    rep = flux_quantized(w, NilmanifoldChart(args.k), tol=args.tol)
    rec = rep.to_dict()
    rec["tol"] = args.tol
    if args.csv:
        write_csv(args.csv, [{"loop": n, "flux": f, "distance": rep.distances[n]} for n, f in rep.fluxes.items()])
    return _wrap(rec, t0)


def cmd_rumin(args):
    t0 = time.perf_counter()
    if args.g is not None:
        w = d_H(args.g)
        label = f"d_H({args.g})"
    else:
        w = OneForm.of(args.p, args.q, args.h)
        label = "form"
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(-args.box, args.box, size=(args.points, 3))
    dr, de = rumin_d_field(w), exterior_d_field(w)
    rows = []
    for p in pts:
        r, e = dr.at(*p), de.at(*p)
        rows.append({"x": p[0], "y": p[1], "z": p[2], "rumin_xy": r[0], "rumin_xa": r[1], "rumin_ya": r[2],
                     "ext_xy": e[0], "ext_xa": e[1], "ext_ya": e[2], "delta_J": delta_J(OneForm(w.p, w.q), p)})
    sup_r = max(max(abs(r["rumin_xy"]), abs(r["rumin_xa"]), abs(r["rumin_ya"])) for r in rows)
    sup_e = max(max(abs(r["ext_xy"]), abs(r["ext_xa"]), abs(r["ext_ya"])) for r in rows)
    rec = {"input": label, "points": args.points, "box": args.box, "seed": args.seed,
           "rumin_d_sup": sup_r, "exterior_d_sup": sup_e, "rumin_closed": sup_r <= args.tol, "tol": args.tol}
    if args.csv:
        write_csv(args.csv, rows)
    return _wrap(rec, t0)


def cmd_decompose(args):
    t0 = time.perf_counter()
    w = OneForm.of(args.p, args.q)
    grid = tuple(args.grid or (64, 64))
    d = decompose(w, NilmanifoldChart(args.k), grid, tol=args.tol)
    rec = {"a": d.a, "b": d.b, "exact_part_norm": d.exact_part_norm,
           "coexact_residual_norm": d.coexact_residual_norm, "grid": list(d.grid), "cg_iterations": d.iterations,
           "orthogonality": d.orthogonality, "f_range": [float(d.f_grid.min()), float(d.f_grid.max())],
           "tol": args.tol}
    if args.csv:
        write_csv(args.csv, [{k: v for k, v in rec.items()}])
    return _wrap(rec, t0)


def _read_table(path) -> dict:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise invalid(f"cannot read table: {exc}", location=str(path)) from exc
    if not rows or not {"l", "lambda1"} <= set(rows[0]):
        raise invalid("table needs columns l, lambda1", location=str(path))
    try:
        return {int(r["l"]): float(r["lambda1"]) for r in rows}
    except ValueError as exc:
        raise invalid(f"bad table entry: {exc}", location=str(path)) from exc


def cmd_chern(args):
    t0 = time.perf_counter()
    conv = None
    if args.oracle == "table":
        if not args.table:
            raise invalid("--table is required for the table oracle", location="--table")
        try:
            oracle = SpectralOracle("table", table=_read_table(args.table))
        except ValueError as exc:
            raise invalid(str(exc), location="--table") from exc
        lam = None
        if args.landau is not None:
            lam, conv = _landau(args)
    else:
        if args.k_true is None:
            raise invalid("--k-true is required", location="--k-true")
        lam, conv = _landau(argparse.Namespace(landau=args.landau or "calibrated"))
        kind = "closed_form" if args.oracle == "closed" else "numeric"
        oracle = SpectralOracle(kind, k_true=args.k_true, landau=lam, grid=(args.grid, args.grid),
                                m_max=args.sectors, seed=args.seed)
    zero_tol = args.zero_tol if args.zero_tol is not None else (1e-2 if args.oracle == "numeric" else 1e-8)
    accept_tol = args.accept_tol if args.accept_tol is not None else (5e-2 if args.oracle == "numeric" else 1e-2)
    try:
        res = recover_chern(oracle, args.lmax, zero_tol=zero_tol, accept_tol=accept_tol, landau=lam)
    except AmbiguousRecoveryError as exc:
        raise CliError(EXIT_AMBIGUOUS, "ambiguous_recovery", str(exc), clean(exc.result.to_dict())) from exc
    rec = res.to_dict()
    rec.update(oracle=args.oracle, zero_tol=zero_tol, accept_tol=accept_tol, seed=args.seed,
               note="acceptance requires L_max >= 2*k_hat")
    if conv is not None:
        rec["lambda_convention"] = conv
    if args.csv:
        write_csv(args.csv, [{"l": l, "lambda1": v} for l, v in sorted(res.values.items())], ["l", "lambda1"])
    return _wrap(rec, t0)


def cmd_normalize(args):
    t0 = time.perf_counter()
    try:
        g1, g2 = normalize_potentials(args.xi1, args.xi2)
    except SingularSystemError as exc:
        raise invalid(str(exc), xi1=args.xi1, xi2=args.xi2) from exc
    return _wrap({"gamma1": g1, "gamma2": g2}, t0)


def cmd_study(args):
    t0 = time.perf_counter()
    if args.calibration:
        cal = calibrate_landau(k_list=args.k_list, m_list=args.m_list, grid_list=[g[0] for g in args.grids],
                               tol=args.tol, seed=args.seed)
        rows = []
        for e in cal.estimates:
            rows.append({"k": e["k"], "m": e["m"], "N": e["N"], "lambda1": e["value"]})
        rec = {"study": "landau_calibration", "rows": rows, "calibration": cal.to_dict(with_timestamp=False)}
        if args.csv:
            write_csv(args.csv, rows, ["k", "m", "N", "lambda1"])
        return _wrap(rec, t0)
    if args.problem:
        doc = load_problem(args.problem)
    else:
        gtype = args.geometry
        doc = {"geometry": {"type": gtype, "k": args.k}, "potential": {"a": args.a, "b": args.b},
               "solver": {"method": args.method, "tol": args.tol, "seed": args.seed}}
        doc = validate_problem(doc)
    rows = study_convergence(doc, args.grids)
    rec = {"study": "convergence", "rows": rows, "config": doc}
    if args.csv:
        write_csv(args.csv, [{k: v for k, v in r.items() if k != "grid"} for r in rows],
                  ["N", "lambda1", "error_vs_exact", "observed_order"])
    return _wrap(rec, t0)


# --- parser ------------------------------------------------------------------------

def _add_common(p, grid=True):
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", metavar="PATH")
    if grid:
        p.add_argument("--grid", type=_int_list)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="subrumin", description="First eigenvalues of magnetic horizontal Laplacians.")
    ap.add_argument("--version", action="version", version=__version__)
    groups = ap.add_subparsers(dest="group", required=True, parser_class=_Parser)

    torus = groups.add_parser("torus").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = torus.add_parser("lambda1")
    p.add_argument("--problem")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--a", type=_num_or_expr, default=0.0)
    p.add_argument("--b", type=_num_or_expr, default=0.0)
    p.add_argument("--f-gauge", dest="f_gauge")
    p.add_argument("--method", choices=["exact", "fd"], default="exact")
    p.add_argument("--max-iter", type=int, default=20000)
    _add_common(p)
    p.set_defaults(func=lambda a: cmd_lambda1(a, "torus"))

    nil = groups.add_parser("nil").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = nil.add_parser("lambda1")
    p.add_argument("--problem")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--a", type=_num_or_expr, default=0.0)
    p.add_argument("--b", type=_num_or_expr, default=0.0)
    p.add_argument("--h", type=_num_or_expr)
    p.add_argument("--f-gauge", dest="f_gauge")
    p.add_argument("--method", choices=["closed", "exact", "sector", "grid3d"], default="sector")
    p.add_argument("--sectors", type=int)
    p.add_argument("--landau", default="calibrated", help="'calibrated', 'unit' (the constant 1) or a number")
    p.add_argument("--max-iter", type=int, default=20000)
    _add_common(p)
    p.set_defaults(func=lambda a: cmd_lambda1(a, "nilmanifold"))

    p = nil.add_parser("calibrate-landau")
    p.add_argument("--k-list", type=_int_list, default=[1, 2])
    p.add_argument("--m-list", type=_int_list, default=[1, 2])
    p.add_argument("--grids", type=_int_list, default=[32, 64, 128])
    p.add_argument("--no-save", dest="save", action="store_false")
    _add_common(p, grid=False)
    p.set_defaults(func=cmd_calibrate)

    p = nil.add_parser("bound")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--a", type=_num_or_expr, default=0.0)
    p.add_argument("--b", type=_num_or_expr, default=0.0)
    p.add_argument("--sectors", type=int, default=2)
    p.add_argument("--sharp-tol", type=float, default=1e-2)
    p.add_argument("--landau", default="calibrated")
    _add_common(p)
    p.set_defaults(func=cmd_bound)

    flux = groups.add_parser("flux").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = flux.add_parser("check")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--p", "--a", dest="p", type=_num_or_expr, default=0.0)
    p.add_argument("--q", "--b", dest="q", type=_num_or_expr, default=0.0)
    p.add_argument("--h", type=_num_or_expr, default=0.0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=cmd_flux)

    rumin = groups.add_parser("rumin").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = rumin.add_parser("check")
    p.add_argument("--p", type=_num_or_expr, default=0.0)
    p.add_argument("--q", type=_num_or_expr, default=0.0)
    p.add_argument("--h", type=_num_or_expr, default=0.0)
    p.add_argument("--g", help="check d_Rm(d_H g) instead of a given form")
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--box", type=float, default=2.0)
    _add_common(p, grid=False)
    p.set_defaults(func=cmd_rumin)

    p = groups.add_parser("decompose")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--p", type=_num_or_expr, default=0.0)
    p.add_argument("--q", type=_num_or_expr, default=0.0)
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    chern = groups.add_parser("chern").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = chern.add_parser("recover")
    p.add_argument("--oracle", choices=["closed", "numeric", "table"], required=True)
    p.add_argument("--k-true", type=int)
    p.add_argument("--lmax", type=int, required=True)
    p.add_argument("--zero-tol", type=float)
    p.add_argument("--accept-tol", type=float)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--sectors", type=int, default=2)
    p.add_argument("--table")
    p.add_argument("--landau")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=cmd_chern)

    p = chern.add_parser("normalize")
    p.add_argument("--xi1", type=float, nargs=2, required=True)
    p.add_argument("--xi2", type=float, nargs=2, required=True)
    p.set_defaults(func=cmd_normalize)

    study = groups.add_parser("study").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = study.add_parser("convergence")
    p.add_argument("--problem")
    p.add_argument("--geometry", choices=["circle", "torus", "nilmanifold"], default="torus")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--a", type=_num_or_expr, default=0.0)
    p.add_argument("--b", type=_num_or_expr, default=0.0)
    p.add_argument("--method", choices=["exact", "fd", "sector", "grid3d"], default="fd")
    p.add_argument("--grids", type=_grid_list, default=[[32], [64], [128]])
    p.add_argument("--calibration", action="store_true", help="run the Landau calibration study")
    p.add_argument("--k-list", type=_int_list, default=[1, 2])
    p.add_argument("--m-list", type=_int_list, default=[1, 2])
    _add_common(p, grid=False)
    p.set_defaults(func=cmd_study)
    return ap


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        for name in ("k", "k_true", "lmax", "points", "grid", "sectors", "max_iter"):
            v = getattr(args, name, None)
            if isinstance(v, int) and not isinstance(v, bool) and v < (0 if name == "sectors" else 1):
                raise invalid(f"--{name.replace('_', '-')} must be positive", location=f"--{name}")
        tol = getattr(args, "tol", None)
        if tol is not None and not tol > 0:
            raise invalid("--tol must be positive", location="--tol")
        rec = args.func(args)
    except CliError as exc:
        emit({"error": {"code": exc.code, "kind": exc.kind, "message": str(exc), "context": exc.context}}, stdout)
        return exc.code
    except ConvergenceError as exc:
        ctx = {}
        if exc.result is not None:
            ctx = {"residual": exc.result.residual, "iterations": exc.result.iterations}
        emit({"error": {"code": EXIT_NONCONVERGED, "kind": "non_convergence", "message": str(exc), "context": ctx}}, stdout)
        return EXIT_NONCONVERGED
    except (FieldParseError, FieldDomainError, UnsupportedPotentialError, NonPeriodicError, SingularSystemError,
            MemoryError, ValueError) as exc:
        ctx = {"type": type(exc).__name__}
        if isinstance(exc, FieldParseError):
            ctx["offset"] = exc.offset
        emit({"error": {"code": EXIT_INVALID, "kind": "validation", "message": str(exc), "context": ctx}}, stdout)
        return EXIT_INVALID
    emit(rec, stdout)
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
