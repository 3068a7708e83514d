"""Command-line experiment runner.

Every command reads an optional JSON config, applies flag overrides, writes
its reports plus ``config.json`` (resolved config and tool version) into
``--out``.  Exit status: 0 ok, 1 runtime failure, 2 config error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conservation import claw_residual, series_claws, torus_graph_set
from .errors import ConfigError, RichTorusError
from .evolution import (
    LAX_FRIEDRICHS,
    SCHEMES,
    EvolutionParams,
    InitialDataSpec,
    best_shift_discrepancy,
    characteristic_trace,
    evolve,
    make_initial_data,
)
from .geodesics import (
    HistoryMetric,
    PerturbedMetric,
    chart_discrepancy,
    flat_metric,
    integrate_geodesic,
    integrate_reduced,
    invariant_drift,
)
from .reports import (
    CLAW_HEADER,
    DIAGNOSTICS_HEADER,
    TRACE_HEADER,
    TRAJECTORY_HEADER,
    claw_rows,
    diagnostics_rows,
    emit_report,
    json_text,
    series_record,
    snapshots_text,
    spectrum_header,
    spectrum_rows,
    trajectory_rows,
)
from .spectral import (
    companion_roots,
    char_poly_coeffs,
    dense_eigenvalues,
    gn_indicators,
    invert_riemann_map,
    lemma_discrepancy,
    random_hyperbolic_points,
    random_point,
    random_rich_check_points,
    richness_residual,
    riemann_invariants,
    riemann_jacobian,
    spectrum,
)

log = logging.getLogger("richtorus")

NUM = (int, float)
OPT_NUM = (int, float, type(None))
OPT_LIST = (list, type(None))

# key -> (accepted types, default); nested dicts are sub-schemas
EVOLUTION_SCHEMA = {
    "grid": {"M": (int, 256), "L": (NUM, 1.0)},
    "initial": {"means": (OPT_LIST, None), "modes": (list, []), "g_min": (NUM, 1e-3)},
    "scheme": (str, SCHEMES[0]),
    "cfl": (NUM, 0.9),
    "t_end": (NUM, 0.1),
    "snapshot_stride": (int, 1),
    "caps": {"gradient_cap": (OPT_NUM, None), "factor": (NUM, 1e3)},
    "hyperbolicity_policy": (str, "halt"),
    "levels": (OPT_LIST, None),
}

COMMON = {"n": (int, 3), "seed": (int, 0)}

SCHEMAS = {
    "validate": {**COMMON, "samples": (int, 1000)},
    "spectrum": {**COMMON, "point": (OPT_LIST, None), "initial": (dict, None), "grid": (dict, None)},
    "claws": {**COMMON, "point": (OPT_LIST, None), "order": (int, 4), "evolution": (dict, None)},
    "evolve": {**COMMON, **EVOLUTION_SCHEMA},
    "trace": {
        **COMMON,
        "evolution": (dict, None),
        "field": (int, 0),
        "x0": (NUM, 0.3),
        "substeps": (int, 1),
    },
    "geodesics": {
        **COMMON,
        "metric": (str, "flat"),
        "point": (OPT_LIST, None),
        "evolution": (dict, None),
        "interpolation": (str, "linear"),
        "init": {"t": (NUM, 0.0), "x": (NUM, 0.3), "phi": (NUM, 0.4)},
        "tau_span": (NUM, 10.0),
        "dtau": (NUM, 1e-3),
        "stride": (int, 10),
        "reduced": (bool, False),
        "perturbation": (dict, None),
    },
    "gn-scan": {**COMMON, "samples": (int, 100), "step": (OPT_NUM, None)},
    "rich-check": {**COMMON, "samples": (int, 100), "step": (NUM, 1e-3), "q_min": (NUM, 200.0)},
}

PERTURBATION_SCHEMA = {"field": (int, 0), "amplitude": (NUM, 1e-2), "mode": (int, 1)}


def _resolve(schema, given, where):
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    out = {}
    for key, spec in schema.items():
        path = f"{where}.{key}" if where else key
        if isinstance(spec, dict):
            out[key] = _resolve(spec, given.get(key, {}), path)
            continue
        types, default = spec
        value = given.get(key, copy.deepcopy(default))
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError(f"{path}: expected {types}, got a boolean")
        if not isinstance(value, types) and not (value is None and default is None):
            raise ConfigError(f"{path}: expected {types}, got {type(value).__name__}")
        if types == NUM and isinstance(value, int):
            value = float(value)
        out[key] = value
    return out


def resolve_config(command, file_config=None, overrides=None):
    cfg = dict(file_config or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in SCHEMAS[command]:
            raise ConfigError(f"option --{key} does not apply to '{command}'")
        cfg[key] = value
    resolved = _resolve(SCHEMAS[command], cfg, "")
    if resolved["n"] < 2:
        raise ConfigError("n must be >= 2")
    if "evolution" in resolved:
        needed = command == "trace" or (command == "geodesics" and resolved["metric"] == "evolved")
        if resolved["evolution"] is not None or needed:
            resolved["evolution"] = _resolve(EVOLUTION_SCHEMA, resolved["evolution"] or {}, "evolution")
    if command == "geodesics" and resolved["perturbation"] is not None:
        resolved["perturbation"] = _resolve(PERTURBATION_SCHEMA, resolved["perturbation"], "perturbation")
    if command == "spectrum":
        if resolved["initial"] is not None:
            resolved["initial"] = _resolve(EVOLUTION_SCHEMA["initial"], resolved["initial"], "initial")
        if resolved["grid"] is not None:
            resolved["grid"] = _resolve(EVOLUTION_SCHEMA["grid"], resolved["grid"], "grid")
    return resolved


# helpers ---------------------------------------------------------------------

def _point(cfg):
    if cfg.get("point") is None:
        u = np.zeros(cfg["n"])
        u[-1] = 1.0
        return u
    u = np.array(cfg["point"], dtype=float)
    if u.size != cfg["n"]:
        raise ConfigError(f"point has {u.size} entries but n = {cfg['n']}")
    return u


def _initial_spec(n, grid, initial):
    means = initial["means"]
    if means is None:
        means = [0.0] * (n - 1) + [1.0]
    if len(means) != n:
        raise ConfigError(f"initial.means has {len(means)} entries but n = {n}")
    modes = initial["modes"] or [[] for _ in range(n)]
    if len(modes) != n:
        raise ConfigError("initial.modes needs one list of [mode, amplitude, phase] per field")
    try:
        modes = tuple(tuple((int(m), float(a), float(p)) for m, a, p in field) for field in modes)
    except (TypeError, ValueError) as exc:
        raise ConfigError("initial.modes entries must be [mode, amplitude, phase]") from exc
    return InitialDataSpec(
        means=tuple(float(v) for v in means),
        modes=modes,
        cells=grid["M"],
        period=grid["L"],
        g_min=initial["g_min"],
    )


def _run_evolution(n, ev):
    params = EvolutionParams(
        scheme=ev["scheme"],
        cfl=ev["cfl"],
        t_end=ev["t_end"],
        snapshot_stride=ev["snapshot_stride"],
        blowup_gradient_cap=ev["caps"]["gradient_cap"],
        blowup_factor=ev["caps"]["factor"],
        hyperbolicity_policy=ev["hyperbolicity_policy"],
        levels=None if ev["levels"] is None else tuple(ev["levels"]),
    )
    grid0 = make_initial_data(_initial_spec(n, ev["grid"], ev["initial"]))
    return evolve(grid0, params)


def _history_summary(history):
    summary = {
        "termination": history.termination,
        "t_final": history.t_final,
        "blowup_time": history.blowup_time,
        "steps": len(history.diagnostics),
        "snapshots": len(history.snapshots),
    }
    if history.params is not None and history.params.scheme == LAX_FRIEDRICHS and history.conserved_sums:
        sums = np.array(history.conserved_sums)
        summary["max_sum_change_per_step"] = float(np.max(np.abs(np.diff(sums, axis=0)))) if len(sums) > 1 else 0.0
    t, shift, err = best_shift_discrepancy(history)[-1]
    summary["best_shift"] = {"t": t, "shift": shift, "discrepancy": err}
    return summary


# commands --------------------------------------------------------------------

def cmd_validate(cfg, out):
    n, samples = cfg["n"], cfg["samples"]
    rng = np.random.default_rng(cfg["seed"])
    lemma = 0.0
    for _ in range(samples):
        u = random_point(rng, n)
        lam = rng.uniform(-5.0, 5.0)
        lemma = max(lemma, lemma_discrepancy(u, lam))
    pts = random_hyperbolic_points(rng, n, samples)
    routes = 0.0
    for u in pts:
        a = companion_roots(char_poly_coeffs(u)).real
        b = np.sort(dense_eigenvalues(u).real)
        routes = max(routes, float(np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(a)))))
    jac_fd, roundtrip = 0.0, 0.0
    for u in pts[: min(samples, 100)]:
        J = riemann_jacobian(u)
        h = 1e-6
        fd = np.empty_like(J)
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            fd[:, k] = (riemann_invariants(u + e) - riemann_invariants(u - e)) / (2 * h)
        jac_fd = max(jac_fd, float(np.max(np.abs(fd - J))))
        r = riemann_invariants(u)
        guess = u + 1e-3 * rng.standard_normal(n)
        back = invert_riemann_map(r, guess if spectrum(guess).hyperbolic else u)
        roundtrip = max(roundtrip, float(np.max(np.abs(back - u))))
    report = {
        "n": n,
        "samples": samples,
        "seed": cfg["seed"],
        "lemma_max_residual": lemma,
        "eigen_route_max_diff": routes,
        "riemann_jacobian_fd_max": jac_fd,
        "riemann_roundtrip_max": roundtrip,
        "passed": bool(lemma <= 1e-9 and routes <= 1e-8 and jac_fd <= 1e-6 and roundtrip <= 1e-10),
    }
    emit_report(report, "json", out / "validate.json")
    return report


def cmd_spectrum(cfg, out):
    n = cfg["n"]
    if cfg["initial"] is not None or cfg["grid"] is not None:
        grid = cfg["grid"] or _resolve(EVOLUTION_SCHEMA["grid"], {}, "grid")
        initial = cfg["initial"] or _resolve(EVOLUTION_SCHEMA["initial"], {}, "initial")
        spec = _initial_spec(n, grid, initial)
        x = (np.arange(spec.cells) + 0.5) * spec.period / spec.cells
        values = np.empty((spec.cells, n))
        for k in range(n):
            values[:, k] = spec.means[k]
            for m, a, p in spec.modes[k]:
                values[:, k] += a * np.sin(2 * np.pi * m * x / spec.period + p)
    else:
        values, x = _point(cfg)[None, :], np.zeros(1)
    rows = spectrum_rows(values, x)
    emit_report(rows, "csv", out / "spectrum.csv", spectrum_header(n))
    return rows


def cmd_claws(cfg, out):
    u = _point(cfg)
    record = series_record(u, series_claws(u, cfg["order"]))
    emit_report(record, "json", out / "series.json")
    if cfg["evolution"] is not None:
        history = _run_evolution(cfg["n"], cfg["evolution"])
        c = history.params.level_set(cfg["n"])
        rows = []
        for level in range(1, len(history.snapshots) - 1):
            grid = history.snapshots[level]
            res = claw_residual(history, c, level)
            rows += claw_rows(grid.time, grid.x, torus_graph_set(grid.values, c), res)
        emit_report(rows, "csv", out / "claws.csv", CLAW_HEADER)
        emit_report(_history_summary(history), "json", out / "summary.json")
    return record


def cmd_evolve(cfg, out):
    history = _run_evolution(cfg["n"], cfg)
    (out / "snapshots.csv").write_bytes(snapshots_text(history).encode())
    emit_report(diagnostics_rows(history.diagnostics), "csv", out / "diagnostics.csv", DIAGNOSTICS_HEADER)
    summary = _history_summary(history)
    emit_report(summary, "json", out / "summary.json")
    return summary


def cmd_trace(cfg, out):
    history = _run_evolution(cfg["n"], cfg["evolution"])
    tr = characteristic_trace(history, cfg["field"], cfg["x0"], cfg["substeps"])
    emit_report([list(r) for r in zip(tr.t, tr.x, tr.r)], "csv", out / "trace.csv", TRACE_HEADER)
    summary = {"field": cfg["field"], "x0": cfg["x0"], "drift": tr.drift, "truncated": tr.truncated}
    emit_report(summary, "json", out / "trace_summary.json")
    return summary


def cmd_geodesics(cfg, out):
    if cfg["metric"] == "flat":
        metric = flat_metric(_point(cfg))
    elif cfg["metric"] == "evolved":
        metric = HistoryMetric(_run_evolution(cfg["n"], cfg["evolution"]), cfg["interpolation"])
    else:
        raise ConfigError("metric must be 'flat' or 'evolved'")
    if cfg["perturbation"] is not None:
        p = cfg["perturbation"]
        metric = PerturbedMetric(metric, p["field"], p["amplitude"], p["mode"])
    init = cfg["init"]
    full = integrate_geodesic(metric, (init["t"], init["x"], init["phi"]), cfg["tau_span"], cfg["dtau"], cfg["stride"])
    emit_report(trajectory_rows(full), "csv", out / "trajectory.csv", TRAJECTORY_HEADER)
    drift = invariant_drift(full)
    if cfg["reduced"]:
        span = float(full.t[-1] - full.t[0])
        red = integrate_reduced(metric, (init["t"], init["x"], np.sin(init["phi"])), span, cfg["dtau"], cfg["stride"])
        emit_report(trajectory_rows(red), "csv", out / "trajectory_reduced.csv", TRAJECTORY_HEADER)
        dx, dtau = chart_discrepancy(full, red, metric)
        drift["chart_dx"], drift["chart_dtau"] = dx, dtau
    emit_report(drift, "json", out / "drift.json")
    return drift


def cmd_gn_scan(cfg, out):
    n = cfg["n"]
    rng = np.random.default_rng(cfg["seed"])
    entries, found = [], 0
    while found < cfg["samples"]:
        u = random_point(rng, n)
        h = cfg["step"] if cfg["step"] is not None else 1e-4 * (1.0 + float(np.max(np.abs(u))))
        if not spectrum(u).hyperbolic:
            continue
        try:
            ind = gn_indicators(u, h)
        except RichTorusError:
            continue
        found += 1
        for i, v in enumerate(ind):
            entries.append({"point": [float(a) for a in u], "field_index": i, "indicator": float(v), "step": h})
    emit_report(entries, "json", out / "gn_scan.json")
    return entries


def cmd_rich_check(cfg, out):
    n, h = cfg["n"], cfg["step"]
    rng = np.random.default_rng(cfg["seed"])
    pts = random_rich_check_points(rng, n, cfg["samples"], h=h, q_min=cfg["q_min"])
    records = []
    for u in pts:
        raw = richness_residual(u, h)
        if not raw:
            records.append({"point": [float(a) for a in u], "max_abs": 0.0, "max_scaled": 0.0, "max_scaled_half": 0.0})
            continue
        scaled = richness_residual(u, h, scaled=True)
        half = richness_residual(u, h / 2, scaled=True)
        records.append(
            {
                "point": [float(a) for a in u],
                "max_abs": max(abs(v) for v in raw.values()),
                "max_scaled": max(abs(v) for v in scaled.values()),
                "max_scaled_half": max(abs(v) for v in half.values()),
            }
        )
    worst = max(r["max_scaled"] for r in records)
    worst_half = max(r["max_scaled_half"] for r in records)
    summary = {
        "n": n,
        "step": h,
        "q_min": cfg["q_min"],
        "max_scaled": worst,
        "max_scaled_half": worst_half,
        "halving_ratio": worst / worst_half if worst_half > 0 else None,
        "max_abs": max(r["max_abs"] for r in records),
    }
    emit_report({"summary": summary, "points": records}, "json", out / "rich_check.json")
    return summary


COMMANDS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "claws": cmd_claws,
    "evolve": cmd_evolve,
    "trace": cmd_trace,
    "geodesics": cmd_geodesics,
    "gn-scan": cmd_gn_scan,
    "rich-check": cmd_rich_check,
}


def _parse_point(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="richtorus", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"richtorus {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, default=None, help="output directory (default runs/<command>)")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        keys = SCHEMAS[name]
        if "samples" in keys:
            p.add_argument("--samples", type=int)
        if "point" in keys:
            p.add_argument("--point", type=_parse_point, help="comma-separated a_0,...,a_{n-1}")
        if "order" in keys:
            p.add_argument("--order", type=int)
        if "scheme" in keys:
            p.add_argument("--scheme", choices=SCHEMES)
        if "t_end" in keys:
            p.add_argument("--t-end", dest="t_end", type=float)
        if "step" in keys:
            p.add_argument("--step", type=float)
    return parser


OVERRIDE_KEYS = ("seed", "n", "samples", "point", "order", "scheme", "t_end", "step")


def run(command, cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"tool": "richtorus", "version": __version__, "command": command, "config": cfg}
    (out / "config.json").write_bytes(json_text(manifest).encode())
    return COMMANDS[command](copy.deepcopy(cfg), out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        file_cfg = {}
        if args.config is not None:
            try:
                file_cfg = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
        cfg = resolve_config(args.command, file_cfg, overrides)
        if args.command == "evolve":
            # validate the evolution record eagerly so bad values exit with status 2
            EvolutionParams(
                scheme=cfg["scheme"],
                cfl=cfg["cfl"],
                t_end=cfg["t_end"],
                snapshot_stride=cfg["snapshot_stride"],
                blowup_gradient_cap=cfg["caps"]["gradient_cap"],
                blowup_factor=cfg["caps"]["factor"],
                hyperbolicity_policy=cfg["hyperbolicity_policy"],
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path("runs") / args.command
    try:
        run(args.command, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RichTorusError, ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
