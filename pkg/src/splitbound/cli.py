"""Configuration-driven experiment runner and verification suites.

Commands:

* ``splitbound run <config.toml|config.json>`` - run one experiment, write
  trace/bound CSVs, a summary JSON, and optional SVG plots.  Exit code 0 on
  success, 2 when refinement did not converge, 3 when the run aborted on
  blow-up (artifacts are still written), 1 on configuration errors.
* ``splitbound verify <suite>`` - run a named check suite
  (propagators | bounds | burgers | vorticity | all), print one JSON verdict
  per check.
* ``splitbound presets list`` - list preset names.

The environment variable ``SPLITBOUND_OUTPUT_ROOT`` prefixes relative output
directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from splitbound import verify as verify_mod
from splitbound.bounds import (
    bound_curves_for_monitors,
    bounds_to_csv,
    build_envelope,
    build_heat_data,
    detect_blowup,
    displacement_I,
    vorticity_bound_curve,
)
from splitbound.grid import MultiIndexPair, monitor_pairs, make_grid
from splitbound.models import evolve_vorticity
from splitbound.nonlinear import BlowupAbort, solve_nonlinear
from splitbound.presets import PRESET_NAMES, get_preset, random_linear_problem
from splitbound.propagators import Viscosity
from splitbound.splitting import make_decomposition, refine_until

__all__ = ["main", "run_experiment", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Invalid experiment configuration; messages carry dotted field paths."""


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    try:
        import tomllib  # py >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


_KNOWN_SECTIONS = {"domain", "time", "physics", "monitors", "outputs"}


def _check(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def build_problem(config: dict):
    """Resolve preset + overrides into a Problem; validate field by field."""
    for key in config:
        _check(
            key in _KNOWN_SECTIONS or key == "preset",
            key,
            "unknown configuration section",
        )
    preset_name = config.get("preset")
    _check(preset_name is not None, "preset", "a preset name is required")
    if preset_name.startswith("random-linear-"):
        problem = random_linear_problem(int(preset_name.rsplit("-", 1)[1]))
    else:
        try:
            problem = get_preset(preset_name)
        except KeyError as exc:
            raise ConfigError(f"preset: {exc.args[0]}") from None

    dom = config.get("domain", {})
    if dom:
        _check(
            not preset_name.startswith("random-linear-"),
            "domain",
            "randomized presets do not support domain overrides",
        )
        n = problem.grid.n
        widths = dom.get("half_width", problem.grid.half_width)
        points = dom.get("points", problem.grid.points)
        periodic = dom.get("periodic", problem.grid.periodic_native)
        _check(
            np.ndim(widths) == 0 or len(widths) == n,
            "domain.half_width",
            f"must be scalar or length {n}",
        )
        _check(
            np.ndim(points) == 0 or len(points) == n,
            "domain.points",
            f"must be scalar or length {n}",
        )
        try:
            grid = make_grid(n, widths, points, periodic)
            problem = get_preset(preset_name, grid=grid)
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from exc

    tim = config.get("time", {})
    T = float(tim.get("T", problem.T))
    _check(T > 0, "time.T", "horizon must be positive")
    N0 = int(tim.get("N0", problem.N0))
    _check(N0 >= 1, "time.N0", "need at least one step")
    tol = float(tim.get("tol", problem.tol))
    _check(tol > 0, "time.tol", "tolerance must be positive")
    max_doublings = int(tim.get("max_doublings", problem.max_doublings))
    _check(max_doublings >= 0, "time.max_doublings", "must be non-negative")
    problem.T, problem.N0, problem.tol, problem.max_doublings = T, N0, tol, max_doublings

    phys = config.get("physics", {})
    if "nu" in phys:
        nu = phys["nu"]
        nu_tuple = (float(nu),) * problem.grid.n if np.isscalar(nu) else tuple(map(float, nu))
        _check(
            len(nu_tuple) == problem.grid.n and all(v >= 0 for v in nu_tuple),
            "physics.nu",
            f"need {problem.grid.n} non-negative viscosities",
        )
        problem.nu = Viscosity(nu_tuple)
    if "blowup_factor" in phys:
        factor = float(phys["blowup_factor"])
        _check(factor > 1, "physics.blowup_factor", "must exceed 1")
        problem.blowup_factor = factor

    mon = config.get("monitors", {})
    if mon:
        pairs = []
        if "pairs" in mon:
            _check(isinstance(mon["pairs"], list), "monitors.pairs", "must be a list")
            for i, entry in enumerate(mon["pairs"]):
                _check(
                    isinstance(entry, list) and len(entry) == 2,
                    f"monitors.pairs[{i}]",
                    "expected [alpha, beta]",
                )
                try:
                    pairs.append(MultiIndexPair(tuple(entry[0]), tuple(entry[1])))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"monitors.pairs[{i}]: {exc}") from exc
        if "max_alpha" in mon or "max_beta" in mon:
            pairs.extend(
                monitor_pairs(
                    problem.grid.n,
                    int(mon.get("max_alpha", 0)),
                    int(mon.get("max_beta", 2)),
                )
            )
        _check(pairs, "monitors", "no monitor pairs specified")
        seen = []
        for p in pairs:
            if p not in seen:
                seen.append(p)
        problem.monitors = tuple(seen)
        if problem.asserted_monitors is not None:
            problem.asserted_monitors = tuple(
                p for p in problem.asserted_monitors if p in problem.monitors
            )

    out = config.get("outputs", {})
    directory = out.get("directory", f"out/{problem.name}")
    root = os.environ.get("SPLITBOUND_OUTPUT_ROOT", "")
    if root and not os.path.isabs(directory):
        directory = os.path.join(root, directory)
    formats = out.get("formats", ["csv", "json"])
    _check(
        isinstance(formats, list)
        and all(f in ("csv", "json", "svg") for f in formats),
        "outputs.formats",
        "entries must be csv, json, or svg",
    )
    svg = bool(out.get("svg", "svg" in formats))
    return problem, Path(directory), svg


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_summary(path, summary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _write_svg(path, series, title="", log_y=False) -> None:
    """Minimal deterministic line plot: one polyline per (label, x, y)."""
    W, H, ML, MB = 640, 420, 60, 40
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if log_y:
        ys = np.log10(np.maximum(ys, 1e-300))
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]

    def px(x):
        return ML + (x - x0) / (x1 - x0) * (W - ML - 20)

    def py(y):
        return H - MB - (y - y0) / (y1 - y0) * (H - MB - 30)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<text x="{W // 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - 20}" y2="{H - MB}" stroke="#000"/>',
        f'<line x1="{ML}" y1="{H - MB}" x2="{ML}" y2="30" stroke="#000"/>',
        f'<text x="{ML}" y="{H - MB + 16}" font-size="11">{x0:.4g}</text>',
        f'<text x="{W - 60}" y="{H - MB + 16}" font-size="11">{x1:.4g}</text>',
        f'<text x="4" y="{H - MB}" font-size="11">{y0:.4g}{"(log10)" if log_y else ""}</text>',
        f'<text x="4" y="36" font-size="11">{y1:.4g}</text>',
    ]
    for idx, (label, x, y) in enumerate(series):
        y = np.asarray(y, dtype=float)
        if log_y:
            y = np.log10(np.maximum(y, 1e-300))
        pts = " ".join(
            f"{px(xx):.2f},{py(yy):.2f}" for xx, yy in zip(np.asarray(x), y)
        )
        color = colors[idx % len(colors)]
        lines.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        lines.append(
            f'<text x="{W - 150}" y="{44 + 14 * idx}" font-size="11" '
            f'fill="{color}">{label}</text>'
        )
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _subsample_trace(trace, stride):
    from splitbound.splitting import SeminormTrace

    return SeminormTrace(trace.pairs, trace.times[::stride], trace.values[::stride])


def _linear_artifacts(problem, outdir):
    traj, report = refine_until(
        problem.initial,
        problem.coeffs,
        problem.nu,
        problem.T,
        problem.monitors,
        problem.tol,
        problem.N0,
        problem.max_doublings,
        decay_tol=problem.decay_tol,
    )
    # bound tables cost O(nodes^2) transforms; emit on a <= 33-node subset
    full = traj.seminorms
    stride = max(1, (full.times.size - 1) // 32)
    trace = _subsample_trace(full, stride)
    nodes = trace.times
    alphas = sorted({p.alpha for p in problem.monitors})
    env = build_envelope(problem.coeffs, problem.grid, nodes, order=2, m=problem.m)
    I = displacement_I(env)
    heat = build_heat_data(
        problem.initial, problem.coeffs.k, problem.nu, nodes, alphas, I, 2
    )
    curves = bound_curves_for_monitors(problem.monitors, env, I, heat)
    ratios = {}
    for j, pair in enumerate(trace.pairs):
        with np.errstate(invalid="ignore", divide="ignore"):
            ratios[pair.label] = float(
                np.max(trace.values[:, j] / np.maximum(curves[pair].values, 1e-300))
            )
    summary = {
        "kind": "linear",
        "convergence": report.to_dict(),
        "bound_ratio_max": ratios,
        "exit_reason": "ok" if report.converged else "not converged",
    }
    code = 0 if report.converged else 2
    return trace, curves, traj, summary, code


def _burgers_artifacts(problem, outdir):
    code = 0
    summary = {"kind": "burgers"}
    traj, report = solve_nonlinear(
        problem.initial,
        problem.builder,
        problem.nu,
        problem.T,
        problem.monitors,
        problem.tol,
        N0=problem.N0,
        levels=problem.max_doublings + 1,
        decay_tol=problem.decay_tol,
        blowup_factor=problem.blowup_factor,
    )
    summary["nonlinear"] = report.to_dict()
    if report.blowup is not None:
        code = 3
        summary["exit_reason"] = "blow-up abort"
    elif not report.converged:
        code = 2
        summary["exit_reason"] = "not converged"
    else:
        summary["exit_reason"] = "ok"
    estimate = detect_blowup(traj.seminorms)
    summary["blowup_estimate"] = estimate.to_dict()

    # self-consistent bound curves: the advection envelope is the measured
    # solution itself (the coefficients are built from it)
    nodes = traj.seminorms.times
    from splitbound.bounds import Envelope

    zeros = np.zeros(nodes.size)

    def order_trace(ell):
        cols = [
            traj.seminorms.values[:, j]
            for j, p in enumerate(traj.seminorms.pairs)
            if p.derivative_order == ell and p.weight_order == 0
        ]
        return np.max(cols, axis=0) if cols else zeros

    env = Envelope(
        nodes=nodes,
        n=problem.grid.n,
        m=problem.m,
        g_sup=order_trace(0),
        dg_sup={1: order_trace(1), 2: order_trace(2)},
        h_exp_rate=zeros,
        dh_sup={1: zeros, 2: zeros},
    )
    I = displacement_I(env)
    alphas = sorted({p.alpha for p in problem.monitors})
    heat = build_heat_data(problem.initial, None, problem.nu, nodes, alphas, I, 2)
    curves = bound_curves_for_monitors(problem.monitors, env, I, heat)
    return traj.seminorms, curves, traj, summary, code


def _vorticity_artifacts(problem, outdir):
    code = 0
    summary = {"kind": "vorticity"}
    dec = make_decomposition(problem.T, problem.N0)
    try:
        vtraj = evolve_vorticity(
            problem.initial,
            problem.nu,
            dec,
            problem.monitors,
            support_center=problem.support_center,
            support_threshold=problem.support_threshold,
            decay_tol=problem.decay_tol,
            blowup_factor=problem.blowup_factor,
        )
        summary["exit_reason"] = "ok"
    except BlowupAbort as abort:
        vtraj = abort.trajectory
        code = 3
        summary["exit_reason"] = "blow-up abort"
        summary["abort"] = {"node": abort.node, "time": abort.time, "reason": abort.reason}

    trace = vtraj.seminorms
    nodes = trace.times
    heat = build_heat_data(
        problem.initial,
        None,
        problem.nu,
        nodes,
        sorted({p.alpha for p in problem.monitors}),
        vtraj.u_envelope.displacement(),
        2,
    )
    curves = {}
    cache = {}
    for pair in problem.monitors:
        key = (pair.derivative_order, pair.alpha)
        if key not in cache:
            cache[key] = vorticity_bound_curve(
                pair.derivative_order, pair.alpha, vtraj.u_envelope, heat,
                problem.grid.n,
            )
        curves[pair] = cache[key]

    asserted = problem.asserted_monitors or problem.monitors
    ratios = {}
    for pair in problem.monitors:
        with np.errstate(invalid="ignore", divide="ignore"):
            r = trace.column(pair) / np.maximum(curves[pair].values, 1e-300)
        ratios[pair.label] = float(np.max(r))
    summary["bound_ratio_max"] = ratios
    summary["asserted_monitors"] = [p.label for p in asserted]
    summary["energy"] = vtraj.energy
    summary["energy_monotone"] = bool(
        np.all(np.diff(vtraj.energy) <= 1e-3 * np.abs(vtraj.energy[:-1]) + 1e-15)
    )
    summary["omega_sup"] = vtraj.omega_sup
    summary["omega_sup_drift"] = float(
        np.max(np.abs(vtraj.omega_sup - vtraj.omega_sup[0]))
        / max(vtraj.omega_sup[0], 1e-300)
    )
    summary["bkm_integral"] = vtraj.bkm_integral
    summary["support_radius"] = vtraj.support_radius
    summary["div_u_max"] = float(np.max(vtraj.div_u_sup))
    estimate = detect_blowup(trace)
    summary["blowup_estimate"] = estimate.to_dict()
    return trace, curves, vtraj, summary, code


def run_experiment(config_path) -> int:
    """Run one configured experiment and write its artifact set."""
    config = load_config(config_path)
    problem, outdir, svg = build_problem(config)
    outdir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    if problem.kind == "linear":
        trace, curves, traj, summary, code = _linear_artifacts(problem, outdir)
    elif problem.kind == "burgers":
        trace, curves, traj, summary, code = _burgers_artifacts(problem, outdir)
    elif problem.kind == "vorticity":
        trace, curves, traj, summary, code = _vorticity_artifacts(problem, outdir)
    else:  # pragma: no cover - presets only produce the three kinds
        raise ConfigError(f"preset kind {problem.kind!r} is not runnable")

    trace.to_csv(outdir / "trace.csv")
    bounds_to_csv(outdir / "bounds.csv", trace.pairs, curves, trace.times)

    base = traj.trajectory if hasattr(traj, "trajectory") else traj
    summary.update(
        {
            "preset": problem.name,
            "grid": {
                "n": problem.grid.n,
                "half_width": list(problem.grid.half_width),
                "points": list(problem.grid.points),
                "periodic": problem.grid.periodic_native,
            },
            "nu": list(problem.nu.nu),
            "T": problem.T,
            "monitors": [p.label for p in trace.pairs],
            "decay_ratio_max": float(
                max(d["decay_ratio"] for d in base.diagnostics)
            ),
            "warnings": base.warnings,
            "wall_time_s": time.perf_counter() - started,
            "exit_code": code,
        }
    )
    _write_summary(outdir / "summary.json", summary)

    if svg:
        plots = outdir / "plots"
        plots.mkdir(exist_ok=True)
        for pair in trace.pairs:
            _write_svg(
                plots / f"{pair.label}.svg",
                [
                    ("trace", trace.times, trace.column(pair)),
                    ("bound", trace.times, curves[pair].values),
                ],
                title=f"{problem.name}: {pair.label}",
                log_y=bool(config.get("outputs", {}).get("log_scale", False)),
            )
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="splitbound",
        description="composition-of-propagators PDE runner with bound verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="TOML or JSON experiment configuration")
    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite", help="propagators | bounds | burgers | vorticity | all")
    p_pre = sub.add_parser("presets", help="preset utilities")
    p_pre.add_argument("action", choices=["list"])
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            return run_experiment(args.config)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 1
    if args.command == "verify":
        if args.suite not in verify_mod.SUITES and args.suite != "all":
            print(
                f"unknown suite {args.suite!r}; choose from "
                f"{', '.join([*verify_mod.SUITES, 'all'])}",
                file=sys.stderr,
            )
            return 1
        results = verify_mod.run_suite(args.suite)
        for entry in results:
            print(json.dumps(entry, sort_keys=True, default=_json_default))
        failed = sum(not e["passed"] for e in results)
        print(
            json.dumps(
                {"suite": args.suite, "checks": len(results), "failed": failed},
                sort_keys=True,
            )
        )
        return 0
    if args.command == "presets":
        for name in PRESET_NAMES:
            print(name)
        return 0
    return 1  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
