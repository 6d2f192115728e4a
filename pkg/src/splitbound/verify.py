"""Built-in verification suites (lighter mirrors of the acceptance tests).

Each check returns ``{"check", "passed", "detail"}``; failures are report
entries, never exceptions.
"""

from __future__ import annotations

import numpy as np

from splitbound.bounds import (
    bound_curves_for_monitors,
    build_envelope,
    build_heat_data,
    detect_blowup,
    displacement_I,
    vorticity_bound_curve,
)
from splitbound.grid import MultiIndexPair, make_grid, sample_field
from splitbound.models import (
    burgers_blowup,
    burgers_builder,
    burgers_oracle,
    evolve_vorticity,
)
from splitbound.nonlinear import solve_delayed
from splitbound.presets import get_preset, random_linear_problem
from splitbound.propagators import (
    CoefficientSet,
    Viscosity,
    heat_step,
    multiply_step,
    scaling_step,
    transport_step,
)
from splitbound.splitting import make_decomposition, solve_linear

__all__ = ["SUITES", "run_suite"]


def _entry(name, passed, **detail):
    return {"check": name, "passed": bool(passed), "detail": detail}


def _verify_propagators() -> list[dict]:
    out = []
    grid = make_grid(1, [8.0], [256])
    f0 = sample_field(lambda x: np.exp(-(x**2)), grid)

    g = heat_step(f0, Viscosity((1.0,)), 0.25)
    err = abs(g.sup() - 2.0**-0.5)
    out.append(_entry("heat-peak-law", err < 1e-8, error=err))

    nu = Viscosity((0.7,))
    twice = heat_step(heat_step(f0, nu, 0.1), nu, 0.15)
    once = heat_step(f0, nu, 0.25)
    err = float(np.max(np.abs(twice.data - once.data)))
    out.append(_entry("heat-semigroup", err < 1e-12, error=err))

    shifted = transport_step(f0, CoefficientSet.constant(g=[1.0]), 0.0, 0.5)
    x = grid.axes[0]
    err = float(np.max(np.abs(shifted.data[0] - np.exp(-((x + 0.5) ** 2)))))
    out.append(_entry("transport-constant-shift", err < 1e-8, error=err))

    f2 = sample_field(
        lambda x: np.stack([np.exp(-(x**2)), x * np.exp(-(x**2))]), grid, m=2
    )
    rot = multiply_step(
        f2, CoefficientSet.constant(h=[[0.0, -1.0], [1.0, 0.0]]), 0.0, np.pi / 2
    )
    err = max(
        float(np.max(np.abs(rot.data[0] + f2.data[1]))),
        float(np.max(np.abs(rot.data[1] - f2.data[0]))),
    )
    out.append(_entry("multiply-rotation", err < 1e-10, error=err))

    fine = make_grid(1, [8.0], [2048])
    ff = sample_field(lambda x: np.exp(-(x**2)), fine)
    t = 0.1
    dil = scaling_step(ff, [1.0], t)
    worst = 0.0
    for pair, rate in [
        (MultiIndexPair((1,), (0,)), -1.0),
        (MultiIndexPair((0,), (1,)), 1.0),
        (MultiIndexPair((1,), (2,)), 1.0),
        (MultiIndexPair((2,), (2,)), 0.0),
    ]:
        lhs = _refined_seminorm(dil, pair)
        rhs = np.exp(rate * t) * _refined_seminorm(ff, pair)
        worst = max(worst, abs(lhs - rhs))
    out.append(_entry("scaling-seminorm-law", worst < 1e-6, error=worst))
    return out


def _refined_seminorm(field, pair, refine=16):
    from splitbound.grid import (
        _spectral_upsample,
        seminorm_weight,
        spectral_derivative,
    )

    deriv = spectral_derivative(field, pair.beta)
    fine = _spectral_upsample(deriv.data, refine, tuple(range(1, field.grid.n + 1)))
    fine_grid = make_grid(
        field.grid.n,
        field.grid.half_width,
        tuple(P * refine for P in field.grid.points),
        field.grid.periodic_native,
    )
    w = seminorm_weight(fine_grid, pair.alpha)
    return float(np.max(np.abs(fine) * w[np.newaxis]))


def _domination_detail(problem, N):
    dec = make_decomposition(problem.T, N)
    traj = solve_linear(
        problem.initial, problem.coeffs, problem.nu, dec, problem.monitors,
        decay_tol=problem.decay_tol,
    )
    alphas = sorted({p.alpha for p in problem.monitors})
    env = build_envelope(problem.coeffs, problem.grid, dec.nodes, 2, m=problem.m)
    I = displacement_I(env)
    heat = build_heat_data(
        problem.initial, problem.coeffs.k, problem.nu, dec.nodes, alphas, I, 2
    )
    curves = bound_curves_for_monitors(problem.monitors, env, I, heat)
    worst = 0.0
    worst_pair = None
    for j, pair in enumerate(problem.monitors):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.max(
                traj.seminorms.values[:, j] / np.maximum(curves[pair].values, 1e-300)
            )
        if ratio > worst:
            worst, worst_pair = float(ratio), pair.label
    return worst, worst_pair


def _verify_bounds() -> list[dict]:
    out = []
    for problem, N in [
        (random_linear_problem(7), 32),
        (random_linear_problem(8675309), 32),
    ]:
        worst, pair = _domination_detail(problem, N)
        out.append(
            _entry(
                f"domination-{problem.name}",
                worst <= 1.01,
                worst_ratio=worst,
                worst_pair=pair,
            )
        )
    times = np.linspace(0.0, 0.9, 46)
    from splitbound.splitting import SeminormTrace

    trace = SeminormTrace(
        (MultiIndexPair((0,), (1,)),), times, (1.0 / (1.0 - times))[:, np.newaxis]
    )
    est = detect_blowup(trace)
    ok = est.detected and abs(est.t_star - 1.0) < 0.02
    out.append(_entry("blowup-fit-synthetic", ok, t_star=est.t_star))
    return out


def _verify_burgers() -> list[dict]:
    out = []
    grid = make_grid(1, [8.0], [4096])
    u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
    times, slope = burgers_blowup(u0)
    err = abs(times.T2 - np.sqrt(np.e / 2.0))
    out.append(_entry("breakdown-time-value", err < 1e-3, T2=times.T2))

    T = 0.9 * times.T2
    dec = make_decomposition(T, 2048)
    traj = solve_delayed(u0, burgers_builder(), Viscosity((0.0,)), dec.delta, dec,
                         (MultiIndexPair((0,), (0,)), MultiIndexPair((0,), (1,))))
    trace = traj.seminorms.column(MultiIndexPair((0,), (1,)))
    rel = max(
        abs(v - slope(t)) / slope(t)
        for t, v in zip(traj.times, trace)
    )
    out.append(_entry("slope-law-agreement", rel < 0.02, max_rel_error=rel))

    est = detect_blowup(traj.seminorms)
    ok = est.detected and abs(est.t_star - times.T2) / times.T2 < 0.05
    out.append(_entry("blowup-estimate", ok, t_star=est.t_star, exact=times.T2))

    grid2 = make_grid(1, [8.0], [2048])
    u0b = sample_field(lambda x: np.exp(-(x**2)), grid2)
    mid = burgers_oracle(u0b, 0.5 * times.T2)
    dec2 = make_decomposition(0.5 * times.T2, 256)
    run = solve_delayed(u0b, burgers_builder(), Viscosity((0.0,)), dec2.delta, dec2,
                        (MultiIndexPair((0,), (0,)),))
    final_gap = float(np.max(np.abs(run.final.data - mid.data)))
    out.append(_entry("characteristics-agreement", final_gap < 0.01, gap=final_gap))
    return out


def _verify_vorticity() -> list[dict]:
    out = []
    grid = make_grid(2, [np.pi, np.pi], [128, 128], periodic_native=True)
    w0 = sample_field(lambda x, y: 2.0 * np.sin(x) * np.sin(y), grid)
    mon = (MultiIndexPair((0, 0), (0, 0)),)

    traj = evolve_vorticity(w0, Viscosity((0.0, 0.0)), make_decomposition(1.0, 256), mon)
    drift = float(np.max(np.abs(traj.trajectory.final.data - w0.data))) / w0.sup()
    out.append(_entry("cellular-steady-state", drift < 0.01, rel_drift=drift))

    nu = 0.1
    traj = evolve_vorticity(w0, Viscosity((nu, nu)), make_decomposition(1.0, 256), mon)
    target = np.exp(-2.0 * nu) * w0.data
    err = float(np.max(np.abs(traj.trajectory.final.data - target))) / w0.sup()
    out.append(_entry("viscous-decay-rate", err < 0.01, rel_error=err))
    out.append(
        _entry(
            "energy-monotone",
            bool(np.all(np.diff(traj.energy) <= 1e-12)),
            initial=float(traj.energy[0]),
            final=float(traj.energy[-1]),
        )
    )

    problem = get_preset("compact-vortex-3d")
    dec = make_decomposition(problem.T, 8)
    vtraj = evolve_vorticity(
        problem.initial, problem.nu, dec, problem.monitors,
        support_center=problem.support_center,
        support_threshold=problem.support_threshold,
    )
    out.append(
        _entry(
            "3d-divergence-free",
            float(np.max(vtraj.div_u_sup)) < 1e-10,
            div_max=float(np.max(vtraj.div_u_sup)),
        )
    )
    heat = build_heat_data(
        problem.initial, None, problem.nu, vtraj.times,
        sorted({p.alpha for p in problem.monitors}),
        vtraj.u_envelope.displacement(), 1,
    )
    ok = True
    worst = 0.0
    for j, pair in enumerate(problem.monitors):
        if pair.derivative_order > 1:
            continue
        curve = vorticity_bound_curve(
            pair.derivative_order, pair.alpha, vtraj.u_envelope, heat, 3
        )
        ratio = float(
            np.max(vtraj.seminorms.values[:, j] / np.maximum(curve.values, 1e-300))
        )
        worst = max(worst, ratio)
        ok = ok and ratio <= 1.01
    out.append(_entry("3d-bound-domination", ok, worst_ratio=worst))
    budget = (
        vtraj.support_radius[0]
        + np.concatenate(
            [[0.0], np.cumsum(0.5 * (vtraj.u_envelope.u_sup[1:] + vtraj.u_envelope.u_sup[:-1]) * np.diff(vtraj.times))]
        )
        + 2.0 * max(problem.grid.spacing)
    )
    ok = bool(np.all(vtraj.support_radius <= budget))
    out.append(
        _entry(
            "3d-support-inclusion",
            ok,
            max_excess=float(np.max(vtraj.support_radius - budget)),
        )
    )
    return out


SUITES = {
    "propagators": _verify_propagators,
    "bounds": _verify_bounds,
    "burgers": _verify_burgers,
    "vorticity": _verify_vorticity,
}


def run_suite(name: str) -> list[dict]:
    """Run one suite (or all) and return the verdict entries."""
    if name == "all":
        results = []
        for suite in SUITES.values():
            results.extend(suite())
        return results
    return SUITES[name]()
