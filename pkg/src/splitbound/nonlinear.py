"""Quasilinear problems via coefficient lagging.

Coefficients that depend on the solution are handled by evaluating them on
the solution one lag behind: on each step the coefficients are built from
the already-computed state ``lag`` steps earlier (with the initial state
standing in for negative times, a constant history extension).  Each lag
interval is then a linear problem for the composition solver.

:func:`solve_nonlinear` drives the lag to zero: it reruns the delayed solve
for a halving lag schedule and accepts once the monitored sup-norm traces of
successive runs agree, reporting the per-lag envelopes so uniform
boundedness across the schedule can be inspected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from splitbound.grid import DEFAULT_DECAY_TOL, Field, MultiIndexPair
from splitbound.propagators import CoefficientSet, Viscosity
from splitbound.splitting import (
    Decomposition,
    SeminormTrace,
    SolverAbort,
    Trajectory,
    composite_step,
    make_decomposition,
    record_seminorms,
    trace_gap,
    _node_diagnostics,
)

__all__ = [
    "CoefficientBuilder",
    "BlowupAbort",
    "NonlinearReport",
    "solve_delayed",
    "solve_nonlinear",
    "DEFAULT_BLOWUP_FACTOR",
]

#: Abort once any monitored seminorm exceeds this multiple of its initial
#: value (floored to dodge division by a zero initial seminorm).
DEFAULT_BLOWUP_FACTOR = 1e6


@dataclass
class CoefficientBuilder:
    """Rule turning a lagged state into coefficients valid near a time.

    ``rule(state, t)`` receives the lagged field (and may take its spectral
    derivatives) and returns the :class:`CoefficientSet` to use on the step
    starting at ``t``.  The produced samplers must be finite whenever the
    lagged state is.
    """

    rule: Callable[[Field, float], CoefficientSet]
    name: str = ""

    def __call__(self, state: Field, t: float) -> CoefficientSet:
        return self.rule(state, t)


class BlowupAbort(SolverAbort):
    """Monitored growth crossed the runaway threshold."""


def _snap_lag(eps: float, dec: Decomposition) -> int:
    """Lag in whole steps; the decomposition must be uniform."""
    dts = np.diff(dec.nodes)
    dt = float(dts[0])
    if not np.allclose(dts, dt, rtol=1e-9, atol=1e-15):
        raise ValueError("lagged stepping requires a uniform decomposition")
    if eps <= 0:
        raise ValueError("lag must be positive")
    lag = max(1, int(round(eps / dt)))
    return lag


def solve_delayed(
    f0: Field,
    builder: CoefficientBuilder,
    nu: Viscosity,
    eps: float,
    dec: Decomposition,
    monitors: tuple[MultiIndexPair, ...],
    *,
    snapshot_stride: int | None = None,
    quad_dt: float | None = None,
    oversample: int = 4,
    decay_tol: float = DEFAULT_DECAY_TOL,
    blowup_factor: float = DEFAULT_BLOWUP_FACTOR,
) -> Trajectory:
    """March with coefficients built from the state ``eps`` earlier.

    The lag is snapped to a whole number of steps.  Advancing to node i uses
    coefficients built from the state at node i - lag (the initial field for
    non-positive indices).  Runaway growth or non-finite data raises
    :class:`BlowupAbort` carrying the node index and partial trajectory.
    """
    monitors = tuple(monitors)
    nodes = dec.nodes
    lag = _snap_lag(eps, dec)
    stride = snapshot_stride or max(1, dec.steps // 16)
    weights_cache: dict = {}

    traj_times = [0.0]
    traj_values = [record_seminorms(f0, monitors, weights_cache)]
    snapshots = [(0.0, f0)]
    diagnostics = [
        dict(_node_diagnostics(f0, decay_tol), lag_steps=lag, eps=lag * dec.delta)
    ]
    warnings: list[str] = []
    initial = np.maximum(
        traj_values[0],
        1e-9 + 1e-6 * np.max(traj_values[0], initial=0.0),
    )

    history: list[Field] = [f0]  # history[i] is the state at node i
    f = f0
    for i in range(1, nodes.size):
        t0, t1 = float(nodes[i - 1]), float(nodes[i])
        lagged = history[max(i - lag, 0)]
        coeffs = builder(lagged, t0)

        def _partial(aborted):
            return Trajectory(
                snapshots,
                SeminormTrace(monitors, np.array(traj_times), np.array(traj_values)),
                diagnostics,
                warnings,
                aborted_at=aborted,
            )

        try:
            f = composite_step(
                f, coeffs, nu, t0, t1 - t0, quad_dt=quad_dt, oversample=oversample
            )
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise BlowupAbort(
                i, t1, f"non-finite field data ({exc})", _partial(i)
            ) from exc

        row = record_seminorms(f, monitors, weights_cache)
        ratios = row / initial
        if not np.isfinite(row).all() or np.max(ratios, initial=0.0) > blowup_factor:
            worst = monitors[int(np.argmax(ratios))]
            raise BlowupAbort(
                i,
                t1,
                f"seminorm {worst.label} exceeded {blowup_factor:.0e} x its "
                "initial value",
                _partial(i),
            )

        history.append(f)
        if len(history) > lag + 1:
            history[len(history) - lag - 2] = None  # free memory outside the lag window
        traj_times.append(t1)
        traj_values.append(row)
        diag = _node_diagnostics(f, decay_tol)
        diagnostics.append(diag)
        if not f.grid.periodic_native and not diag["decay_passed"]:
            warnings.append(
                f"decay guard failed at t={t1:.6g} (ratio {diag['decay_ratio']:.2e})"
            )
        if i % stride == 0 or i == nodes.size - 1:
            snapshots.append((t1, f))

    return Trajectory(
        snapshots,
        SeminormTrace(monitors, np.array(traj_times), np.array(traj_values)),
        diagnostics,
        warnings,
    )


@dataclass
class NonlinearReport:
    """Outcome of the lag-refinement drive.

    ``envelopes`` maps each attempted lag to the per-pair maximum of its
    seminorm trace, the inspectable stand-in for uniform boundedness across
    the schedule.
    """

    converged: bool
    eps_values: list[float]
    gaps: list[float]
    accepted_eps: float | None
    envelopes: dict[float, dict[str, float]]
    blowup: dict | None = None
    tol: float = 0.0

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "eps_values": self.eps_values,
            "gaps": self.gaps,
            "accepted_eps": self.accepted_eps,
            "envelopes": {f"{k:.12g}": v for k, v in self.envelopes.items()},
            "blowup": self.blowup,
            "tol": self.tol,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _trace_envelope(trace: SeminormTrace) -> dict[str, float]:
    return {
        pair.label: float(np.max(trace.values[:, j]))
        for j, pair in enumerate(trace.pairs)
    }


def solve_nonlinear(
    f0: Field,
    builder: CoefficientBuilder,
    nu: Viscosity,
    T: float,
    monitors: tuple[MultiIndexPair, ...],
    tol: float,
    eps_schedule: list[float] | None = None,
    *,
    N0: int = 8,
    levels: int = 6,
    **solver_kwargs,
) -> tuple[Trajectory, NonlinearReport]:
    """Drive the lag to zero by a halving schedule.

    Default schedule: eps_k = T / (N0 * 2^k) for k = 0..levels-1, with the
    step width refined jointly (lag = one step).  Accepts once successive
    monitored traces differ by less than ``tol`` (relative, floored);
    exhaustion or a blow-up abort is reported, not raised.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if eps_schedule is None:
        eps_schedule = [T / (N0 * 2**k) for k in range(levels)]
    if len(eps_schedule) < 2:
        raise ValueError("the lag schedule needs at least two entries")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("the lag schedule must decrease strictly")

    report = NonlinearReport(False, [], [], None, {}, tol=tol)
    prev: Trajectory | None = None
    traj: Trajectory | None = None
    for eps in eps_schedule:
        N = int(round(T / eps))
        dec = make_decomposition(T, N)
        report.eps_values.append(eps)
        try:
            traj = solve_delayed(
                f0, builder, nu, eps, dec, monitors, **solver_kwargs
            )
        except BlowupAbort as abort:
            report.blowup = {
                "eps": eps,
                "node": abort.node,
                "time": abort.time,
                "reason": abort.reason,
            }
            report.envelopes[eps] = _trace_envelope(abort.trajectory.seminorms)
            return abort.trajectory, report
        report.envelopes[eps] = _trace_envelope(traj.seminorms)
        if prev is not None:
            gap = trace_gap(prev.seminorms, traj.seminorms)
            report.gaps.append(gap)
            if gap < tol:
                report.converged = True
                report.accepted_eps = eps
                return traj, report
        prev = traj
    return traj, report
