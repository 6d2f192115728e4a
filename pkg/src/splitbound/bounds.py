"""A-priori weighted sup-norm bound curves for the composed evolution.

Every solution the splitting solver produces obeys explicit bounds built
from three ingredients:

* sup-norm envelopes of the coefficients and their derivatives
  (:func:`build_envelope`),
* the accumulated displacement budget I(t), the time integral of the largest
  advection sup-norm (:func:`displacement_I`),
* diffusion-smoothed weighted sup-norms of the initial data and the source
  (:func:`build_heat_data`), where the polynomial weight is enlarged from
  ``|x|^alpha`` to ``(|x| + I)^alpha`` because transport can move mass by at
  most I (:func:`shifted_weighted_sup`; the sup over the displacement cube is
  attained at the corner, which makes it exact).

The curves are recursive in the derivative order: the order-0 bound is the
smoothed initial seminorm times an exponential of the integrated reaction
strength plus the accumulated source contribution; each next order picks up
an exponential of the integrated velocity-gradient strength and
lower-order curves multiplied by integrals of higher coefficient
derivatives.  For orders 0..2 the fully explicit forms are used; from order
3 on a conservative product-rule count is substituted and flagged in
:attr:`BoundCurve.conservative`.

The same machinery specializes to the vorticity system (n = 3: velocity as
advection, velocity gradient as reaction; n = 2: pure advection), fed with
envelopes measured from the computed velocity itself
(:func:`vorticity_bound_curve`).

Independent of the curves, the module provides the quadratic-feedback
closed form :func:`gronwall_c1`, the linear-feedback integral sweep
:func:`integrate_recursive_bound`, the guaranteed existence time
:func:`burgers_existence_time`, and a reciprocal-law blow-up fitter
:func:`detect_blowup`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

from splitbound.grid import (
    Field,
    MultiIndexPair,
    _as_tuple,
    spectral_derivative,
)
from splitbound.propagators import CoefficientSet, Viscosity
from splitbound.splitting import SeminormTrace

__all__ = [
    "Envelope",
    "IDisplacement",
    "HeatData",
    "BoundCurve",
    "VelocityEnvelope",
    "GronwallPoleError",
    "BlowupEstimate",
    "build_envelope",
    "displacement_I",
    "shifted_weighted_sup",
    "build_heat_data",
    "linear_bound_curve",
    "linear_bound",
    "bound_curves_for_monitors",
    "bounds_to_csv",
    "vorticity_bound_curve",
    "vorticity_bound",
    "burgers_existence_time",
    "gronwall_c1",
    "integrate_recursive_bound",
    "detect_blowup",
]


def _cumtrapz(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid integral along the node axis, starting at 0."""
    values = np.asarray(values, dtype=float)
    steps = np.diff(nodes)
    increments = 0.5 * (values[1:] + values[:-1]) * steps
    return np.concatenate([[0.0], np.cumsum(increments)])


def _multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    return sorted(
        idx for idx in product(range(order + 1), repeat=n) if sum(idx) == order
    )


def _derivative_sup(spec: np.ndarray, grid, gamma) -> float:
    """Sup-norm of d^gamma applied to a spectrum of shape (m, *points)."""
    mult = np.ones(grid.shape, dtype=complex)
    for ax, (g, xi, P) in enumerate(zip(gamma, grid.wavenumbers, grid.points)):
        if g == 0:
            continue
        factor = (1j * xi) ** g
        if g % 2 == 1:
            factor = factor.copy()
            factor[P // 2] = 0.0
        shape = [1] * grid.n
        shape[ax] = P
        mult = mult * factor.reshape(shape)
    axes = tuple(range(1, grid.n + 1))
    deriv = np.real(np.fft.ifftn(spec * mult[np.newaxis], axes=axes))
    return float(np.max(np.abs(deriv)))


def _fd_derivative(values: np.ndarray, grid, gamma) -> np.ndarray:
    """Fourth-order centered difference d^gamma on (m..., *points) samples.

    Local stencils keep the wrap seam of non-periodic coefficients (e.g.
    bounded profiles like tanh that never decay) from contaminating the
    whole derivative the way a global transform would.
    """
    out = values
    for ax, g in enumerate(gamma):
        axis = out.ndim - grid.n + ax
        h = grid.spacing[ax]
        for _ in range(g):
            out = (
                -np.roll(out, -2, axis=axis)
                + 8.0 * np.roll(out, -1, axis=axis)
                - 8.0 * np.roll(out, 1, axis=axis)
                + np.roll(out, 2, axis=axis)
            ) / (12.0 * h)
    return out


def _interior_mask(grid) -> np.ndarray:
    """Points outside the sacrificial 10% boundary shell."""
    mask = np.ones(grid.shape, dtype=bool)
    for i in range(grid.n):
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        mask &= (np.abs(grid.axes[i]) < 0.9 * grid.half_width[i]).reshape(shape)
    return mask


def _coefficient_derivative_sups(
    values: np.ndarray, grid, gammas_by_order: dict
) -> dict[int, float]:
    """max over |gamma| = order of sup |d^gamma coefficient|.

    Torus grids differentiate spectrally (exact).  Box-truncated grids use
    local finite differences and take the sup over the guarded interior,
    because bounded non-decaying coefficients wrap with a jump there.
    """
    out = {}
    if grid.periodic_native:
        axes = tuple(range(values.ndim - grid.n, values.ndim))
        spec = np.fft.fftn(values, axes=axes)
        flat = spec.reshape((-1,) + grid.shape)
        for ell, gset in gammas_by_order.items():
            out[ell] = max(_derivative_sup(flat, grid, gamma) for gamma in gset)
    else:
        mask = _interior_mask(grid)
        for ell, gset in gammas_by_order.items():
            best = 0.0
            for gamma in gset:
                d = _fd_derivative(values, grid, gamma)
                best = max(best, float(np.max(np.abs(d[..., mask]))))
            out[ell] = best
    return out


@dataclass
class Envelope:
    """Per-node sup-norm ladder of the coefficients.

    ``h_exp_rate`` is the integrand of the reaction exponential: with the
    default entry norm it is m * max_{i,j} sup_x |h_ij|; with the spectral
    matrix norm it is sup_x ||h(x)||_2 (no m factor).
    """

    nodes: np.ndarray
    n: int
    m: int
    g_sup: np.ndarray                       # max_l sup |g_l|
    dg_sup: dict[int, np.ndarray]           # order >= 1: max_{|gamma|=order, l} sup |d^gamma g_l|
    h_exp_rate: np.ndarray
    dh_sup: dict[int, np.ndarray]           # order >= 1: max over entries
    matrix_norm: str = "entry"

    @property
    def order(self) -> int:
        return max(self.dg_sup.keys(), default=0)


def build_envelope(
    coeffs: CoefficientSet,
    grid,
    nodes,
    order: int,
    m: int = 1,
    matrix_norm: str = "entry",
) -> Envelope:
    """Sample the coefficient sup-norms the bound formulas consume.

    Coefficient derivatives are taken spectrally, so the samplers must be
    compatible with the periodic box (periodic or decaying within it).
    """
    if matrix_norm not in ("entry", "spectral"):
        raise ValueError("matrix_norm must be 'entry' or 'spectral'")
    nodes = np.asarray(nodes, dtype=float)
    cache_key = (id(grid), nodes.tobytes(), order, m, matrix_norm)
    cached = coeffs.envelope_cache.get(cache_key)
    if cached is not None:
        return cached
    N1 = nodes.size
    gammas = {ell: _multi_indices(grid.n, ell) for ell in range(1, order + 1)}

    g_sup = np.zeros(N1)
    dg_sup = {ell: np.zeros(N1) for ell in range(1, order + 1)}
    h_exp = np.zeros(N1)
    dh_sup = {ell: np.zeros(N1) for ell in range(1, order + 1)}

    mesh = grid.mesh()
    for i, t in enumerate(nodes):
        if coeffs.g is not None:
            g = np.asarray(coeffs.g(*mesh, t), dtype=float)
            if not np.isfinite(g).all():
                raise ValueError(f"advection sampler non-finite at t={t}")
            g_sup[i] = np.max(np.abs(g))
            for ell, val in _coefficient_derivative_sups(g, grid, gammas).items():
                dg_sup[ell][i] = val
        if coeffs.h is not None:
            h = np.asarray(coeffs.h(*mesh, t), dtype=float)
            if not np.isfinite(h).all():
                raise ValueError(f"reaction sampler non-finite at t={t}")
            if matrix_norm == "entry":
                h_exp[i] = m * np.max(np.abs(h))
            else:
                flat = np.moveaxis(h.reshape(m, m, -1), -1, 0)
                h_exp[i] = float(np.max(np.linalg.norm(flat, ord=2, axis=(1, 2))))
            hv = h.reshape((m * m,) + grid.shape)
            for ell, val in _coefficient_derivative_sups(hv, grid, gammas).items():
                dh_sup[ell][i] = val
    envelope = Envelope(nodes, grid.n, m, g_sup, dg_sup, h_exp, dh_sup, matrix_norm)
    coeffs.envelope_cache[cache_key] = envelope
    return envelope


@dataclass
class IDisplacement:
    """Accumulated displacement budget I(t) on the envelope nodes."""

    nodes: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> float:
        return float(np.interp(t, self.nodes, self.values))


def displacement_I(envelope: Envelope) -> IDisplacement:
    """I(t): cumulative trapezoid integral of the largest advection sup."""
    return IDisplacement(envelope.nodes, _cumtrapz(envelope.g_sup, envelope.nodes))


def shifted_weighted_sup(field: Field, alpha, I_value: float) -> float:
    """max_x prod_i (|x_i| + I)^alpha_i * |field(x)|.

    This is the sup over a displacement cube of radius I of the shifted
    polynomial weight; the inner sup is attained at the cube corner
    r_i = I * sign(x_i), so the expression is exact, not an estimate.
    """
    if I_value < 0:
        raise ValueError("displacement budget must be non-negative")
    grid = field.grid
    alpha = _as_tuple(alpha, grid.n, int)
    w = np.ones(grid.shape)
    for i, a in enumerate(alpha):
        if a == 0:
            continue
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        w = w * (np.abs(grid.axes[i]) + I_value).reshape(shape) ** a
    return float(np.max(np.abs(field.data) * w[np.newaxis]))


@dataclass
class HeatData:
    """Diffusion-smoothed weighted sup-norm tables.

    ``f0_tab[(alpha, order)][i]`` is the largest (over |gamma| = order)
    shifted weighted sup of the time-t_i smoothing of |d^gamma f0|, with the
    displacement budget I(t_i).  ``k_tab[(alpha, order)][i, j]`` is the same
    for the source sampled at t_j, smoothed over t_i - t_j, with budget
    I(t_j); entries with j > i are zero.
    """

    nodes: np.ndarray
    alphas: tuple[tuple[int, ...], ...]
    max_order: int
    f0_tab: dict
    k_tab: dict | None


def _weight_cube(grid, alpha, I_value: float) -> np.ndarray:
    w = np.ones(grid.shape)
    for i, a in enumerate(alpha):
        if a == 0:
            continue
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        w = w * (np.abs(grid.axes[i]) + I_value).reshape(shape) ** a
    return w


def _decay_rate(grid, nu: Viscosity) -> np.ndarray:
    decay = np.zeros(grid.shape)
    for i, (v, xi) in enumerate(zip(nu.nu, grid.wavenumbers)):
        if v == 0.0:
            continue
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        decay = decay + v * (xi**2).reshape(shape)
    return decay


class _BudgetWeights:
    """Per-node shifted weight cubes, built lazily (the budget varies with
    the node, but materializing one cube per node would hog memory)."""

    def __init__(self, grid, alpha, budgets):
        self.grid = grid
        self.alpha = alpha
        self.budgets = np.asarray(budgets, dtype=float)

    def cube(self, i: int) -> np.ndarray:
        return _weight_cube(self.grid, self.alpha, float(self.budgets[i]))


def _smoothed_weighted_maxima(
    spec: np.ndarray, grid, nu: Viscosity, dts: np.ndarray, weights: dict
) -> dict:
    """For a spectrum of |d^gamma field|, smooth over each duration in
    ``dts`` (batched) and take the weighted grid maxima.

    Returns {alpha: array over dts}.  ``weights`` maps alpha to a fixed
    weight cube or a :class:`_BudgetWeights` (budget varying per node).
    """
    axes = tuple(range(2, grid.n + 2))
    m = spec.shape[0]
    out = {a: np.empty(dts.size) for a in weights}
    # chunk the duration axis to bound transient memory
    chunk = max(1, int(6_000_000 // (m * grid.total_points)))
    decay = _decay_rate(grid, nu) if not nu.is_zero else None
    for start in range(0, dts.size, chunk):
        sel = slice(start, min(start + chunk, dts.size))
        block = dts[sel]
        if decay is None:
            sm = np.abs(np.real(np.fft.ifftn(spec, axes=tuple(range(1, grid.n + 1)))))
            sm = np.broadcast_to(sm[np.newaxis], (block.size,) + sm.shape)
        else:
            mult = np.exp(-decay[np.newaxis] * block.reshape((-1,) + (1,) * grid.n))
            batch = spec[np.newaxis] * mult[:, np.newaxis]
            sm = np.abs(np.real(np.fft.ifftn(batch, axes=axes)))
        mag = np.max(sm, axis=1)  # over components
        flat = mag.reshape(block.size, -1)
        for a, w in weights.items():
            if isinstance(w, _BudgetWeights):
                for bi in range(block.size):
                    out[a][start + bi] = float(
                        np.max(flat[bi] * w.cube(start + bi).ravel())
                    )
            else:
                out[a][sel] = np.max(flat * w.ravel()[np.newaxis], axis=1)
    return out


def build_heat_data(
    f0: Field,
    k_sampler: Callable | None,
    nu: Viscosity,
    nodes,
    alphas: Sequence,
    I: IDisplacement,
    max_order: int,
) -> HeatData:
    nodes = np.asarray(nodes, dtype=float)
    grid = f0.grid
    axes = tuple(range(1, grid.n + 1))
    alphas = tuple(_as_tuple(a, grid.n, int) for a in alphas)
    orders = range(max_order + 1)
    budgets = np.array(
        [
            float(I.values[i]) if I.nodes.size == nodes.size else I.at(t)
            for i, t in enumerate(nodes)
        ]
    )
    # the budget varies with the node, so each node needs its own weight cube
    node_weights = {
        a: _BudgetWeights(grid, a, budgets) if sum(a) else np.ones(grid.shape)
        for a in alphas
    }

    f0_tab = {(a, ell): np.zeros(nodes.size) for a in alphas for ell in orders}
    for ell in orders:
        for gamma in _multi_indices(grid.n, ell):
            d = spectral_derivative(f0, gamma)
            spec = np.fft.fftn(np.abs(d.data), axes=axes)
            maxima = _smoothed_weighted_maxima(spec, grid, nu, nodes, node_weights)
            for a in alphas:
                key = (a, ell)
                np.maximum(f0_tab[key], maxima[a], out=f0_tab[key])

    k_tab = None
    if k_sampler is not None:
        k_tab = {
            (a, ell): np.zeros((nodes.size, nodes.size))
            for a in alphas
            for ell in orders
        }
        mesh = grid.mesh()
        for j, s in enumerate(nodes):
            kj = np.asarray(k_sampler(*mesh, float(s)), dtype=float)
            if kj.shape == grid.shape:
                kj = kj[np.newaxis]
            if not np.isfinite(kj).all():
                raise ValueError(f"source sampler non-finite at t={s}")
            kf = Field(grid, kj)
            # the budget is pinned to the emission time
            weights = {
                a: (
                    node_weights[a].cube(j)
                    if isinstance(node_weights[a], _BudgetWeights)
                    else node_weights[a]
                )
                for a in alphas
            }
            dts = nodes[j:] - float(s)
            for ell in orders:
                for gamma in _multi_indices(grid.n, ell):
                    spec = np.fft.fftn(
                        np.abs(spectral_derivative(kf, gamma).data), axes=axes
                    )
                    maxima = _smoothed_weighted_maxima(spec, grid, nu, dts, weights)
                    for a in alphas:
                        key = (a, ell)
                        np.maximum(
                            k_tab[key][j:, j], maxima[a], out=k_tab[key][j:, j]
                        )
    return HeatData(nodes, alphas, max_order, f0_tab, k_tab)


@dataclass
class BoundCurve:
    """Evaluated bound for all derivatives of one order and one weight."""

    order: int
    alpha: tuple[int, ...]
    nodes: np.ndarray
    values: np.ndarray
    conservative: bool = False

    def at(self, t: float) -> float:
        return float(np.interp(t, self.nodes, self.values))


def _k_term(k_col, nodes, i, rate_diff) -> float:
    """Trapezoid in the emission time of k_col[j] * exp(rate_diff[j])."""
    if i == 0:
        return 0.0
    integrand = k_col[: i + 1] * np.exp(rate_diff[: i + 1])
    return float(_cumtrapz(integrand, nodes[: i + 1])[-1])


def _conservative_coefficient(order: int, lower: int, n: int, m: int) -> int:
    return math.comb(order, lower) * n ** (order - lower) * m


def _linear_curves(envelope: Envelope, heat: HeatData, alpha,
                   up_to: int) -> list[np.ndarray]:
    """The bound recursion on the envelope nodes, orders 0..up_to."""
    nodes = envelope.nodes
    N1 = nodes.size
    n, m = envelope.n, envelope.m
    alpha = tuple(alpha)

    Hm = _cumtrapz(envelope.h_exp_rate, nodes)
    Gn = _cumtrapz(n * envelope.dg_sup.get(1, np.zeros(N1)), nodes)
    DH = {
        ell: _cumtrapz(envelope.dh_sup[ell], nodes)
        for ell in envelope.dh_sup
    }
    DG = {
        ell: _cumtrapz(envelope.dg_sup[ell], nodes)
        for ell in envelope.dg_sup
    }
    if up_to >= 3:
        mixed = np.zeros(N1)
        for ell in range(1, up_to + 1):
            mixed = np.maximum(mixed, envelope.dg_sup.get(ell, 0.0))
            mixed = np.maximum(mixed, envelope.dh_sup.get(ell, 0.0))
        GH = _cumtrapz(mixed, nodes)

    def f_tab(ell):
        return heat.f0_tab[(alpha, ell)]

    curves: list[np.ndarray] = []
    for order in range(up_to + 1):
        values = np.zeros(N1)
        for i in range(N1):
            total = f_tab(order)[i] * np.exp(order * Gn[i] + Hm[i])
            if heat.k_tab is not None:
                k_col = heat.k_tab[(alpha, order)][i]
                rate_diff = (order * (Gn[i] - Gn) + (Hm[i] - Hm))[: i + 1]
                total += _k_term(k_col, nodes, i, rate_diff)
            if order == 1:
                total += curves[0][i] * m * DH[1][i]
            elif order == 2:
                total += (DG[2][i] + 2 * m * DH[1][i]) * curves[1][i]
                total += m * DH[2][i] * curves[0][i]
            elif order >= 3:
                for lower in range(order):
                    C = _conservative_coefficient(order, lower, n, m)
                    total += C * curves[lower][i] * GH[i]
            values[i] = total
        curves.append(values)
    return curves


def linear_bound_curve(
    order: int,
    alpha,
    envelope: Envelope,
    I: IDisplacement,
    heat: HeatData,
) -> BoundCurve:
    """Bound curve for all derivatives of the given order (recursive).

    ``I`` must be the displacement budget the heat tables were built with;
    it is cross-checked against the envelope nodes.
    """
    alpha = _as_tuple(alpha, envelope.n, int)
    if order > heat.max_order:
        raise ValueError(
            f"heat data holds orders <= {heat.max_order}, requested {order}"
        )
    if order >= 1 and envelope.order < order:
        raise ValueError(
            f"envelope holds coefficient derivatives <= {envelope.order}, "
            f"bound order {order} needs {order}"
        )
    if I.nodes.size != envelope.nodes.size or not np.allclose(
        I.nodes, envelope.nodes
    ):
        raise ValueError("displacement budget nodes do not match the envelope")
    curves = _linear_curves(envelope, heat, alpha, order)
    return BoundCurve(order, alpha, envelope.nodes, curves[order],
                      conservative=order >= 3)


def linear_bound(order, alpha, envelope, I, heat, t) -> float:
    """Scalar evaluation of :func:`linear_bound_curve` at time t."""
    return linear_bound_curve(order, alpha, envelope, I, heat).at(t)


def bound_curves_for_monitors(
    monitors: Sequence[MultiIndexPair],
    envelope: Envelope,
    I: IDisplacement,
    heat: HeatData,
) -> dict[MultiIndexPair, BoundCurve]:
    """One curve per monitored pair; pairs of equal order and weight share
    the same curve (the bounds control the max over same-order derivatives)."""
    cache: dict = {}
    out = {}
    for pair in monitors:
        key = (pair.derivative_order, pair.alpha)
        if key not in cache:
            cache[key] = linear_bound_curve(
                pair.derivative_order, pair.alpha, envelope, I, heat
            )
        out[pair] = cache[key]
    return out


def bounds_to_csv(path, monitors, curves: dict, nodes) -> None:
    """CSV aligned column-wise with the seminorm trace export."""
    header = ["t"] + [p.label for p in monitors]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i, t in enumerate(nodes):
            row = [f"{t:.17g}"] + [
                f"{curves[p].values[i]:.17g}" for p in monitors
            ]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# vorticity specialization


@dataclass
class VelocityEnvelope:
    """Sup-norm ladder of a velocity field measured along a trajectory."""

    nodes: np.ndarray
    u_sup: np.ndarray
    du_sup: dict[int, np.ndarray]  # order >= 1: max_{|gamma|=order, i} sup |d^gamma u_i|

    def displacement(self) -> IDisplacement:
        return IDisplacement(self.nodes, _cumtrapz(self.u_sup, self.nodes))


def vorticity_bound_curve(
    order: int,
    alpha,
    u_env: VelocityEnvelope,
    omega0_heat: HeatData,
    n: int,
) -> BoundCurve:
    """Bound curve for the vorticity system fed by measured velocity sups.

    n = 3: advection by u and reaction by the velocity gradient; the printed
    exponential rates are 3, 6, 9, ..., 3(order+1) times the integrated
    gradient sup.  n = 2: no reaction (the stretching term vanishes), so the
    curves come from the generic engine with a pure-advection envelope.
    """
    alpha = _as_tuple(alpha, n, int)
    nodes = u_env.nodes
    N1 = nodes.size

    if n == 2:
        envelope = Envelope(
            nodes=nodes,
            n=2,
            m=1,
            g_sup=u_env.u_sup,
            dg_sup=u_env.du_sup,
            h_exp_rate=np.zeros(N1),
            dh_sup={ell: np.zeros(N1) for ell in range(1, max(order, 1) + 1)},
        )
        return linear_bound_curve(
            order, alpha, envelope, u_env.displacement(), omega0_heat
        )
    if n != 3:
        raise ValueError("vorticity bounds are defined for n = 2 or 3")

    for ell in range(1, order + 2):
        if ell not in u_env.du_sup:
            raise ValueError(
                f"velocity envelope must hold derivative orders 1..{order + 1}"
            )
    grad = _cumtrapz(u_env.du_sup[1], nodes)
    d2 = _cumtrapz(u_env.du_sup.get(2, np.zeros(N1)), nodes)
    d3 = _cumtrapz(u_env.du_sup.get(3, np.zeros(N1)), nodes)

    def f_tab(ell):
        return omega0_heat.f0_tab[(alpha, ell)]

    curves = [f_tab(0) * np.exp(3.0 * grad)]
    if order >= 1:
        curves.append(f_tab(1) * np.exp(6.0 * grad) + 3.0 * d2 * curves[0])
    if order >= 2:
        curves.append(
            f_tab(2) * np.exp(9.0 * grad) + 9.0 * d2 * curves[1] + 3.0 * d3 * curves[0]
        )
    conservative = False
    for b in range(3, order + 1):
        mixed = np.zeros(N1)
        for ell in range(1, b + 2):
            mixed = np.maximum(mixed, u_env.du_sup.get(ell, 0.0))
        GH = _cumtrapz(mixed, nodes)
        total = f_tab(b) * np.exp(3.0 * (b + 1) * grad)
        for lower in range(b):
            C = _conservative_coefficient(b, lower, 3, 3)
            total = total + C * curves[lower] * GH
        curves.append(total)
        conservative = True
    return BoundCurve(order, alpha, nodes, curves[order], conservative=conservative)


def vorticity_bound(order, alpha, u_env, omega0_heat, n, t) -> float:
    return vorticity_bound_curve(order, alpha, u_env, omega0_heat, n).at(t)


# ---------------------------------------------------------------------------
# existence times and feedback bounds


def burgers_existence_time(u0: Field) -> float:
    """Certified existence time 1 / (n * max_j sup |d_j u0|).

    Returns +inf when the initial data has vanishing gradient.
    """
    grid = u0.grid
    worst = 0.0
    for j in range(grid.n):
        gamma = [0] * grid.n
        gamma[j] = 1
        worst = max(worst, spectral_derivative(u0, gamma).sup())
    if worst == 0.0:
        return float("inf")
    return 1.0 / (grid.n * worst)


class GronwallPoleError(ValueError):
    """The quadratic-feedback closed form was evaluated at or past its pole."""

    def __init__(self, pole: float):
        self.pole = pole
        super().__init__(
            f"bound diverges at t = {pole:.6g}; requested time is not covered"
        )


def gronwall_c1(c10: float, n: int, t: float) -> float:
    """Closed form c10 / (1 - n * c10 * t) of the quadratic self-feedback
    C' = n C^2, valid for t < 1 / (n * c10)."""
    if c10 < 0:
        raise ValueError("initial value must be non-negative")
    if c10 == 0.0:
        return 0.0
    pole = 1.0 / (n * c10)
    if t >= pole:
        raise GronwallPoleError(pole)
    return c10 / (1.0 - n * c10 * t)


def integrate_recursive_bound(A, B, nodes) -> np.ndarray:
    """Solve C(t) = A(t) + B(t) * int_0^t C(s) ds by an implicit trapezoid
    sweep over the nodes.  With constant A, B this reproduces A * exp(B t) to
    quadrature accuracy."""
    nodes = np.asarray(nodes, dtype=float)
    Av = np.array([A(t) for t in nodes]) if callable(A) else np.broadcast_to(
        np.asarray(A, dtype=float), nodes.shape
    ).copy()
    Bv = np.array([B(t) for t in nodes]) if callable(B) else np.broadcast_to(
        np.asarray(B, dtype=float), nodes.shape
    ).copy()
    if not (np.isfinite(Av).all() and np.isfinite(Bv).all()):
        raise ValueError("A and B must be finite on the nodes")
    C = np.zeros(nodes.size)
    C[0] = Av[0]
    integral = 0.0
    for j in range(1, nodes.size):
        h = nodes[j] - nodes[j - 1]
        denom = 1.0 - 0.5 * h * Bv[j]
        if denom <= 0.0:
            raise ValueError(
                "node spacing too coarse for the implicit trapezoid sweep"
            )
        C[j] = (Av[j] + Bv[j] * (integral + 0.5 * h * C[j - 1])) / denom
        integral += 0.5 * h * (C[j - 1] + C[j])
    return C


# ---------------------------------------------------------------------------
# blow-up detection


@dataclass
class BlowupEstimate:
    """Result of fitting C / (T - t) to the growing tail of a trace."""

    detected: bool
    t_star: float | None = None
    amplitude: float | None = None
    residual: float | None = None
    pair: MultiIndexPair | None = None
    window: tuple[float, float] | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "detected": self.detected,
            "t_star": self.t_star,
            "amplitude": self.amplitude,
            "residual": self.residual,
            "pair": self.pair.label if self.pair else None,
            "window": list(self.window) if self.window else None,
            "message": self.message,
        }


#: Fraction of trailing nodes used for the reciprocal fit.
BLOWUP_FIT_WINDOW = 0.4

#: A trace must grow by at least this factor to count as growing.
BLOWUP_GROWTH_FACTOR = 2.0


def detect_blowup(
    trace: SeminormTrace,
    *,
    window_frac: float = BLOWUP_FIT_WINDOW,
    growth_factor: float = BLOWUP_GROWTH_FACTOR,
) -> BlowupEstimate:
    """Estimate a finite blow-up time from a growing seminorm trace.

    The model is y(t) ~ C / (T* - t), so 1/y is fit linearly in t over the
    trailing window (restricted to nodes where the trace increases); T* is
    the root of the fitted line.  Non-growing traces report no blow-up.
    """
    times = trace.times
    if times.size < 5:
        return BlowupEstimate(False, message="trace too short (need >= 5 nodes)")

    # among sufficiently growing pairs, the responsible one is the pair the
    # reciprocal model actually fits (smallest relative residual); faster
    # growing but differently-shaped traces (higher derivative orders blow
    # up at higher rates) would bias the root
    best = None
    for col, pair in enumerate(trace.pairs):
        y = trace.values[:, col]
        floor = max(np.max(y) * 1e-12, 1e-300)
        if y[0] <= floor or y[-1] < growth_factor * max(y[0], floor):
            continue
        start = max(0, int(np.floor(times.size * (1.0 - window_frac))))
        idx = np.arange(start, times.size)
        rising = np.concatenate([[True], np.diff(y[idx]) > 0])
        idx = idx[rising]
        if idx.size < 5:
            continue
        z = 1.0 / y[idx]
        tw = times[idx]
        slope, intercept = np.polyfit(tw, z, 1)
        if slope >= 0:
            continue
        t_star = -intercept / slope
        if t_star <= tw[-1]:
            continue  # root inside the observed window: model mismatch
        fit = intercept + slope * tw
        residual = float(np.sqrt(np.mean((z - fit) ** 2)) / np.mean(np.abs(z)))
        if best is None or residual < best.residual:
            best = BlowupEstimate(
                True,
                t_star=float(t_star),
                amplitude=float(-1.0 / slope),
                residual=residual,
                pair=pair,
                window=(float(tw[0]), float(tw[-1])),
            )
    if best is None:
        return BlowupEstimate(False, message="no blow-up detected")
    return best
