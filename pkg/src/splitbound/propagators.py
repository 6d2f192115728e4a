"""Elementary exactly-solvable evolution steps.

Each step advances a field over [t0, t0 + dt] under one term of

    d_t f = (nu . Lap) f  +  g . grad f  +  h f  +  k

* :func:`heat_step` - anisotropic diffusion, as the exact Fourier multiplier
  exp(-sum_i nu_i xi_i^2 dt).
* :func:`transport_step` - shift by the time integral of g, with g evaluated
  at the departure point (frozen coordinates, not characteristics).
* :func:`multiply_step` - pointwise matrix exponential of the time integral
  of h.
* :func:`source_step` - add the time integral of k.
* :func:`scaling_step` - coordinate dilation x_i -> x_i * exp(a_i dt), the
  exact flow of the Euler operator a x . grad.

All steps are pure; dt = 0 (or a vanishing coefficient) returns the input
field object unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

from splitbound.grid import Field, Grid, interpolate_shifted, _trapz

__all__ = [
    "Viscosity",
    "CoefficientSet",
    "DilationError",
    "heat_step",
    "transport_step",
    "multiply_step",
    "source_step",
    "scaling_step",
    "expm_batched",
]


class DilationError(ValueError):
    """Raised when a coordinate dilation would leave the guarded box."""


@dataclass(frozen=True)
class Viscosity:
    """Per-axis non-negative diffusion coefficients."""

    nu: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        if any(not np.isfinite(v) or v < 0 for v in self.nu):
            raise ValueError("viscosities must be finite and non-negative")

    @classmethod
    def isotropic(cls, value: float, n: int) -> "Viscosity":
        return cls((float(value),) * n)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.nu)


@dataclass
class CoefficientSet:
    """Time-dependent coefficient samplers.

    Each sampler is called with the n coordinate meshes and a time and must
    return an array of the indicated shape; ``None`` means the coefficient
    vanishes identically.

    * ``g(X..., t) -> (n, *points)`` - advection velocity of the transport
      term (the equation's term is g . grad f).
    * ``h(X..., t) -> (m, m, *points)`` - reaction matrix.
    * ``k(X..., t) -> (m, *points)`` - source.

    ``envelope_cache`` is scratch space for bound evaluation (sup-norm
    envelopes keyed by node tuple); it never affects stepping.
    """

    g: Callable | None = None
    h: Callable | None = None
    k: Callable | None = None
    envelope_cache: dict = dataclass_field(default_factory=dict, repr=False)

    @classmethod
    def constant(cls, g=None, h=None, k=None) -> "CoefficientSet":
        """Build samplers from constant (space- and time-independent)
        vectors/matrices; scalars are promoted to 1-vectors/1x1 matrices."""

        def vec_sampler(values):
            values = np.atleast_1d(np.asarray(values, dtype=float))

            def sampler(*args):
                mesh, _t = args[:-1], args[-1]
                shape = mesh[0].shape
                return np.broadcast_to(
                    values.reshape(values.shape + (1,) * len(shape)),
                    values.shape + shape,
                )

            return sampler

        return cls(
            g=None if g is None else vec_sampler(g),
            h=None if h is None else vec_sampler(np.atleast_2d(h)),
            k=None if k is None else vec_sampler(k),
        )


def _sample(sampler: Callable, grid: Grid, t: float, lead_shape: tuple) -> np.ndarray:
    out = np.asarray(sampler(*grid.mesh(), t), dtype=float)
    want = lead_shape + grid.shape
    if out.shape != want:
        raise ValueError(
            f"coefficient sampler returned shape {out.shape}, expected {want}"
        )
    if not np.isfinite(out).all():
        raise ValueError(f"coefficient sampler returned non-finite values at t={t}")
    return out


def _time_quadrature(
    sampler: Callable,
    grid: Grid,
    t0: float,
    dt: float,
    lead_shape: tuple,
    quad_dt: float | None,
) -> np.ndarray:
    """Composite-trapezoid time integral of a sampler over [t0, t0+dt]."""
    if quad_dt is None:
        panels = 4  # default quad_dt = dt/4
    else:
        panels = max(2, math.ceil(dt / quad_dt))
    times = np.linspace(t0, t0 + dt, panels + 1)
    samples = np.stack([_sample(sampler, grid, t, lead_shape) for t in times])
    return _trapz(samples, times, axis=0)


def heat_step(field: Field, nu: Viscosity, dt: float) -> Field:
    """Diffuse by the multiplier exp(-sum_i nu_i xi_i^2 dt).

    Equals convolution with the Gaussian kernel of d_t f = (nu . Lap) f; the
    grid mean is preserved exactly and the sup-norm never increases.
    """
    if dt < 0:
        raise ValueError(f"heat step needs dt >= 0, got {dt}")
    grid = field.grid
    if len(nu.nu) != grid.n:
        raise ValueError("viscosity dimension does not match the grid")
    if dt == 0.0 or nu.is_zero:
        return field
    spec = np.fft.fftn(field.data, axes=tuple(range(1, grid.n + 1)))
    decay = np.zeros(grid.shape)
    for i, (v, xi) in enumerate(zip(nu.nu, grid.wavenumbers)):
        if v == 0.0:
            continue
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        decay = decay + v * (xi**2).reshape(shape)
    spec *= np.exp(-decay * dt)[np.newaxis]
    out = np.real(np.fft.ifftn(spec, axes=tuple(range(1, grid.n + 1))))
    return field.with_data(out, time=field.time + dt)


def transport_step(
    field: Field,
    coeffs: CoefficientSet,
    t0: float,
    dt: float,
    *,
    quad_dt: float | None = None,
    oversample: int = 4,
) -> Field:
    """Shift by D(x) = int_{t0}^{t0+dt} g(x, s) ds.

    g is evaluated at the departure point x (frozen coordinates), so the step
    agrees with integrating characteristics to O(dt^2).
    """
    if dt < 0:
        raise ValueError(f"transport step needs dt >= 0, got {dt}")
    if coeffs.g is None or dt == 0.0:
        return field if dt == 0.0 else field.with_data(field.data, field.time + dt)
    grid = field.grid
    disp = _time_quadrature(coeffs.g, grid, t0, dt, (grid.n,), quad_dt)
    out = interpolate_shifted(field, disp, oversample=oversample)
    return out.with_data(out.data, time=field.time + dt)


def multiply_step(
    field: Field,
    coeffs: CoefficientSet,
    t0: float,
    dt: float,
    *,
    quad_dt: float | None = None,
) -> Field:
    """Multiply pointwise by expm(int_{t0}^{t0+dt} h(x, s) ds)."""
    if dt < 0:
        raise ValueError(f"multiply step needs dt >= 0, got {dt}")
    if coeffs.h is None or dt == 0.0:
        return field if dt == 0.0 else field.with_data(field.data, field.time + dt)
    grid = field.grid
    m = field.m
    H = _time_quadrature(coeffs.h, grid, t0, dt, (m, m), quad_dt)
    if m == 1:
        out = np.exp(H[0, 0])[np.newaxis] * field.data
    else:
        Hb = np.moveaxis(H.reshape(m, m, -1), -1, 0)  # (points, m, m)
        E = expm_batched(Hb)
        fb = field.data.reshape(m, -1).T  # (points, m)
        out = np.einsum("pij,pj->ip", E, fb).reshape(field.data.shape)
    return field.with_data(out, time=field.time + dt)


def source_step(
    field: Field,
    coeffs: CoefficientSet,
    t0: float,
    dt: float,
    *,
    quad_dt: float | None = None,
) -> Field:
    """Add int_{t0}^{t0+dt} k(x, s) ds pointwise."""
    if dt < 0:
        raise ValueError(f"source step needs dt >= 0, got {dt}")
    if coeffs.k is None or dt == 0.0:
        return field if dt == 0.0 else field.with_data(field.data, field.time + dt)
    grid = field.grid
    K = _time_quadrature(coeffs.k, grid, t0, dt, (field.m,), quad_dt)
    return field.with_data(field.data + K, time=field.time + dt)


#: Dilated coordinates must stay inside the box for all points within this
#: fraction of the half-width.
_DILATION_GUARD = 0.9


def scaling_step(field: Field, a, dt: float, *, oversample: int = 4) -> Field:
    """Evaluate the field at dilated coordinates (x_i * exp(a_i dt)).

    This is the exact flow of d_t f = a x . grad f.  The per-axis dilation
    factor must keep the guarded box (fraction 0.9 of the half-width) inside
    the box, else :class:`DilationError`.
    """
    grid = field.grid
    a = np.broadcast_to(np.asarray(a, dtype=float), (grid.n,))
    if dt == 0.0 or np.all(a == 0.0):
        return field
    factors = np.exp(a * dt)
    for i, c in enumerate(factors):
        if max(c, 1.0 / c) > 1.0 / _DILATION_GUARD + 1e-12:
            raise DilationError(
                f"dilation factor {c:.4f} on axis {i} exits the guarded box "
                f"(|log factor| must stay below {-math.log(_DILATION_GUARD):.4f})"
            )
    mesh = grid.mesh()
    disp = np.stack([mesh[i] * (factors[i] - 1.0) for i in range(grid.n)])
    out = interpolate_shifted(field, disp, oversample=oversample)
    return out.with_data(out.data, time=field.time + dt)


# Pade-13 scaling-and-squaring coefficients (Higham 2005)
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def expm_batched(H: np.ndarray) -> np.ndarray:
    """Matrix exponential of a batch of small matrices, shape (..., m, m).

    Scaling-and-squaring with the order-13 Pade approximant; absolute
    accuracy is far below 1e-12 for the integrated-coefficient matrices this
    package produces.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[-1]
    ident = np.broadcast_to(np.eye(m), H.shape).copy()
    norm = np.max(np.abs(H).sum(axis=-1)) if H.size else 0.0
    s = max(0, math.ceil(math.log2(norm / _THETA13))) if norm > _THETA13 else 0
    A = H / (2.0**s)
    b = _PADE13
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6
        + b[5] * A4
        + b[3] * A2
        + b[1] * ident
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6
        + b[4] * A4
        + b[2] * A2
        + b[0] * ident
    )
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E
