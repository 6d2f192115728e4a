"""Periodic spectral grids, sampled fields, and weighted sup-norms.

Fields live on a uniform tensor-product grid covering the box
``[-L_1, L_1) x ... x [-L_n, L_n)``.  The box either discretizes a genuinely
periodic torus or truncates all of R^n; in the second case rapid spatial decay
of the data is what makes the truncation admissible, and :func:`decay_guard`
measures exactly that.  Differentiation and interpolation are Fourier-based
throughout, so both are exact on band-limited data.

The central scalar quantity is the weighted sup-norm
``max_x |x^alpha * (d^beta f)(x)|`` for a pair of multi-indices
``(alpha, beta)``; :class:`MultiIndexPair` names such a pair and
:func:`weighted_seminorm` evaluates it on a field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_MAX_ORDER",
    "DEFAULT_DECAY_TOL",
    "Grid",
    "Field",
    "MultiIndexPair",
    "DecayReport",
    "DomainTooSmallError",
    "make_grid",
    "sample_field",
    "spectral_derivative",
    "interpolate_shifted",
    "weighted_seminorm",
    "decay_guard",
    "monitor_pairs",
    "write_field",
    "read_field",
    "field_to_csv",
]

#: Highest monitored derivative / weight order.  Larger orders amplify the
#: box-truncation error polynomially and are rejected by default.
DEFAULT_MAX_ORDER = 4

#: Default relative tolerance for the boundary-shell decay check.
DEFAULT_DECAY_TOL = 1e-8

_trapz = getattr(np, "trapezoid", np.trapz)


class DomainTooSmallError(ValueError):
    """Raised when a weighted sup-norm is requested on a field whose
    boundary-shell values are too large for the box truncation to be
    meaningful ("domain too small")."""

    def __init__(self, ratio: float, tol: float):
        self.ratio = ratio
        self.tol = tol
        super().__init__(
            f"domain too small: boundary shell holds {ratio:.3e} of the field "
            f"maximum (tolerance {tol:.3e}); enlarge the box or relax the check"
        )


def _as_tuple(value, n: int, kind=float) -> tuple:
    """Broadcast a scalar to an n-tuple, or validate an n-sequence."""
    if np.isscalar(value):
        return tuple(kind(value) for _ in range(n))
    out = tuple(kind(v) for v in value)
    if len(out) != n:
        raise ValueError(f"expected {n} per-axis values, got {len(out)}")
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on the box ``[-L_i, L_i)`` per axis.

    ``periodic_native`` records whether the underlying problem is posed on a
    torus (True) or on R^n truncated to the box (False).  The distinction only
    matters for decay checking; the spectral machinery is identical.
    """

    n: int
    half_width: tuple[float, ...]
    points: tuple[int, ...]
    periodic_native: bool = False

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise ValueError(f"dimension must be 1, 2, or 3, got {self.n}")
        if len(self.half_width) != self.n or len(self.points) != self.n:
            raise ValueError("half_width and points must have length n")
        for L in self.half_width:
            if not (np.isfinite(L) and L > 0):
                raise ValueError(f"half_width must be positive, got {L}")
        for P in self.points:
            if P < 8 or (P & (P - 1)) != 0:
                raise ValueError(f"points must be a power of two >= 8, got {P}")
        axes = []
        waves = []
        for L, P in zip(self.half_width, self.points):
            dx = 2.0 * L / P
            axes.append(-L + dx * np.arange(P))
            # frequencies pi*j/L for j in [-P/2, P/2), fft ordering
            waves.append(2.0 * np.pi * np.fft.fftfreq(P, d=dx))
        for a in axes + waves:
            a.flags.writeable = False
        object.__setattr__(self, "_axes", tuple(axes))
        object.__setattr__(self, "_wavenumbers", tuple(waves))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2.0 * L / P for L, P in zip(self.half_width, self.points))

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return self._axes

    @property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return self._wavenumbers

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``points`` (ij indexing)."""
        return tuple(np.meshgrid(*self._axes, indexing="ij"))

    def wavegrid(self) -> tuple[np.ndarray, ...]:
        """Wavenumber arrays of shape ``points`` (fft ordering)."""
        return tuple(np.meshgrid(*self._wavenumbers, indexing="ij"))

    def compatible_with(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and self.points == other.points
            and self.half_width == other.half_width
            and self.periodic_native == other.periodic_native
        )


def make_grid(n: int, half_widths, points, periodic_native: bool = False) -> Grid:
    """Build a grid; scalars broadcast across axes."""
    return Grid(
        n=n,
        half_width=_as_tuple(half_widths, n, float),
        points=_as_tuple(points, n, int),
        periodic_native=periodic_native,
    )


@dataclass(frozen=True, eq=False)
class Field:
    """An m-component real sample array on a grid; a snapshot f(., t).

    Data is copied on construction, checked finite, and frozen.
    """

    grid: Grid
    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=float, order="C")
        if data.shape == self.grid.shape:
            data = data[np.newaxis]
        if data.shape[1:] != self.grid.shape or data.ndim != self.grid.n + 1:
            raise ValueError(
                f"data shape {np.shape(self.data)} does not match grid "
                f"(m, {', '.join(map(str, self.grid.shape))})"
            )
        if not np.isfinite(data).all():
            raise ValueError("field data contains non-finite entries")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    def with_data(self, data: np.ndarray, time: float | None = None) -> "Field":
        return Field(self.grid, data, self.time if time is None else time)

    def sup(self) -> float:
        """Plain sup-norm: max over points and components of |data|."""
        return float(np.max(np.abs(self.data)))


@dataclass(frozen=True)
class MultiIndexPair:
    """A weight/derivative multi-index pair (alpha, beta)."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(int(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(int(b) for b in self.beta))
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta must have equal length")
        if any(a < 0 for a in self.alpha + self.beta):
            raise ValueError("multi-index entries must be non-negative")
        if max(sum(self.alpha), sum(self.beta)) > DEFAULT_MAX_ORDER:
            raise ValueError(
                f"|alpha|, |beta| must not exceed {DEFAULT_MAX_ORDER}"
            )

    @property
    def weight_order(self) -> int:
        return sum(self.alpha)

    @property
    def derivative_order(self) -> int:
        return sum(self.beta)

    @property
    def label(self) -> str:
        return "a{}_b{}".format(
            "".join(map(str, self.alpha)), "".join(map(str, self.beta))
        )


def monitor_pairs(n: int, max_alpha: int, max_beta: int) -> tuple[MultiIndexPair, ...]:
    """All pairs with |alpha| <= max_alpha and |beta| <= max_beta, sorted."""

    def indices(max_total):
        out = [
            idx
            for idx in product(range(max_total + 1), repeat=n)
            if sum(idx) <= max_total
        ]
        return sorted(out, key=lambda idx: (sum(idx), idx))

    return tuple(
        MultiIndexPair(a, b)
        for a in indices(max_alpha)
        for b in indices(max_beta)
    )


def sample_field(fn: Callable, grid: Grid, m: int = 1, t: float = 0.0) -> Field:
    """Sample a pointwise function of the coordinates onto the grid.

    ``fn`` is called with the n coordinate meshes and must return either an
    array of grid shape (m = 1) or m such arrays stacked along axis 0.
    """
    values = np.asarray(fn(*grid.mesh()), dtype=float)
    if values.shape == grid.shape:
        values = values[np.newaxis]
    values = np.broadcast_to(values, (m,) + grid.shape)
    if not np.isfinite(values).all():
        raise ValueError("sampled function returned non-finite values")
    return Field(grid, values, t)


def _spatial_axes(field: Field) -> tuple[int, ...]:
    return tuple(range(1, field.grid.n + 1))


def spectral_derivative(field: Field, beta: Sequence[int]) -> Field:
    """Differentiate by the Fourier multiplier prod_i (i*xi_i)^beta_i.

    The Nyquist mode is zeroed on axes with odd derivative order so the
    result stays real-valued.
    """
    grid = field.grid
    beta = _as_tuple(beta, grid.n, int)
    if any(b < 0 for b in beta):
        raise ValueError("derivative orders must be non-negative")
    if sum(beta) > DEFAULT_MAX_ORDER:
        raise ValueError(f"|beta| exceeds the maximum order {DEFAULT_MAX_ORDER}")
    if sum(beta) == 0:
        return field
    spec = np.fft.fftn(field.data, axes=_spatial_axes(field))
    for axis, (b, xi, P) in enumerate(zip(beta, grid.wavenumbers, grid.points)):
        if b == 0:
            continue
        mult = (1j * xi) ** b
        if b % 2 == 1:
            mult = mult.copy()
            mult[P // 2] = 0.0
        shape = [1] * (grid.n + 1)
        shape[axis + 1] = P
        spec = spec * mult.reshape(shape)
    out = np.real(np.fft.ifftn(spec, axes=_spatial_axes(field)))
    return field.with_data(out)


def _lagrange_weights(frac: np.ndarray, order: int) -> list[np.ndarray]:
    """Lagrange basis weights on the uniform stencil -(order/2-1)..order/2
    evaluated at offset ``frac`` in [0, 1)."""
    offsets = np.arange(order) - (order // 2 - 1)
    weights = []
    for j, oj in enumerate(offsets):
        w = np.ones_like(frac)
        for l, ol in enumerate(offsets):
            if l != j:
                w = w * (frac - ol) / (oj - ol)
        weights.append(w)
    return weights


def _pad_spectrum_axis(spec: np.ndarray, axis: int, factor: int) -> np.ndarray:
    """Zero-pad one spatial axis of an fft spectrum by ``factor``, splitting
    the Nyquist coefficient symmetrically so realness is preserved."""
    P = spec.shape[axis]
    newP = P * factor
    shifted = np.fft.fftshift(spec, axes=axis)
    shape = list(spec.shape)
    shape[axis] = newP
    out = np.zeros(shape, dtype=complex)
    start = newP // 2 - P // 2
    sl_out = [slice(None)] * spec.ndim
    sl_out[axis] = slice(start, start + P)
    out[tuple(sl_out)] = shifted
    # split -P/2 Nyquist entry onto +P/2 to keep conjugate symmetry exact
    sl_lo = [slice(None)] * spec.ndim
    sl_lo[axis] = start
    sl_hi = [slice(None)] * spec.ndim
    sl_hi[axis] = start + P
    out[tuple(sl_lo)] *= 0.5
    out[tuple(sl_hi)] = out[tuple(sl_lo)]
    return np.fft.ifftshift(out, axes=axis)


def _spectral_upsample(data: np.ndarray, factor: int, spatial_axes) -> np.ndarray:
    """Resample onto a ``factor``-times finer grid via zero-padded FFT."""
    if factor == 1:
        return np.asarray(data, dtype=float)
    spec = np.fft.fftn(data, axes=spatial_axes)
    for axis in spatial_axes:
        spec = _pad_spectrum_axis(spec, axis, factor)
    fine = np.real(np.fft.ifftn(spec, axes=spatial_axes))
    return fine * factor ** len(spatial_axes)


def _constant_shift(field: Field, shift: Sequence[float]) -> Field:
    """Exact trigonometric translation f(x) -> f(x + shift)."""
    grid = field.grid
    spec = np.fft.fftn(field.data, axes=_spatial_axes(field))
    for axis, (d, xi, P) in enumerate(zip(shift, grid.wavenumbers, grid.points)):
        if d == 0.0:
            continue
        mult = np.exp(1j * xi * d)
        # real-valued shift of the Nyquist mode is a pure cosine factor
        mult[P // 2] = np.cos(xi[P // 2] * d)
        shape = [1] * (grid.n + 1)
        shape[axis + 1] = P
        spec = spec * mult.reshape(shape)
    out = np.real(np.fft.ifftn(spec, axes=_spatial_axes(field)))
    return field.with_data(out)


def interpolate_shifted(
    field: Field,
    displacement,
    *,
    oversample: int = 4,
    stencil: int = 8,
) -> Field:
    """Evaluate the trigonometric interpolant of ``field`` at x + D(x).

    Constant displacements use the exact spectral phase shift.  Varying
    displacements evaluate the interpolant by ``oversample``-times spectral
    refinement followed by a local ``stencil``-point Lagrange read; wrap-around
    across the periodic box is permitted and is the documented truncation
    error when the box stands in for R^n.
    """
    grid = field.grid
    if isinstance(displacement, Field):
        disp = displacement.data
    else:
        disp = np.asarray(displacement, dtype=float)
    if disp.shape != (grid.n,) + grid.shape:
        raise ValueError(
            f"displacement must have shape (n, *points), got {disp.shape}"
        )
    if not np.isfinite(disp).all():
        raise ValueError("displacement contains non-finite entries")

    spans = [float(np.max(d) - np.min(d)) for d in disp]
    if all(s == 0.0 for s in spans):
        shift = [float(d.flat[0]) for d in disp]
        if all(v == 0.0 for v in shift):
            return field
        return _constant_shift(field, shift)

    fine = _spectral_upsample(field.data, oversample, _spatial_axes(field))
    fine_flat = fine.reshape(field.m, -1)
    fine_shape = tuple(P * oversample for P in grid.points)

    mesh = grid.mesh()
    weights = []
    indices = []
    for i in range(grid.n):
        L = grid.half_width[i]
        Pf = fine_shape[i]
        hf = 2.0 * L / Pf
        target = mesh[i] + disp[i]
        # wrap into [-L, L)
        target = np.mod(target + L, 2.0 * L) - L
        u = (target + L) / hf
        base = np.floor(u).astype(np.int64)
        frac = u - base
        weights.append(_lagrange_weights(frac, stencil))
        offs = np.arange(stencil) - (stencil // 2 - 1)
        indices.append([(base + o) % Pf for o in offs])

    strides = np.ones(grid.n, dtype=np.int64)
    for i in range(grid.n - 2, -1, -1):
        strides[i] = strides[i + 1] * fine_shape[i + 1]

    out = np.zeros((field.m,) + grid.shape)
    for combo in product(range(stencil), repeat=grid.n):
        w = weights[0][combo[0]]
        idx = indices[0][combo[0]] * strides[0]
        for i in range(1, grid.n):
            w = w * weights[i][combo[i]]
            idx = idx + indices[i][combo[i]] * strides[i]
        out += w[np.newaxis] * fine_flat[:, idx.ravel()].reshape(
            (field.m,) + grid.shape
        )
    return field.with_data(out)


def seminorm_weight(grid: Grid, alpha: Sequence[int]) -> np.ndarray:
    """The polynomial weight prod_i |x_i|^alpha_i on the grid."""
    alpha = _as_tuple(alpha, grid.n, int)
    w = np.ones(grid.shape)
    for i, a in enumerate(alpha):
        if a == 0:
            continue
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        w = w * np.abs(grid.axes[i]).reshape(shape) ** a
    return w


def weighted_seminorm(
    field: Field,
    pair: MultiIndexPair,
    *,
    decay_tol: float | None = DEFAULT_DECAY_TOL,
) -> float:
    """Evaluate max_x |x^alpha * (d^beta f)(x)| over points and components.

    On box-truncated (non-torus) grids with |alpha| > 0 the field must pass
    the decay guard, else :class:`DomainTooSmallError`; pass
    ``decay_tol=None`` to skip the check (callers that record traces do and
    report the guard ratio separately).
    """
    if (
        decay_tol is not None
        and not field.grid.periodic_native
        and pair.weight_order > 0
    ):
        report = decay_guard(field, decay_tol)
        if not report.passed:
            raise DomainTooSmallError(report.ratio, decay_tol)
    deriv = spectral_derivative(field, pair.beta)
    w = seminorm_weight(field.grid, pair.alpha)
    return float(np.max(np.abs(deriv.data) * w[np.newaxis]))


@dataclass(frozen=True)
class DecayReport:
    """Outcome of the boundary-shell decay check."""

    passed: bool
    ratio: float
    tol: float
    shell_max: float
    field_max: float


def decay_guard(field: Field, tol: float = DEFAULT_DECAY_TOL) -> DecayReport:
    """Check that the outer 10% shell of the box carries a negligible
    fraction of the field maximum.

    Passes iff max|f| over the shell <= tol * max|f|; the report always
    carries the measured ratio.
    """
    grid = field.grid
    shell = np.zeros(grid.shape, dtype=bool)
    for i in range(grid.n):
        shape = [1] * grid.n
        shape[i] = grid.points[i]
        shell |= (np.abs(grid.axes[i]) >= 0.9 * grid.half_width[i]).reshape(shape)
    amax = float(np.max(np.abs(field.data)))
    if amax == 0.0:
        return DecayReport(True, 0.0, tol, 0.0, 0.0)
    smax = float(np.max(np.abs(field.data[:, shell])))
    ratio = smax / amax
    return DecayReport(ratio <= tol, ratio, tol, smax, amax)


# ---------------------------------------------------------------------------
# serialization


def write_field(field: Field, path) -> None:
    """Write a field in the flat binary layout.

    Header: n, m, P_1..P_n as little-endian int64, then L_1..L_n and t as
    little-endian float64; data follows row-major, component by component.
    """
    grid = field.grid
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", grid.n))
        fh.write(struct.pack("<q", field.m))
        fh.write(struct.pack(f"<{grid.n}q", *grid.points))
        fh.write(struct.pack(f"<{grid.n}d", *grid.half_width))
        fh.write(struct.pack("<d", field.time))
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def read_field(path, periodic_native: bool = False) -> Field:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated field file")
        n = struct.unpack("<q", head)[0]
        if not 1 <= n <= 3:
            raise ValueError(f"{path}: not a field file (dimension {n})")
        m = struct.unpack("<q", fh.read(8))[0]
        points = struct.unpack(f"<{n}q", fh.read(8 * n))
        widths = struct.unpack(f"<{n}d", fh.read(8 * n))
        t = struct.unpack("<d", fh.read(8))[0]
        grid = make_grid(n, widths, points, periodic_native)
        count = m * grid.total_points
        data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
        if data.size != count:
            raise ValueError(f"{path}: truncated field data")
    return Field(grid, data.reshape((m,) + grid.shape), t)


def field_to_csv(field: Field, path) -> None:
    """Write 1D/2D fields as CSV with coordinate columns and one column per
    component."""
    grid = field.grid
    if grid.n > 2:
        raise ValueError("CSV export supports 1D and 2D fields only")
    header = [f"x{i + 1}" for i in range(grid.n)] + [
        f"c{j}" for j in range(field.m)
    ]
    mesh = grid.mesh()
    columns = [x.ravel() for x in mesh] + [c.ravel() for c in field.data]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
