"""Grid, field, derivative, interpolation, and seminorm tests.

Derived expected values are frozen from independent oracles (dense scans,
closed forms); the comments next to each value say which.
"""

import numpy as np
import pytest

from splitbound.grid import (
    DecayReport,
    DomainTooSmallError,
    Field,
    MultiIndexPair,
    decay_guard,
    field_to_csv,
    interpolate_shifted,
    make_grid,
    monitor_pairs,
    read_field,
    sample_field,
    spectral_derivative,
    weighted_seminorm,
    write_field,
)

# dense-scan oracle: max_x |x e^{-x^2}| on 2e6 points in [-6, 6] -> 0.42888194
X_DENSE = np.linspace(-6.0, 6.0, 2_000_001)
MAX_X_GAUSS = float(np.max(np.abs(X_DENSE * np.exp(-(X_DENSE**2)))))
# dense finite-difference oracle for max |d/dx e^{-x^2}|
_FD = np.abs(np.diff(np.exp(-(X_DENSE**2))) / np.diff(X_DENSE))
MAX_D_GAUSS = float(np.max(_FD))


def gauss1d(L=8.0, P=256):
    grid = make_grid(1, [L], [P])
    return grid, sample_field(lambda x: np.exp(-(x**2)), grid)


class TestMakeGrid:
    def test_spacing(self):
        grid = make_grid(1, [8.0], [256])
        assert grid.spacing == (0.0625,)

    def test_torus_integer_wavenumbers(self):
        grid = make_grid(2, [np.pi, np.pi], [64, 64], periodic_native=True)
        for xi in grid.wavenumbers:
            assert np.allclose(xi, np.round(xi), atol=1e-12)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            make_grid(1, [8.0], [100])

    def test_nonpositive_half_width_rejected(self):
        with pytest.raises(ValueError):
            make_grid(1, [0.0], [64])

    def test_coordinates_cover_box(self):
        grid = make_grid(1, [4.0], [16])
        x = grid.axes[0]
        assert x[0] == -4.0
        assert np.isclose(x[-1], 4.0 - grid.spacing[0])


class TestSampleField:
    def test_gaussian_peak(self):
        _, f = gauss1d()
        assert np.isclose(f.sup(), 1.0, atol=1e-12)

    def test_zero(self):
        grid = make_grid(1, [8.0], [64])
        f = sample_field(lambda x: np.zeros_like(x), grid)
        assert f.sup() == 0.0

    def test_x_gaussian_extremum(self):
        grid = make_grid(1, [8.0], [2048])
        f = sample_field(lambda x: x * np.exp(-(x**2)), grid)
        # grid max lags the true extremum by O(dx^2)
        assert np.isclose(f.sup(), MAX_X_GAUSS, atol=5e-5)
        # closed form (2e)^{-1/2}
        assert np.isclose(MAX_X_GAUSS, (2.0 * np.e) ** -0.5, atol=1e-10)

    def test_nonfinite_rejected(self):
        grid = make_grid(1, [8.0], [64])
        with np.errstate(divide="ignore"), pytest.raises(ValueError):
            sample_field(lambda x: 1.0 / x, grid)

    def test_multicomponent(self):
        grid = make_grid(1, [8.0], [64])
        f = sample_field(lambda x: np.stack([x, 2 * x]), grid, m=2)
        assert f.m == 2
        assert np.allclose(f.data[1], 2 * f.data[0])


class TestSpectralDerivative:
    def test_sin_to_cos_on_torus(self):
        grid = make_grid(1, [np.pi], [64], periodic_native=True)
        f = sample_field(np.sin, grid)
        df = spectral_derivative(f, (1,))
        assert np.max(np.abs(df.data[0] - np.cos(grid.axes[0]))) < 1e-10

    def test_zero_order_identity(self):
        _, f = gauss1d()
        assert spectral_derivative(f, (0,)) is f

    def test_gaussian_derivative(self):
        grid, f = gauss1d()
        df = spectral_derivative(f, (1,))
        x = grid.axes[0]
        assert np.max(np.abs(df.data[0] + 2 * x * np.exp(-(x**2)))) < 1e-8

    def test_composition_matches_second_order(self):
        grid = make_grid(1, [np.pi], [64], periodic_native=True)
        f = sample_field(lambda x: np.sin(3 * x) + np.cos(x), grid)
        twice = spectral_derivative(spectral_derivative(f, (1,)), (1,))
        once = spectral_derivative(f, (2,))
        assert np.max(np.abs(twice.data - once.data)) < 1e-10

    def test_order_cap(self):
        _, f = gauss1d()
        with pytest.raises(ValueError):
            spectral_derivative(f, (5,))

    def test_mixed_2d(self):
        grid = make_grid(2, [np.pi, np.pi], [32, 32], periodic_native=True)
        f = sample_field(lambda x, y: np.sin(x) * np.cos(y), grid)
        dxy = spectral_derivative(f, (1, 1))
        xm, ym = grid.mesh()
        assert np.max(np.abs(dxy.data[0] + np.cos(xm) * np.sin(ym))) < 1e-10


class TestInterpolateShifted:
    def test_constant_shift_gaussian(self):
        grid, f = gauss1d()
        disp = np.full((1,) + grid.shape, 0.5)
        g = interpolate_shifted(f, disp)
        assert np.isclose(g.data[0][grid.points[0] // 2], np.exp(-0.25), atol=1e-8)
        x = grid.axes[0]
        assert np.max(np.abs(g.data[0] - np.exp(-((x + 0.5) ** 2)))) < 1e-8

    def test_zero_displacement_identity(self):
        grid, f = gauss1d()
        disp = np.zeros((1,) + grid.shape)
        assert interpolate_shifted(f, disp) is f

    def test_exact_trig_shift(self):
        grid = make_grid(1, [np.pi], [64], periodic_native=True)
        f = sample_field(np.sin, grid)
        disp = np.full((1,) + grid.shape, np.pi / 2)
        g = interpolate_shifted(f, disp)
        assert np.max(np.abs(g.data[0] - np.cos(grid.axes[0]))) < 1e-12

    def test_round_trip_band_limited(self):
        grid = make_grid(1, [np.pi], [128], periodic_native=True)
        f = sample_field(lambda x: np.sin(2 * x) + 0.5 * np.cos(5 * x), grid)
        d = 0.37
        there = interpolate_shifted(f, np.full((1,) + grid.shape, d))
        back = interpolate_shifted(there, np.full((1,) + grid.shape, -d))
        assert np.max(np.abs(back.data - f.data)) < 1e-10

    def test_variable_displacement_accuracy(self):
        # oracle: closed-form evaluation of the shifted band-limited target
        grid = make_grid(1, [np.pi], [256], periodic_native=True)
        f = sample_field(lambda x: np.sin(x) + 0.3 * np.cos(2 * x), grid)
        x = grid.axes[0]
        d = 0.2 * np.sin(x)
        g = interpolate_shifted(f, d[np.newaxis])
        target = np.sin(x + d) + 0.3 * np.cos(2 * (x + d))
        assert np.max(np.abs(g.data[0] - target)) < 1e-9

    def test_variable_displacement_2d(self):
        grid = make_grid(2, [np.pi, np.pi], [64, 64], periodic_native=True)
        f = sample_field(lambda x, y: np.sin(x) * np.cos(y), grid)
        xm, ym = grid.mesh()
        dx = 0.15 * np.sin(ym)
        dy = 0.1 * np.cos(xm)
        g = interpolate_shifted(f, np.stack([dx, dy]))
        target = np.sin(xm + dx) * np.cos(ym + dy)
        assert np.max(np.abs(g.data[0] - target)) < 1e-8

    def test_grid_point_displacement_is_exact(self):
        # zero fractional offset must reproduce samples exactly
        grid = make_grid(1, [np.pi], [64], periodic_native=True)
        f = sample_field(lambda x: np.sin(3 * x), grid)
        d = np.zeros((1,) + grid.shape)
        d[0, 5] = grid.spacing[0] * 2  # non-constant, on-node shifts
        g = interpolate_shifted(f, d)
        expect = f.data[0].copy()
        expect[5] = f.data[0][(5 + 2) % 64]
        assert np.max(np.abs(g.data[0] - expect)) < 1e-12


class TestWeightedSeminorm:
    def test_weight_one(self):
        grid = make_grid(1, [8.0], [4096])
        f = sample_field(lambda x: np.exp(-(x**2)), grid)
        val = weighted_seminorm(f, MultiIndexPair((1,), (0,)))
        assert np.isclose(val, MAX_X_GAUSS, atol=2e-5)

    def test_derivative_one(self):
        grid = make_grid(1, [8.0], [4096])
        f = sample_field(lambda x: np.exp(-(x**2)), grid)
        val = weighted_seminorm(f, MultiIndexPair((0,), (1,)))
        assert np.isclose(val, MAX_D_GAUSS, atol=2e-5)
        assert np.isclose(val, np.sqrt(2.0 / np.e), atol=2e-5)

    def test_plain_sup(self):
        grid = make_grid(1, [8.0], [64])
        f = sample_field(lambda x: 0.3 * np.exp(-(x**2)) - 0.7, grid)
        val = weighted_seminorm(f, MultiIndexPair((0,), (0,)))
        assert val == np.max(np.abs(f.data))

    def test_absolute_homogeneity(self):
        grid = make_grid(1, [8.0], [256])
        f = sample_field(lambda x: np.exp(-(x**2)) * np.sin(x), grid)
        # derivative-free pairs scale exactly; FFT paths to machine rounding
        pair0 = MultiIndexPair((1,), (0,))
        base0 = weighted_seminorm(f, pair0)
        pair1 = MultiIndexPair((1,), (1,))
        base1 = weighted_seminorm(f, pair1)
        for c in (-3.0, 0.5, 2.0):
            scaled = f.with_data(c * f.data)
            assert weighted_seminorm(scaled, pair0) == abs(c) * base0
            assert np.isclose(
                weighted_seminorm(scaled, pair1), abs(c) * base1, rtol=1e-13
            )

    def test_domain_too_small(self):
        grid = make_grid(1, [2.0], [64])
        f = sample_field(lambda x: np.exp(-(x**2)), grid)
        with pytest.raises(DomainTooSmallError):
            weighted_seminorm(f, MultiIndexPair((1,), (0,)))
        # explicit opt-out still evaluates
        assert weighted_seminorm(
            f, MultiIndexPair((1,), (0,)), decay_tol=None
        ) > 0


class TestDecayGuard:
    def test_gaussian_passes(self):
        _, f = gauss1d()
        report = decay_guard(f, 1e-8)
        assert report.passed
        assert report.ratio < 1e-17

    def test_constant_fails(self):
        grid = make_grid(1, [8.0], [64])
        f = sample_field(lambda x: np.ones_like(x), grid)
        report = decay_guard(f, 1e-8)
        assert not report.passed
        assert report.ratio == 1.0

    def test_zero_passes(self):
        grid = make_grid(1, [8.0], [64])
        f = sample_field(lambda x: np.zeros_like(x), grid)
        report = decay_guard(f, 1e-8)
        assert report.passed and report.ratio == 0.0


class TestMultiIndexPair:
    def test_label(self):
        assert MultiIndexPair((1, 0), (0, 2)).label == "a10_b02"

    def test_order_cap(self):
        with pytest.raises(ValueError):
            MultiIndexPair((5,), (0,))

    def test_monitor_pairs_counts(self):
        pairs = monitor_pairs(1, 2, 2)
        assert len(pairs) == 9
        pairs2 = monitor_pairs(2, 1, 1)
        # alphas: (0,0),(1,0),(0,1); same betas
        assert len(pairs2) == 9


class TestSerialization:
    def test_binary_round_trip(self, tmp_path):
        grid = make_grid(2, [4.0, 6.0], [16, 32])
        f = sample_field(
            lambda x, y: np.stack([np.exp(-(x**2) - y**2), x * 0 + 1.5]),
            grid,
            m=2,
            t=0.75,
        )
        path = tmp_path / "field.bin"
        write_field(f, path)
        g = read_field(path)
        assert g.grid.points == grid.points
        assert g.grid.half_width == grid.half_width
        assert g.time == 0.75
        assert np.array_equal(g.data, f.data)

    def test_binary_layout_contract(self, tmp_path):
        # header: n, m, P_i as little-endian int64; L_i, t as float64;
        # then row-major float64 data, component by component
        import struct

        grid = make_grid(1, [2.0], [8])
        f = sample_field(lambda x: x, grid, t=1.5)
        path = tmp_path / "field.bin"
        write_field(f, path)
        raw = path.read_bytes()
        n, m, P = struct.unpack_from("<3q", raw, 0)
        L, t = struct.unpack_from("<2d", raw, 24)
        assert (n, m, P) == (1, 1, 8)
        assert (L, t) == (2.0, 1.5)
        data = np.frombuffer(raw[40:], dtype="<f8")
        assert np.array_equal(data, f.data.ravel())
        assert len(raw) == 40 + 8 * 8

    def test_csv_1d(self, tmp_path):
        grid = make_grid(1, [1.0], [8])
        f = sample_field(lambda x: x, grid)
        path = tmp_path / "field.csv"
        field_to_csv(f, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "x1,c0"
        assert len(lines) == 9

    def test_csv_3d_rejected(self, tmp_path):
        grid = make_grid(3, [1.0, 1.0, 1.0], [8, 8, 8])
        f = sample_field(lambda x, y, z: x * 0, grid)
        with pytest.raises(ValueError):
            field_to_csv(f, tmp_path / "f.csv")


class TestFieldInvariants:
    def test_data_frozen(self):
        _, f = gauss1d()
        with pytest.raises(ValueError):
            f.data[0, 0] = 1.0

    def test_shape_mismatch(self):
        grid = make_grid(1, [8.0], [64])
        with pytest.raises(ValueError):
            Field(grid, np.zeros(65))
