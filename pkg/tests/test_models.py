"""Vorticity machinery, Burgers oracles, and monitor tests."""

import numpy as np
import pytest

from splitbound.grid import (
    MultiIndexPair,
    make_grid,
    sample_field,
    spectral_derivative,
)
from splitbound.models import (
    BlowupTimes,
    ColeHopfUnderflowError,
    VorticityState,
    biot_savart,
    bkm_integral,
    burgers_blowup,
    burgers_builder,
    burgers_oracle,
    cole_hopf,
    curl_div,
    energy,
    evolve_vorticity,
    support_radius,
    vorticity_coefficients,
)
from splitbound.nonlinear import solve_delayed
from splitbound.propagators import Viscosity
from splitbound.splitting import make_decomposition

MON2 = (MultiIndexPair((0, 0), (0, 0)),)


def torus2d(P=128):
    return make_grid(2, [np.pi, np.pi], [P, P], periodic_native=True)


def taylor_green_omega(grid):
    return sample_field(lambda x, y: 2.0 * np.sin(x) * np.sin(y), grid)


def taylor_green_u(grid):
    return sample_field(
        lambda x, y: np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)]),
        grid,
        m=2,
    )


class TestCurlDiv:
    def test_shear_3d(self):
        grid = make_grid(3, [np.pi] * 3, [16] * 3, periodic_native=True)
        u = sample_field(
            lambda x, y, z: np.stack([0 * x, 0 * x, np.sin(x)]), grid, m=3
        )
        omega, div = curl_div(u)
        xm = grid.mesh()[0]
        assert np.max(np.abs(omega.data[0])) < 1e-12
        assert np.max(np.abs(omega.data[1] + np.cos(xm))) < 1e-12
        assert np.max(np.abs(omega.data[2])) < 1e-12
        assert div < 1e-12

    def test_taylor_green(self):
        grid = torus2d(64)
        omega, div = curl_div(taylor_green_u(grid))
        target = taylor_green_omega(grid)
        assert np.max(np.abs(omega.data - target.data)) < 1e-12
        assert div < 1e-12

    def test_zero(self):
        grid = torus2d(16)
        u = sample_field(lambda x, y: np.stack([0 * x, 0 * x]), grid, m=2)
        omega, div = curl_div(u)
        assert omega.sup() == 0.0 and div == 0.0


class TestBiotSavart:
    def test_taylor_green_inversion(self):
        grid = torus2d(64)
        u = biot_savart(taylor_green_omega(grid))
        target = taylor_green_u(grid)
        assert np.max(np.abs(u.data - target.data)) < 1e-12

    def test_zero(self):
        grid = torus2d(16)
        w = sample_field(lambda x, y: 0 * x, grid)
        assert biot_savart(w).sup() == 0.0

    def test_divergence_free(self):
        grid = make_grid(2, [8.0, 8.0], [128, 128])
        w = sample_field(lambda x, y: x * np.exp(-(x**2) - y**2), grid)
        u = biot_savart(w)
        _, div = curl_div(u)
        assert div < 1e-10

    def test_curl_round_trip(self):
        grid = make_grid(2, [8.0, 8.0], [128, 128])
        w = sample_field(
            lambda x, y: (x - 0.5 * y) * np.exp(-(x**2) - y**2), grid
        )
        u = biot_savart(w)
        w2, _ = curl_div(u)
        assert np.max(np.abs(w2.data - w.data)) < 1e-10

    def test_radial_vortex_velocity_is_tangential(self):
        # zero total circulation keeps the periodic images negligible; a
        # plain Gaussian would carry mean vorticity the box cannot hold
        grid = make_grid(2, [8.0, 8.0], [256, 256])
        w = sample_field(
            lambda x, y: (1.0 - x**2 - y**2) * np.exp(-(x**2) - y**2), grid
        )
        u = biot_savart(w)
        xm, ym = grid.mesh()
        # radial component and advection both vanish for a radial vortex
        radial = u.data[0] * xm + u.data[1] * ym
        assert np.max(np.abs(radial)) < 1e-8
        wx = spectral_derivative(w, (1, 0)).data[0]
        wy = spectral_derivative(w, (0, 1)).data[0]
        advect = u.data[0] * wx + u.data[1] * wy
        assert np.max(np.abs(advect)) < 1e-8

    def test_mean_removed_with_warning(self):
        grid = make_grid(2, [8.0, 8.0], [64, 64])
        w = sample_field(lambda x, y: 0.5 + np.exp(-(x**2) - y**2), grid)
        with pytest.warns(UserWarning, match="mean"):
            biot_savart(w)

    def test_3d_curl_inversion(self):
        grid = make_grid(3, [np.pi] * 3, [32] * 3, periodic_native=True)
        u_true = sample_field(
            lambda x, y, z: np.stack(
                [
                    np.sin(y) * np.cos(z),
                    0.3 * np.sin(z),
                    0.7 * np.cos(x) * np.sin(y),
                ]
            ),
            grid,
            m=3,
        )
        # remove the mean to make the inversion well-posed
        data = u_true.data - u_true.data.mean(axis=(1, 2, 3), keepdims=True)
        from splitbound.grid import Field

        u_true = Field(grid, data)
        omega, _ = curl_div(u_true)
        u = biot_savart(omega)
        omega2, div = curl_div(u)
        assert div < 1e-10
        assert np.max(np.abs(omega2.data - omega.data)) < 1e-10


class TestVorticityCoefficients:
    def test_2d_has_no_reaction(self):
        grid = torus2d(32)
        w = taylor_green_omega(grid)
        u = biot_savart(w)
        coeffs = vorticity_coefficients(VorticityState(w, u, Viscosity((0.0, 0.0))))
        assert coeffs.h is None and coeffs.k is None
        g = coeffs.g(*grid.mesh(), 0.0)
        assert np.max(np.abs(g + u.data)) < 1e-14

    def test_3d_jacobian_entry(self):
        grid = make_grid(3, [np.pi] * 3, [16] * 3, periodic_native=True)
        u = sample_field(
            lambda x, y, z: np.stack([0 * x, 0 * x, np.sin(x)]), grid, m=3
        )
        w, _ = curl_div(u)
        coeffs = vorticity_coefficients(VorticityState(w, u, Viscosity((0.0,) * 3)))
        h = coeffs.h(*grid.mesh(), 0.0)
        xm = grid.mesh()[0]
        assert np.max(np.abs(h[2, 0] - np.cos(xm))) < 1e-12
        h_zeroed = h.copy()
        h_zeroed[2, 0] = 0.0
        assert np.max(np.abs(h_zeroed)) < 1e-12

    def test_zero_velocity(self):
        grid = torus2d(16)
        w = sample_field(lambda x, y: 0 * x, grid)
        u = biot_savart(w)
        coeffs = vorticity_coefficients(VorticityState(w, u, Viscosity((0.0, 0.0))))
        assert np.max(np.abs(coeffs.g(*grid.mesh(), 0.0))) == 0.0


class TestEvolveVorticity:
    def test_taylor_green_steady(self):
        grid = torus2d(128)
        w0 = taylor_green_omega(grid)
        traj = evolve_vorticity(
            w0, Viscosity((0.0, 0.0)), make_decomposition(1.0, 256), MON2
        )
        drift = np.abs(traj.trajectory.final.data - w0.data).max()
        assert drift < 0.01 * w0.sup()

    def test_taylor_green_viscous_decay(self):
        grid = torus2d(128)
        w0 = taylor_green_omega(grid)
        nu = 0.1
        traj = evolve_vorticity(
            w0, Viscosity((nu, nu)), make_decomposition(1.0, 256), MON2
        )
        target = np.exp(-2.0 * nu * 1.0) * w0.data
        assert np.max(np.abs(traj.trajectory.final.data - target)) < 0.01 * w0.sup()

    def test_gaussian_vortex_sup_conserved(self):
        grid = make_grid(2, [8.0, 8.0], [128, 128])
        w0 = sample_field(lambda x, y: np.exp(-(x**2) - y**2), grid)
        from splitbound.grid import Field

        w0 = Field(grid, w0.data - w0.data.mean())  # box carries no circulation
        sup0 = w0.sup()
        traj = evolve_vorticity(
            w0, Viscosity((0.0, 0.0)), make_decomposition(1.0, 64), MON2
        )
        assert np.max(np.abs(traj.omega_sup - sup0)) < 0.01 * sup0

    def test_monitor_traces_recorded(self):
        grid = torus2d(64)
        w0 = taylor_green_omega(grid)
        dec = make_decomposition(0.5, 16)
        traj = evolve_vorticity(w0, Viscosity((0.1, 0.1)), dec, MON2)
        assert traj.times.size == 17
        assert traj.energy.shape == (17,)
        assert np.all(np.diff(traj.energy) <= 1e-12)  # viscous decay
        assert traj.bkm_trace[0] == 0.0
        assert traj.bkm_integral > 0
        assert set(traj.u_envelope.du_sup) == {1, 2, 3}


class TestBurgersBlowup:
    def test_gaussian_times(self):
        grid = make_grid(1, [8.0], [4096])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        times, slope = burgers_blowup(u0)
        assert np.isclose(times.T2, np.sqrt(np.e / 2.0), atol=3e-4)
        assert np.isclose(times.T1, -np.sqrt(np.e / 2.0), atol=3e-4)
        assert np.isclose(slope(0.0), np.sqrt(2.0 / np.e), atol=3e-4)
        assert np.isclose(slope(0.5), 1.5019, atol=2e-3)

    def test_zero_rejected(self):
        grid = make_grid(1, [8.0], [64])
        u0 = sample_field(lambda x: np.zeros_like(x), grid)
        with pytest.raises(ValueError):
            burgers_blowup(u0)


class TestBurgersOracle:
    def test_identity_at_zero(self):
        grid = make_grid(1, [8.0], [512])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        assert burgers_oracle(u0, 0.0) is u0

    def test_values_transported(self):
        grid = make_grid(1, [8.0], [4096])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        out = burgers_oracle(u0, 0.5)
        assert np.isclose(out.sup(), 1.0, atol=1e-6)

    def test_slope_against_closed_form(self):
        grid = make_grid(1, [8.0], [4096])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        _, slope = burgers_blowup(u0)
        out = burgers_oracle(u0, 0.5)
        measured = spectral_derivative(out, (1,)).sup()
        assert abs(measured - slope(0.5)) / slope(0.5) < 5e-3
        assert np.isclose(slope(0.5), 1.5019, atol=2e-3)

    def test_outside_window_rejected(self):
        grid = make_grid(1, [8.0], [512])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        times, _ = burgers_blowup(u0)
        with pytest.raises(ValueError):
            burgers_oracle(u0, 1.1 * times.T2)


class TestColeHopf:
    def test_round_trip_at_zero(self):
        grid = make_grid(1, [8.0], [1024])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        out = cole_hopf(u0, 0.5, 0.0)
        assert np.max(np.abs(out.data - u0.data)) < 1e-8

    def test_diffusive_decay(self):
        grid = make_grid(1, [8.0], [1024])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        out = cole_hopf(u0, 5.0, 1.0)
        assert out.sup() < u0.sup()

    def test_against_viscous_splitting(self):
        grid = make_grid(1, [8.0], [512])
        u0 = sample_field(lambda x: np.exp(-(x**2)), grid)
        nu = 0.5
        T = 1.0
        dec = make_decomposition(T, 256)
        traj = solve_delayed(
            u0,
            burgers_builder(),
            Viscosity((nu,)),
            dec.delta,
            dec,
            (MultiIndexPair((0,), (0,)),),
        )
        exact = cole_hopf(u0, nu, T)
        gap = np.max(np.abs(traj.final.data - exact.data))
        assert gap < 0.01 * u0.sup()

    def test_underflow_diagnostic(self):
        grid = make_grid(1, [8.0], [512])
        u0 = sample_field(lambda x: 50.0 * np.exp(-(x**2)), grid)
        with pytest.raises(ColeHopfUnderflowError):
            cole_hopf(u0, 1e-4, 0.1)


class TestMonitors:
    def test_taylor_green_energy(self):
        grid = torus2d(128)
        u = taylor_green_u(grid)
        assert np.isclose(energy(u), 2.0 * np.pi**2, rtol=1e-12)
        assert np.isclose(2.0 * np.pi**2, 19.739, atol=1e-3)

    def test_bkm_constant(self):
        times = np.linspace(0.0, 1.0, 11)
        assert bkm_integral(times, np.full(11, 2.0)) == 2.0

    def test_support_radius_bump(self):
        grid = make_grid(1, [8.0], [1024])

        # sharp edge profile: the 1e-10 relative level set sits within
        # 0.003 of the support boundary
        def bump(x):
            inside = np.abs(x) < 1.0
            out = np.zeros_like(x)
            out[inside] = np.exp(-0.1 / (1.0 - x[inside] ** 2))
            return out

        f = sample_field(bump, grid)
        r = support_radius(f, threshold=1e-10)
        assert abs(r - 1.0) <= grid.spacing[0] + 1e-6

    def test_support_radius_zero_field(self):
        grid = make_grid(1, [8.0], [64])
        f = sample_field(lambda x: np.zeros_like(x), grid)
        assert support_radius(f) == 0.0
