import math

import numpy as np
import pytest

from fuzzy_euler.errors import IntegrityError, PositivityError, StepSizeError
from fuzzy_euler.hydro import (
    PressureLaw,
    SimState,
    SolverConfig,
    admissible_dt,
    damped_mode,
    energy,
    linear_rhs,
    prepare,
    porous_dt,
    rescale_diffusive,
    rescale_hyperbolic,
    rhs_fuzzy_euler,
    rhs_porous,
    run,
    run_porous,
    step,
)
from fuzzy_euler.initial_data import InitialData
from fuzzy_euler.kernels import KernelFamily
from fuzzy_euler.spectral import GridSpec, SpectralField, l2_norm, transform_forward, zeros


def state(grid, a, u):
    return SimState(transform_forward(grid, a), transform_forward(grid, u))


def zero_state(grid):
    return SimState(zeros(grid), zeros(grid, grid.dimension))


def smooth_state(grid, amp=0.05):
    x = grid.coordinates()[0]
    return state(grid, amp * np.cos(x), amp * np.sin(2 * x)[None])


def max_diff(s1, s2):
    return max(np.abs(s1.a.coeffs - s2.a.coeffs).max(), np.abs(s1.u.coeffs - s2.u.coeffs).max())


class TestRightHandSide:
    def test_constant_state_is_steady(self, grid2d, bessel):
        da, du = rhs_fuzzy_euler(zero_state(grid2d), SolverConfig(kernel=KernelFamily.default(2)))
        assert np.abs(da.coeffs).max() == 0 and np.abs(du.coeffs).max() == 0

    def test_shear_flow_only_feels_friction(self, grid2d):
        # u = (sin y, 0) is divergence free and u . grad u = 0
        y = grid2d.coordinates()[1]
        u = np.stack([0.1 * np.sin(y), np.zeros(grid2d.shape)])
        s = state(grid2d, np.zeros(grid2d.shape), u)
        da, du = rhs_fuzzy_euler(s, SolverConfig(friction=0.7, kernel=KernelFamily.default(2)))
        assert np.abs(da.coeffs).max() < 1e-15
        np.testing.assert_allclose(du.coeffs, -0.7 * s.u.coeffs, atol=1e-15)

    def test_close_to_linearisation(self, grid1d, bessel):
        cfg = SolverConfig(kernel=bessel)
        x = grid1d.coordinates()[0]
        for amp in (1e-3, 1e-4):
            s = state(grid1d, amp * np.cos(x), amp * np.sin(x)[None])
            da, du = rhs_fuzzy_euler(s, cfg)
            la, lu = linear_rhs(s, cfg)
            diff = math.hypot(l2_norm(da - la), l2_norm(du - lu))
            assert diff < 10 * amp**2

    def test_general_law_with_gamma_two_is_plain(self, grid1d, bessel):
        s = smooth_state(grid1d, 0.2)
        p = rhs_fuzzy_euler(s, SolverConfig(kernel=bessel))
        g = rhs_fuzzy_euler(s, SolverConfig(kernel=bessel, pressure=PressureLaw("general", 2.0)))
        assert np.abs(p[1].coeffs - g[1].coeffs).max() < 1e-15

    def test_general_law_normalisation(self):
        law = PressureLaw("general", 3.0)
        h = 1e-6
        assert law.n_function(np.array(1.0)) == 1.0
        assert (law.n_function(np.array(1 + h)) - law.n_function(np.array(1 - h))) / (2 * h) == pytest.approx(1.0)

    def test_non_finite_state(self, grid1d):
        s = zero_state(grid1d)
        s.a.coeffs[0, 1] = np.nan
        with pytest.raises(IntegrityError):
            rhs_fuzzy_euler(s, SolverConfig())

    def test_vacuum_is_refused(self, grid1d):
        x = grid1d.coordinates()[0]
        s = state(grid1d, 1.5 * np.cos(x), np.zeros((1,) + grid1d.shape))
        with pytest.raises(PositivityError):
            rhs_fuzzy_euler(s, SolverConfig())


class TestPorous:
    def test_constant_density_is_steady(self, grid1d, bessel):
        r = transform_forward(grid1d, np.full(grid1d.shape, 1.3))
        assert np.abs(rhs_porous(r, bessel).coeffs).max() < 1e-15

    def test_classical_linear_rate(self, grid1d):
        x = grid1d.coordinates()[0]
        for k in (1, 3):
            for delta in (1e-2, 1e-3):
                r = transform_forward(grid1d, 1 + delta * np.cos(k * x))
                out = rhs_porous(r, None, regularized=False).coeffs[0]
                # the quadratic remainder only feeds mode 2k
                assert out[k].real / (0.5 * delta) == pytest.approx(-(k**2), rel=1e-12)
                rest = np.delete(out, k)
                assert np.abs(rest).max() <= delta**2 * (2 * k) ** 2

    def test_identity_kernel_matches_classical(self, grid1d, rng):
        r = transform_forward(grid1d, 1 + 0.1 * rng.standard_normal(grid1d.shape))
        diff = rhs_porous(r, KernelFamily(kind="identity"), True).coeffs - rhs_porous(r, None, False).coeffs
        assert np.abs(diff).max() < 1e-13

    def test_negative_density_refused(self, grid1d):
        x = grid1d.coordinates()[0]
        with pytest.raises(PositivityError):
            rhs_porous(transform_forward(grid1d, np.cos(x)), None)

    def test_run_conserves_mass(self, grid1d, bessel):
        x = grid1d.coordinates()[0]
        r0 = transform_forward(grid1d, 1 + 0.3 * np.cos(x))
        ts, snaps = run_porous(r0, bessel, 1.0, snapshot_times=[0.5, 1.0])
        assert list(ts) == [0.0, 0.5, 1.0]
        assert abs(snaps[-1].coeffs[0, 0] - 1.0) < 1e-13
        # the first mode decays
        assert abs(snaps[-1].coeffs[0, 1]) < abs(snaps[0].coeffs[0, 1])

    def test_step_bound_shrinks_with_resolution(self, bessel):
        dts = []
        for n in (64, 128):
            g = GridSpec(1, n, 2 * math.pi)
            dts.append(porous_dt(transform_forward(g, np.ones(g.shape)), None))
        assert dts[1] == pytest.approx(dts[0] / 4, rel=0.1)


class TestStep:
    def test_zero_state_stays_zero(self, grid1d, bessel):
        s = step(zero_state(grid1d), SolverConfig(kernel=bessel, dt=0.1))
        assert np.abs(s.a.coeffs).max() == 0 and np.abs(s.u.coeffs).max() == 0
        assert s.t == pytest.approx(0.1)

    @pytest.mark.parametrize("integrator", ["etdrk4", "ifrk4"])
    def test_uniform_velocity_decays_exactly(self, grid2d, integrator):
        u = np.stack([np.full(grid2d.shape, 0.3), np.full(grid2d.shape, -0.2)])
        s = state(grid2d, np.zeros(grid2d.shape), u)
        cfg = SolverConfig(friction=1.7, dt=0.05, integrator=integrator)
        out = step(s, cfg)
        np.testing.assert_allclose(out.u.coeffs, math.exp(-1.7 * 0.05) * s.u.coeffs, rtol=1e-14, atol=1e-16)

    @pytest.mark.parametrize("integrator", ["etdrk4", "ifrk4"])
    def test_convergence_order(self, grid1d, bessel, integrator):
        s0 = smooth_state(grid1d, 0.1)
        T = 1.0
        finals = {}
        for n in (10, 20, 40, 320):
            cfg = SolverConfig(kernel=bessel, dt=T / n, t_end=T, integrator=integrator, snapshot_stride=n)
            finals[n] = run(s0, cfg, diagnostics=False).states[-1]
        e1, e2, e3 = (max_diff(finals[n], finals[320]) for n in (10, 20, 40))
        assert e1 / e2 >= 8 and e2 / e3 >= 8

    def test_integrators_agree(self, grid1d, bessel):
        s0 = smooth_state(grid1d)
        a = run(s0, SolverConfig(kernel=bessel, dt=0.01, t_end=0.5), diagnostics=False).states[-1]
        b = run(s0, SolverConfig(kernel=bessel, dt=0.01, t_end=0.5, integrator="ifrk4"), diagnostics=False).states[-1]
        assert max_diff(a, b) < 1e-8

    def test_step_size_error_names_the_bound(self, grid1d):
        s = smooth_state(grid1d)
        cfg = SolverConfig(dt=10.0)
        with pytest.raises(StepSizeError) as info:
            step(s, cfg)
        assert info.value.admissible_dt == pytest.approx(admissible_dt(s, cfg))
        assert info.value.admissible_dt < 10.0


class TestRun:
    def test_steady_state_diagnostics_are_constant(self, grid1d, bessel):
        ts = run(zero_state(grid1d), SolverConfig(kernel=bessel, dt=0.05, t_end=0.5, snapshot_stride=2))
        assert ts.ok and len(ts.rows) == 6
        assert all(r.mass == pytest.approx(grid1d.volume) and r.X_sigma == 0 for r in ts.rows)

    def test_mass_is_conserved(self, grid2d):
        s0 = InitialData("random", amplitude=0.05, kmax=4, velocity_amplitude=0.05, seed=3).build(grid2d)
        ts = run(s0, SolverConfig(kernel=KernelFamily.default(2, 0.2), dt=0.01, t_end=0.5))
        means = np.array([s.a.coeffs[0, 0, 0] for s in ts.states])
        assert np.abs(means - means[0]).max() < 1e-12

    def test_snapshot_schedule(self, grid1d, bessel):
        ts = run(smooth_state(grid1d), SolverConfig(kernel=bessel, dt=0.03, t_end=1.0, snapshot_stride=5))
        # dt is shrunk to 1/34 so that the run ends on t_end
        assert ts.times[-1] == pytest.approx(1.0)
        assert len(ts.states) == math.ceil(34 / 5) + 1

    def test_large_data_ends_with_a_status(self, grid1d):
        x = grid1d.coordinates()[0]
        s0 = state(grid1d, 0.9 * np.cos(x), -2.0 * np.sin(x)[None])
        ts = run(s0, SolverConfig(friction=0.0, dt=1e-3, t_end=5.0, adaptive=True), diagnostics=False)
        assert not ts.ok
        assert ts.status in ("PositivityError", "IntegrityError")
        assert ts.message and len(ts.states) >= 1

    def test_mean_velocity_follows_its_ode(self, grid1d, bessel):
        x = grid1d.coordinates()[0]
        s0 = state(grid1d, 0.05 * np.cos(x), (0.2 + 0.05 * np.sin(x))[None])
        cfg = SolverConfig(kernel=bessel, friction=0.8, dt=1e-3, t_end=0.2, snapshot_stride=1)
        ts = run(s0, cfg, diagnostics=False)
        ubar = np.array([s.u.coeffs[0, 0].real for s in ts.states])
        forcing = []
        for s in ts.states:
            da, du = rhs_fuzzy_euler(s, cfg)
            forcing.append(du.coeffs[0, 0].real)
        # the rhs of the mean mode is -lam * ubar - mean(u . grad u); pressure has no mean
        adv = np.array([np.mean(s.velocity()[0] * np.gradient(s.velocity()[0], grid1d.spacing)) for s in ts.states])
        np.testing.assert_allclose(forcing, -0.8 * ubar - adv, atol=1e-4)
        # and the trajectory integrates it
        drift = np.trapezoid(forcing, ts.times)
        assert ubar[-1] - ubar[0] == pytest.approx(drift, abs=1e-8)


class TestDampedMode:
    def test_no_density(self, grid1d, bessel):
        s = state(grid1d, np.zeros(grid1d.shape), np.sin(grid1d.coordinates()[0])[None])
        np.testing.assert_array_equal(damped_mode(s, SolverConfig(kernel=bessel)).coeffs, s.u.coeffs)

    def test_darcy_ansatz_cancels(self, grid2d):
        k = KernelFamily.default(2, 0.3)
        lam = 2.5
        a = transform_forward(grid2d, 0.1 * np.cos(grid2d.coordinates()[0] + 2 * grid2d.coordinates()[1]))
        from fuzzy_euler.hydro import kernel_symbol

        u = -1j * grid2d.xi_deriv * (kernel_symbol(grid2d, k) * a.coeffs[0]) / lam
        s = SimState(a, SpectralField(grid2d, u))
        assert np.abs(damped_mode(s, SolverConfig(kernel=k, friction=lam)).coeffs).max() < 1e-16


class TestRescaling:
    def test_factor_one_is_identity(self, grid1d):
        s = prepare(smooth_state(grid1d))
        r = rescale_hyperbolic(s, 1)
        assert r.grid == grid1d and max_diff(r, s) == 0

    def test_round_trip(self, grid2d, rng):
        s = SimState(
            transform_forward(grid2d, rng.standard_normal(grid2d.shape)),
            transform_forward(grid2d, rng.standard_normal((2,) + grid2d.shape)),
            0.3,
        )
        # solver states are dealiased; the Nyquist row has no partner on the finer grid
        s = prepare(s)
        back = rescale_hyperbolic(rescale_hyperbolic(s, 2), 2, inverse=True)
        assert back.grid == grid2d and back.t == pytest.approx(0.3)
        assert max_diff(back, s) < 1e-13

    def test_non_power_of_two_refused(self, grid1d):
        with pytest.raises(ValueError):
            rescale_hyperbolic(smooth_state(grid1d), 3)

    def test_reduction_to_unit_friction(self, grid1d):
        eps, lam, T = 0.2, 2.0, 0.5
        s0 = smooth_state(grid1d, 0.05)
        ref = run(s0, SolverConfig(kernel=KernelFamily(epsilon=eps), friction=lam, dt=1e-3, t_end=T), diagnostics=False)
        s1 = rescale_hyperbolic(s0, 2)
        out = run(
            s1, SolverConfig(kernel=KernelFamily(epsilon=lam * eps), friction=1.0, dt=2e-3, t_end=lam * T), diagnostics=False
        )
        mapped = rescale_hyperbolic(ref.states[-1], 2)
        assert max_diff(mapped, out.states[-1]) < 1e-6

    def test_diffusive_relabeling(self, grid1d):
        s = smooth_state(grid1d)
        s.t = 3.0
        r = rescale_diffusive(s, 4.0)
        assert r.t == pytest.approx(0.75)
        np.testing.assert_allclose(r.u.coeffs, 4 * s.u.coeffs)
        with pytest.raises(ValueError):
            rescale_diffusive(s, 0.0)


class TestEnergy:
    def test_zero_state(self, grid1d, bessel):
        assert energy(zero_state(grid1d), SolverConfig(kernel=bessel)) == (0.0, 0.0, 0.0)

    def test_dissipation_identity_is_second_order(self, wide_grid):
        k = KernelFamily.default(1, 0.5)
        s0 = InitialData("gaussian", amplitude=0.1, width=2.0, velocity_amplitude=0.1).build(wide_grid)
        res = []
        for dt in (0.02, 0.01):
            cfg = SolverConfig(kernel=k, dt=dt, t_end=1.0, snapshot_stride=1)
            ts = run(s0, cfg, diagnostics=False)
            E = np.array([sum(energy(s, cfg)[:2]) for s in ts.states])
            D = np.array([energy(s, cfg)[2] for s in ts.states])
            res.append(np.abs(np.diff(E) / dt + 0.5 * (D[1:] + D[:-1])).max())
        assert res[0] / res[1] > 3.5

    def test_conservative_limit(self, wide_grid):
        k = KernelFamily.default(1, 0.5)
        s0 = InitialData("gaussian", amplitude=0.1, width=2.0, velocity_amplitude=0.1).build(wide_grid)
        cfg = SolverConfig(kernel=k, friction=0.0, dt=0.01, t_end=1.0)
        ts = run(s0, cfg, diagnostics=False)
        E = [sum(energy(s, cfg)[:2]) for s in ts.states]
        assert abs(E[-1] - E[0]) < 1e-6 * E[0]

    def test_energy_decreases_with_friction(self, wide_grid):
        k = KernelFamily.default(1, 0.5)
        s0 = InitialData("gaussian", amplitude=0.1, width=2.0, velocity_amplitude=0.1).build(wide_grid)
        cfg = SolverConfig(kernel=k, dt=0.01, t_end=2.0, snapshot_stride=5)
        ts = run(s0, cfg, diagnostics=False)
        E = np.array([sum(energy(s, cfg)[:2]) for s in ts.states])
        assert np.all(np.diff(E) <= 1e-10 * E[0])
