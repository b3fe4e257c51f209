import math

import numpy as np
import pytest

from fuzzy_euler.hydro import PressureLaw
from fuzzy_euler.initial_data import InitialData
from fuzzy_euler.kernels import TriangleKernel
from fuzzy_euler.particles import (
    MicroMacroConfig,
    ParticleEnsemble,
    empirical_density,
    interpolate,
    micro_macro_compare,
    pairwise_force,
    particle_step,
    sample_monokinetic,
    write_trajectory,
)
from fuzzy_euler.spectral import GridSpec, inverse_array


def ensemble(positions, velocities=None, length=10.0):
    x = np.asarray(positions, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    v = np.zeros_like(x) if velocities is None else np.asarray(velocities, dtype=float).reshape(x.shape)
    return ParticleEnsemble(x, v, length)


def no_force(e):
    return np.zeros_like(e.positions)


class TestEnsemble:
    def test_wraps_positions(self):
        e = ensemble([-1.0, 10.5, 3.0])
        np.testing.assert_allclose(e.positions[:, 0], [9.0, 0.5, 3.0])
        assert e.count == 3 and e.dimension == 1 and e.volume == 10.0

    @pytest.mark.parametrize(
        "x, v, L", [([[1.0]], [[0.0]], 1.0), ([[1.0], [2.0]], [[0.0]], 1.0), ([[1.0], [2.0]], [[0.0], [0.0]], 0.0)]
    )
    def test_rejects_bad_input(self, x, v, L):
        with pytest.raises(ValueError):
            ParticleEnsemble(np.array(x), np.array(v), L)


class TestForce:
    def test_disjoint_supports(self):
        f = pairwise_force(ensemble([1.0, 3.0]), TriangleKernel(1.0, 1))
        assert np.all(f == 0)

    def test_one_sided_crowd_pushes_away(self):
        # 6 neighbours on the left, 12 on the right, probe at the origin of a wide box
        eps = 0.5
        left = np.linspace(-eps, 0, 8)[1:-1]
        right = np.linspace(0, eps, 14)[1:-1]
        e = ensemble(np.concatenate([[0.0], left, right]) + 5.0, length=20.0)
        k = TriangleKernel(eps, 1)
        f = pairwise_force(e, k, particle_mass=1.0, method="direct")
        assert f[0, 0] < 0
        assert f[0, 0] == pytest.approx(k.c_d * eps**-2 * (6 - 12))

    def test_symmetric_neighbourhood(self, rng):
        offs = rng.uniform(0.05, 0.9, 7)
        e = ensemble(np.concatenate([[0.0], offs, -offs]) + 5.0)
        assert abs(pairwise_force(e, TriangleKernel(1.0, 1))[0, 0]) < 1e-14

    def test_methods_agree_1d(self, rng):
        e = ensemble(rng.uniform(0, 10, 300))
        k = TriangleKernel(0.7, 1)
        np.testing.assert_allclose(pairwise_force(e, k, method="sorted"), pairwise_force(e, k, method="direct"), atol=1e-13)

    def test_methods_agree_2d(self, rng):
        e = ParticleEnsemble(rng.uniform(0, 10, (400, 2)), np.zeros((400, 2)), 10.0)
        k = TriangleKernel(0.6, 2)
        np.testing.assert_allclose(pairwise_force(e, k, method="cells"), pairwise_force(e, k, method="direct"), atol=1e-13)

    def test_forces_sum_to_zero(self, rng):
        e = ParticleEnsemble(rng.uniform(0, 10, (200, 2)), np.zeros((200, 2)), 10.0)
        f = pairwise_force(e, TriangleKernel(0.8, 2))
        assert np.abs(f.sum(axis=0)).max() < 1e-12

    def test_wide_kernel_refused(self):
        with pytest.raises(ValueError):
            pairwise_force(ensemble([1.0, 2.0]), TriangleKernel(6.0, 1))

    def test_density_weighted_on_uniform_lattice(self):
        # on a lattice K * rho = 1, so the weight N(1) = 1 and the protocols coincide
        n = 200
        x = (np.arange(n) + 0.5) * (10.0 / n)
        x[::7] += 0.01
        e = ensemble(x)
        k = TriangleKernel(0.5, 1)
        g = GridSpec(1, 256, 10.0)
        plain = pairwise_force(e, k, particle_mass=0.05)
        weighted = pairwise_force(
            e, k, "density_weighted", particle_mass=0.05, pressure=PressureLaw("general", 3.0), grid=g, bandwidth=0.2
        )
        np.testing.assert_allclose(weighted, plain, rtol=0.05, atol=1e-12)

    def test_density_weighted_needs_a_grid(self):
        with pytest.raises(ValueError):
            pairwise_force(ensemble([1.0, 2.0]), TriangleKernel(0.5, 1), "density_weighted")


class TestStep:
    def test_rest_is_stationary(self):
        e = ensemble([1.0, 4.0, 7.0])
        out = particle_step(e, 1.0, 0.1, lambda ens: pairwise_force(ens, TriangleKernel(1.0, 1)))
        np.testing.assert_array_equal(out.positions, e.positions)
        np.testing.assert_array_equal(out.velocities, 0.0)

    def test_damped_free_motion(self):
        lam, v0, x0 = 1.3, 0.7, 1.0
        e = ensemble([x0, 6.0], [v0, 0.0])
        t = 0.0
        for _ in range(100):
            e = particle_step(e, lam, 0.02, no_force)
            t += 0.02
        assert e.velocities[0, 0] == pytest.approx(v0 * math.exp(-lam * t), abs=1e-10)
        assert e.positions[0, 0] == pytest.approx(x0 + v0 * (1 - math.exp(-lam * t)) / lam, abs=1e-10)

    def test_reversible_without_friction(self, rng):
        e = ensemble(rng.uniform(0, 10, 50), rng.normal(0, 0.3, 50))
        force = lambda ens: pairwise_force(ens, TriangleKernel(0.8, 1), particle_mass=0.1)
        fwd = particle_step(e, 0.0, 0.01, force)
        back = particle_step(ParticleEnsemble(fwd.positions, -fwd.velocities, 10.0), 0.0, 0.01, force)
        d = back.positions - e.positions
        d -= 10.0 * np.round(d / 10.0)
        assert np.abs(d).max() < 1e-12
        np.testing.assert_allclose(-back.velocities, e.velocities, atol=1e-12)

    def test_momentum_is_conserved(self, rng):
        e = ensemble(rng.uniform(0, 10, 100), rng.normal(0, 0.3, 100))
        force = lambda ens: pairwise_force(ens, TriangleKernel(0.8, 1), particle_mass=0.1)
        p0 = e.momentum()
        for _ in range(50):
            e = particle_step(e, 0.0, 0.01, force)
        assert np.abs(e.momentum() - p0).max() < 1e-12


class TestDensity:
    def test_single_particle_has_unit_mass(self):
        g = GridSpec(1, 128, 10.0)
        rho = empirical_density(ensemble([3.0, 3.0]), g, 0.3, particle_mass=0.5)
        vals = inverse_array(g, rho.coeffs[0])
        assert np.mean(vals) * g.volume == pytest.approx(1.0, abs=1e-12)
        assert abs(g.coordinates()[0][np.argmax(vals)] - 3.0) <= g.spacing

    def test_lattice_is_flat(self):
        g = GridSpec(1, 128, 10.0)
        x = (np.arange(100) + 0.5) * 0.1
        vals = inverse_array(g, empirical_density(ensemble(x), g, 0.2).coeffs[0])
        assert np.abs(vals - 1.0).max() < 1e-10

    def test_mass_matches_count(self, rng):
        g = GridSpec(2, 32, 10.0)
        e = ParticleEnsemble(rng.uniform(0, 10, (500, 2)), np.zeros((500, 2)), 10.0)
        rho = empirical_density(e, g, 0.5, particle_mass=0.01)
        assert rho.coeffs[0, 0, 0].real * g.volume == pytest.approx(5.0, abs=1e-12)

    def test_bandwidth_below_spacing_refused(self):
        with pytest.raises(ValueError):
            empirical_density(ensemble([1.0, 2.0]), GridSpec(1, 16, 10.0), 0.1)

    def test_interpolation_is_exact_for_linear_data(self):
        g = GridSpec(2, 16, 4.0)
        x = g.coordinates()
        vals = 2.0 + 0.0 * x[0]
        pts = np.array([[0.1, 3.9], [1.3, 2.2]])
        np.testing.assert_allclose(interpolate(g, vals, pts), 2.0)
        vals = x[0]
        np.testing.assert_allclose(interpolate(g, vals, np.array([[1.3, 0.4]])), 1.3, atol=1e-14)


class TestSampling:
    def test_histogram_follows_density(self, wide_grid):
        s = InitialData("gaussian", amplitude=0.5, width=3.0, velocity_amplitude=0.1).build(wide_grid)
        e = sample_monokinetic(s, 200000, np.random.default_rng(1))
        hist, edges = np.histogram(e.positions[:, 0], bins=16, range=(0, wide_grid.length))
        centers = 0.5 * (edges[1:] + edges[:-1])
        expected = np.interp(centers, wide_grid.coordinates()[0], s.density())
        expected *= hist.sum() / expected.sum()
        assert np.abs(hist - expected).max() / expected.max() < 0.03

    def test_velocities_follow_the_field(self, wide_grid):
        s = InitialData("gaussian", amplitude=0.2, width=3.0, velocity_amplitude=0.1).build(wide_grid)
        e = sample_monokinetic(s, 500, np.random.default_rng(2))
        ref = interpolate(wide_grid, s.velocity()[0], e.positions)
        np.testing.assert_allclose(e.velocities[:, 0], ref)

    def test_two_dimensional_rejection(self, grid2d):
        s = InitialData("gaussian", amplitude=0.3, width=1.0).build(grid2d)
        e = sample_monokinetic(s, 1000, np.random.default_rng(3))
        assert e.positions.shape == (1000, 2)


class TestMicroMacro:
    def test_uniform_state_has_no_smoothing_floor(self):
        g = GridSpec(1, 128, 8 * math.pi)
        cfg = MicroMacroConfig(g, InitialData("uniform"), t_final=0.1, dt=0.05, bandwidth=0.3, counts=(100, 1000, 10000))
        res = micro_macro_compare(cfg)
        assert res.floor < 1e-12
        assert res.errors[-1] < res.errors[0]

    def test_large_bandwidth_is_flagged(self):
        g = GridSpec(1, 128, 8 * math.pi)
        data = InitialData("gaussian", amplitude=0.3, width=1.0)
        cfg = MicroMacroConfig(g, data, t_final=0.1, dt=0.05, bandwidth=2.0, counts=(2000, 4000, 8000))
        assert micro_macro_compare(cfg).smoothing_dominated

    def test_two_dimensional_refused(self, grid2d):
        with pytest.raises(ValueError):
            micro_macro_compare(MicroMacroConfig(grid2d, InitialData()))


def test_trajectory_csv(tmp_path):
    e = ensemble([1.0, 2.0, 3.0], [0.1, 0.2, 0.3])
    p = tmp_path / "trajectory.csv"
    write_trajectory(p, [e, e], [0.0, 0.5], sample=2)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,k,x0,v0"
    assert len(lines) == 5
