import numpy as np
import pytest

from corpus import corpus
from oracles import coherent_state, discrete_harmonic_ground_state, free_gaussian

from mvlab.errors import DomainError, StabilityError
from mvlab.evolution import classical_ensemble_evolve, evolve_schrodinger
from mvlab.fields import (
    GridWavefunction,
    PhysicalParams,
    SpatialGrid,
    free_potential,
    harmonic_potential,
    make_gaussian_packet,
    make_plane_wave,
    norm_squared,
)

PARAMS = PhysicalParams()


class TestSplitStep:
    def test_free_gaussian_matches_analytic_density(self):
        g = SpatialGrid(-20.0, 20.0, 2048)
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 0.0, PARAMS)
        n = 10000
        rec = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-4, n, snapshot_stride=n)
        exact = free_gaussian(g.points, rec.times[-1], 0.0, 1.0, 0.0)
        err = np.max(np.abs(np.abs(rec.snapshots[-1].amplitudes) ** 2 - np.abs(exact) ** 2))
        assert err < 1e-6

    def test_zero_steps_returns_initial_state(self):
        g = SpatialGrid(-20.0, 20.0, 256)
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 0.0, PARAMS)
        rec = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 0)
        assert len(rec.snapshots) == 1
        assert rec.snapshots[0] is wf0
        assert rec.times[0] == 0.0

    def test_plane_wave_is_an_eigenstate(self):
        g = SpatialGrid(-16.0, 16.0, 512)
        k = 2.0 * np.pi * 10 / g.length
        wf0 = make_plane_wave(g, k, 1.0)
        rec = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 500, snapshot_stride=500)
        final = rec.snapshots[-1].amplitudes
        assert np.max(np.abs(np.abs(final) - 1.0)) < 1e-10
        # global phase advance -hbar k^2 t / (2m)
        t = rec.times[-1]
        expected = wf0.amplitudes * np.exp(-1j * PARAMS.hbar * k**2 * t / (2.0 * PARAMS.mass))
        assert np.max(np.abs(final - expected)) < 1e-10

    def test_norm_preserved_per_step(self):
        g = SpatialGrid(-16.0, 16.0, 256)
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 1.0, PARAMS)
        rec = evolve_schrodinger(wf0, harmonic_potential(g, 1.0, PARAMS), PARAMS, 1e-3, 50,
                                 snapshot_stride=1)
        norms = [norm_squared(wf) for wf in rec.snapshots]
        assert np.max(np.abs(np.diff(norms))) < 1e-10

    def test_second_order_in_dt(self):
        # halving dt cuts the error by ~4; the guard is >= 3.5
        g = SpatialGrid(-16.0, 16.0, 512)
        V = harmonic_potential(g, 1.0, PARAMS)
        wf0 = GridWavefunction(g, coherent_state(g.points, 0.0, 1.0, 1.0))
        errs = {}
        for dt in (2e-3, 1e-3):
            n = int(round(1.0 / dt))
            rec = evolve_schrodinger(wf0, V, PARAMS, dt, n, snapshot_stride=n)
            exact = coherent_state(g.points, rec.times[-1], 1.0, 1.0)
            errs[dt] = np.max(np.abs(rec.snapshots[-1].amplitudes - exact))
        assert errs[2e-3] / errs[1e-3] >= 3.5

    def test_determinism(self):
        g = SpatialGrid(-16.0, 16.0, 256)
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 2.0, PARAMS)
        a = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 100, snapshot_stride=10)
        b = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 100, snapshot_stride=10)
        assert all(
            np.array_equal(x.amplitudes, y.amplitudes)
            for x, y in zip(a.snapshots, b.snapshots)
        )


class TestCrankNicolson:
    def test_discrete_ground_state_is_stationary(self):
        g = SpatialGrid(-12.0, 12.0, 512, "dirichlet")
        V = harmonic_potential(g, 1.0, PARAMS)
        wf0, _ = discrete_harmonic_ground_state(g, 1.0)
        rec = evolve_schrodinger(wf0, V, PARAMS, 1e-3, 400, snapshot_stride=400)
        final = np.abs(rec.snapshots[-1].amplitudes)
        assert np.max(np.abs(final - np.abs(wf0.amplitudes))) < 1e-10

    def test_norm_conserved(self):
        g = SpatialGrid(-16.0, 16.0, 512, "dirichlet")
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 1.0, PARAMS)
        rec = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 1000, snapshot_stride=100)
        drift = abs(norm_squared(rec.snapshots[-1]) - norm_squared(rec.snapshots[0]))
        assert drift < 1e-10

    def test_second_order_in_dt_self_convergence(self):
        g = SpatialGrid(-16.0, 16.0, 512, "dirichlet")
        V = harmonic_potential(g, 1.0, PARAMS)
        wf0 = GridWavefunction(g, coherent_state(g.points, 0.0, 1.0, 1.0))
        ref = evolve_schrodinger(wf0, V, PARAMS, 1.25e-4, 8000, snapshot_stride=8000)
        ref_final = ref.snapshots[-1].amplitudes
        errs = {}
        for dt in (2e-3, 1e-3):
            n = int(round(1.0 / dt))
            rec = evolve_schrodinger(wf0, V, PARAMS, dt, n, snapshot_stride=n)
            errs[dt] = np.max(np.abs(rec.snapshots[-1].amplitudes - ref_final))
        assert errs[2e-3] / errs[1e-3] >= 3.5

    def test_matches_analytic_coherent_state(self):
        g = SpatialGrid(-16.0, 16.0, 1024, "dirichlet")
        V = harmonic_potential(g, 1.0, PARAMS)
        wf0 = GridWavefunction(g, coherent_state(g.points, 0.0, 1.0, 1.0))
        rec = evolve_schrodinger(wf0, V, PARAMS, 5e-4, 2000, snapshot_stride=2000)
        exact = coherent_state(g.points, rec.times[-1], 1.0, 1.0)
        assert np.max(np.abs(rec.snapshots[-1].amplitudes - exact)) < 2e-3


class TestGuards:
    def test_grid_mismatch(self):
        g1 = SpatialGrid(-16.0, 16.0, 256)
        g2 = SpatialGrid(-16.0, 16.0, 512)
        wf0 = make_gaussian_packet(g1, 0.0, 1.0, 0.0, PARAMS)
        with pytest.raises(DomainError):
            evolve_schrodinger(wf0, free_potential(g2), PARAMS, 1e-3, 10)

    def test_stability_guard(self):
        g = SpatialGrid(-20.0, 20.0, 256)
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 0.0, PARAMS)
        V = harmonic_potential(g, 1.0, PARAMS)  # max V = 200
        with pytest.raises(StabilityError):
            evolve_schrodinger(wf0, V, PARAMS, 1e-2, 10)

    def test_stride_must_divide_steps(self):
        g = SpatialGrid(-16.0, 16.0, 256)
        wf0 = make_gaussian_packet(g, 0.0, 1.0, 0.0, PARAMS)
        with pytest.raises(DomainError):
            evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 100, snapshot_stride=7)

    def test_default_stride_caps_snapshots(self):
        g = SpatialGrid(-16.0, 16.0, 64)
        wf0 = make_gaussian_packet(g, 0.0, 3.0, 0.0, PARAMS)
        rec = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-3, 2000)
        assert len(rec.snapshots) <= 513


class TestUnitarityInvariant:
    @pytest.mark.parametrize("name", list(corpus()))
    def test_norm_drift_below_tolerance(self, name):
        wf0 = corpus()[name]
        g = wf0.grid
        rec = evolve_schrodinger(wf0, free_potential(g), PARAMS, 1e-4, 1000, snapshot_stride=250)
        drift = max(
            abs(norm_squared(wf) - norm_squared(rec.snapshots[0])) for wf in rec.snapshots
        )
        assert drift < 1e-8


class TestClassicalEnsemble:
    def test_converging_ensemble_reaches_focus(self):
        g = SpatialGrid(-10.0, 10.0, 256)
        pos = np.linspace(-4.0, 4.0, 16)
        rec = classical_ensemble_evolve(pos, -pos / 1.0, free_potential(g), PARAMS, 1e-3, 1000)
        # at t = 1 every linear trajectory sits at the focus
        assert np.max(np.abs(rec.ensemble.positions[:, -1])) < 1e-10

    def test_zero_velocity_stays_put(self):
        g = SpatialGrid(-10.0, 10.0, 256)
        pos = np.linspace(-4.0, 4.0, 8)
        rec = classical_ensemble_evolve(pos, np.zeros(8), free_potential(g), PARAMS, 1e-2, 100)
        assert np.array_equal(rec.ensemble.positions[:, -1], pos)

    def test_harmonic_oscillator_period(self):
        g = SpatialGrid(-8.0, 8.0, 2048, "dirichlet")
        V = harmonic_potential(g, 1.0, PARAMS)
        n = int(round(2.0 * np.pi / 1e-3))
        rec = classical_ensemble_evolve([2.0], [0.0], V, PARAMS, 1e-3, n)
        t_final = rec.ensemble.times[-1]
        assert abs(rec.ensemble.positions[0, -1] - 2.0 * np.cos(t_final)) < 1e-8

    def test_escape_flagged_not_fatal(self):
        g = SpatialGrid(-2.0, 2.0, 64, "dirichlet")
        rec = classical_ensemble_evolve([0.0, 1.0], [0.0, 10.0], free_potential(g), PARAMS,
                                        1e-2, 50)
        ens = rec.ensemble
        assert np.isnan(ens.frozen_at).all()
        assert np.isnan(ens.escaped_at[0])
        assert np.isfinite(ens.escaped_at[1])
        # escaped trajectory holds at the wall it crossed
        assert ens.positions[1, -1] == 2.0
        assert np.all(np.isfinite(ens.positions))

    def test_velocities_recorded(self):
        g = SpatialGrid(-10.0, 10.0, 256)
        rec = classical_ensemble_evolve([1.0], [0.5], free_potential(g), PARAMS, 1e-2, 10)
        assert rec.velocities.shape == rec.ensemble.positions.shape
        assert np.allclose(rec.velocities, 0.5)
