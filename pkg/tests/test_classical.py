import numpy as np
import pytest

from obsfield import classical
from obsfield.classical import (
    ClassicalState,
    GridGenerator,
    QuadraticGenerator,
    ensemble_action,
    evolve_kg,
    hamiltonian,
    hj_residual,
    lagrangian_density,
    stability_bound,
)
from obsfield.lattice import LatticeError, LatticeSpec, PotentialSpec, mode_frequencies

FREE = PotentialSpec(1.0)


def state(phi, pi, dx=1.0):
    return ClassicalState(phi, pi, LatticeSpec(len(phi), dx, n_phi=8))


@pytest.mark.parametrize("phi, pi, expected", [([0.0], [0.0], 0.0), ([0.0], [2.0], 2.0), ([2.0], [0.0], -2.0)])
def test_lagrangian_examples(phi, pi, expected):
    assert lagrangian_density(state(phi, pi), FREE) == pytest.approx(expected)


def test_hamiltonian_examples():
    assert hamiltonian(state([0.0], [0.0]), FREE) == 0.0
    assert hamiltonian(state([1.0], [1.0]), FREE) == pytest.approx(1.0)
    assert hamiltonian(state([0.0, 1.0], [0.0, 0.0]), PotentialSpec(0.0)) == pytest.approx(1.0)


def test_state_size_mismatch():
    with pytest.raises(LatticeError):
        ClassicalState([1.0, 2.0], [0.0], LatticeSpec(2, 1.0, n_phi=8))


def test_zero_data_stays_zero():
    traj = evolve_kg(state([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]), FREE, 1e-2, 50)
    assert len(traj) == 51 and not np.any(traj.phi) and not np.any(traj.pi)


def test_single_site_oscillator_matches_cosine():
    traj = evolve_kg(state([1.0], [0.0]), FREE, 1e-3, 10_000)
    assert np.max(np.abs(traj.phi[:, 0] - np.cos(traj.times))) < 1e-4
    assert traj.times[-1] == pytest.approx(10.0)


def test_antisymmetric_mode_frequency():
    traj = evolve_kg(state([1.0, -1.0], [0.0, 0.0]), FREE, 1e-3, 5000)
    w = np.sqrt(5.0)
    assert np.max(np.abs(traj.phi[:, 0] - np.cos(w * traj.times))) < 1e-4
    assert np.allclose(traj.phi[:, 0], -traj.phi[:, 1], atol=1e-13)


def test_normal_modes_n4():
    spec = LatticeSpec(4, 0.5, n_phi=4)
    k = 1
    x = np.arange(4)
    phi0 = np.cos(2 * np.pi * k * x / 4)
    traj = evolve_kg(ClassicalState(phi0, np.zeros(4), spec), FREE, 1e-3, 3000)
    w = mode_frequencies(spec, 1.0)[k]
    expected = np.cos(w * traj.times)[:, None] * phi0
    assert np.max(np.abs(traj.phi - expected)) < 1e-4


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_energy_conservation(n):
    rng = np.random.default_rng(n)
    spec = LatticeSpec(n, 1.0, n_phi=4)
    s0 = ClassicalState(rng.normal(size=n), rng.normal(size=n), spec)
    energies = evolve_kg(s0, FREE, 1e-3, 10_000).energies(FREE)
    assert np.max(np.abs(energies - energies[0])) / energies[0] < 1e-6


def test_anharmonic_energy_conservation():
    pot = PotentialSpec(1.0, 0.1, 0.2)
    s0 = state([0.5, -0.2, 0.1], [0.0, 0.3, -0.1])
    energies = evolve_kg(s0, pot, 1e-3, 5000).energies(pot)
    assert np.max(np.abs(energies - energies[0])) / energies[0] < 1e-6


def test_time_reversal():
    s0 = state([0.3, -0.7, 1.1], [0.2, 0.0, -0.4])
    fwd = evolve_kg(s0, PotentialSpec(1.0, 0.0, 0.1), 1e-3, 2000).final
    back = evolve_kg(ClassicalState(fwd.phi, -fwd.pi.values, s0.spec), PotentialSpec(1.0, 0.0, 0.1), 1e-3, 2000).final
    assert np.max(np.abs(back.phi.values - s0.phi.values)) < 1e-10
    assert np.max(np.abs(back.pi.values + s0.pi.values)) < 1e-10


def test_unstable_step_rejected():
    spec = LatticeSpec(3, 0.5, n_phi=4)
    bound = stability_bound(spec, FREE)
    assert bound < 0.5
    with pytest.raises(ValueError, match="stability"):
        evolve_kg(ClassicalState(np.zeros(3), np.zeros(3), spec), FREE, bound, 1)
    with pytest.raises(ValueError):
        evolve_kg(ClassicalState(np.zeros(3), np.zeros(3), spec), FREE, -1e-3, 1)


def test_trajectory_indexing():
    traj = evolve_kg(state([1.0], [0.0]), FREE, 0.1, 10)
    assert traj[-1].t == pytest.approx(1.0)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.final.phi.values[0] == traj.phi[-1, 0]


def test_hj_residual_examples():
    spec = LatticeSpec(1, 1.0, n_phi=8)
    assert hj_residual(QuadraticGenerator.free(), [1.0], PotentialSpec(0.0), 2.0, spec) == pytest.approx(0.0, abs=1e-12)
    zero = QuadraticGenerator(lambda t: 0.0, lambda t: 0.0)
    assert hj_residual(zero, [1.0], FREE, 0.3, spec) == pytest.approx(0.5)
    assert hj_residual(QuadraticGenerator.harmonic(1.0), [0.0], FREE, 0.4, spec) == 0.0


def test_riccati_family_vanishes_on_uniform_configs():
    # the quadratic family carries no gradient coupling, so it is exact for uniform fields
    spec = LatticeSpec(3, 0.5, n_phi=4)
    gen = QuadraticGenerator.free(t0=-1.0)
    rng = np.random.default_rng(1)
    configs = rng.normal(size=(50, 1)) * np.ones(3)
    for t in (0.1, 0.5, 3.0):
        res = hj_residual(gen, configs, PotentialSpec(0.0), t, spec)
        assert np.max(np.abs(res)) < 1e-12


def test_harmonic_generator_solves_single_site():
    spec = LatticeSpec(1, 1.0, n_phi=8)
    gen = QuadraticGenerator.harmonic(2.0)
    phi = np.linspace(-2, 2, 9)[:, None]
    res = hj_residual(gen, phi, PotentialSpec(4.0), 0.3, spec)
    assert np.max(np.abs(res)) < 1e-12


class _Pair:
    def __init__(self, rho, s, spec):
        self.rho, self.s, self.spec = rho, s, spec


def test_continuity_residual_stationary_zero():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    phi = spec.phi_axis()
    rho = np.exp(-phi**2)
    assert np.max(np.abs(classical.continuity_residual(_Pair(rho, np.full(128, -0.5), spec), 0.0))) == 0.0


def test_continuity_residual_detects_random_phase():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    phi = spec.phi_axis()
    rho = np.exp(-phi**2)
    s = np.random.default_rng(0).normal(size=128)
    assert np.max(np.abs(classical.continuity_residual(_Pair(rho, s, spec), 0.0))) > 1e-3
    with pytest.raises(ValueError):
        classical.continuity_residual(_Pair(-rho, s, spec), 0.0)


def test_continuity_residual_moving_gaussian():
    # rho(phi, t) = g(phi - v t) with S = v phi (dx = 1) solves the continuity equation
    v = 0.7
    errs = []
    for m in (128, 256):
        spec = LatticeSpec(1, 1.0, 8.0, m)
        phi = spec.phi_axis()
        rho = np.exp(-phi**2)
        rho_dot = v * 2 * phi * rho
        errs.append(np.max(np.abs(classical.continuity_residual(_Pair(rho, v * phi, spec), rho_dot))))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_continuity_residual_spectral_periodic_phase():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    phi = spec.phi_axis()
    k = np.pi / 8
    rho = np.exp(-phi**2)
    s = np.sin(k * phi)
    flux_div = -2 * phi * rho * k * np.cos(k * phi) - rho * k**2 * np.sin(k * phi)
    res = classical.continuity_residual(_Pair(rho, s, spec), -flux_div, method="spectral")
    assert np.max(np.abs(res)) < 1e-10


def _unit_gaussian(spec):
    phi = spec.phi_axis()
    rho = np.exp(-0.5 * phi**2)
    return rho / (np.sum(rho) * spec.measure)


def test_ensemble_action_gaussian_moment():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    zero = QuadraticGenerator(lambda t: 0.0, lambda t: 0.0)
    est = ensemble_action(_unit_gaussian(spec), spec, zero, FREE, 0.0, 1.0, 200_000, seed=1)
    assert abs(est.value - 0.5) < 3 * est.std_error
    assert est.n_samples == 200_000


def test_ensemble_action_exact_solution_zero():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    est = ensemble_action(_unit_gaussian(spec), spec, QuadraticGenerator.harmonic(1.0), FREE, 0.0, 1.0, 10_000, seed=2)
    assert abs(est.value) < 1e-10


def test_ensemble_action_grid_generator_stationary():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    rho = _unit_gaussian(spec)
    gen = GridGenerator(np.zeros(128), -0.25, spec)
    # <V> = m2 <phi^2>/2 = 0.5 for the unit Gaussian; S_t = -0.25
    est = ensemble_action(rho, spec, gen, FREE, 0.0, 2.0, 100_000, seed=3)
    assert abs(est.value - 2.0 * 0.25) < 4 * est.std_error


def test_ensemble_action_standard_error_scaling():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    zero = QuadraticGenerator(lambda t: 0.0, lambda t: 0.0)
    small = ensemble_action(_unit_gaussian(spec), spec, zero, FREE, 0.0, 1.0, 10_000, seed=4)
    large = ensemble_action(_unit_gaussian(spec), spec, zero, FREE, 0.0, 1.0, 100_000, seed=4)
    assert small.std_error / large.std_error == pytest.approx(np.sqrt(10), rel=0.1)


def test_ensemble_action_rejects_unnormalized():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    with pytest.raises(ValueError, match="normalized"):
        ensemble_action(2 * _unit_gaussian(spec), spec, QuadraticGenerator.free(), FREE, 1.0, 2.0, 10, seed=0)


def test_ensemble_action_shard_invariance():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    zero = QuadraticGenerator(lambda t: 0.0, lambda t: 0.0)
    a = ensemble_action(_unit_gaussian(spec), spec, zero, FREE, 0.0, 1.0, 5000, seed=9, shards=4, workers=1)
    b = ensemble_action(_unit_gaussian(spec), spec, zero, FREE, 0.0, 1.0, 5000, seed=9, shards=4, workers=4)
    assert a == b
