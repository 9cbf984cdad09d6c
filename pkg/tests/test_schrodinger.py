from dataclasses import replace

import numpy as np
import pytest

from obsfield import schrodinger as sc
from obsfield.lattice import LatticeError, LatticeSpec, PotentialSpec

FREE = PotentialSpec(1.0)
GOLDEN = (1 + np.sqrt(5)) / 2


def test_hermiticity_random_pairs():
    spec = LatticeSpec(2, 1.0, 6.0, 24)
    ham = sc.build_hamiltonian(spec, PotentialSpec(1.0, 0.1, 0.2), 1.0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        f = rng.normal(size=spec.grid_shape) + 1j * rng.normal(size=spec.grid_shape)
        g = rng.normal(size=spec.grid_shape) + 1j * rng.normal(size=spec.grid_shape)
        lhs = ham.inner(ham.apply(f), g)
        rhs = ham.inner(f, ham.apply(g))
        scale = np.sqrt(abs(ham.inner(f, f)) * abs(ham.inner(g, g)))
        assert abs(lhs - rhs) < 1e-10 * scale


def test_oscillator_spectrum():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    vals, _ = sc.build_hamiltonian(spec, FREE, 1.0).lowest(3)
    assert vals == pytest.approx([0.5, 1.5, 2.5], abs=1e-3)


def test_oscillator_spectrum_fd_is_second_order():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    vals, _ = sc.build_hamiltonian(spec, FREE, 1.0, "fd").lowest(3)
    # three-point stencil error grows with the level: about (2n+1)^2 h^2 / 32
    assert vals == pytest.approx([0.5, 1.5, 2.5], abs=spec.h**2 / 2)


def test_constant_grid_free_kinetic_vanishes_on_interior():
    spec = LatticeSpec(1, 1.0, 4.0, 32)
    ham = sc.build_hamiltonian(spec, PotentialSpec(0.0), 1.0, "fd")
    out = ham.apply(np.ones(32))
    assert np.all(out[1:-1] == 0.0)
    spectral = sc.build_hamiltonian(spec, PotentialSpec(0.0), 1.0)
    assert np.max(np.abs(spectral.apply(np.ones(32)))) < 1e-13


def test_hamiltonian_errors():
    with pytest.raises(ValueError):
        sc.build_hamiltonian(LatticeSpec(1, 1.0, n_phi=8), FREE, 1.0, "chebyshev")
    with pytest.raises(ValueError):
        sc.build_hamiltonian(LatticeSpec(1, 1.0, n_phi=8), FREE, -1.0)
    with pytest.raises(LatticeError):
        sc.build_hamiltonian(LatticeSpec(1, 1.0, n_phi=8), FREE, 1.0).apply(np.zeros(9))


def test_oracle_examples():
    one = sc.free_field_oracle(LatticeSpec(1, 1.0, n_phi=8), 1.0, 1.0)
    assert one.kernel[0, 0] == pytest.approx(1.0) and one.energy == pytest.approx(0.5)
    two = sc.free_field_oracle(LatticeSpec(2, 1.0, n_phi=8), 1.0, 1.0)
    assert np.linalg.eigvalsh(two.kernel) == pytest.approx([1.0, np.sqrt(5)])
    assert two.energy == pytest.approx(GOLDEN)
    assert np.allclose(two.kernel, two.kernel.T)
    four = sc.free_field_oracle(LatticeSpec(1, 1.0, n_phi=8), 4.0, 1.0)
    assert four.energy == pytest.approx(2 * one.energy)


def test_oracle_rejects_zero_mode():
    with pytest.raises(ValueError, match="zero mode"):
        sc.free_field_oracle(LatticeSpec(2, 1.0, n_phi=8), 0.0, 1.0)


def test_oracle_is_eigenstate_of_grid_operator():
    spec = LatticeSpec(2, 1.0, 8.0, 64)
    oracle = sc.free_field_oracle(spec, 1.0, 1.0)
    ham = sc.build_hamiltonian(spec, FREE, 1.0)
    assert ham.residual(oracle.wavefunctional(), oracle.energy) < 1e-8
    fd = sc.build_hamiltonian(spec, FREE, 1.0, "fd")
    assert fd.residual(oracle.wavefunctional(), oracle.energy) < 0.05


@pytest.mark.parametrize("method", ["eigensolve", "imaginary_time"])
def test_ground_state_n1(method):
    gs = sc.ground_state(LatticeSpec(1, 1.0, 8.0, 128), FREE, 1.0, method)
    assert gs.energy == pytest.approx(0.5, abs=1e-4)
    assert gs.residual < 1e-6


@pytest.mark.parametrize("method", ["eigensolve", "imaginary_time"])
def test_ground_state_n2(method):
    spec = LatticeSpec(2, 1.0, 8.0, 128 if method == "eigensolve" else 64)
    gs = sc.ground_state(spec, FREE, 1.0, method)
    assert gs.energy == pytest.approx(GOLDEN, abs=1e-3)
    assert gs.residual < 1e-6
    oracle = sc.free_field_oracle(spec, 1.0, 1.0).wavefunctional()
    assert gs.psi.fidelity(oracle) > 1 - 1e-5


def test_imaginary_time_history_is_monotone():
    gs = sc.ground_state(LatticeSpec(2, 1.0, 8.0, 64), PotentialSpec(1.0, 0.0, 0.1), 1.0, "imaginary_time")
    hist = np.array(gs.history)
    assert len(hist) > 10
    assert np.all(np.diff(hist) <= 0)
    exact = sc.ground_state(LatticeSpec(2, 1.0, 8.0, 64), PotentialSpec(1.0, 0.0, 0.1), 1.0)
    assert gs.energy == pytest.approx(exact.energy, abs=1e-9)


def test_quartic_raises_ground_energy():
    spec = LatticeSpec(2, 1.0, 8.0, 64)
    quartic = sc.ground_state(spec, PotentialSpec(1.0, 0.0, 0.1), 1.0)
    assert quartic.energy > GOLDEN + 1e-3
    assert quartic.energy == pytest.approx(1.6861757261, abs=1e-8)


def test_ground_state_errors():
    spec = LatticeSpec(1, 1.0, 8.0, 64)
    with pytest.raises(LatticeError):
        sc.ground_state(spec, PotentialSpec(1.0, 0.5, 0.0), 1.0)
    with pytest.raises(ValueError):
        sc.ground_state(spec, FREE, 1.0, "power")
    with pytest.raises(sc.ConvergenceError):
        sc.ground_state(spec, FREE, 1.0, "imaginary_time", max_iter=5)


def test_grid_convergence_order_h2():
    e = []
    for m in (32, 64, 128):
        gs = sc.ground_state(LatticeSpec(1, 1.0, 8.0, m), FREE, 1.0, kinetic="fd")
        e.append(gs.energy)
    ratio = (e[0] - e[1]) / (e[1] - e[2])
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_wavefunctional_checks():
    spec = LatticeSpec(1, 1.0, 4.0, 32)
    with pytest.raises(ValueError, match="normalized"):
        sc.Wavefunctional(np.ones(32), spec)
    with pytest.raises(sc.TruncationError):
        sc.Wavefunctional.from_grid(np.ones(32), spec)
    with pytest.raises(ValueError):
        sc.Wavefunctional.from_grid(np.exp(-spec.phi_axis() ** 2), spec, hbar=0.0)


def _coherent(shift=1.0, m=128, phi_max=8.0, n=1):
    spec = LatticeSpec(n, 1.0, phi_max, m)
    return sc.coherent_state(spec, 1.0, 1.0, [shift] * n)


def test_zero_steps_identity():
    psi = _coherent()
    out = sc.evolve(psi, FREE, 1e-3, 0)
    assert np.array_equal(out.amplitudes, psi.amplitudes) and out.t == psi.t
    gen = sc.evolve_generalized(psi, FREE, 2.0, 1e-3, 0)
    assert np.array_equal(gen.amplitudes, psi.amplitudes)


def test_unitarity_over_1e4_steps():
    psi = _coherent()
    out = sc.evolve(psi, FREE, 1e-3, 10_000)
    assert abs(out.norm_sq() - 1.0) < 1e-10
    assert out.t == pytest.approx(10.0)


def test_stationary_state_phase():
    gs = sc.ground_state(LatticeSpec(1, 1.0, 8.0, 128), FREE, 1.0)
    tau = 2.0
    out = sc.evolve(gs.psi, FREE, 1e-3, 2000)
    assert gs.psi.fidelity(out) > 1 - 1e-8
    phase = gs.psi.overlap(out)
    assert np.angle(phase) == pytest.approx(-gs.energy * tau, abs=1e-6)


def test_ehrenfest_cosine():
    psi = _coherent(1.0)
    _, snaps = sc.evolve(psi, FREE, 1e-3, 6000, record_every=100)
    times = np.array([s.t for s in snaps])
    means = np.array([s.mean_field()[0] for s in snaps])
    assert np.max(np.abs(means - np.cos(times))) < 1e-3
    assert len(snaps) == 61


def test_energy_conservation():
    psi = _coherent(1.0)
    ham = sc.build_hamiltonian(psi.spec, FREE, 1.0)
    _, snaps = sc.evolve(psi, FREE, 1e-4, 5000, record_every=250)
    energies = np.array([ham.expectation(s) for s in snaps])
    assert np.max(np.abs(energies - energies[0])) < 1e-8


def test_evolve_rejects_bad_step():
    with pytest.raises(ValueError):
        sc.evolve(_coherent(), FREE, 0.0, 10)
    with pytest.raises(ValueError):
        sc.evolve_generalized(_coherent(), FREE, 0.0, 1e-3, 10)


def test_generalized_alpha_one_matches_evolve():
    psi = _coherent(0.5, m=64, n=2)
    a = sc.evolve(psi, FREE, 1e-3, 300)
    b = sc.evolve_generalized(psi, FREE, 1.0, 1e-3, 300)
    assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-12


@pytest.mark.parametrize("alpha", [0.25, 0.5, 2.0, 4.0])
def test_hbar_alpha_equivalence(alpha):
    psi = _coherent(1.0, phi_max=12.0)
    _, gen = sc.evolve_generalized(psi, FREE, alpha, 1e-3, 1000, record_every=100)
    _, std = sc.evolve(replace(psi, hbar=np.sqrt(alpha)), FREE, 1e-3, 1000, record_every=100)
    for a, b in zip(gen, std):
        assert np.max(np.abs(a.density() - b.density())) < 1e-10


def test_alpha_operator_matches_scaled_hbar():
    spec = LatticeSpec(1, 1.0, 12.0, 128)
    a = sc.build_hamiltonian(spec, FREE, 1.0, alpha=4.0)
    b = sc.build_hamiltonian(spec, FREE, 2.0)
    assert np.array_equal(a.matrix(), b.matrix())
    assert sc.ground_state(spec, FREE, 1.0, alpha=4.0).energy == sc.ground_state(spec, FREE, 2.0).energy


def test_norm_guard_trips():
    psi = _coherent()
    spec = psi.spec
    kin, _ = sc._phases(spec, FREE, 1e-3, 1.0, 0.5)
    leaky = np.full(spec.grid_shape, 1.001 + 0j)
    with pytest.raises(sc.NormDriftError):
        sc._propagate(psi.amplitudes, kin, leaky, 10, spec.measure, check_every=1)
