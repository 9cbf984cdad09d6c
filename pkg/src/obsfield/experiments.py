"""Experiment runners used by the command-line front end.

Each runner takes a validated ``ExperimentConfig`` plus a worker count and
returns ``(results, series)``: ``results`` maps names to ``(value,
std_error)`` pairs (``std_error`` is ``None`` for deterministic numbers) and
``series`` is ``None`` or ``(columns, rows)``.
"""
from __future__ import annotations

import numpy as np

from . import classical, fluctuations, infometrics, madelung, schrodinger
from .lattice import LatticeSpec, PotentialSpec, mode_frequencies

CATALOG = {
    "fluctuations": "Monte-Carlo moments of the short-time site fluctuations against the variance hbar dt / (2 dx)",
    "uncertainty": "smeared field/momentum spreads of 20 random nonnegative test-function pairs against (hbar/2) <f|g>",
    "divergence": "one-step fluctuation information (KL, Renyi, Tsallis) of the ground-state density against its Fisher form",
    "alpha_ratio": "Renyi/KL and Tsallis/KL fluctuation-information ratios along dt, dt/2, dt/4, dt/8 (tend to alpha)",
    "spectrum": "lowest levels of the lattice functional Schrodinger operator against the normal-mode sum",
    "evolve": "split-step real-time propagation: norm, energy, eigenstate phase and coherent-state mean field",
    "madelung_crosscheck": "coherent state evolved as (rho, S) hydrodynamics and as a wave functional; curvature identity; quantum HJ residuals",
    "observability": "path and fluctuation parts of the total observability for the stationary ground state",
}

N_PAIRS = 20


def _value(x, se=None):
    return (float(x), None if se is None else float(se))


def _ground_density(spec: LatticeSpec, pot: PotentialSpec, hbar: float):
    if pot.is_free:
        oracle = schrodinger.free_field_oracle(spec, pot.m2, hbar)
        return oracle.density(), oracle.energy
    gs = schrodinger.ground_state(spec, pot, hbar)
    rho = gs.psi.density()
    return rho / (np.sum(rho) * spec.measure), gs.energy


def run_fluctuations(cfg, workers):
    spec = cfg.lattice
    batch = fluctuations.sample(spec, cfg.dt, cfg.hbar, cfg.samples, cfg.seed, cfg.shards, workers)
    mom = fluctuations.moments(batch, spec)
    target = fluctuations.fluctuation_variance(cfg.dt, cfg.hbar, spec.dx)
    out = {"expected_variance": _value(target)}
    var_z = 0.0
    cov_z = 0.0
    for i in range(spec.n_sites):
        out[f"variance_site_{i}"] = _value(mom.cov[i, i], mom.cov_se[i, i])
        out[f"mean_site_{i}"] = _value(mom.mean[i], mom.mean_se[i])
        var_z = max(var_z, abs(mom.cov[i, i] - target) / mom.cov_se[i, i])
        for j in range(i + 1, spec.n_sites):
            cov_z = max(cov_z, abs(mom.cov[i, j]) / mom.cov_se[i, j])
    out["max_variance_z"] = _value(var_z)
    out["max_covariance_z"] = _value(cov_z)
    shape = fluctuations.sample_moments(batch.omegas[:, 0])
    out["skewness_site_0"] = _value(shape["skewness"], shape["skewness_se"])
    out["excess_kurtosis_site_0"] = _value(shape["excess_kurtosis"], shape["excess_kurtosis_se"])
    return out, None


def random_test_pairs(spec: LatticeSpec, n_pairs: int, seed: int):
    """Nonnegative test-function pairs drawn from a stream separate from the fluctuations."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    return [(rng.random(spec.n_sites), rng.random(spec.n_sites)) for _ in range(n_pairs)]


def run_uncertainty(cfg, workers):
    spec = cfg.lattice
    batch = fluctuations.sample(spec, cfg.dt, cfg.hbar, cfg.samples, cfg.seed, cfg.shards, workers)
    worst = np.inf
    rows = []
    for k, (f, g) in enumerate(random_test_pairs(spec, N_PAIRS, cfg.seed)):
        res = fluctuations.smeared_uncertainty(batch, f, g, spec)
        margin = (res.product - res.bound) / res.product_se
        worst = min(worst, margin)
        rows.append((k, res.product, res.bound, res.product_se))
    f = np.ones(spec.n_sites)
    eq = fluctuations.smeared_uncertainty(batch, f, 2.0 * f, spec)
    out = {
        "pairs": _value(N_PAIRS),
        "min_margin_in_se": _value(worst),
        "equality_product": _value(eq.product, eq.product_se),
        "equality_bound": _value(eq.bound),
        "equality_z": _value((eq.product - eq.bound) / eq.product_se),
    }
    return out, (("pair", "product", "bound", "product_se"), rows)


def run_divergence(cfg, workers):
    spec = cfg.lattice
    rho, _ = _ground_density(spec, cfg.potential, cfg.hbar)
    fisher = infometrics.fisher_functional(rho, cfg.hbar, spec) * cfg.dt
    out = {"fisher_form": _value(fisher)}
    kinds = [("kl", 1.0), ("renyi", cfg.alpha), ("tsallis", cfg.alpha)]
    for kind, alpha in kinds:
        est = infometrics.fluctuation_information(
            rho, cfg.dt, cfg.hbar, spec, kind, alpha, cfg.samples, cfg.seed, cfg.shards, workers
        )
        out[f"i_f_{kind}"] = _value(est.value, est.std_error)
        out[f"ratio_{kind}"] = _value(est.value / fisher, est.std_error / fisher)
    return out, None


def run_alpha_ratio(cfg, workers):
    spec = cfg.lattice
    rho, _ = _ground_density(spec, cfg.potential, cfg.hbar)
    dts = [cfg.dt / 2**k for k in range(4)]
    renyi = infometrics.alpha_ratio_check(rho, dts, cfg.alpha, cfg.hbar, spec, "renyi", cfg.samples, cfg.seed)
    tsallis = infometrics.alpha_ratio_check(rho, dts, cfg.alpha, cfg.hbar, spec, "tsallis", cfg.samples, cfg.seed)
    out = {
        "alpha": _value(cfg.alpha),
        "ratio_final": _value(renyi[-1]),
        "tsallis_ratio_final": _value(tsallis[-1]),
    }
    rows = list(zip(dts, renyi, tsallis))
    return out, (("dt", "renyi_over_kl", "tsallis_over_kl"), rows)


def run_spectrum(cfg, workers):
    spec = cfg.lattice
    ham = schrodinger.build_hamiltonian(spec, cfg.potential, cfg.hbar)
    k = min(3, spec.grid_size - 1)
    vals, vecs = ham.lowest(k)
    out = {f"e{n}": _value(v) for n, v in enumerate(vals)}
    psi = schrodinger.Wavefunctional.from_grid(vecs[0], spec, cfg.hbar)
    out["residual"] = _value(ham.residual(psi, float(vals[0])))
    if cfg.potential.is_free and cfg.potential.m2 > 0:
        out["mode_sum_e0"] = _value(0.5 * cfg.hbar * np.sum(mode_frequencies(spec, cfg.potential.m2)))
    return out, None


def _coherent(cfg):
    m2 = cfg.potential.m2 if cfg.potential.m2 > 0 else 1.0
    return schrodinger.coherent_state(cfg.lattice, m2, cfg.hbar, [cfg.shift] * cfg.lattice.n_sites)


def run_evolve(cfg, workers):
    spec, pot = cfg.lattice, cfg.potential
    ham = schrodinger.build_hamiltonian(spec, pot, cfg.hbar)
    every = max(1, cfg.steps // 100)
    psi0 = _coherent(cfg)
    final, snaps = schrodinger.evolve(psi0, pot, cfg.dt, cfg.steps, record_every=every)
    e0 = ham.expectation(psi0)
    rows = [(s.t, s.mean_field()[0], ham.expectation(s), s.norm_sq()) for s in snaps]
    gs = schrodinger.ground_state(spec, pot, cfg.hbar)
    moved = schrodinger.evolve(gs.psi, pot, cfg.dt, cfg.steps)
    out = {
        "norm_drift": _value(max(abs(r[3] - 1.0) for r in rows)),
        "energy_drift": _value(max(abs(r[2] - e0) for r in rows)),
        "final_mean_field_0": _value(final.mean_field()[0]),
        "ground_energy": _value(gs.energy),
        "eigenstate_infidelity": _value(1.0 - gs.psi.fidelity(moved)),
    }
    return out, (("t", "mean_field_0", "energy", "norm"), rows)


def run_madelung_crosscheck(cfg, workers):
    spec, pot = cfg.lattice, cfg.potential
    every = max(1, cfg.steps // 100)
    psi0 = _coherent(cfg)
    ms0 = madelung.decompose(psi0)
    _, hydro = madelung.evolve_madelung(ms0, pot, cfg.dt, cfg.steps, record_every=every)
    _, wave = schrodinger.evolve(psi0, pot, cfg.dt, cfg.steps, record_every=every)
    rows = [(a.t, madelung.density_l2(a.rho, b.density(), spec)) for a, b in zip(hydro, wave)]
    gs = schrodinger.ground_state(spec, pot, cfg.hbar)
    ms = madelung.decompose(gs.psi)
    mask = ms.interior()
    quantum = madelung.qhj_residual(ms, -gs.energy, pot)
    classical_only = madelung.qhj_residual(ms, -gs.energy, pot, include_bohm=False)
    out = {
        "max_density_l2": _value(max(r[1] for r in rows)),
        "curvature_identity_residual": _value(madelung.curvature_identity_residual(ms)),
        "qhj_residual": _value(np.max(np.abs(quantum[mask]))),
        "qhj_residual_without_bohm": _value(np.max(np.abs(classical_only[mask]))),
    }
    return out, (("t", "density_l2"), rows)


def run_observability(cfg, workers):
    spec, pot = cfg.lattice, cfg.potential
    rho, energy = _ground_density(spec, pot, cfg.hbar)
    gen = classical.GridGenerator(np.zeros(spec.grid_shape), -energy, spec)
    t_end = cfg.dt * cfg.steps
    parts = infometrics.total_observability(rho, gen, pot, cfg.hbar, spec, 0.0, t_end, cfg.samples, cfg.seed)
    out = {
        "window": _value(t_end),
        "i_path": _value(parts.i_path, parts.i_path_se),
        "i_fluct": _value(parts.i_fluct),
        "total": _value(parts.total, parts.i_path_se),
    }
    return out, None


RUNNERS = {
    "fluctuations": run_fluctuations,
    "uncertainty": run_uncertainty,
    "divergence": run_divergence,
    "alpha_ratio": run_alpha_ratio,
    "spectrum": run_spectrum,
    "evolve": run_evolve,
    "madelung_crosscheck": run_madelung_crosscheck,
    "observability": run_observability,
}

