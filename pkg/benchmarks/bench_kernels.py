"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and backend plus the speed-up, and checks that
the two backends agree.
"""
import argparse
import timeit

import numpy as np
from scipy.interpolate import CubicSpline

from obsfield import _kernels
from obsfield.lattice import LatticeSpec


def leapfrog_case(n_sites=4, steps=20_000):
    rng = np.random.default_rng(0)
    phi = rng.normal(size=n_sites)
    pi = rng.normal(size=n_sites)
    return (phi, pi, 1.0, 1.0, 0.0, 0.1, 1e-3, steps)


def divergence_case(n_samples=20_000):
    spec = LatticeSpec(1, 1.0, 8.0, 256)
    phi = spec.phi_axis()
    rho = np.exp(-0.5 * phi**2) / np.sqrt(2 * np.pi)
    logrho = np.log(rho)
    coef = CubicSpline(phi, logrho).c
    omegas = np.random.default_rng(1).normal(scale=0.1, size=n_samples)
    return (coef, logrho, rho * spec.h, spec.h, omegas, _kernels.KIND_RENYI, 2.0)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the pure-Python timing is shown")
    cases = {"leapfrog_kg": leapfrog_case(), "shifted_divergences_1d": divergence_case()}
    for name, case in cases.items():
        times = {}
        outputs = {}
        for label, mod in backends.items():
            fn = getattr(mod, name)
            outputs[label] = fn(*case)
            times[label] = min(timeit.repeat(lambda: fn(*case), number=1, repeat=args.repeat))
            print(f"{name:<24} {label:<7} {times[label] * 1e3:10.2f} ms")
        if len(times) == 2:
            a, b = outputs["python"][0], outputs["cython"][0]
            diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
            print(f"{name:<24} speed-up {times['python'] / times['cython']:8.1f}x  max |diff| {diff:.2e}")


if __name__ == "__main__":
    main()
