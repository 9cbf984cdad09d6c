import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obsfield.lattice import (
    FieldConfig,
    LatticeError,
    LatticeSpec,
    PotentialSpec,
    coupling_matrix,
    functional_derivative,
    grad_sq,
    inner_product,
    integrate,
    mode_frequencies,
    partial,
    potential_integral,
    second_functional_derivative,
)

finite = st.floats(-10, 10, allow_nan=False)


def test_spec_validation():
    for bad in (dict(n_sites=0, dx=1.0), dict(n_sites=1, dx=0.0), dict(n_sites=1, dx=1.0, n_phi=2),
                dict(n_sites=1, dx=1.0, phi_max=-1.0), dict(n_sites=1, dx=1.0, boundary="open")):
        with pytest.raises(LatticeError):
            LatticeSpec(**bad)


def test_memory_budget_rejected_at_construction():
    with pytest.raises(LatticeError, match="budget"):
        LatticeSpec(4, 1.0, n_phi=128)
    assert LatticeSpec(4, 1.0, n_phi=16).grid_size == 16**4


def test_field_grid_is_periodic_with_zero_node():
    spec = LatticeSpec(1, 1.0, 8.0, 128)
    axis = spec.phi_axis()
    assert axis[0] == -8.0 and axis[-1] == pytest.approx(8.0 - spec.h)
    assert spec.h == 0.125 and 0.0 in axis
    assert spec.measure == spec.h


def test_field_config_checks():
    with pytest.raises(LatticeError):
        FieldConfig([1.0, np.nan])
    with pytest.raises(LatticeError):
        FieldConfig(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FieldConfig([1.0]).values[0] = 2.0


@pytest.mark.parametrize(
    "n, dx, phi, expected",
    [(3, 1.0, [2.0, 2.0, 2.0], 0.0), (2, 1.0, [0.0, 1.0], 2.0), (3, 0.5, [0.0, 1.0, 0.0], 8.0)],
)
def test_grad_sq_hand_values(n, dx, phi, expected):
    assert grad_sq(phi, LatticeSpec(n, dx, n_phi=8)) == pytest.approx(expected)


def test_grad_sq_size_mismatch():
    with pytest.raises(LatticeError):
        grad_sq([1.0, 2.0], LatticeSpec(3, 1.0, n_phi=8))


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=6), finite)
def test_grad_sq_shift_invariant(phi, c):
    spec = LatticeSpec(len(phi), 0.7, n_phi=4)
    a = grad_sq(phi, spec)
    b = grad_sq(np.asarray(phi) + c, spec)
    assert a >= 0
    assert abs(a - b) <= 1e-12 * max(1.0, a)


@pytest.mark.parametrize(
    "pot, phi, expected",
    [(PotentialSpec(1.0), [0.0], 0.0), (PotentialSpec(1.0), [2.0], 2.0), (PotentialSpec(0.0, 0.0, 1.0), [2.0], 16.0),
     (PotentialSpec(0.0, 1.0), [2.0], 8.0)],
)
def test_potential_integral_hand_values(pot, phi, expected):
    assert potential_integral(phi, LatticeSpec(1, 1.0, n_phi=8), pot) == pytest.approx(expected)


def test_potential_integral_batches_on_last_axis():
    spec = LatticeSpec(2, 1.0, n_phi=8)
    batch = np.array([[0.0, 1.0], [1.0, 1.0]])
    got = potential_integral(batch, spec, PotentialSpec(0.0))
    assert got == pytest.approx([1.0, 0.0])


def test_potential_spec_rules():
    with pytest.raises(LatticeError):
        PotentialSpec(-1.0)
    with pytest.raises(LatticeError):
        PotentialSpec(1.0, np.inf)
    with pytest.raises(LatticeError):
        PotentialSpec(1.0, 0.5, 0.0).check_bounded_below()
    PotentialSpec(1.0, 0.5, 0.1).check_bounded_below()


def test_mode_frequencies_n2():
    spec = LatticeSpec(2, 1.0, n_phi=8)
    assert np.sort(mode_frequencies(spec, 1.0)) == pytest.approx([1.0, np.sqrt(5.0)])
    assert np.linalg.eigvalsh(coupling_matrix(spec, 1.0)) == pytest.approx([1.0, 5.0])


def test_coupling_matrix_matches_potential_hessian():
    spec = LatticeSpec(5, 0.5, n_phi=4)
    k = coupling_matrix(spec, 2.0)
    rng = np.random.default_rng(0)
    phi = rng.normal(size=5)
    assert potential_integral(phi, spec, PotentialSpec(2.0)) == pytest.approx(0.5 * spec.dx * phi @ k @ phi)


def test_functional_derivative_examples():
    spec = LatticeSpec(1, 1.0, 4.0, 64)
    phi = spec.phi_axis()
    i = np.argmin(abs(phi - 1.0))
    assert phi[i] == 1.0
    assert functional_derivative(phi**2, 0, spec)[i] == pytest.approx(2.0, abs=1e-12)
    half = LatticeSpec(1, 0.5, 4.0, 64)
    assert functional_derivative(phi**2, 0, half)[i] == pytest.approx(4.0, abs=1e-12)
    assert np.all(functional_derivative(np.full(64, 3.0), 0, spec) == 0.0)


def test_functional_derivative_site_range():
    spec = LatticeSpec(2, 1.0, 4.0, 16)
    with pytest.raises(LatticeError):
        functional_derivative(np.zeros((16, 16)), 2, spec)


def test_fd_exact_for_quadratics_including_edges():
    spec = LatticeSpec(2, 1.0, 4.0, 32)
    x, y = spec.mesh()
    x, y = np.broadcast_arrays(x, y)
    f = 3 * x**2 - x * y + 2 * y - 1.0
    assert np.allclose(partial(f, 0, spec, 1), 6 * x - y, atol=1e-11)
    assert np.allclose(partial(f, 0, spec, 2), 6.0, atol=1e-9)
    assert np.allclose(second_functional_derivative(f, 1, LatticeSpec(2, 0.5, 4.0, 32)), 0.0, atol=1e-9)


@pytest.mark.parametrize("method, order", [("fd", 2), ("spectral", 8)])
def test_derivative_convergence(method, order):
    errs = []
    for m in (32, 64):
        spec = LatticeSpec(1, 1.0, 8.0, m)
        phi = spec.phi_axis()
        f = np.exp(-0.5 * phi**2) * np.sin(phi)
        exact = np.exp(-0.5 * phi**2) * (np.cos(phi) - phi * np.sin(phi))
        interior = slice(2, -2)
        errs.append(np.max(np.abs(partial(f, 0, spec, 1, method) - exact)[interior]))
    if method == "fd":
        assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.1)
    else:
        assert errs[1] < 1e-10


@pytest.mark.parametrize("n, dx, f, g, expected", [
    (4, 1.0, [0, 0, 0, 0], [0, 0, 0, 0], 0.0),
    (4, 1.0, [1, 1, 1, 1], [1, 1, 1, 1], 4.0),
    (2, 0.5, [1, 0], [0, 1], 0.0),
])
def test_inner_product_examples(n, dx, f, g, expected):
    assert inner_product(f, g, LatticeSpec(n, dx, n_phi=4)) == pytest.approx(expected)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=6))
def test_inner_product_cauchy_schwarz(pairs):
    f, g = np.array(pairs).T
    spec = LatticeSpec(len(f), 0.3, n_phi=4)
    fg = inner_product(f, g, spec)
    assert fg == pytest.approx(inner_product(g, f, spec))
    assert fg**2 <= inner_product(f, f, spec) * inner_product(g, g, spec) * (1 + 1e-12) + 1e-300


def test_integrate_gaussian():
    spec = LatticeSpec(2, 1.0, 8.0, 64)
    x, y = spec.mesh()
    rho = np.exp(-(x**2 + y**2) / 2) / (2 * np.pi)
    assert integrate(rho, spec) == pytest.approx(1.0, abs=1e-13)
