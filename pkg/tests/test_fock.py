import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfilter import fock, states
from qfilter.errors import (
    DegenerateStateError,
    DimensionMismatchError,
    InvalidDimensionError,
    NumericalInconsistencyError,
)


def test_ladder_dim3_has_two_entries():
    a, ad = fock.make_ladder(3)
    assert np.count_nonzero(a) == 2
    assert a[0, 1] == 1
    assert a[1, 2] == pytest.approx(np.sqrt(2))
    np.testing.assert_array_equal(ad, a.conj().T)


def test_number_operator_dim2():
    a, ad = fock.make_ladder(2)
    np.testing.assert_array_equal(ad @ a, np.diag([0, 1]))


def test_lowering_fock_five():
    a, _ = fock.make_ladder(16)
    np.testing.assert_allclose(a @ fock.fock_state(5, 16), np.sqrt(5) * fock.fock_state(4, 16))


@pytest.mark.parametrize("dim", [0, 1, 2.5, -3])
def test_invalid_dimension(dim):
    with pytest.raises(InvalidDimensionError):
        fock.make_ladder(dim)


def test_quadratures_dim2():
    x, _ = fock.make_quadratures(2)
    np.testing.assert_allclose(x, [[0, 0.5], [0.5, 0]])


@pytest.mark.parametrize("dim", [2, 5, 17, 64])
def test_quadrature_commutator_on_interior(dim):
    x, y = fock.make_quadratures(dim)
    comm = x @ y - y @ x
    np.testing.assert_allclose(comm[: dim - 1, : dim - 1], 0.5j * np.eye(dim - 1), atol=1e-14)


def test_coherent_quadrature_means():
    x, y = fock.make_quadratures(32)
    phi = states.coherent(1.0, 32)
    assert fock.expectation(x, phi).real == pytest.approx(1.0, abs=1e-8)
    assert fock.expectation(y, phi).real == pytest.approx(0.0, abs=1e-8)


def test_expectation_examples():
    phi = states.coherent(0.3 + 0.4j, 20)
    assert fock.expectation(fock.identity(20), phi) == pytest.approx(1.0)
    assert fock.expectation(fock.number_op(8), fock.fock_state(3, 8)).real == pytest.approx(3.0)
    assert fock.expectation(fock.number_op(40), states.coherent(2.0, 40)).real == pytest.approx(4.0, abs=1e-8)


def test_expectation_zero_norm():
    with pytest.raises(DegenerateStateError):
        fock.expectation(fock.number_op(4), np.zeros(4, complex))


def test_expectation_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        fock.expectation(fock.number_op(4), np.ones(5, complex))


def test_uncertainty_examples():
    x, _ = fock.make_quadratures(40)
    assert fock.uncertainty(x, states.coherent(1.2 - 0.7j, 40)) == pytest.approx(0.5, abs=1e-8)
    assert fock.uncertainty(fock.number_op(10), fock.fock_state(0, 10)) == 0.0
    sq = states.build_initial(states.SqueezedVacuum(states.SqueezeParams(0.5, 0.0)), 40)
    assert fock.uncertainty(x, sq) == pytest.approx(0.5 * np.exp(-0.5), abs=1e-8)


def test_uncertainty_rejects_negative_variance():
    # a non-Hermitian "operator" can produce a negative variance
    with pytest.raises(NumericalInconsistencyError):
        fock._checked_sqrt(-1e-6)
    assert fock._checked_sqrt(-1e-13) == 0.0


def test_inner_products():
    v0, v1 = fock.fock_state(0, 4), fock.fock_state(1, 4)
    assert fock.inner(v0, v0) == 1
    assert fock.inner(v0, v1) == 0
    ov = fock.inner(states.coherent(1.0, 40), states.coherent(-1.0, 40))
    assert ov.real == pytest.approx(np.exp(-2), abs=1e-8)
    with pytest.raises(DimensionMismatchError):
        fock.inner(v0, np.ones(3))


def test_inner_is_conjugate_linear_in_first_slot():
    u, v = fock.fock_state(1, 3), fock.fock_state(1, 3)
    assert fock.inner(1j * u, v) == pytest.approx(-1j)


def test_scale_add_and_norm():
    u, v = fock.fock_state(0, 3), fock.fock_state(2, 3)
    w = fock.scale_add(2.0, u, v)
    assert fock.norm2(w) == pytest.approx(5.0)


@pytest.mark.parametrize("k", range(0, 15))
def test_ladder_consistency(k):
    a, _ = fock.make_ladder(16)
    np.testing.assert_array_equal(a @ fock.fock_state(k + 1, 16), np.sqrt(k + 1) * fock.fock_state(k, 16))


@pytest.mark.parametrize("dim", [2, 9, 40])
def test_commutator_defect_is_single_corner(dim):
    a, ad = fock.make_ladder(dim)
    defect = a @ ad - ad @ a - np.eye(dim)
    expected = np.zeros((dim, dim))
    expected[-1, -1] = -dim
    np.testing.assert_allclose(defect, expected, atol=1e-12)


def test_hermiticity_all_dims():
    for dim in range(2, 129):
        x, y = fock.make_quadratures(dim)
        n = fock.number_op(dim)
        assert np.abs(x - x.conj().T).max() <= 1e-14
        assert np.abs(y - y.conj().T).max() <= 1e-14
        assert np.array_equal(n, n.conj().T)
        assert np.array_equal(np.diag(n).real, np.arange(dim))


@settings(max_examples=10, deadline=None)
@given(
    st.floats(-3, 3), st.floats(-3, 3),
    st.floats(0.01, 100), st.floats(-np.pi, np.pi),
)
def test_expectation_invariant_under_rescaling(re, im, mag, phase):
    phi = states.coherent_amplitudes(complex(re, im), 48) + 0.1 * fock.fock_state(2, 48)
    c = mag * np.exp(1j * phase)
    for z in (fock.number_op(48), *fock.make_quadratures(48)):
        assert abs(fock.expectation(z, c * phi) - fock.expectation(z, phi)) <= 1e-12


def test_readout_matches_matrix_expectations():
    rng = np.random.default_rng(3)
    phi = rng.normal(size=24) + 1j * rng.normal(size=24)
    x, y = fock.make_quadratures(24)
    r = fock.readout(phi)
    assert r["mean_x"] == pytest.approx(fock.expectation(x, phi).real, abs=1e-12)
    assert r["mean_y"] == pytest.approx(fock.expectation(y, phi).real, abs=1e-12)
    assert r["mean_n"] == pytest.approx(fock.expectation(fock.number_op(24), phi).real, abs=1e-12)
    assert r["dx"] == pytest.approx(fock.uncertainty(x, phi), abs=1e-12)
    assert r["dy"] == pytest.approx(fock.uncertainty(y, phi), abs=1e-12)


def test_k_diagonal_matches_operator():
    params = fock.ModelParams(1.3, 0.4)
    k = 1j * fock.hamiltonian(params, 6) + 0.5 * params.mu * fock.number_op(6)
    np.testing.assert_allclose(np.diag(k), fock.k_diagonal(params, 6))


def test_model_params_validation():
    with pytest.raises(ValueError):
        fock.ModelParams(1.0, -0.1)
    with pytest.raises(ValueError):
        fock.ModelParams(np.inf, 0.1)
    with pytest.raises(InvalidDimensionError):
        fock.ModelParams(1.0, 0.1, dim=1)
