import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itomo.errors import (
    CannotCanonicalizeError,
    DimensionMismatchError,
    InvalidDimensionError,
    NotUnitaryError,
    UndefinedFidelityError,
)
from itomo.matrices import (
    assert_unitary,
    canonicalize_phases,
    haar_random_unitary,
    matrix_fidelity,
    matrix_from_dict,
    matrix_to_dict,
    resolve_conjugate_ambiguity,
    unitarity_defect,
)

from oracles import haar_second_moment


class TestHaar:
    def test_dim_one_is_pure_phase(self):
        u = haar_random_unitary(1, 3)
        assert abs(abs(u[0, 0]) - 1.0) < 1e-12

    def test_unitary_by_construction(self):
        for seed in range(5):
            u = haar_random_unitary(4, seed)
            assert unitarity_defect(u) <= 1e-10

    def test_deterministic(self):
        assert np.array_equal(haar_random_unitary(5, 11), haar_random_unitary(5, 11))

    def test_invalid_dimension(self):
        with pytest.raises(InvalidDimensionError):
            haar_random_unitary(0, 1)

    def test_second_moment_matches_haar(self):
        # Monte Carlo oracle: E|U_11|^2 = 1/dim for Haar measure.
        mean, sem = haar_second_moment(4, 10_000, seed=2024)
        assert abs(mean - 0.25) < 0.01
        assert abs(mean - 0.25) < 4 * sem


class TestFidelity:
    def test_self_fidelity(self, rng):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        assert matrix_fidelity(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_global_phase_invariance(self, rng):
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert matrix_fidelity(a, np.exp(1.3j) * a) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_matrices(self):
        a = np.eye(2)
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert matrix_fidelity(a, b) == pytest.approx(0.0, abs=1e-15)

    def test_zero_matrix_raises(self):
        with pytest.raises(UndefinedFidelityError):
            matrix_fidelity(np.zeros((2, 2)), np.eye(2))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            matrix_fidelity(np.eye(2), np.eye(3))

    @given(st.integers(min_value=0, max_value=10_000))
    def test_bounds_and_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        f = matrix_fidelity(a, b)
        assert 0.0 <= f <= 1.0
        assert f == pytest.approx(matrix_fidelity(b, a), abs=1e-12)


class TestCanonicalize:
    def test_fixed_point(self):
        u = haar_random_unitary(4, 8)
        c = canonicalize_phases(u)
        assert np.array_equal(canonicalize_phases(c), c)

    def test_global_phase_removed(self):
        u = haar_random_unitary(4, 9)
        c1 = canonicalize_phases(u)
        c2 = canonicalize_phases(np.exp(0.7j) * u)
        np.testing.assert_allclose(c1, c2, atol=1e-12)

    def test_chosen_row_col_real_nonnegative(self):
        u = haar_random_unitary(5, 10)
        c = canonicalize_phases(u, row=5, col=2)
        assert np.all(np.abs(c[4, :].imag) < 1e-12)
        assert np.all(c[4, :].real >= -1e-12)
        assert np.all(np.abs(c[:, 1].imag) < 1e-12)
        assert np.all(c[:, 1].real >= -1e-12)

    def test_moduli_preserved(self):
        # entrywise moduli survive up to floating-point rounding
        u = haar_random_unitary(6, 11)
        c = canonicalize_phases(u)
        np.testing.assert_allclose(np.abs(c), np.abs(u), rtol=5e-16)

    def test_random_diagonal_layers_collapse(self, rng):
        # Two reconstructions differing by input/output phases agree after
        # canonicalization.
        u = haar_random_unitary(4, 12)
        for _ in range(5):
            d1 = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
            d2 = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
            v = d1[:, None] * u * d2[None, :]
            f = matrix_fidelity(canonicalize_phases(u), canonicalize_phases(v))
            assert f >= 1.0 - 1e-10

    def test_zero_entry_raises(self):
        with pytest.raises(CannotCanonicalizeError):
            canonicalize_phases(np.eye(3))


class TestConjugateResolution:
    def test_real_matrix_unchanged(self):
        u = np.array([[0.6, 0.8], [0.8, -0.6]])
        assert np.array_equal(resolve_conjugate_ambiguity(u), u)

    def test_reference_selects_conjugate(self):
        u = haar_random_unitary(4, 13)
        picked = resolve_conjugate_ambiguity(u, reference=np.conj(u))
        np.testing.assert_array_equal(picked, np.conj(u))

    def test_reference_keeps_match(self):
        u = haar_random_unitary(4, 14)
        picked = resolve_conjugate_ambiguity(u, reference=u)
        np.testing.assert_array_equal(picked, u)

    def test_convention_is_involution(self):
        u = haar_random_unitary(4, 15)
        a = resolve_conjugate_ambiguity(u)
        b = resolve_conjugate_ambiguity(np.conj(u))
        np.testing.assert_array_equal(a, b)


class TestSerialization:
    def test_roundtrip_exact(self):
        u = haar_random_unitary(5, 16)
        v = matrix_from_dict(matrix_to_dict(u))
        assert np.array_equal(u, v)

    def test_malformed_raises(self):
        with pytest.raises(InvalidDimensionError):
            matrix_from_dict({"dim": 2, "re": [[1.0]], "im": [[0.0]]})


def test_assert_unitary_rejects_nonunitary():
    with pytest.raises(NotUnitaryError):
        assert_unitary(np.full((2, 2), 0.9))
