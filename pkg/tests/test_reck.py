import numpy as np
import pytest

from itomo.errors import InvalidDimensionError, NotUnitaryError
from itomo.matrices import haar_random_unitary, matrix_fidelity, unitarity_defect
from itomo.reck import (
    ReckParams,
    apply_external_phases,
    compose_phases,
    mixer_modes,
    n_phases,
    reck_compose,
    reck_decompose,
)


def mesh_product_oracle(dim, phases):
    """Multiply the embedded mixer matrices explicitly, independent of compose."""
    modes = mixer_modes(dim)
    u = np.eye(dim, dtype=complex)
    for m, n in enumerate(modes):
        theta, phi = phases[2 * m], phases[2 * m + 1]
        t = np.eye(dim, dtype=complex)
        t[n, n] = np.exp(1j * phi) * np.cos(theta)
        t[n, n + 1] = -np.sin(theta)
        t[n + 1, n] = np.exp(1j * phi) * np.sin(theta)
        t[n + 1, n + 1] = np.cos(theta)
        u = t @ u
    return u


def test_identity_phases_give_identity():
    p = ReckParams(4, np.zeros(n_phases(4)))
    np.testing.assert_array_equal(reck_compose(p), np.eye(4))


def test_balanced_mixer_dim2():
    p = ReckParams(2, np.array([np.pi / 4, 0.0]))
    u = reck_compose(p)
    np.testing.assert_allclose(np.abs(u), np.full((2, 2), 1 / np.sqrt(2)), atol=1e-12)


def test_param_count():
    assert n_phases(4) == 12
    assert len(mixer_modes(6)) == 15


def test_params_validation():
    with pytest.raises(InvalidDimensionError):
        ReckParams(4, np.zeros(5))
    with pytest.raises(InvalidDimensionError):
        ReckParams(3, np.array([np.inf] * n_phases(3)))


def test_params_reduced_mod_2pi():
    p = ReckParams(2, np.array([2 * np.pi + 0.5, -0.25]))
    assert 0.0 <= p.phases[0] < 2 * np.pi
    assert p.phases[0] == pytest.approx(0.5)
    assert p.phases[1] == pytest.approx(2 * np.pi - 0.25)


def test_compose_unitary_for_random_params(rng):
    for dim in (2, 3, 5):
        phases = rng.uniform(0, 2 * np.pi, n_phases(dim))
        u = compose_phases(dim, phases)
        assert unitarity_defect(u) <= 1e-10


def test_compose_matches_direct_product_oracle(rng):
    for dim in (2, 4, 8):
        phases = rng.uniform(0, 2 * np.pi, n_phases(dim))
        u = compose_phases(dim, phases)
        np.testing.assert_allclose(u, mesh_product_oracle(dim, phases), atol=1e-12)


def test_decompose_identity():
    params, ext = reck_decompose(np.eye(4))
    np.testing.assert_allclose(params.phases[0::2], 0.0, atol=1e-12)
    np.testing.assert_allclose(ext, 0.0, atol=1e-12)


@pytest.mark.parametrize("dim", range(2, 11))
def test_roundtrip_haar(dim):
    u = haar_random_unitary(dim, 100 + dim)
    params, ext = reck_decompose(u)
    rebuilt = apply_external_phases(reck_compose(params), ext)
    assert matrix_fidelity(rebuilt, u) >= 1.0 - 1e-10
    np.testing.assert_allclose(rebuilt, u, atol=1e-10)


def test_roundtrip_dim8_against_oracle():
    u = haar_random_unitary(8, 77)
    params, ext = reck_decompose(u)
    rebuilt = np.exp(1j * ext)[:, None] * mesh_product_oracle(8, params.phases)
    assert matrix_fidelity(rebuilt, u) >= 1.0 - 1e-10


def test_decompose_rejects_nonunitary():
    with pytest.raises(NotUnitaryError):
        reck_decompose(np.full((3, 3), 0.5))


def test_smooth_in_each_phase():
    # Central finite differences exist and are bounded: no kinks.
    dim = 3
    base = np.full(n_phases(dim), 0.3)
    eps = 1e-6
    for idx in range(n_phases(dim)):
        hi = base.copy()
        lo = base.copy()
        hi[idx] += eps
        lo[idx] -= eps
        grad = (compose_phases(dim, hi) - compose_phases(dim, lo)) / (2 * eps)
        assert np.all(np.isfinite(grad.view(float)))
        assert np.max(np.abs(grad)) < 10.0
