import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex_2x2(rng, scale=1.0):
    return scale * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))


def random_lossy_block(rng, dim=4):
    """2x2 block of a random lossy transfer matrix (Haar + uniform losses)."""
    from itomo.bench import generate_instance

    seed = int(rng.integers(2 ** 31))
    inst = generate_instance(dim, seed)
    from itomo.optics import ModeQuad, apply_losses, submatrix

    m = apply_losses(inst.u_true, inst.loss)
    modes = rng.choice(dim, size=4, replace=False) + 1
    quad = ModeQuad(int(modes[0]), int(modes[1]), int(modes[2]), int(modes[3]))
    return submatrix(m, quad)
