import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def well_conditioned(rng, n, p, q, coupling=0.7):
    """Paired samples with a shared latent part, so every CCA direction is identifiable."""
    k = min(p, q)
    z = rng.standard_normal((n, k))
    X = rng.standard_normal((n, p))
    Y = rng.standard_normal((n, q))
    X[:, :k] += coupling * z * np.linspace(1.5, 0.5, k)
    Y[:, :k] += coupling * z
    X = X @ (np.eye(p) + 0.3 / np.sqrt(p) * rng.standard_normal((p, p)))
    return X, Y
