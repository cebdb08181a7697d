import numpy as np
import pytest

from photon_overlaps.core_model import OverlapParameters, overlap_matrix


def random_gram(rng, n):
    """Random valid distinguishability matrix of ``n`` photons."""
    dim = rng.integers(1, n + 1)
    v = rng.standard_normal((dim, n)) + 1j * rng.standard_normal((dim, n))
    v /= np.linalg.norm(v, axis=0)
    return v.conj().T @ v


def random_overlaps(rng, n=3) -> OverlapParameters:
    return OverlapParameters.from_matrix(random_gram(rng, n))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))


def interior_overlaps(rng, lo=0.1, hi=0.9, margin=0.02) -> OverlapParameters:
    """Three-photon overlaps strictly inside the physical region."""
    while True:
        mags = rng.uniform(lo, hi, 3)
        phase = rng.uniform(-np.pi, np.pi)
        s = overlap_matrix(mags, (0.0, phase, 0.0))
        if np.linalg.eigvalsh(s).min() > margin:
            return OverlapParameters.three(*mags, phase)
