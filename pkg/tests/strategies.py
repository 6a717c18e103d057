"""Hypothesis strategies and instance builders shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from bures_barycenter.diagnostics import random_covariance, random_orthogonal
from bures_barycenter.geometry import GaussianMeasure

dims = st.integers(min_value=1, max_value=4)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def spd_matrices(draw, dim=None, lo=0.1, hi=3.0):
    d = draw(dims) if dim is None else dim
    rng = np.random.default_rng(draw(seeds))
    lam = np.array([draw(st.floats(lo, hi)) for _ in range(d)])
    U = random_orthogonal(d, rng)
    return (U * lam) @ U.T


@st.composite
def measure_pairs(draw, lo=0.25, hi=1.0, with_means=False):
    d = draw(dims)
    rng = np.random.default_rng(draw(seeds))
    return tuple(random_measure(d, rng, lo, hi, with_means) for _ in range(2))


def random_measure(dim, rng, lo=0.25, hi=1.0, with_means=False):
    mean = rng.standard_normal(dim) if with_means else None
    return GaussianMeasure(random_covariance(dim, lo, rng, hi), mean)
