"""Input validation helpers used by constructors, estimators and file loaders."""

from __future__ import annotations

import numpy as np

from . import spd
from .exceptions import DimensionMismatch, NotPsd, NotSymmetric

SYM_RTOL = 1e-9


def _prefix(name):
    return f"{name}: " if name else ""


def check_covariance(cov, name=None, sym_rtol=SYM_RTOL):
    """Validate one covariance matrix and return it symmetrized.

    Finite entries, square shape, asymmetry at most
    ``sym_rtol * max(1, max|entry|)`` and no eigenvalue below ``-psd_tol``.
    """
    cov = np.array(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] == 0:
        raise DimensionMismatch(f"{_prefix(name)}covariance must be a non-empty square matrix, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError(f"{_prefix(name)}covariance has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(cov))))
    asym = float(np.max(np.abs(cov - cov.T)))
    if asym > sym_rtol * scale:
        raise NotSymmetric(f"{_prefix(name)}covariance is not symmetric (max |C - C^T| = {asym:.3e})")
    cov = spd.symmetrize(cov)
    lam = spd.eig_sym(cov).eigenvalues
    if lam[-1] < -spd.psd_tol(lam, eigenvalues=True):
        raise NotPsd(f"{_prefix(name)}covariance is not PSD (smallest eigenvalue {lam[-1]:.3e})")
    return cov


def check_mean(mean, dim, name=None):
    mean = np.array(mean, dtype=float).reshape(-1)
    if mean.shape != (dim,):
        raise DimensionMismatch(f"{_prefix(name)}mean has length {mean.size}, expected {dim}")
    if not np.all(np.isfinite(mean)):
        raise ValueError(f"{_prefix(name)}mean has non-finite entries")
    return mean


def check_covariances(X, name="X"):
    """Validate a stack of covariance matrices, shape ``(n, D, D)``.

    A single ``(D, D)`` matrix is promoted to a stack of one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise DimensionMismatch(f"{name} must have shape (n_samples, D, D), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return np.stack([check_covariance(c, name=f"{name}[{i}]") for i, c in enumerate(X)])


def check_sample_weight(sample_weight, n):
    if sample_weight is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(sample_weight, dtype=float).reshape(-1)
    if w.shape != (n,):
        raise DimensionMismatch(f"sample_weight has length {w.size}, expected {n}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("sample_weight must be positive and finite")
    return w / w.sum()
