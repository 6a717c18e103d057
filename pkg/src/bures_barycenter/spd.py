"""Dense symmetric linear algebra on covariance matrices.

All routines accept a single ``(D, D)`` matrix or a stack ``(..., D, D)``
and return symmetrized results. Eigenvalues in ``[-psd_tol, 0)`` are
treated as roundoff and clipped to zero.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import NonConvergence, NotPsd, SingularMatrix

PD_FLOOR = 1e-12
PSD_RTOL = 1e-10


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # nonincreasing along the last axis
    eigenvectors: np.ndarray  # columns are eigenvectors


def symmetrize(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def psd_tol(A_or_eigenvalues, eigenvalues=False):
    """Clipping tolerance ``1e-10 * max(1, ||A||_op)`` (per matrix in a stack)."""
    if eigenvalues:
        lam = np.asarray(A_or_eigenvalues)
        top = np.max(np.abs(lam), axis=-1)
    else:
        top = np.linalg.norm(np.asarray(A_or_eigenvalues), ord=2, axis=(-2, -1))
    return PSD_RTOL * np.maximum(1.0, top)


def eig_sym(A) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues sorted nonincreasing.

    The input is symmetrized first, so tiny asymmetries from roundoff are
    harmless. Backed by LAPACK ``syevd`` through :func:`numpy.linalg.eigh`.
    """
    A = symmetrize(A)
    if A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    try:
        lam, U = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    return EigenDecomposition(lam[..., ::-1], U[..., ::-1])


def _recompose(lam, U):
    return symmetrize((U * lam[..., None, :]) @ np.swapaxes(U, -1, -2))


def _clipped_eigenvalues(A):
    lam, U = eig_sym(A)
    tol = psd_tol(lam, eigenvalues=True)
    lam_min = lam[..., -1]
    if np.any(lam_min < -tol):
        raise NotPsd(f"matrix is not PSD: smallest eigenvalue {np.min(lam_min):.3e}")
    return np.clip(lam, 0.0, None), U


def sqrt_spd(A):
    """Principal square root of a PSD matrix."""
    lam, U = _clipped_eigenvalues(A)
    return _recompose(np.sqrt(lam), U)


def _pd_eigenvalues(A, floor):
    lam, U = eig_sym(A)
    if np.any(lam[..., -1] < floor):
        raise SingularMatrix(
            f"matrix is not positive definite: smallest eigenvalue "
            f"{np.min(lam[..., -1]):.3e} < {floor:.1e}"
        )
    return lam, U


def invsqrt_spd(A, floor=PD_FLOOR):
    lam, U = _pd_eigenvalues(A, floor)
    return _recompose(1.0 / np.sqrt(lam), U)


def sqrt_and_invsqrt(A, floor=PD_FLOOR):
    """Return ``(A^{1/2}, A^{-1/2})`` from a single eigendecomposition."""
    lam, U = _pd_eigenvalues(A, floor)
    root = np.sqrt(lam)
    return _recompose(root, U), _recompose(1.0 / root, U)


def logdet(A, floor=PD_FLOOR):
    """Sum of log-eigenvalues; never forms the determinant itself."""
    lam, _ = _pd_eigenvalues(A, floor)
    return np.sum(np.log(lam), axis=-1)


def opnorm(A):
    """Largest eigenvalue of a symmetric PSD matrix."""
    return eig_sym(A).eigenvalues[..., 0]


def lambda_min(A):
    return eig_sym(A).eigenvalues[..., -1]


def is_spd(A, floor=PD_FLOOR):
    return bool(np.all(lambda_min(A) >= floor))
