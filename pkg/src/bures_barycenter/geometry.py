"""Gaussian measures and the Bures-Wasserstein geometry between them.

Tangent vectors are affine vector fields ``x -> V (x - m) + shift`` at a
base Gaussian ``N(m, S)``, where ``V`` is symmetric. Their squared norm in
``L^2(base)`` is ``tr(S V^2) + |shift|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from . import spd
from ._validation import check_covariance, check_mean
from .exceptions import DimensionMismatch, ExpNotAdmissible, NotRegular

REGULARITY_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """Gaussian measure ``N(mean, cov)`` on ``R^D``.

    ``cov`` is validated (symmetric up to roundoff, PSD) and stored
    symmetrized. ``mean`` defaults to zero.
    """

    cov: np.ndarray
    mean: np.ndarray = None

    def __post_init__(self):
        cov = check_covariance(self.cov)
        mean = np.zeros(cov.shape[0]) if self.mean is None else check_mean(self.mean, cov.shape[0])
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "mean", _frozen(mean))

    @classmethod
    def _trusted(cls, mean, cov):
        # Skips validation; for solver internals whose outputs are symmetric by construction.
        obj = object.__new__(cls)
        object.__setattr__(obj, "cov", _frozen(spd.symmetrize(cov)))
        object.__setattr__(obj, "mean", _frozen(mean))
        return obj

    @classmethod
    def centered(cls, cov):
        return cls(cov)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def logdet(self) -> float:
        return float(spd.logdet(self.cov))

    def opnorm(self) -> float:
        return float(spd.opnorm(self.cov))

    def in_regular_set(self, zeta: float, tol: float = REGULARITY_TOL) -> bool:
        """Membership in ``S_zeta``: ``||cov||_op <= 1`` and ``det cov >= zeta``."""
        lam = spd.eig_sym(self.cov).eigenvalues
        if lam[-1] <= 0:
            return False
        return bool(lam[0] <= 1.0 + tol and np.sum(np.log(lam)) >= np.log(zeta) - tol)

    def scaled(self, alpha: float) -> "GaussianMeasure":
        """Law of ``alpha * X`` for ``X ~ self``."""
        return GaussianMeasure._trusted(alpha * self.mean, alpha**2 * self.cov)

    def __eq__(self, other):
        if not isinstance(other, GaussianMeasure):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    __hash__ = None

    def __repr__(self):
        return f"GaussianMeasure(dim={self.dim}, mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentMap:
    """Tangent vector ``x -> sym @ (x - base.mean) + shift`` at ``base``."""

    base: GaussianMeasure
    sym: np.ndarray
    shift: np.ndarray = None

    def __post_init__(self):
        sym = np.asarray(self.sym, dtype=float)
        d = self.base.dim
        if sym.shape != (d, d):
            raise DimensionMismatch(f"tangent matrix has shape {sym.shape}, base has dim {d}")
        shift = np.zeros(d) if self.shift is None else check_mean(self.shift, d)
        object.__setattr__(self, "sym", _frozen(spd.symmetrize(sym)))
        object.__setattr__(self, "shift", _frozen(shift))

    def inner(self, other: "TangentMap") -> float:
        """``L^2(base)`` inner product of two tangent vectors at the same base."""
        return float(np.trace(self.base.cov @ self.sym @ other.sym) + self.shift @ other.shift)

    def norm_sq(self) -> float:
        return self.inner(self)

    def is_exp_admissible(self) -> bool:
        lam = spd.eig_sym(np.eye(self.base.dim) + self.sym).eigenvalues
        return bool(lam[-1] >= -spd.psd_tol(lam, eigenvalues=True))

    def __neg__(self):
        return TangentMap(self.base, -self.sym, -self.shift)

    def __mul__(self, c: float):
        return TangentMap(self.base, c * self.sym, c * self.shift)

    __rmul__ = __mul__


class AffineMap(NamedTuple):
    """The map ``x -> matrix @ x + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x):
        return np.asarray(x) @ self.matrix.T + self.offset


@dataclass(frozen=True, eq=False)
class BuresDistribution:
    """Finitely supported distribution over Gaussian measures.

    Atoms are stored as stacked arrays: ``means`` of shape ``(n, D)`` and
    ``covs`` of shape ``(n, D, D)``.
    """

    covs: np.ndarray
    weights: np.ndarray = None
    means: np.ndarray = None

    def __post_init__(self):
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim != 3 or covs.shape[1] != covs.shape[2]:
            raise DimensionMismatch(f"expected covariances of shape (n, D, D), got {covs.shape}")
        n, d, _ = covs.shape
        if n == 0:
            raise ValueError("a distribution needs at least one atom")
        covs = np.stack([check_covariance(c, name=f"atom {i}") for i, c in enumerate(covs)])
        if self.weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if weights.shape != (n,):
                raise DimensionMismatch(f"{weights.size} weights for {n} atoms")
            if np.any(weights <= 0):
                raise ValueError("weights must be positive")
            if abs(weights.sum() - 1.0) > 1e-9:
                raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
            weights = weights / weights.sum()
        if self.means is None:
            means = np.zeros((n, d))
        else:
            means = np.asarray(self.means, dtype=float).reshape(n, -1)
            if means.shape != (n, d):
                raise DimensionMismatch(f"means have shape {means.shape}, expected {(n, d)}")
        object.__setattr__(self, "covs", _frozen(covs))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "means", _frozen(means))

    @classmethod
    def from_atoms(cls, atoms: Sequence[GaussianMeasure], weights=None):
        dims = {a.dim for a in atoms}
        if len(dims) != 1:
            raise DimensionMismatch(f"atoms have mixed dimensions {sorted(dims)}")
        return cls(
            np.stack([a.cov for a in atoms]),
            weights=weights,
            means=np.stack([a.mean for a in atoms]),
        )

    @property
    def n_atoms(self) -> int:
        return self.covs.shape[0]

    @property
    def dim(self) -> int:
        return self.covs.shape[1]

    def atom(self, i: int) -> GaussianMeasure:
        return GaussianMeasure._trusted(self.means[i], self.covs[i])

    @property
    def atoms(self) -> list:
        return [self.atom(i) for i in range(self.n_atoms)]

    @property
    def centered(self) -> bool:
        return not np.any(self.means)

    def mean_of_means(self) -> np.ndarray:
        return self.weights @ self.means

    @cached_property
    def _logdets(self):
        return spd.logdet(self.covs)

    def logdets(self) -> np.ndarray:
        return self._logdets

    def zeta(self) -> float:
        """Smallest atom determinant, computed through log-determinants."""
        return float(np.exp(np.min(self.logdets())))

    def regularity_violations(self, zeta: float, tol: float = REGULARITY_TOL) -> list:
        """Indices and reasons of atoms outside ``S_zeta``."""
        out = []
        lam = spd.eig_sym(self.covs).eigenvalues
        with np.errstate(divide="ignore", invalid="ignore"):
            lds = np.where(lam[:, -1] > 0, np.sum(np.log(np.clip(lam, 1e-300, None)), axis=-1), -np.inf)
        for i, (nrm, ld) in enumerate(zip(lam[:, 0], lds)):
            if nrm > 1.0 + tol:
                out.append((i, f"||cov||_op = {nrm:.6g} > 1"))
            elif ld < np.log(zeta) - tol:
                out.append((i, f"det cov = {np.exp(ld):.6g} < zeta = {zeta:.6g}"))
        return out

    def is_zeta_regular(self, zeta: float, tol: float = REGULARITY_TOL) -> bool:
        return not self.regularity_violations(zeta, tol)

    def check_zeta_regular(self, zeta: float):
        bad = self.regularity_violations(zeta)
        if bad:
            i, why = bad[0]
            raise NotRegular(f"atom {i} is not in S_zeta: {why}", index=i)

    def __eq__(self, other):
        if not isinstance(other, BuresDistribution):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("covs", "weights", "means"))

    __hash__ = None

    def scaled(self, alpha: float) -> "BuresDistribution":
        return BuresDistribution(alpha**2 * self.covs, self.weights, alpha * self.means)


def _matrix_and_offset(src_mean, src_cov, dst_means, dst_covs):
    root, iroot = spd.sqrt_and_invsqrt(src_cov)
    inner = spd.sqrt_spd(root @ dst_covs @ root)
    M = spd.symmetrize(iroot @ inner @ iroot)
    offset = dst_means - M @ src_mean
    return M, offset


def transport_matrices(src_cov, dst_covs):
    """Stack of transport matrices from ``N(0, src_cov)`` to each ``N(0, dst_covs[i])``.

    ``M_i = S^{-1/2} (S^{1/2} S_i S^{1/2})^{1/2} S^{-1/2}``; a single
    eigendecomposition of ``src_cov`` is shared across the stack.
    """
    root, iroot = spd.sqrt_and_invsqrt(src_cov)
    return spd.symmetrize(iroot @ spd.sqrt_spd(root @ dst_covs @ root) @ iroot)


def transport_map(src: GaussianMeasure, dst: GaussianMeasure) -> AffineMap:
    """Optimal transport map between two Gaussians as an affine map.

    Raises
    ------
    SingularMatrix
        If ``src.cov`` is not strictly positive definite.
    """
    _check_dims(src, dst)
    M, v = _matrix_and_offset(src.mean, src.cov, dst.mean, dst.cov)
    return AffineMap(M, v)


def w2_sq_many(mean, cov, means, covs):
    """Squared W2 from ``N(mean, cov)`` to every Gaussian of a stack.

    Uses ``W2^2 = min_U ||A - B U||_F^2`` with ``A``, ``B`` the square
    roots and ``U`` the polar factor of ``B^T A``. The difference is
    formed explicitly, so nearby measures do not suffer the cancellation
    of the trace formula.
    """
    A = spd.sqrt_spd(cov)
    B = spd.sqrt_spd(covs)
    P, _, Rt = np.linalg.svd(np.swapaxes(B, -1, -2) @ A)
    diff = A - B @ (P @ Rt)
    d2 = np.sum(diff * diff, axis=(-2, -1))
    dm = means - mean
    return d2 + np.sum(dm * dm, axis=-1)


def w2_distance_sq(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Squared 2-Wasserstein distance between two Gaussians (closed form)."""
    _check_dims(a, b)
    return float(w2_sq_many(a.mean, a.cov, b.mean[None], b.cov[None])[0])


def w2_distance(a: GaussianMeasure, b: GaussianMeasure) -> float:
    return float(np.sqrt(w2_distance_sq(a, b)))


def log_map(base: GaussianMeasure, target: GaussianMeasure) -> TangentMap:
    """``T_{base -> target} - id`` as a tangent vector at ``base``."""
    _check_dims(base, target)
    M = transport_matrices(base.cov, target.cov[None])[0]
    return TangentMap(base, M - np.eye(base.dim), target.mean - base.mean)


def exp_map(base: GaussianMeasure, v: TangentMap) -> GaussianMeasure:
    """Pushforward of ``base`` under ``id + v``.

    The covariance becomes ``(I + V) S (I + V)`` and the mean moves by
    ``v.shift``.

    Raises
    ------
    ExpNotAdmissible
        If ``I + V`` has an eigenvalue below ``-psd_tol``.
    """
    if v.base.dim != base.dim:
        raise DimensionMismatch(f"tangent vector of dim {v.base.dim} at base of dim {base.dim}")
    step = np.eye(base.dim) + v.sym
    lam = spd.eig_sym(step).eigenvalues
    if lam[-1] < -spd.psd_tol(lam, eigenvalues=True):
        raise ExpNotAdmissible(f"I + V has smallest eigenvalue {lam[-1]:.3e}")
    return GaussianMeasure._trusted(base.mean + v.shift, step @ base.cov @ step)


def velocity_to_tangent(base: GaussianMeasure, X) -> TangentMap:
    """Convert a covariance velocity ``X`` into the map form of a tangent vector.

    A symmetric ``X`` is the derivative of the covariance along a curve
    through ``base``. The same direction, written as the vector field
    ``x -> V (x - m)``, has ``V`` solving the Lyapunov equation
    ``Sigma V + V Sigma = X``; at ``Sigma = I`` this is ``V = X / 2``. With
    this convention ``exp_map(base, velocity_to_tangent(base, X))`` has
    covariance ``Sigma + X + V Sigma V``.
    """
    X = spd.symmetrize(X)
    lam, U = spd.eig_sym(base.cov)
    Xt = U.T @ X @ U
    V = U @ (Xt / (lam[:, None] + lam[None, :])) @ U.T
    return TangentMap(base, V)


def _check_s(s):
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter must lie in [0, 1], got {s}")


def geodesic_point(a: GaussianMeasure, b: GaussianMeasure, s: float) -> GaussianMeasure:
    """McCann interpolant ``((1-s) id + s T_{a->b})_# a``."""
    _check_s(s)
    _check_dims(a, b)
    if s == 0.0:
        return a
    M = transport_matrices(a.cov, b.cov[None])[0]
    L = (1.0 - s) * np.eye(a.dim) + s * M
    return GaussianMeasure._trusted((1.0 - s) * a.mean + s * b.mean, L @ a.cov @ L)


def generalized_geodesic_point(
    base: GaussianMeasure, m0: GaussianMeasure, m1: GaussianMeasure, s: float
) -> GaussianMeasure:
    """``((1-s) T_{base->m0} + s T_{base->m1})_# base``."""
    _check_s(s)
    _check_dims(base, m0)
    _check_dims(base, m1)
    M0, M1 = transport_matrices(base.cov, np.stack([m0.cov, m1.cov]))
    L = (1.0 - s) * M0 + s * M1
    mean = (1.0 - s) * m0.mean + s * m1.mean
    return GaussianMeasure._trusted(mean, L @ base.cov @ L)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
