"""scikit-learn style estimator for Bures-Wasserstein barycenters.

Samples are covariance matrices: ``X`` has shape ``(n_samples, D, D)``,
optionally paired with ``means`` of shape ``(n_samples, D)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_covariances, check_sample_weight
from .geometry import BuresDistribution, TangentMap, exp_map, transport_matrices
from .schedules import StepSchedule, parse_schedule
from .solvers import (
    averaged_sgd,
    default_init,
    estimate_c_pl,
    gd,
    objective,
    sgd,
    sgd_with_replacement,
)

SOLVERS = ("gd", "sgd", "sgd_replacement", "averaged_sgd")


class BuresBarycenter(TransformerMixin, BaseEstimator):
    """Wasserstein barycenter of Gaussian measures.

    Parameters
    ----------
    solver : {"gd", "sgd", "sgd_replacement", "averaged_sgd"}
        ``gd`` is full-batch gradient descent with unit step. The stochastic
        solvers make a single pass over the samples in order (starting
        from the first one), or draw ``n_iter`` samples with replacement.
    max_iter : int
        Iteration cap for ``gd``.
    tol : float
        ``gd`` stops when the squared gradient norm drops below ``tol``.
    schedule : StepSchedule or str, optional
        Step sizes for the stochastic solvers, as an object or in the
        ``"exp:c=0.7"`` mini-language. Defaults to the PL schedule with
        constant ``zeta^2 / 4`` estimated from the data (capped at 1).
    n_iter : int, optional
        Draws for ``sgd_replacement``; defaults to ``10 * n_samples``.
    random_state : int, optional
        Seed for ``sgd_replacement``.

    Attributes
    ----------
    barycenter_ : GaussianMeasure
    covariance_ : ndarray of shape (D, D)
    mean_ : ndarray of shape (D,)
    trace_ : SolverTrace
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, solver="gd", max_iter=200, tol=1e-20, schedule=None, n_iter=None,
                 random_state=None):
        self.solver = solver
        self.max_iter = max_iter
        self.tol = tol
        self.schedule = schedule
        self.n_iter = n_iter
        self.random_state = random_state

    def _distribution(self, X, sample_weight=None, means=None):
        X = check_covariances(X)
        w = check_sample_weight(sample_weight, X.shape[0])
        return BuresDistribution(X, w, means)

    def _schedule(self, Q):
        if self.schedule is None:
            return StepSchedule.paper_pl(min(1.0, estimate_c_pl(Q)))
        if isinstance(self.schedule, str):
            return parse_schedule(self.schedule)
        return self.schedule

    def fit(self, X, y=None, sample_weight=None, means=None):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        Q = self._distribution(X, sample_weight, means)
        if self.solver == "gd":
            res = gd(Q, default_init(Q), max_iters=self.max_iter, tol=self.tol)
        elif self.solver == "sgd_replacement":
            n_iter = 10 * Q.n_atoms if self.n_iter is None else self.n_iter
            res = sgd_with_replacement(Q, schedule=self._schedule(Q), iters=n_iter,
                                       seed=self.random_state)
        else:
            run = sgd if self.solver == "sgd" else averaged_sgd
            atoms = Q.atoms
            res = run(atoms[1:], atoms[0], self._schedule(Q))
        self.barycenter_ = res.final
        self.covariance_ = np.array(res.final.cov)
        self.mean_ = np.array(res.final.mean)
        self.trace_ = res.trace
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.dim_ = Q.dim
        return self

    def transform(self, X, means=None):
        """Log map of each sample at the barycenter.

        Returns the symmetric matrices ``T_{barycenter -> sample} - I``,
        shape ``(n_samples, D, D)``. Mean offsets are not included.
        """
        check_is_fitted(self, "barycenter_")
        X = check_covariances(X)
        self._check_dim(X)
        return transport_matrices(self.covariance_, X) - np.eye(self.dim_)

    def inverse_transform(self, V):
        """Exponential map at the barycenter of each tangent matrix in ``V``."""
        check_is_fitted(self, "barycenter_")
        V = np.asarray(V, dtype=float)
        if V.ndim == 2:
            V = V[None]
        self._check_dim(V)
        return np.stack([exp_map(self.barycenter_, TangentMap(self.barycenter_, v)).cov for v in V])

    def score(self, X, y=None, sample_weight=None, means=None):
        """Negative barycenter objective of the fitted measure on ``X``."""
        check_is_fitted(self, "barycenter_")
        Q = self._distribution(X, sample_weight, means)
        self._check_dim(Q.covs)
        return -objective(Q, self.barycenter_)

    def _check_dim(self, X):
        if X.shape[-1] != self.dim_:
            raise ValueError(f"X has dimension {X.shape[-1]}, estimator was fitted with {self.dim_}")
