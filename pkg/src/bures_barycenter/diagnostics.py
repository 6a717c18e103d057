"""Numerical certificates for the inequalities behind the convergence rates.

Each ``check_*`` function evaluates both sides of one inequality on a
concrete instance and returns an :class:`InequalityReport`. A report is
satisfied when its margin is at least ``-CHECK_TOL * max(1, |lhs|, |rhs|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import spd
from .exceptions import NotRegular
from .geometry import (
    BuresDistribution,
    GaussianMeasure,
    generalized_geodesic_point,
    geodesic_point,
    log_map,
    exp_map,
    transport_matrices,
    w2_distance_sq,
)
from .solvers import gradient, mean_transport_matrix, objective

CHECK_TOL = 1e-8
CONVEXITY_TOL = 1e-9

# Matrices of the non-convexity example (2 x 2 covariances).
DEMO_A = np.array([[0.8, -0.4], [-0.4, 0.3]])
DEMO_B = np.array([[0.3, -0.5], [-0.5, 1.0]])
DEMO_C = np.array([[0.5, 0.5], [0.5, 0.6]])


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    margin: float
    satisfied: bool = None
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.satisfied is None:
            scale = max(1.0, abs(self.lhs), abs(self.rhs))
            self.satisfied = bool(self.margin >= -CHECK_TOL * scale)

    def to_line(self) -> str:
        """Tab-separated ``name lhs rhs margin satisfied``; floats round-trip exactly."""
        return "\t".join(
            [self.name, repr(float(self.lhs)), repr(float(self.rhs)), repr(float(self.margin)),
             "true" if self.satisfied else "false"]
        )

    @classmethod
    def from_line(cls, line: str) -> "InequalityReport":
        name, lhs, rhs, margin, ok = line.rstrip("\n").split("\t")
        return cls(name, float(lhs), float(rhs), float(margin), ok == "true")


def _require_regular(b: GaussianMeasure, zeta: float, label: str):
    if not b.in_regular_set(zeta):
        raise NotRegular(f"{label} is not in S_zeta for zeta={zeta:.6g}")


def check_pl(Q: BuresDistribution, b: GaussianMeasure, bbar: GaussianMeasure, zeta: float,
             c_pl: float = None) -> InequalityReport:
    """``||grad G(b)||_b^2 >= 2 C_PL (G(b) - G(bbar))`` with ``C_PL = zeta^2 / 4``.

    ``c_pl`` overrides the constant, which is only useful to probe how
    tight it is.
    """
    _require_regular(b, zeta, "b")
    _require_regular(bbar, zeta, "bbar")
    c = zeta**2 / 4.0 if c_pl is None else c_pl
    gap = objective(Q, b) - objective(Q, bbar)
    gnorm = gradient(Q, b).norm_sq()
    rhs = 2.0 * c * gap
    ctx = {"c_pl": c, "gap": gap, "grad_norm_sq": gnorm,
           "ratio": gnorm / (2.0 * gap) if gap > 0 else math.inf}
    return InequalityReport("pl", gnorm, rhs, gnorm - rhs, context=ctx)


def check_variance_inequality(Q, b, bbar, zeta) -> InequalityReport:
    """``G(b) - G(bbar) >= (zeta / 2) W2^2(b, bbar)``."""
    _require_regular(b, zeta, "b")
    _require_regular(bbar, zeta, "bbar")
    gap = objective(Q, b) - objective(Q, bbar)
    rhs = 0.5 * zeta * w2_distance_sq(b, bbar)
    return InequalityReport("variance", gap, rhs, gap - rhs, context={"c_var": zeta})


def check_smoothness(Q, b0, b1) -> InequalityReport:
    """Smoothness upper bound along the geodesic from ``b0`` to ``b1``.

    ``G(b1) <= G(b0) + <grad G(b0), log_{b0} b1> + W2^2(b0, b1) / 2``.
    The descent consequence ``G(b+) - G(b0) <= -||grad G(b0)||^2 / 2`` at
    ``b+ = exp_{b0}(-grad G(b0))`` is checked as well; its margin is in
    ``context["descent_margin"]`` and both must hold.
    """
    G0 = objective(Q, b0)
    grad = gradient(Q, b0)
    lhs = objective(Q, b1)
    rhs = G0 + grad.inner(log_map(b0, b1)) + 0.5 * w2_distance_sq(b0, b1)
    margin = rhs - lhs

    gnorm = grad.norm_sq()
    drop = objective(Q, exp_map(b0, -grad)) - G0
    descent_margin = -0.5 * gnorm - drop
    scale = max(1.0, abs(lhs), abs(rhs))
    ok = margin >= -CHECK_TOL * scale and descent_margin >= -CHECK_TOL * max(1.0, abs(G0))
    return InequalityReport("smoothness", lhs, rhs, margin, ok,
                            context={"descent_margin": descent_margin, "grad_norm_sq": gnorm})


def directional_derivative(Q, b0, b1) -> float:
    """``<grad G(b0), log_{b0} b1>_{b0}``: derivative of ``G`` along the geodesic at 0."""
    return gradient(Q, b0).inner(log_map(b0, b1))


def gradient_norm_along_geodesic(Q, b, bbar, s):
    """``||grad G(b)||`` in ``L^2(b_s)``, with ``b_s`` the geodesic from ``b`` to ``bbar``.

    For Gaussians this is ``tr(Sigma_s (I - M)^2) + |(I - M) m_s + c|^2``
    where ``x -> (I - M) x + c`` is the gradient vector field.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = b.dim
    V = np.eye(d) - mean_transport_matrix(Q, b)
    c = b.mean - Q.mean_of_means() - V @ b.mean
    T = transport_matrices(b.cov, bbar.cov[None])[0]
    L = (1.0 - s)[:, None, None] * np.eye(d) + s[:, None, None] * T
    covs = L @ b.cov @ L
    means = (1.0 - s)[:, None] * b.mean + s[:, None] * bbar.mean
    shift = means @ V.T + c
    sq = np.einsum("sij,jk,ki->s", covs, V, V) + np.sum(shift * shift, axis=1)
    return np.sqrt(np.clip(sq, 0.0, None))


def check_integrated_pl(Q, b, bbar, zeta, quad_nodes: int = 33) -> InequalityReport:
    """``G(b) - G(bbar) <= (2 / zeta) (int_0^1 ||grad G(b)||_{L^2(b_s)} ds)^2``.

    The integral uses composite Simpson on ``quad_nodes`` uniform nodes.
    """
    if quad_nodes < 2:
        raise ValueError("quad_nodes must be at least 2")
    _require_regular(b, zeta, "b")
    _require_regular(bbar, zeta, "bbar")
    s = np.linspace(0.0, 1.0, quad_nodes)
    integral = float(simpson(gradient_norm_along_geodesic(Q, b, bbar, s), x=s))
    gap = objective(Q, b) - objective(Q, bbar)
    rhs = 2.0 / zeta * integral**2
    return InequalityReport("integrated_pl", gap, rhs, rhs - gap,
                            context={"integral": integral, "quad_nodes": quad_nodes})


def _midpoint_convexity(values, name, context):
    values = np.asarray(values)
    n = len(values)
    worst = (math.inf, 0.0, 0.0)
    for i in range(n):
        for k in range(i + 2, n, 2):
            mid = values[(i + k) // 2]
            avg = 0.5 * (values[i] + values[k])
            if avg - mid < worst[0]:
                worst = (avg - mid, mid, avg)
    if n < 3:
        worst = (0.0, float(values[0]), float(values[0]))
    margin, lhs, rhs = worst
    ctx = dict(context, values=values.tolist())
    return InequalityReport(name, float(lhs), float(rhs), float(margin),
                            bool(margin >= -CONVEXITY_TOL), ctx)


def _generalized_curve(base, m0, m1, grid):
    s = np.linspace(0.0, 1.0, grid)
    return s, [generalized_geodesic_point(base, m0, m1, float(si)) for si in s]


def convexity_probe_opnorm(base, m0, m1, grid: int = 17) -> InequalityReport:
    """Midpoint convexity of ``s -> lambda_max(Sigma_s)`` along a generalized geodesic.

    Reduced to the covariance, which is the second-moment matrix for
    centered measures.
    """
    s, pts = _generalized_curve(base, m0, m1, grid)
    vals = [float(spd.opnorm(p.cov)) for p in pts]
    return _midpoint_convexity(vals, "convexity_opnorm", {"grid": grid})


def convexity_probe_neglogdet(base, m0, m1, grid: int = 17) -> InequalityReport:
    """Midpoint convexity of ``s -> -log det Sigma_s`` along a generalized geodesic."""
    s, pts = _generalized_curve(base, m0, m1, grid)
    vals = [-float(spd.logdet(p.cov)) for p in pts]
    return _midpoint_convexity(vals, "convexity_neglogdet", {"grid": grid})


@dataclass
class NonconvexityDemo:
    s: np.ndarray
    bures: np.ndarray
    euclidean: np.ndarray
    bures_report: InequalityReport
    euclidean_report: InequalityReport

    @property
    def reproduced(self) -> bool:
        return (not self.bures_report.satisfied) and self.euclidean_report.satisfied

    def to_csv(self) -> str:
        lines = ["s,bures_w2_sq,euclidean_w2_sq"]
        lines += [f"{s!r},{b!r},{e!r}" for s, b, e in zip(self.s.tolist(), self.bures.tolist(),
                                                           self.euclidean.tolist())]
        return "\n".join(lines) + "\n"


def nonconvexity_demo(grid: int = 101, A=DEMO_A, B=DEMO_B, C=DEMO_C) -> NonconvexityDemo:
    """Squared distance to ``C`` along the Bures geodesic and the straight segment ``A -> B``.

    The first curve fails midpoint convexity somewhere on the grid; the
    second is convex because the squared Bures distance is convex in the
    Euclidean sense.
    """
    a, b, c = GaussianMeasure(A), GaussianMeasure(B), GaussianMeasure(C)
    s = np.linspace(0.0, 1.0, grid)
    bures = np.array([w2_distance_sq(c, geodesic_point(a, b, float(si))) for si in s])
    euclid = np.array([w2_distance_sq(c, GaussianMeasure((1 - si) * A + si * B)) for si in s])
    return NonconvexityDemo(
        s, bures, euclid,
        _midpoint_convexity(bures, "nonconvexity_bures", {"grid": grid}),
        _midpoint_convexity(euclid, "nonconvexity_euclidean", {"grid": grid}),
    )


def regularity_constants(a: GaussianMeasure, b: GaussianMeasure):
    """Strong convexity and smoothness constants of the potential from ``a`` to ``b``.

    These are the extreme eigenvalues of the transport matrix. With all
    eigenvalues of both covariances in ``[lo, hi]`` and ``kappa = hi/lo``
    they lie in ``[1/kappa, kappa]``.
    """
    M = transport_matrices(a.cov, b.cov[None])[0]
    lam = spd.eig_sym(M).eigenvalues
    return float(lam[-1]), float(lam[0])


def regularity_bound_holds(a, b, tol=1e-9) -> bool:
    lam = np.concatenate([spd.eig_sym(a.cov).eigenvalues, spd.eig_sym(b.cov).eigenvalues])
    kappa = lam.max() / lam.min()
    alpha, beta = regularity_constants(a, b)
    return alpha >= 1.0 / kappa - tol and beta <= kappa + tol


# --- Monte Carlo instance generation -------------------------------------------------------


def random_orthogonal(dim: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix)."""
    Z = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(Z)
    return q * np.sign(np.diag(r))


def random_covariance(dim: int, eig_floor: float, rng, eig_ceiling: float = 1.0) -> np.ndarray:
    """Covariance with eigenvalues uniform in ``[eig_floor, eig_ceiling]`` and a random basis."""
    lam = rng.uniform(eig_floor, eig_ceiling, size=dim)
    U = random_orthogonal(dim, rng)
    return spd.symmetrize((U * lam) @ U.T)


def random_regular_distribution(dim: int, n: int, eig_floor: float, rng) -> BuresDistribution:
    """Uniform distribution over ``n`` centered Gaussians with eigenvalues in ``[eig_floor, 1]``.

    Every atom lies in ``S_zeta`` for ``zeta = eig_floor ** dim``.
    """
    return BuresDistribution(np.stack([random_covariance(dim, eig_floor, rng) for _ in range(n)]))


def trial_seeds(root_seed: int, trials: int) -> list:
    """Per-trial seeds derived from a root seed; independent of execution order."""
    return np.random.SeedSequence(root_seed).spawn(trials)
