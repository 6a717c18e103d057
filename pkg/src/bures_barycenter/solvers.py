"""First-order solvers for the Bures-Wasserstein barycenter.

The objective is ``G(b) = 1/2 sum_i w_i W2^2(b, mu_i)`` and its Wasserstein
gradient at ``b`` is ``-sum_i w_i (T_{b -> mu_i} - id)``. Gradient descent
uses a unit step, which turns one iteration into the covariance update
``S_t = sum_i w_i M_i``, ``Sigma_t = S_t Sigma_{t-1} S_t``. SGD moves along
the geodesic from the current iterate towards one sample at a time.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import spd
from .exceptions import DimensionMismatch, ScheduleExhausted
from .geometry import (
    BuresDistribution,
    GaussianMeasure,
    TangentMap,
    transport_matrices,
    w2_distance_sq,
    w2_sq_many,
)
from .schedules import StepSchedule, step_size

TRACE_COLUMNS = ("iter", "objective", "grad_norm_sq", "w2_sq_to_ref", "step_size")


@dataclass
class SolverTrace:
    """Per-iteration record; row ``t`` describes iterate ``b_t``.

    ``step_size[t]`` is the step used to move from ``b_t`` to ``b_{t+1}``
    (NaN on the last row of a stochastic run). Quantities that were not
    requested are stored as NaN.
    """

    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    w2_sq_to_ref: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def append(self, t, objective=math.nan, grad_norm_sq=math.nan, w2_sq_to_ref=math.nan,
               step_size=math.nan, wall_time=math.nan):
        self.iters.append(int(t))
        self.objective.append(float(objective))
        self.grad_norm_sq.append(float(grad_norm_sq))
        self.w2_sq_to_ref.append(float(w2_sq_to_ref))
        self.step_size.append(float(step_size))
        self.wall_time.append(float(wall_time))

    def __len__(self):
        return len(self.iters)

    def column(self, name) -> np.ndarray:
        return np.asarray(getattr(self, "iters" if name == "iter" else name), dtype=float)

    def to_csv(self, dest=None) -> str:
        """Write the trace as CSV (``iter,objective,grad_norm_sq,w2_sq_to_ref,step_size``).

        Floats are written with ``repr`` so they read back bit-identically.
        Returns the CSV text; also writes it to ``dest`` when given.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in zip(self.iters, self.objective, self.grad_norm_sq, self.w2_sq_to_ref, self.step_size):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "SolverTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        trace = cls()
        for r in rows:
            trace.append(int(r["iter"]), *(float(r[c]) for c in TRACE_COLUMNS[1:]))
        return trace


@dataclass
class SolverResult:
    final: GaussianMeasure
    trace: SolverTrace
    converged: bool
    iterations: int
    info: dict = field(default_factory=dict)


def _check_compatible(Q: BuresDistribution, b: GaussianMeasure):
    if Q.dim != b.dim:
        raise DimensionMismatch(f"distribution has dim {Q.dim}, measure has dim {b.dim}")


def _fsum_weighted(weights, values) -> float:
    return math.fsum(float(w) * float(v) for w, v in zip(weights, values))


def _weighted_matrix_sum(weights, mats):
    # fixed left-to-right order, compensated per entry, so results are bit-stable
    flat = (weights[:, None] * mats.reshape(len(weights), -1)).T
    return np.array([math.fsum(col) for col in flat]).reshape(mats.shape[1:])


def objective(Q: BuresDistribution, b: GaussianMeasure) -> float:
    """Barycenter functional ``1/2 sum_i w_i W2^2(b, mu_i)``."""
    _check_compatible(Q, b)
    d2 = w2_sq_many(b.mean, b.cov, Q.means, Q.covs)
    return 0.5 * _fsum_weighted(Q.weights, d2)


def variance(Q: BuresDistribution, bbar: GaussianMeasure) -> float:
    """``var(Q) = sum_i w_i W2^2(bbar, mu_i)``, i.e. twice the objective at ``bbar``."""
    return 2.0 * objective(Q, bbar)


def mean_transport_matrix(Q: BuresDistribution, b: GaussianMeasure) -> np.ndarray:
    """``sum_i w_i M_i`` with ``M_i`` the transport matrix from ``b`` to atom ``i``."""
    _check_compatible(Q, b)
    return spd.symmetrize(_weighted_matrix_sum(Q.weights, transport_matrices(b.cov, Q.covs)))


def gradient(Q: BuresDistribution, b: GaussianMeasure) -> TangentMap:
    """Wasserstein gradient of the barycenter functional at ``b``.

    Returned as the tangent vector ``x -> (I - M) (x - m_b) + (m_b - m_bar)``
    where ``M`` is the weighted mean transport matrix and ``m_bar`` the
    weighted mean of the atom means.
    """
    Mbar = mean_transport_matrix(Q, b)
    return TangentMap(b, np.eye(b.dim) - Mbar, b.mean - Q.mean_of_means())


def fixed_point_residual(Q: BuresDistribution, b: GaussianMeasure) -> float:
    """Distance of ``b`` from the barycenter fixed-point equation.

    ``||Sigma_b - sum_i w_i (Sigma_b^{1/2} Sigma_i Sigma_b^{1/2})^{1/2}||_op``
    plus the Euclidean error of the mean.
    """
    _check_compatible(Q, b)
    root, _ = spd.sqrt_and_invsqrt(b.cov)
    K = _weighted_matrix_sum(Q.weights, spd.sqrt_spd(root @ Q.covs @ root))
    R = spd.symmetrize(b.cov - K)
    cov_res = float(np.max(np.abs(spd.eig_sym(R).eigenvalues)))
    return cov_res + float(np.linalg.norm(b.mean - Q.mean_of_means()))


def default_init(Q: BuresDistribution) -> GaussianMeasure:
    """Atom of largest weight, lowest index on ties."""
    return Q.atom(int(np.argmax(Q.weights)))


def estimate_c_pl(Q: BuresDistribution) -> float:
    """PL constant ``zeta^2 / 4`` certified for zeta-regular distributions."""
    return Q.zeta() ** 2 / 4.0


def _ref_dist(b, reference):
    return math.nan if reference is None else w2_distance_sq(b, reference)


def gd(
    Q: BuresDistribution,
    init: GaussianMeasure = None,
    max_iters: int = 200,
    tol: float = 1e-12,
    reference: GaussianMeasure = None,
) -> SolverResult:
    """Bures-Wasserstein gradient descent with unit step.

    Stops once ``||grad G(b_t)||^2_{b_t} <= tol`` or after ``max_iters``
    updates. The mean is set to its closed-form optimum, the weighted
    mean of atom means, in the first update.

    Parameters
    ----------
    Q : BuresDistribution
    init : GaussianMeasure, optional
        Starting point; must be positive definite. Defaults to
        :func:`default_init`.
    max_iters : int
    tol : float
        Threshold on the squared gradient norm.
    reference : GaussianMeasure, optional
        If given, ``W2^2(b_t, reference)`` is recorded in the trace.

    Returns
    -------
    SolverResult
    """
    b = default_init(Q) if init is None else init
    _check_compatible(Q, b)
    mbar = Q.mean_of_means()
    trace = SolverTrace()
    start = time.perf_counter()
    converged = False
    t = 0
    while True:
        Mbar = mean_transport_matrix(Q, b)
        V = Mbar - np.eye(b.dim)
        dm = mbar - b.mean
        gnorm = float(np.trace(b.cov @ V @ V) + dm @ dm)
        trace.append(t, objective(Q, b), gnorm, _ref_dist(b, reference), 1.0,
                     time.perf_counter() - start)
        if gnorm <= tol:
            converged = True
            break
        if t >= max_iters:
            break
        b = GaussianMeasure._trusted(mbar.copy(), Mbar @ b.cov @ Mbar)
        t += 1
    return SolverResult(b, trace, converged, t)


def barycenter(Q: BuresDistribution, tol: float = 1e-24, max_iters: int = 500) -> GaussianMeasure:
    """Barycenter of ``Q`` by gradient descent to a tight tolerance.

    ``tol`` bounds the squared gradient norm; the default sits just above
    the roundoff floor, so the covariance is accurate to about 1e-12.
    """
    return gd(Q, tol=tol, max_iters=max_iters).final


def sgd_step(b: GaussianMeasure, sample: GaussianMeasure, eta: float) -> GaussianMeasure:
    """Move ``b`` a fraction ``eta`` of the way along the geodesic to ``sample``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"step size must lie in [0, 1], got {eta}")
    if eta == 0.0:
        return b
    M = transport_matrices(b.cov, sample.cov[None])[0]
    L = (1.0 - eta) * np.eye(b.dim) + eta * M
    return GaussianMeasure._trusted((1.0 - eta) * b.mean + eta * sample.mean, L @ b.cov @ L)


def _as_stream(stream) -> list:
    if isinstance(stream, BuresDistribution):
        return stream.atoms
    return list(stream)


def _run_sgd(stream, init, schedule, Q, reference, average):
    stream = _as_stream(stream)
    if schedule.finite and len(schedule) < len(stream):
        raise ScheduleExhausted(f"schedule has {len(schedule)} steps for a stream of {len(stream)}")
    b = init
    avg = init
    trace = SolverTrace()
    start = time.perf_counter()

    def record(t, point, eta):
        if Q is not None:
            g = gradient(Q, point).norm_sq()
            trace.append(t, objective(Q, point), g, _ref_dist(point, reference), eta,
                         time.perf_counter() - start)
        else:
            trace.append(t, w2_sq_to_ref=_ref_dist(point, reference), step_size=eta,
                         wall_time=time.perf_counter() - start)

    for t, sample in enumerate(stream):
        if sample.dim != init.dim:
            raise DimensionMismatch(f"stream element {t} has dim {sample.dim}, expected {init.dim}")
        eta = step_size(schedule, t)
        record(t, avg if average else b, eta)
        b = sgd_step(b, sample, eta)
        if average:
            # averaged iterate moves 1/(t+1) of the way towards the new raw iterate
            avg = sgd_step(avg, b, 1.0 / (t + 1))
    n = len(stream)
    record(n, avg if average else b, math.nan)
    info = {"last_iterate": b} if average else {}
    return SolverResult(avg if average else b, trace, True, n, info)


def sgd(
    stream: Sequence[GaussianMeasure] | BuresDistribution,
    init: GaussianMeasure,
    schedule: StepSchedule,
    Q: BuresDistribution = None,
    reference: GaussianMeasure = None,
) -> SolverResult:
    """Single-pass stochastic gradient descent over ``stream``.

    Each stream element is consumed once, in order:
    ``b_{t+1} = [(1 - eta_t) id + eta_t T_{b_t -> mu_{t+1}}]_# b_t``.
    Pass ``Q`` to record objective and gradient norm in the trace (costly
    for large ``Q``) and ``reference`` to record the squared distance to it.
    """
    return _run_sgd(stream, init, schedule, Q, reference, average=False)


def averaged_sgd(
    stream: Sequence[GaussianMeasure] | BuresDistribution,
    init: GaussianMeasure,
    schedule: StepSchedule,
    Q: BuresDistribution = None,
    reference: GaussianMeasure = None,
) -> SolverResult:
    """SGD with geodesic iterate averaging.

    The running average starts at ``init`` and moves a fraction
    ``1/(t+1)`` of the way to each new SGD iterate. The trace and
    ``final`` describe the averaged sequence; the raw last iterate is in
    ``info["last_iterate"]``.
    """
    return _run_sgd(stream, init, schedule, Q, reference, average=True)


def sample_indices(Q: BuresDistribution, iters: int, seed) -> np.ndarray:
    """Atom indices drawn i.i.d. from the weights of ``Q``."""
    rng = np.random.default_rng(seed)
    return rng.choice(Q.n_atoms, size=iters, p=Q.weights)


def sgd_with_replacement(
    Q: BuresDistribution,
    init: GaussianMeasure = None,
    schedule: StepSchedule = None,
    iters: int = 1000,
    seed=0,
    reference: GaussianMeasure = None,
    record_objective: bool = False,
    average: bool = False,
) -> SolverResult:
    """SGD on the empirical distribution ``Q``, resampling an atom at every step."""
    if schedule is None:
        schedule = StepSchedule.paper_pl(min(1.0, estimate_c_pl(Q)))
    b0 = default_init(Q) if init is None else init
    _check_compatible(Q, b0)
    idx = sample_indices(Q, iters, seed)
    stream = [Q.atom(int(i)) for i in idx]
    res = _run_sgd(stream, b0, schedule, Q if record_objective else None, reference, average)
    res.info["indices"] = idx
    return res
