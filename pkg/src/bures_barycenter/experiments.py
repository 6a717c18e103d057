"""Replicated simulation studies with a known barycenter.

Datasets are drawn as ``Sigma_i = exp_{Sigma*}(sym(A_i))`` where ``A_i`` has
i.i.d. ``N(0, sigma2)`` entries and ``sym(A) = (A + A^T) / 2``. The
symmetric matrix ``sym(A_i)`` is a covariance velocity; it is converted to
the map form ``V_i`` (``Sigma* V + V Sigma* = sym(A_i)``, so ``V = sym(A)/2``
at the identity) and ``Sigma_i = (I + V_i) Sigma* (I + V_i)``. Draws with
``I + V_i`` not positive definite are rejected and redrawn. Since the
tangent vectors have mean zero, ``Sigma*`` is the population barycenter.
With ``recentre=True`` the sampled tangent vectors are shifted to have
empirical mean exactly zero, which makes ``Sigma*`` the barycenter of the
sample as well.

Random numbers come from :class:`numpy.random.Generator` (PCG64, normals
by the ziggurat method). Replicate ``r`` of a run with root seed ``s`` uses
``SeedSequence([s, r])``, so results do not depend on execution order or
thread count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import spd
from .exceptions import BuresError, DatasetError, DegenerateFit
from .geometry import BuresDistribution, GaussianMeasure, w2_sq_many
from .schedules import StepSchedule, parse_schedule
from .solvers import averaged_sgd, barycenter, gd, sgd, sgd_with_replacement

log = logging.getLogger(__name__)

VARIANTS = ("gd", "sgd", "sgd_replacement", "averaged_sgd")
# smallest admissible eigenvalue of I + V; keeps sampled atoms strictly positive definite
ADMISSIBLE_FLOOR = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 3
    n: int = 1000
    sigma2: float = 0.25
    base: GaussianMeasure = None
    schedule: StepSchedule = field(default_factory=lambda: StepSchedule.experiment(0.7))
    replicates: int = 100
    seed: int = 0
    recentre: bool = False
    iters: int = None  # SGD-with-replacement budget, default 10 * n
    gd_iters: int = 30
    reference: str = None  # "population" | "empirical" | None (variant default)
    fit_last: int = None  # points used by the log-log fit, default half the curve

    def __post_init__(self):
        _require(isinstance(self.dim, (int, np.integer)) and self.dim >= 1, "dim", "must be an integer >= 1")
        _require(isinstance(self.n, (int, np.integer)) and self.n >= 1, "n", "must be an integer >= 1")
        _require(self.sigma2 > 0 and math.isfinite(self.sigma2), "sigma2", "must be positive")
        _require(self.replicates >= 1, "replicates", "must be >= 1")
        _require(self.gd_iters >= 1, "gd_iters", "must be >= 1")
        _require(self.reference in (None, "population", "empirical"), "reference",
                 "must be 'population' or 'empirical'")
        if self.base is None:
            object.__setattr__(self, "base", GaussianMeasure(np.eye(self.dim)))
        _require(self.base.dim == self.dim, "base", f"has dim {self.base.dim}, expected {self.dim}")
        _require(spd.is_spd(self.base.cov), "base", "covariance must be positive definite")

    @property
    def outside_regular_set(self) -> bool:
        """True when the base covariance has operator norm above one."""
        return self.base.opnorm() > 1.0 + 1e-12

    @property
    def sgd_replacement_iters(self) -> int:
        return 10 * self.n if self.iters is None else self.iters

    def rescaled(self, alpha: float) -> "ExperimentConfig":
        """Same experiment for the law of ``alpha * X``: covariances scale by ``alpha^2``."""
        return replace(self, base=self.base.scaled(alpha))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim, "n": self.n, "sigma2": self.sigma2,
            "base_cov": self.base.cov.tolist(), "base_mean": self.base.mean.tolist(),
            "schedule": self.schedule.spec(), "replicates": self.replicates, "seed": self.seed,
            "recentre": self.recentre, "iters": self.iters, "gd_iters": self.gd_iters,
            "reference": self.reference, "fit_last": self.fit_last,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Build a config from parsed JSON; unknown or malformed fields are named in the error."""
        d = dict(d)
        preset = d.pop("preset", None)
        if preset is not None:
            base_cfg = PRESETS.get(preset)
            if base_cfg is None:
                raise DatasetError(f"config field 'preset': unknown preset {preset!r}")
            merged = base_cfg().to_dict()
            merged.update(d)
            d = merged
        known = {"dim", "n", "sigma2", "base_cov", "base_mean", "schedule", "replicates", "seed",
                 "recentre", "iters", "gd_iters", "reference", "fit_last"}
        unknown = set(d) - known
        if unknown:
            raise DatasetError(f"config field {sorted(unknown)[0]!r}: unknown field")
        kw = {}
        for key, conv in (("dim", int), ("n", int), ("sigma2", float), ("replicates", int),
                          ("seed", int), ("recentre", bool), ("gd_iters", int)):
            if key in d and d[key] is not None:
                try:
                    kw[key] = conv(d[key])
                except (TypeError, ValueError) as exc:
                    raise DatasetError(f"config field {key!r}: {exc}") from exc
        for key in ("iters", "fit_last"):
            if d.get(key) is not None:
                kw[key] = int(d[key])
        if d.get("reference") is not None:
            kw["reference"] = d["reference"]
        try:
            if d.get("schedule") is not None:
                kw["schedule"] = parse_schedule(d["schedule"])
        except BuresError as exc:
            raise DatasetError(f"config field 'schedule': {exc}") from exc
        dim = kw.get("dim", 3)
        base_cov = d.get("base_cov", "identity")
        try:
            cov = np.eye(dim) if base_cov in (None, "identity") else np.asarray(base_cov, dtype=float)
            kw["base"] = GaussianMeasure(cov, d.get("base_mean"))
        except (BuresError, ValueError) as exc:
            raise DatasetError(f"config field 'base_cov': {exc}") from exc
        return cls(**kw)


def _require(cond, name, why):
    if not cond:
        raise DatasetError(f"config field {name!r}: {why}")


def well_conditioned_config(n: int = 1000, replicates: int = 100, seed: int = 0) -> ExperimentConfig:
    """Well-conditioned setup: ``D = 3``, barycenter ``I_3``, ``sigma2 = 0.25``, ``c = 0.7``."""
    return ExperimentConfig(dim=3, n=n, sigma2=0.25, base=GaussianMeasure(np.eye(3)),
                            schedule=StepSchedule.experiment(0.7), replicates=replicates, seed=seed)


def poorly_conditioned_config(n: int = 1000, replicates: int = 100, seed: int = 0) -> ExperimentConfig:
    """Barycenter ``diag(20, 1, 1)``, unit-variance perturbation entries, ``c = 0.1``.

    The base has operator norm 20, so it lies outside every ``S_zeta`` and
    the regularity-based guarantees do not apply. ``cfg.rescaled(20 ** -0.5)``
    gives the equivalent problem with base ``diag(1, 1/20, 1/20)``.
    """
    return ExperimentConfig(dim=3, n=n, sigma2=1.0, base=GaussianMeasure(np.diag([20.0, 1.0, 1.0])),
                            schedule=StepSchedule.experiment(0.1), replicates=replicates, seed=seed)


PRESETS = {"well_conditioned": well_conditioned_config, "poorly_conditioned": poorly_conditioned_config}


def _draw_velocity(dim, sigma2, rng):
    A = rng.normal(0.0, math.sqrt(sigma2), size=(dim, dim))
    return 0.5 * (A + A.T)


def _lyapunov_operator(base_cov):
    lam, U = spd.eig_sym(base_cov)
    denom = lam[:, None] + lam[None, :]

    def solve(X):
        return U @ ((U.T @ X @ U) / denom) @ U.T

    return solve


def _draw_tangent(dim, sigma2, rng, solve=None):
    X = _draw_velocity(dim, sigma2, rng)
    return spd.symmetrize(solve(X)) if solve is not None else X


def _admissible(V):
    return spd.lambda_min(np.eye(V.shape[-1]) + V) > ADMISSIBLE_FLOOR


def sample_tangent_vectors(cfg: ExperimentConfig, rng):
    """Draw ``n`` admissible tangent vectors; returns ``(V, rejections)``.

    A draw with ``I + V`` not positive definite is discarded and redrawn.
    With ``cfg.recentre`` the stack is shifted to empirical mean zero and
    any vector made inadmissible by the shift is redrawn, until the
    centred stack is admissible as a whole.
    """
    d = cfg.dim
    solve = _lyapunov_operator(cfg.base.cov)
    rejections = 0
    V = np.empty((cfg.n, d, d))
    for i in range(cfg.n):
        while True:
            v = _draw_tangent(d, cfg.sigma2, rng, solve)
            if _admissible(v):
                V[i] = v
                break
            rejections += 1
    if not cfg.recentre:
        return V, rejections
    for _ in range(10_000):
        centred = V - V.mean(axis=0)
        bad = np.flatnonzero(~_admissible(centred))
        if bad.size == 0:
            return centred, rejections
        for i in bad:
            rejections += 1
            while True:
                v = _draw_tangent(d, cfg.sigma2, rng, solve)
                if _admissible(v):
                    V[i] = v
                    break
                rejections += 1
    raise BuresError("could not recentre the sample; sigma2 is too large for this base")


def _atoms_from_tangent(base: GaussianMeasure, V):
    L = np.eye(base.dim) + V
    covs = spd.symmetrize(L @ base.cov @ L)
    return BuresDistribution(covs, means=np.broadcast_to(base.mean, (len(V), base.dim)))


def sample_dataset(cfg: ExperimentConfig, seed=None, return_rejections: bool = False):
    """Uniform distribution over ``cfg.n`` Gaussians pushed forward from ``cfg.base``.

    Deterministic given ``seed`` (defaults to ``cfg.seed``).
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    V, rejections = sample_tangent_vectors(cfg, rng)
    if rejections:
        log.info("rejected %d inadmissible draws for %d samples", rejections, cfg.n)
    Q = _atoms_from_tangent(cfg.base, V)
    return (Q, rejections) if return_rejections else Q


def regular_recentred_dataset(dim: int, n: int, eig_floor: float, rng, sigma2: float = 0.04):
    """Centred distribution in ``S_zeta`` (``zeta >= eig_floor ** dim``) with exactly known barycenter.

    Returns ``(Q, barycenter)``. The barycenter has eigenvalues drawn from
    the middle half of ``[eig_floor, 1]``; the zero-mean tangent
    perturbations are shrunk by halving until every atom has all its
    eigenvalues inside ``[eig_floor, 1]``. Shrinking keeps the empirical
    mean of the tangent vectors at zero.
    """
    from .diagnostics import random_orthogonal

    pad = (1.0 - eig_floor) / 4.0
    lam = rng.uniform(eig_floor + pad, 1.0 - pad, size=dim)
    U = random_orthogonal(dim, rng)
    base_cov = spd.symmetrize((U * lam) @ U.T)
    V = np.stack([_draw_velocity(dim, sigma2, rng) for _ in range(n)])
    V -= V.mean(axis=0)
    scale = 1.0
    for _ in range(60):
        L = np.eye(dim) + scale * V
        covs = spd.symmetrize(L @ base_cov @ L)
        ev = spd.eig_sym(covs).eigenvalues
        if np.all(ev[:, -1] >= eig_floor) and np.all(ev[:, 0] <= 1.0):
            return BuresDistribution(covs), GaussianMeasure(base_cov)
        scale *= 0.5
    raise BuresError("failed to fit perturbations inside the eigenvalue band")


@dataclass
class ReplicatedCurves:
    """Error curves of one solver variant over independent replicates.

    ``band`` is the normal-approximation 95% interval
    ``mean +/- 1.96 * std / sqrt(R)`` across replicates.
    """

    variant: str
    iters: np.ndarray
    curves: np.ndarray  # (replicates, len(iters))
    rejections: int
    failures: list
    reference: str

    @property
    def mean(self) -> np.ndarray:
        return self.curves.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        r = self.curves.shape[0]
        if r < 2:
            return np.zeros(self.curves.shape[1])
        return self.curves.std(axis=0, ddof=1) / math.sqrt(r)

    @property
    def lo95(self) -> np.ndarray:
        return self.mean - 1.96 * self.stderr

    @property
    def hi95(self) -> np.ndarray:
        return self.mean + 1.96 * self.stderr

    def to_csv(self) -> str:
        rows = ["iter,mean_error,lo95,hi95"]
        for t, m, lo, hi in zip(self.iters.tolist(), self.mean.tolist(), self.lo95.tolist(),
                                self.hi95.tolist()):
            rows.append(f"{t},{m!r},{lo!r},{hi!r}")
        return "\n".join(rows) + "\n"


def default_reference(variant: str) -> str:
    return "empirical" if variant in ("gd", "sgd_replacement") else "population"


def _reference_measure(cfg, Q, kind):
    if kind == "population" or cfg.recentre:
        return cfg.base
    return barycenter(Q)


def _w2_curve(trace):
    return trace.column("w2_sq_to_ref")


def run_replicate(cfg: ExperimentConfig, variant: str, r: int):
    """One replicate: fresh dataset, one solver run, error curve against the reference.

    Returns ``(curve, rejections)``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, r]))
    V, rejections = sample_tangent_vectors(cfg, rng)
    Q = _atoms_from_tangent(cfg.base, V)
    kind = cfg.reference or default_reference(variant)
    ref = _reference_measure(cfg, Q, kind)
    if variant == "gd":
        res = gd(Q, max_iters=cfg.gd_iters, tol=0.0, reference=ref)
        curve = _w2_curve(res.trace)
        curve = np.concatenate([curve, np.full(cfg.gd_iters + 1 - len(curve), curve[-1])])
    elif variant == "sgd_replacement":
        seed = int(rng.integers(2**63 - 1))
        res = sgd_with_replacement(Q, schedule=cfg.schedule, iters=cfg.sgd_replacement_iters,
                                   seed=seed, reference=ref)
        curve = _w2_curve(res.trace)
    else:
        run = sgd if variant == "sgd" else averaged_sgd
        res = run(Q.atoms[1:], Q.atom(0), cfg.schedule, reference=ref)
        curve = _w2_curve(res.trace)
    return curve, rejections


def _n_threads():
    env = os.environ.get("BURES_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicated(cfg: ExperimentConfig, variant: str, n_jobs: int = None) -> ReplicatedCurves:
    """Run ``cfg.replicates`` independent replicates of one variant.

    A replicate whose solver raises is dropped and listed in ``failures``.
    Aggregation follows replicate index order, so the output is identical
    for any ``n_jobs``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    n_jobs = _n_threads() if n_jobs is None else n_jobs

    def job(r):
        try:
            return run_replicate(cfg, variant, r)
        except BuresError as exc:
            return exc

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(job, range(cfg.replicates)))
    else:
        results = [job(r) for r in range(cfg.replicates)]
    curves, failures, rejections = [], [], 0
    for r, res in enumerate(results):
        if isinstance(res, Exception):
            log.warning("replicate %d failed: %s", r, res)
            failures.append((r, str(res)))
            continue
        curves.append(res[0])
        rejections += res[1]
    if not curves:
        raise BuresError(f"all {cfg.replicates} replicates failed; first error: {failures[0][1]}")
    curves = np.stack(curves)
    return ReplicatedCurves(variant, np.arange(curves.shape[1]), curves, rejections, failures,
                            cfg.reference or default_reference(variant))


@dataclass(frozen=True)
class RateEstimate:
    slope: float
    intercept: float
    fit_window: tuple
    r_squared: float


def fit_rate(curve, window=None, loglog: bool = True) -> RateEstimate:
    """Least-squares line through ``(ln t, ln curve[t])`` for ``t`` in ``window``.

    ``window`` is a half-open index range ``(start, stop)``; by default the
    last half of the curve. Index 0 is skipped on log-log axes. With
    ``loglog=False`` the abscissa is ``t`` itself (semilog fit, for linear
    convergence).
    """
    y = np.asarray(curve, dtype=float)
    n = len(y)
    start, stop = (n // 2, n) if window is None else window
    start = max(start, 1) if loglog else max(start, 0)
    stop = min(stop, n)
    t = np.arange(start, stop, dtype=float)
    if t.size < 3:
        raise DegenerateFit(f"window [{start}, {stop}) has fewer than 3 points")
    vals = y[start:stop]
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise DegenerateFit("curve must be positive and finite on the fit window")
    x = np.log(t) if loglog else t
    if np.ptp(x) == 0:
        raise DegenerateFit("zero spread in the abscissa")
    ly = np.log(vals)
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateEstimate(float(slope), float(intercept), (int(start), int(stop)), r2)


def fit_window_for(cfg: ExperimentConfig, length: int):
    if cfg.fit_last is None:
        return (length // 2, length)
    return (max(length - cfg.fit_last, 0), length)


def sgd_error_bound(var_q: float, n: int, zeta: float) -> float:
    """Bound ``96 var(Q) / (n zeta^5)`` on the expected squared distance after ``n`` SGD steps."""
    return 96.0 * var_q / (n * zeta**5)


def population_variance_estimate(Q: BuresDistribution, base: GaussianMeasure) -> float:
    """Monte Carlo estimate of ``E W2^2(base, mu)`` from the atoms of ``Q``."""
    d2 = w2_sq_many(base.mean, base.cov, Q.means, Q.covs)
    return float(np.mean(d2))
