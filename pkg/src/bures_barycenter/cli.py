"""``bures`` command-line interface.

Results go to stdout in machine-readable form; messages go to stderr.
Exit codes:

* 0: success (converged, all checks satisfied)
* 1: invalid input
* 2: solver hit ``--max-iters`` without converging, or a check failed
* 3: a measure lies outside ``S_zeta``
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .exceptions import BuresError, DegenerateFit, NotRegular
from .experiments import PRESETS, VARIANTS, ExperimentConfig, fit_rate, fit_window_for, run_replicated
from .geometry import generalized_geodesic_point, w2_distance_sq
from .io import read_dataset, read_measure, write_dataset
from .schedules import StepSchedule, parse_schedule
from .solvers import averaged_sgd, barycenter, gd, sgd, sgd_with_replacement

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_NOT_REGULAR = 0, 1, 2, 3

SUITES = ("pl", "var", "smooth", "intpl", "convexity")


def _err(msg):
    print(msg, file=sys.stderr)


# --- barycenter -----------------------------------------------------------------------------


def _resolve_init(spec, Q):
    if spec is None:
        return None
    if spec.startswith("atom:"):
        try:
            i = int(spec[5:])
        except ValueError:
            raise BuresError(f"--init: bad atom index in {spec!r}") from None
        if not 0 <= i < Q.n_atoms:
            raise BuresError(f"--init: atom {i} out of range for {Q.n_atoms} atoms")
        return Q.atom(i)
    return read_measure(spec)


def _resolve_ref(spec, Q):
    if spec is None:
        return None
    if spec == "fixed-point":
        return barycenter(Q)
    return read_measure(spec)


def cmd_barycenter(args) -> int:
    Q = read_dataset(args.input)
    init = _resolve_init(args.init, Q)
    ref = _resolve_ref(args.ref, Q)
    if init is not None and init.dim != Q.dim:
        raise BuresError(f"--init has dim {init.dim}, dataset has dim {Q.dim}")
    if args.method == "gd":
        res = gd(Q, init, max_iters=args.max_iters, tol=args.tol, reference=ref)
    else:
        schedule = parse_schedule(args.schedule) if args.schedule else None
        if args.method == "sgd-replace":
            iters = args.max_iters if args.max_iters is not None else 10 * Q.n_atoms
            res = sgd_with_replacement(Q, init, schedule, iters=iters, seed=args.seed,
                                       reference=ref, record_objective=True)
        else:
            if schedule is None:
                schedule = StepSchedule.paper_pl(min(1.0, Q.zeta() ** 2 / 4.0))
            atoms = Q.atoms
            # without --init the first atom is the start and the rest are streamed
            b0, stream = (atoms[0], atoms[1:]) if init is None else (init, atoms)
            run = sgd if args.method == "sgd" else averaged_sgd
            res = run(stream, b0, schedule, Q=Q, reference=ref)
    if args.trace:
        Path(args.trace).write_text(res.trace.to_csv())
    text = write_dataset(res.final, args.out)
    if args.out is None:
        sys.stdout.write(text)
    status = "converged" if res.converged else "did not converge"
    _err(f"{args.method}: {status} after {res.iterations} iterations, "
         f"objective {res.trace.objective[-1]:.6g}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


# --- diagnose -------------------------------------------------------------------------------


def _random_point(Q, rng):
    i, j, k = rng.integers(Q.n_atoms, size=3)
    return generalized_geodesic_point(Q.atom(i), Q.atom(j), Q.atom(k), float(rng.uniform()))


def _run_suites(Q, suites, zeta, point, trials, seed):
    bbar = barycenter(Q)
    if not bbar.in_regular_set(zeta):
        raise NotRegular("computed barycenter is not in S_zeta")
    if point is not None and not point.in_regular_set(zeta):
        raise NotRegular("--point is not in S_zeta")
    reports = []
    for ss in dg.trial_seeds(seed, trials):
        rng = np.random.default_rng(ss)
        b = point if point is not None else _random_point(Q, rng)
        b1 = _random_point(Q, rng)
        if "pl" in suites:
            reports.append(dg.check_pl(Q, b, bbar, zeta))
        if "var" in suites:
            reports.append(dg.check_variance_inequality(Q, b, bbar, zeta))
        if "smooth" in suites:
            reports.append(dg.check_smoothness(Q, b, b1))
        if "intpl" in suites:
            reports.append(dg.check_integrated_pl(Q, b, bbar, zeta))
        if "convexity" in suites:
            base, m0, m1 = (Q.atom(int(i)) for i in rng.integers(Q.n_atoms, size=3))
            reports.append(dg.convexity_probe_opnorm(base, m0, m1))
            reports.append(dg.convexity_probe_neglogdet(base, m0, m1))
    return reports


def cmd_diagnose(args) -> int:
    if args.demo_nonconvexity:
        demo = dg.nonconvexity_demo(grid=101)
        sys.stdout.write(demo.to_csv())
        for rep in (demo.bures_report, demo.euclidean_report):
            _err(rep.to_line())
        _err("non-convexity reproduced" if demo.reproduced else "non-convexity NOT reproduced")
        return EXIT_OK if demo.reproduced else EXIT_NOT_CONVERGED
    if args.input is None:
        raise BuresError("--input is required unless --demo-nonconvexity is given")
    Q = read_dataset(args.input)
    zeta = Q.zeta() if args.zeta is None else args.zeta
    if not zeta > 0:
        raise BuresError(f"--zeta must be positive, got {zeta}")
    bad = Q.regularity_violations(zeta)
    if bad:
        for i, why in bad:
            _err(f"atom {i}: not in S_zeta (zeta={zeta:.6g}): {why}")
        return EXIT_NOT_REGULAR
    point = read_measure(args.point) if args.point else None
    suites = SUITES if args.suite == "all" else (args.suite,)
    reports = _run_suites(Q, suites, zeta, point, args.trials, args.seed)
    for rep in reports:
        print(rep.to_line())
    failed = sum(not r.satisfied for r in reports)
    _err(f"{len(reports) - failed}/{len(reports)} checks satisfied")
    return EXIT_OK if failed == 0 else EXIT_NOT_CONVERGED


# --- experiment -----------------------------------------------------------------------------


def _load_config(args) -> ExperimentConfig:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise BuresError(f"{args.config}: not valid JSON ({exc})") from None
    else:
        data = {"preset": args.preset or "well_conditioned"}
    for key in ("n", "replicates", "seed"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    return ExperimentConfig.from_dict(data)


def _summarize(cfg, curves):
    mean = curves.mean
    summary = {"variant": curves.variant, "replicates": int(curves.curves.shape[0]),
               "failures": len(curves.failures), "rejections": curves.rejections,
               "reference": curves.reference, "band": "normal_95"}
    if curves.variant == "gd":
        # linear rate: semilog fit while the error is above roundoff
        above = np.nonzero(mean > 1e-13)[0]
        stop = int(above[-1]) + 1 if above.size else 0
        window, loglog, axis = (0, stop), False, "semilog"
    else:
        window, loglog, axis = fit_window_for(cfg, len(mean)), True, "loglog"
    summary["axis"] = axis
    try:
        est = fit_rate(mean, window, loglog=loglog)
        summary.update(slope=est.slope, intercept=est.intercept, fit_window=list(est.fit_window),
                       r_squared=est.r_squared)
    except DegenerateFit as exc:
        summary.update(slope=None, intercept=None, fit_window=list(window), r_squared=None)
        _err(f"{curves.variant}: rate fit skipped: {exc}")
    summary["final_mean_error"] = float(mean[-1])
    return summary


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    if cfg.outside_regular_set:
        _err(f"warning: base covariance has operator norm {cfg.base.opnorm():.6g} > 1, "
             "outside every S_zeta; theoretical rates do not apply")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    for variant in variants:
        curves = run_replicated(cfg, variant)
        (out / f"curve_{variant}.csv").write_text(curves.to_csv())
        summary = _summarize(cfg, curves)
        summary["outside_regular_set"] = cfg.outside_regular_set
        summary["config"] = cfg.to_dict()
        (out / f"summary_{variant}.json").write_text(json.dumps(summary, indent=1) + "\n")
        print(json.dumps({k: summary[k] for k in ("variant", "slope", "fit_window", "r_squared")}))
        _err(f"{variant}: slope {summary['slope']} over {summary['fit_window']}")
    return EXIT_OK


# --- distance -------------------------------------------------------------------------------


def cmd_distance(args) -> int:
    a, b = read_measure(args.a), read_measure(args.b)
    d2 = w2_distance_sq(a, b)
    print(f"w2_sq\t{d2!r}")
    print(f"w2\t{float(np.sqrt(d2))!r}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bures", description="Bures-Wasserstein barycenters of Gaussians.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("barycenter", help="compute a barycenter")
    b.add_argument("method", choices=("gd", "sgd", "sgd-replace", "avg-sgd"))
    b.add_argument("--input", required=True, help="dataset JSON file")
    b.add_argument("--init", help="'atom:i' or a single-atom dataset file")
    b.add_argument("--tol", type=float, default=1e-12, help="GD threshold on squared gradient norm")
    b.add_argument("--max-iters", type=int, default=None,
                   help="GD iteration cap (default 200); draws for sgd-replace (default 10n)")
    b.add_argument("--schedule", help="step schedule, e.g. 'exp:c=0.7', 'paper_pl:c=0.25', 'const:0.1'")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--ref", help="reference measure file, or 'fixed-point'")
    b.add_argument("--trace", help="write the trace CSV here")
    b.add_argument("--out", help="write the final measure here instead of stdout")
    b.set_defaults(func=cmd_barycenter)

    d = sub.add_parser("diagnose", help="certify inequalities on a dataset")
    d.add_argument("--input")
    d.add_argument("--point", help="single-atom file used as b in every trial")
    d.add_argument("--zeta", type=float, help="default: smallest atom determinant")
    d.add_argument("--suite", choices=SUITES + ("all",), default="all")
    d.add_argument("--trials", type=int, default=10)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--demo-nonconvexity", action="store_true",
                   help="emit the non-convexity table for the built-in 2x2 example")
    d.set_defaults(func=cmd_diagnose)

    e = sub.add_parser("experiment", help="replicated convergence experiment")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--config", help="config JSON file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    e.add_argument("--variant", choices=VARIANTS + ("all",), default="sgd")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--n", type=int)
    e.add_argument("--replicates", type=int)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_experiment)

    w = sub.add_parser("distance", help="W2 distance between two Gaussians")
    w.add_argument("--a", required=True)
    w.add_argument("--b", required=True)
    w.set_defaults(func=cmd_distance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "barycenter" and args.method == "gd" and args.max_iters is None:
        args.max_iters = 200
    try:
        return args.func(args)
    except NotRegular as exc:
        _err(f"error: {exc}")
        return EXIT_NOT_REGULAR
    except (BuresError, ValueError, OSError) as exc:
        _err(f"error: {exc}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
