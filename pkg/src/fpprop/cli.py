"""Command-line front end: ``fpprop solve|verify|compare|schedules``.

Exit codes: 0 success, 1 contract violation, 2 usage or parse error.
"""

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import alphas, to_fpe
from .disentangle import DEFAULT_TOL
from .errors import FpPropError, PointMassError, SpecParseError, UnsupportedDimensionError
from .oracles import (FdConfig, McConfig, SolutionGrid, compare_moments, fd_solve, grid_error,
                      mc_sample)
from .propagator import (DiracDelta, GaussianMixture, GaussianState, RegularGrid, build_kernel,
                         propagate_gaussian, solve)
from .specfile import load_spec
from .verify import SUITES, run_suite

EXIT_OK, EXIT_CONTRACT, EXIT_USAGE = 0, 1, 2
FD_TOL = 1e-3
MC_SIGMAS = 4.0
SCHEDULE_SAMPLES = 256
CSV_FMT = "%.16e"


class _Usage(Exception):
    pass


def _atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows):
    lines = [",".join(header)]
    for row in np.atleast_2d(rows) + 0.0:  # no "-0" cells
        lines.append(",".join(CSV_FMT % v for v in row))
    return "\n".join(lines) + "\n"


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=False, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _metadata(k):
    return {"t": k.t, "alpha1": k.alpha1, "alpha3": k.alpha3, "shift": k.shift.tolist(),
            "tau_eigenvalues": k.eigvals.tolist(),
            "deterministic_directions": int(np.sum(k.deterministic))}


# --------------------------------------------------------------------------- solve

def cmd_solve(args):
    spec = load_spec(args.spec)
    times = args.time if args.time else spec.output.times
    if not times:
        raise _Usage("no times given (use --time or output.times)")
    pts = spec.output.eval_points()
    out = Path(args.out)
    header = [f"x{i}" for i in range(spec.dim)] + ["u"]
    meta, tables = [], []
    for i, t in enumerate(times):
        if not 0 <= t <= spec.horizon:
            raise _Usage(f"time {t} outside [0, {spec.horizon}]")
        k = build_kernel(spec.coefficients, t)
        entry = _metadata(k)
        try:
            u = solve(spec.coefficients, spec.initial, t, pts, kernel=k)
        except PointMassError as pm:
            entry["point_mass"] = {"weight": pm.weight, "location": np.asarray(pm.location).tolist()}
            u = None
        meta.append(entry)
        tables.append(u)
        if args.format == "csv" and u is not None:
            _atomic_write(out / f"u_t{i:03d}.csv", _csv(header, np.column_stack([pts, u])))
    if args.format == "json":
        doc = {"points": pts, "solutions": [
            {"t": t, "u": u} for t, u in zip(times, tables)], "metadata": meta}
        _atomic_write(out / "solution.json", _json(doc))
    _atomic_write(out / "metadata.json", _json({"dim": spec.dim, "form": spec.form, "times": meta}))
    print(f"wrote {len(times)} time(s) to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- verify

def cmd_verify(args):
    names = SUITES if args.suite == "all" else (args.suite,)
    results = [run_suite(n, args.trials, args.seed, args.tol, args.mutate_sign) for n in names]
    lines = [r.line() for r in results]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        _atomic_write(args.out, _json({"suites": [
            {"name": r.name, "trials": r.trials, "max_residual": r.max_residual,
             "contract": r.contract, "passed": r.passed, "details": r.details} for r in results]}))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CONTRACT


# --------------------------------------------------------------------------- compare

def _as_mixture(phi):
    if isinstance(phi, DiracDelta):
        return GaussianMixture((phi.as_gaussian(),))
    if isinstance(phi, GaussianState):
        return GaussianMixture((phi,))
    if isinstance(phi, GaussianMixture):
        return phi
    return None


def _propagated_mixture(spec, t):
    mix = _as_mixture(spec.initial)
    if mix is None:
        return None
    k = build_kernel(spec.coefficients, t)
    return GaussianMixture(tuple(propagate_gaussian(k, g) for g in mix.components))


def _fd_domain(mixtures, h):
    lo, hi = [], []
    for mix in mixtures:
        for g in mix.components:
            sd = np.sqrt(np.diag(g.cov))
            lo.append(g.mean - 10.0 * sd)
            hi.append(g.mean + 10.0 * sd)
    lo, hi = np.min(lo, axis=0), np.max(hi, axis=0)
    count = np.ceil((hi - lo) / h).astype(int) + 1
    return RegularGrid(lo, lo + (count - 1) * h, count)


def _has_zero_variance(mix):
    return any(np.linalg.eigvalsh(g.cov)[0] <= 0.0 for g in mix.components)


def _compare_fd(spec, t, args):
    c = spec.coefficients
    if spec.dim > 2:
        raise UnsupportedDimensionError("the finite-difference oracle supports n <= 2")
    h = args.h if args.h else (0.02 if spec.dim == 1 else 0.1)
    t0, phi = 0.0, spec.initial
    mix = _as_mixture(phi)
    if mix is not None:
        if _has_zero_variance(mix):
            # not grid-representable: start from the closed form a little later
            t0 = min(0.1, 0.1 * t)
            phi = _propagated_mixture(spec, t0)
            if _has_zero_variance(phi):
                raise FpPropError("initial data without diffusion is not grid-representable")
        grid = _fd_domain([_as_mixture(phi), _propagated_mixture(spec, t)], h)
    elif spec.output.grid is not None:
        grid = spec.output.grid
    else:
        raise FpPropError("fd oracle needs Gaussian-type initial data or an output grid")
    cfd = c.shifted(t0) if t0 > 0 else c
    sol = fd_solve(cfd, phi, t - t0, FdConfig(grid, args.dt))
    exact = solve(c, spec.initial, t, grid.points()).reshape(grid.shape)
    linf, l1, l2 = grid_error(SolutionGrid(grid, t, sol.values), SolutionGrid(grid, t, exact))
    return {"oracle": "fd", "h": float(grid.step[0]), "dt": args.dt, "start_time": t0,
            "linf": linf, "l1": l1, "l2": l2, "tolerance": args.fd_tol, "passed": linf <= args.fd_tol}


def _compare_mc(spec, t, args):
    fpe = spec.fpe if spec.fpe is not None else to_fpe(spec.coefficients)
    mix = _as_mixture(spec.initial)
    if mix is None:
        raise FpPropError("mc oracle needs delta or Gaussian initial data")
    samples = mc_sample(fpe, mix, t, McConfig(args.paths, args.dt, args.seed))
    _, mean, cov = _propagated_mixture(spec, t).moments()
    rep = compare_moments(samples, GaussianState(0.0, mean, cov), MC_SIGMAS)
    if args.samples_csv:
        _atomic_write(args.samples_csv, _csv([f"x{i}" for i in range(spec.dim)], samples))
    return {"oracle": "mc", "paths": args.paths, "dt": args.dt, "seed": args.seed,
            "sample_mean": rep.mean, "reference_mean": mean, "sample_cov": rep.cov,
            "reference_cov": cov, "mean_z": rep.mean_z, "cov_z": rep.cov_z,
            "max_abs_z": rep.max_z, "threshold": MC_SIGMAS, "passed": bool(rep.passed)}


def cmd_compare(args):
    spec = load_spec(args.spec)
    t = args.time if args.time is not None else (spec.output.times[-1] if spec.output.times else spec.horizon)
    reports = []
    if args.oracle in ("fd", "both"):
        reports.append(_compare_fd(spec, t, args))
    if args.oracle in ("mc", "both"):
        reports.append(_compare_mc(spec, t, args))
    for r in reports:
        if r["oracle"] == "fd":
            print(f"fd  linf={r['linf']:.3e} l1={r['l1']:.3e} l2={r['l2']:.3e} "
                  f"tol={r['tolerance']:.1e}  {'PASS' if r['passed'] else 'FAIL'}")
        else:
            print(f"mc  max|z|={r['max_abs_z']:.2f} threshold={r['threshold']:.1f}  "
                  f"{'PASS' if r['passed'] else 'FAIL'}")
    if args.out:
        _atomic_write(args.out, _json({"time": t, "reports": reports}))
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_CONTRACT


# --------------------------------------------------------------------------- schedules

def schedule_table(c, horizon, samples=SCHEDULE_SAMPLES):
    n = c.dim
    ts = np.union1d(np.linspace(0.0, horizon, samples), c.breakpoints[c.breakpoints <= horizon])
    iu = np.triu_indices(n)
    header = (["t", "a1"] + [f"a2_{i}" for i in range(n)] + ["a3"]
              + [f"a4_{i}{j}" for i, j in zip(*iu)] + ["alpha1", "alpha3"]
              + [f"shift_{i}" for i in range(n)] + [f"tau_{i}{j}" for i, j in zip(*iu)])
    rows = []
    for t in ts:
        ic = alphas(c, t)
        rows.append(np.concatenate((
            [t, float(c.a1(t))], c.a2(t), [float(c.a3(t))], c.a4.upper_values(t),
            [ic.alpha1, ic.alpha3], ic.shift, ic.tau[iu])))
    return header, np.array(rows)


def cmd_schedules(args):
    spec = load_spec(args.spec)
    header, rows = schedule_table(spec.coefficients, spec.horizon, args.samples)
    _atomic_write(args.out, _csv(header, rows))
    print(f"wrote {rows.shape[0]} rows to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(prog="fpprop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fpprop {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="evaluate the closed-form solution")
    s.add_argument("spec")
    s.add_argument("--time", type=float, nargs="+")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="run randomized identity suites")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tol", type=float, default=DEFAULT_TOL)
    v.add_argument("--out", help="write a JSON report here")
    v.add_argument("--mutate-sign", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="cross-check against finite differences / Monte Carlo")
    c.add_argument("spec")
    c.add_argument("--oracle", choices=("fd", "mc", "both"), default="both")
    c.add_argument("--time", type=float)
    c.add_argument("--out", help="write a JSON report here")
    c.add_argument("--h", type=float, help="FD grid spacing")
    c.add_argument("--dt", type=float, default=1e-3)
    c.add_argument("--paths", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--fd-tol", type=float, default=FD_TOL)
    c.add_argument("--samples-csv", help="export Monte Carlo terminal states")
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("schedules", help="tabulate coefficients and their integrals")
    t.add_argument("spec")
    t.add_argument("--out", required=True)
    t.add_argument("--samples", type=int, default=SCHEDULE_SAMPLES)
    t.set_defaults(func=cmd_schedules)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "trials", 0) is not None and getattr(args, "trials", 0) < 0:
        print("fpprop: error: --trials must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (SpecParseError, _Usage, UnsupportedDimensionError) as exc:
        print(f"fpprop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FpPropError as exc:
        print(f"fpprop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
