"""Command-line front end: ``steadysusc <command> --config run.toml``."""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import logging
import math
import sys
from pathlib import Path

from . import __version__, io, kerr, xyz
from .families import KerrFamily, XYZFamily
from .scaling import (BoundaryExtremum, fit_linear_extrapolate, fit_power_law, locate_extremum,
                      sweep)

log = logging.getLogger("steadysusc")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURES = 2
EXIT_INTERRUPTED = 130
FAILURE_FRACTION = 0.10


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class _Run:
    """Output directory, manifest bookkeeping and the single file writer."""

    def __init__(self, command, config, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = io.RunManifest(command=command, config=config.to_dict(),
                                       version=__version__, started=_now(),
                                       input_hash=io.config_hash(config))

    def finish(self, exit_code, truncated=False):
        m = self.manifest
        m.finished = _now()
        m.exit_code = exit_code
        m.truncated = truncated
        io.write_json(self.out / "manifest.json", m.as_dict())
        return exit_code


def _apply_overrides(config, args):
    changes = {}
    if args.out:
        changes["out"] = args.out
    if args.no_cache:
        changes["cache"] = False
    if args.solver:
        changes["solver"] = dataclasses.replace(config.solver, method=args.solver)
    return dataclasses.replace(config, **changes) if changes else config


def _cache(config, args):
    if not config.cache:
        return None
    return io.SteadyStateCache(args.cache_dir)


def _family(config, grid, cache):
    sv = config.solver
    common = dict(solver=sv.method, rk4_dt=sv.dt, rk4_tol=sv.tol, rk4_t_max=sv.t_max,
                  warm_start=sv.warm_start, cache=cache)
    name = config.sweep.param
    if config.model == "xyz":
        return XYZFamily(base=config.model_params(), param_name=name, **common)
    if "n_max" in config.params or name != "G":
        return KerrFamily(base=config.model_params(), param_name=name,
                          with_gap=config.sweep.gap, **common)
    p = config.model_params()
    fam = KerrFamily.for_grid(p.U, grid, config.sweep.delta_p, gamma=p.gamma, delta=p.delta,
                              with_gap=config.sweep.gap, **common)
    log.info("n_max=%d from the truncation policy", fam.base.n_max)
    return fam


def _extremum(curve, which):
    try:
        p, v = locate_extremum(curve, which)
        return {"p": p, "value": v}
    except BoundaryExtremum as exc:
        return {"error": "BoundaryExtremum", "message": str(exc), "p": exc.p, "value": exc.value}
    except ValueError as exc:
        return {"error": "ValueError", "message": str(exc)}


def _summary(config, curve, family):
    s = {"model_id": curve.model_id, "param": curve.param_name, "delta_p": curve.delta_p,
         "solver": curve.solver, "n_points": len(curve.points), "n_failed": len(curve.failed),
         "failed": {repr(k): v for k, v in curve.failed.items()}}
    if "chi_f" in config.sweep.metrics:
        s["min_chi_f"] = _extremum(curve, "min_chi_f")
    if "chi_t" in config.sweep.metrics:
        s["max_chi_t"] = _extremum(curve, "max_chi_t")
    if config.model == "xyz":
        s["n_sites"] = family.base.n_sites
    else:
        s["U"] = family.base.U
        s["n_max"] = family.base.n_max
    return s


def cmd_sweep(config, args, command):
    if config.sweep is None:
        raise io.ConfigError("a [sweep] table is required", source=args.config)
    if config.model != command.split("-")[0]:
        raise io.ConfigError(f"{command} needs model = \"{command.split('-')[0]}\"",
                             source=args.config)
    run = _Run(command, config, config.out)
    grid = config.sweep.grid()
    family = _family(config, grid, _cache(config, args))
    done = []

    def progress(i, point, error, diag):
        done.append((i, point, error, diag))
        log.info("%s=%.6g chi_f=%s chi_t=%s%s", config.sweep.param, point.p, point.chi_f,
                 point.chi_t, f" FAILED {error}" if error else "")

    try:
        curve = sweep(family, grid, config.sweep.delta_p, metrics=config.sweep.metrics,
                      threads=args.threads, chi_f_basis=config.sweep.chi_f_basis,
                      progress=progress)
    except KeyboardInterrupt:
        done.sort(key=lambda r: r[0])
        cols = io.CURVE_COLUMNS
        io.write_table_csv(run.out / "curve.csv", cols,
                           [[pt.p, pt.delta_p, pt.chi_f, pt.chi_t, d.get("residual")]
                            for _, pt, _, d in done])
        run.manifest.points = [{"p": pt.p, "error": e, **d} for _, pt, e, d in done]
        log.error("interrupted after %d of %d points", len(done), grid.size)
        return run.finish(EXIT_INTERRUPTED, truncated=True)

    gaps = None
    if config.model == "kerr" and config.sweep.gap:
        gaps = [d.get("gap") for d in curve.diagnostics]
    io.write_curve_csv(run.out / "curve.csv", curve, gaps)
    io.write_json(run.out / "summary.json", io.jsonable(_summary(config, curve, family)))
    run.manifest.points = [{"p": float(p), "error": curve.failed.get(float(p)), **d}
                           for p, d in zip(curve.grid, curve.diagnostics)]
    run.manifest.failed = len(curve.failed)
    if family.cache is not None:
        log.info("cache: %d hits, %d misses", family.cache.hits, family.cache.misses)
    code = EXIT_FAILURES if len(curve.failed) > FAILURE_FRACTION * grid.size else EXIT_OK
    return run.finish(code)


def cmd_mf_phase(config, args):
    if config.sweep is None:
        raise io.ConfigError("a [sweep] table is required", source=args.config)
    run = _Run("mf-phase", config, config.out)
    grid = config.sweep.grid()
    base = config.model_params()
    name = config.sweep.param
    if config.model == "xyz":
        observables = {"sx": [], "sy": [], "sz": []}
    else:
        observables = {"abs_alpha": []}
    failures = 0
    for p in grid:
        entry = {"p": float(p), "error": None}
        try:
            if config.model == "xyz":
                s = xyz.mf_steady_state(base.with_(**{name: float(p)}))
                vals = {"sx": s.sx, "sy": s.sy, "sz": s.sz}
            else:
                a = kerr.semiclassical_evolve(base.with_(**{name: float(p)}))
                vals = {"abs_alpha": abs(a.alpha)}
        except (xyz.MeanFieldNotConverged, kerr.SemiclassicalDiverged) as exc:
            failures += 1
            entry["error"] = f"{type(exc).__name__}: {exc}"
            vals = {k: math.nan for k in observables}
        for k, v in vals.items():
            observables[k].append(float(v))
        run.manifest.points.append(entry)
    for k, vals in observables.items():
        io.write_table_csv(run.out / f"{k}.csv", (name, k), zip(grid, vals))
    run.manifest.failed = failures
    return run.finish(EXIT_FAILURES if failures > FAILURE_FRACTION * grid.size else EXIT_OK)


def cmd_stability_map(config, args):
    if config.model != "xyz":
        raise io.ConfigError("stability-map needs model = \"xyz\"", source=args.config)
    run = _Run("stability-map", config, config.out)
    k, values, arg = xyz.stability_map(config.model_params(), config.resolution)
    rows = [(kx, ky, values[i, j]) for i, kx in enumerate(k) for j, ky in enumerate(k)]
    io.write_table_csv(run.out / "stability_map.csv", ("kx", "ky", "max_re"), rows)
    io.write_json(run.out / "summary.json",
                  io.jsonable({"argmax": list(arg), "max": float(values.max())}))
    return run.finish(EXIT_OK)


_FIT_X = {
    "inv_n": lambda s: 1.0 / s["n_sites"],
    "n": lambda s: float(s["n_sites"]),
    "U": lambda s: float(s["U"]),
}
_FIT_Y = {
    "p_min_chi_f": lambda s: s["min_chi_f"]["p"],
    "p_max_chi_t": lambda s: s["max_chi_t"]["p"],
    "abs_min_chi_f": lambda s: abs(s["min_chi_f"]["value"]),
    "max_chi_t": lambda s: s["max_chi_t"]["value"],
}


def cmd_fit(args):
    xs, ys = [], []
    for path in args.inputs:
        s = io.read_json(path)
        ext = s.get("min_chi_f" if "chi_f" in args.y else "max_chi_t", {})
        if "error" in ext:
            raise io.ConfigError(f"no interior extremum: {ext.get('message')}", source=str(path))
        try:
            xs.append(_FIT_X[args.x](s))
            ys.append(_FIT_Y[args.y](s))
        except KeyError as exc:
            raise io.ConfigError(f"summary lacks {exc}", source=str(path)) from None
    out = Path(args.out or ".")
    try:
        if args.kind == "power_law":
            fit = fit_power_law(xs, ys)
            record = fit.as_dict()
        else:
            fit, at = fit_linear_extrapolate(xs, ys, args.target)
            record = {**fit.as_dict(), "x_target": args.target, "y_at_target": at}
    except ValueError as exc:
        raise io.ConfigError(str(exc)) from None
    record.update(x=args.x, y=args.y, xs=xs, ys=ys, inputs=[str(p) for p in args.inputs])
    io.write_json(out / "fit.json", io.jsonable(record))
    print(f"{args.kind}: " + ", ".join(f"{k}={v:.6g}" for k, v in record.items()
                                       if isinstance(v, float)))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="steadysusc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads over sweep points")
        p.add_argument("--no-cache", action="store_true", help="disable the steady-state cache")
        p.add_argument("--cache-dir", help=f"cache directory (default ${io.CACHE_ENV} "
                                           "or ~/.cache/steadysusc)")
        p.add_argument("--solver", choices=("ed", "rk4", "auto"), help="steady-state solver")
        p.add_argument("--verbose", "-v", action="count", default=0)

    for name, text in (("xyz-sweep", "susceptibility sweep of the XYZ lattice"),
                       ("kerr-sweep", "susceptibility sweep of the Kerr oscillator"),
                       ("mf-phase", "mean-field / semiclassical order parameter curve"),
                       ("stability-map", "fluctuation growth rate over the Brillouin zone")):
        common(sub.add_parser(name, help=text))
    fit = sub.add_parser("fit", help="scaling fit over sweep summaries")
    fit.add_argument("inputs", nargs="+", help="summary.json files")
    fit.add_argument("--kind", choices=("linear", "power_law"), default="linear")
    fit.add_argument("--x", choices=sorted(_FIT_X), default="inv_n")
    fit.add_argument("--y", choices=sorted(_FIT_Y), default="p_min_chi_f")
    fit.add_argument("--target", type=float, default=0.0, help="abscissa to extrapolate to")
    fit.add_argument("--out", help="output directory")
    fit.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.threads < 1:
            raise io.ConfigError("--threads must be >= 1")
        config = _apply_overrides(io.load_config(args.config), args)
        if args.threads > 1 and config.solver.warm_start:
            raise io.ConfigError("warm_start requires --threads 1", source=args.config)
        if args.command in ("xyz-sweep", "kerr-sweep"):
            return cmd_sweep(config, args, args.command)
        if args.command == "mf-phase":
            return cmd_mf_phase(config, args)
        return cmd_stability_map(config, args)
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
