"""Command line entry point: ``pifem {mesh,solve,study} --config FILE``.

Exit status is 0 on success, 2 for configuration errors and 1 for
numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import analysis
from .errors import ConfigError, PifemError
from .config import load_config
from .mesh import build_interface_mesh, refine_n, write_mesh
from .solver import solve_forward

log = logging.getLogger("pifem")


def _parser():
    p = argparse.ArgumentParser(prog="pifem", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=("mesh", "solve", "study"))
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--kind", choices=analysis.STUDY_KINDS)
    p.add_argument("--levels", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--target-h", type=float, dest="target_h")
    p.add_argument("--no-timings", action="store_true", help="write 0 in the CSV seconds column")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_flags(cfg, args):
    if args.kind:
        cfg.kind = args.kind
    if args.levels is not None:
        if args.levels < 1:
            raise ConfigError("--levels must be at least 1", "levels")
        cfg.levels = args.levels
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1", "threads")
        cfg.threads = args.threads
    if args.out:
        cfg.out = args.out
    if args.target_h is not None:
        if args.target_h <= 0:
            raise ConfigError("--target-h must be positive", "target_h")
        cfg.target_h = args.target_h
    return cfg


def _cmd_mesh(cfg):
    mesh = build_interface_mesh(cfg.bounds, cfg.curve(), cfg.target_h)
    path = os.path.join(cfg.out, "mesh.txt")
    write_mesh(mesh, path)
    q = mesh.quality()
    log.info("mesh: %d vertices, %d triangles, h_max=%.4g, ratio=%.3g", q.n_vertices, q.n_triangles, q.h_max, q.quasi_uniformity_ratio)
    return [path]


def _cmd_solve(cfg):
    spec = cfg.problem()
    mesh = refine_n(build_interface_mesh(cfg.bounds, spec.curve, cfg.target_h), spec.curve, cfg.levels - 1)[-1]
    traj = solve_forward(spec, mesh, None, cfg.n_steps * cfg.time_refine ** (cfg.levels - 1), tol=cfg.tol)
    mpath = os.path.join(cfg.out, "mesh.txt")
    tpath = os.path.join(cfg.out, "trajectory.txt")
    write_mesh(mesh, mpath)
    traj.write(tpath)
    return [mpath, tpath]


def _cmd_study(cfg, timings):
    kind = cfg.kind
    if kind not in analysis.STUDY_KINDS:
        raise ConfigError(f"unknown study kind '{kind}'", "study.kind")
    if cfg.levels < 3:
        raise ConfigError("a study needs at least 3 levels", "discretization.levels")
    if kind == "parabolic_smooth":
        spec = analysis.default_spec(kind, T=cfg.T)
    elif kind == "parabolic_dirac":
        spec = cfg.problem()
    else:
        if cfg.curve_kind != "circle":
            raise ConfigError("elliptic studies use the radial kink solution and need a circle", "geometry.curve")
        spec = analysis.default_spec(kind, beta=(cfg.beta1, cfg.beta2), r0=cfg.radii[0], T=cfg.T)
        spec = spec.__class__(**{**spec.__dict__, "bounds": tuple(cfg.bounds)})
    table = analysis.run_study(
        kind,
        cfg.levels,
        spec,
        target_h=cfg.target_h,
        n_steps0=cfg.n_steps if kind != "parabolic_smooth" else None,
        time_refine=cfg.time_refine,
        threads=cfg.threads,
    )
    csv_path = os.path.join(cfg.out, f"{kind}.csv")
    table.to_csv(csv_path, timings=timings)
    paths = [csv_path, *table.plot_svg(cfg.out)]
    for row in table.rows:
        if row.status != "ok":
            log.warning("level %d: %s", row.level, row.status)
    return paths


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    stage = "config"
    try:
        cfg = _apply_flags(load_config(args.config, args.command), args)
        os.makedirs(cfg.out, exist_ok=True)
        stage = args.command
        if args.command == "mesh":
            paths = _cmd_mesh(cfg)
        elif args.command == "solve":
            paths = _cmd_solve(cfg)
        else:
            paths = _cmd_study(cfg, timings=not args.no_timings)
    except ConfigError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        print(f"pifem: config error{where}: {exc}", file=sys.stderr)
        return 2
    except (PifemError, ValueError, ArithmeticError) as exc:
        print(f"pifem: {stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
