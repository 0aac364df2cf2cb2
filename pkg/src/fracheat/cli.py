"""Command line front end: ``fracheat <subcommand> [--config PATH] [--out DIR] ...``.

Every CSV starts with a ``# manifest: {...}`` line holding the subcommand, the
resolved configuration, the master seed, the output file name and the tool
version.  Nothing time- or host-dependent goes in, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import EXTRA_DEFAULTS, parse_config, to_dict
from .csvio import write_csv, write_rows
from .density import (ExperimentConfig, inverse_moment_estimate, kde, resolve_threads,
                      run_ensemble, small_ball_diagnostic, verify_bound)
from .errors import ConfigParseError, ConfigValidationError, FracHeatError
from .fbm import DriverPath, sample_path
from .malliavin import malliavin_matrix
from .solver import field_path_to_csv, make_kernel, solve

SUBCOMMANDS = ("sample-fbm", "solve", "malliavin", "density", "verify-bounds", "convergence")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracheat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracheat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON configuration file (defaults for missing keys)")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, help="master seed, overrides the config")
        s.add_argument("--threads", type=int,
                       help="worker threads (default: FRACHEAT_THREADS, else all cores)")
        if name in ("sample-fbm", "solve", "malliavin", "convergence"):
            s.add_argument("--path-index", type=int, default=0,
                           help="which ensemble path to use")
    return p


class Run:
    def __init__(self, args, cfg: ExperimentConfig, extras: dict):
        self.args = args
        self.cfg = cfg
        self.extras = extras
        self.written = []

    def manifest(self, filename):
        return {
            "subcommand": self.args.command,
            "config": to_dict(self.cfg, self.extras),
            "config_path": self.args.config,
            "output": filename,
            "seed": self.cfg.seed,
            "version": __version__,
        }

    def path(self, filename):
        return os.path.join(self.args.out, filename)

    def csv(self, filename, header, columns):
        self.written.append(write_csv(self.path(filename), header, columns,
                                      self.manifest(filename)))

    def rows(self, filename, header, rows):
        self.written.append(write_rows(self.path(filename), header, rows,
                                       self.manifest(filename)))

    # ---------------------------------------------------------------- helpers
    def driver(self) -> DriverPath:
        sc = self.cfg.solver
        return sample_path(sc.time_steps, self.cfg.hurst, self.cfg.dim, self.cfg.seed,
                           self.cfg.sampler, sc.horizon, self.args.path_index)

    def kernel(self):
        if self.extras["equation"] == "nemytskii":
            return None
        return make_kernel(self.cfg.kernel, self.cfg.solver.n_modes)


def cmd_sample_fbm(run: Run):
    x = run.driver()
    fn = "fbm_path.csv"
    x.to_csv(run.path(fn), run.manifest(fn))
    run.written.append(run.path(fn))


def cmd_solve(run: Run):
    cfg = run.cfg
    y = solve(cfg.base_phi(), cfg.coefficient_family(), run.kernel(), run.driver())
    fn = "solution.csv"
    field_path_to_csv(y, run.path(fn), run.extras["export_mode"], run.manifest(fn))
    run.written.append(run.path(fn))


def cmd_malliavin(run: Run):
    cfg = run.cfg
    x = run.driver()
    fam, L = cfg.coefficient_family(), run.kernel()
    y = solve(cfg.base_phi(), fam, L, x)
    m = malliavin_matrix(y, x, fam, L, cfg.xi, stride=cfg.s_stride)
    fn = "malliavin_matrix.csv"
    m.to_csv(run.path(fn), run.manifest(fn))
    run.written.append(run.path(fn))


def cmd_density(run: Run):
    cfg, ex = run.cfg, run.extras
    res = run_ensemble(cfg, malliavin=True, threads=run.args.threads)
    bw = None if cfg.bandwidth == "rule-of-thumb" else float(cfg.bandwidth)
    est = kde(res.samples, bw)
    run.csv("density.csv", ["point", "density"], [est.grid, est.density])
    run.csv("samples.csv", ["path", "value", "h_norm", "sup_norm"],
            [res.path_index, res.samples, res.h_norm, res.sup_norm])
    rows = []
    for p in ex["moments"]:
        im = inverse_moment_estimate(res.h_norm, p)
        rows.append((float(p), im.value, im.half_value, float(im.stable)))
    run.csv("inverse_moments.csv", ["p", "estimate", "half_estimate", "stable"],
            np.array(rows))
    table = small_ball_diagnostic(res.entries, res.s_times, ex["epsilons"], ex["ball_alpha"],
                                  ex["ball_beta"], cfg.hurst)
    run.csv("small_ball.csv", ["epsilon", "p_sup_below", "p_holder_above"], table)
    run.rows("failures.csv", ["path", "step"], res.failures)


def cmd_verify_bounds(run: Run):
    cfg = run.cfg
    res = run_ensemble(cfg, malliavin=False, bounds=True, threads=run.args.threads)
    rows = []
    for b in cfg.bounds:
        r = verify_bound(b, res, seed=cfg.seed)
        c = r.constants
        rows.append((b, c.get("C", np.nan), c.get("a", np.nan), c.get("b", np.nan),
                     r.train_coverage, r.validate_coverage, r.max_ratio,
                     float(r.n_train), float(r.n_validate)))
    run.rows("bounds.csv", ["bound_id", "C", "a", "b", "train_coverage", "validate_coverage",
                            "max_ratio", "n_train", "n_validate"], rows)


def cmd_convergence(run: Run):
    """Self-refinement of the solver on one driver: ``||y^{(M)}_T - y^{(2M)}_T||``."""
    cfg = run.cfg
    x = run.driver()
    fam, L = cfg.coefficient_family(), run.kernel()
    phi = cfg.base_phi()
    levels = []
    stride = 1
    for _ in range(run.extras["refinements"] + 1):
        if x.n_steps % stride:
            break
        levels.append((x.n_steps // stride, solve(phi, fam, L, x.subsample(stride))[-1].coeffs))
        stride *= 2
    rows = []
    for (m_fine, y_fine), (m_coarse, y_coarse) in zip(levels[:-1], levels[1:]):
        rows.append((m_coarse, float(np.linalg.norm(y_coarse - y_fine))))
    run.csv("convergence.csv", ["steps", "diff_to_double"], np.array(rows).reshape(-1, 2))


COMMANDS = {
    "sample-fbm": cmd_sample_fbm,
    "solve": cmd_solve,
    "malliavin": cmd_malliavin,
    "density": cmd_density,
    "verify-bounds": cmd_verify_bounds,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg, extras = parse_config(args.config)
        else:
            cfg, extras = ExperimentConfig(), dict(EXTRA_DEFAULTS)
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        args.threads = resolve_threads(args.threads)
        run = Run(args, cfg, extras)
        COMMANDS[args.command](run)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"fracheat: config error: {exc}", file=sys.stderr)
        return 2
    except (FracHeatError, OSError, ValueError) as exc:
        print(f"fracheat: error: {exc}", file=sys.stderr)
        return 1
    for path in run.written:
        print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
