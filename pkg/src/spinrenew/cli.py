"""Command-line front end.

    spinrenew simulate --gamma 1 --beta 0.25 --n 1500 --t-final 60 --seed 42 -o traj.csv
    spinrenew pde --gamma 1 --beta 1.1 --initial tilted --tilt 0.1
    spinrenew spectral-roots --gamma 1 --beta 0.769 --box=-2,1,-3,3
    spinrenew spectral-hopf --gamma 1 --beta-lo 0.5 --beta-hi 1.0
    spinrenew couple --gamma 1 --beta 0.5 --n 400 --t-final 10
    spinrenew sweep --gamma 2 --beta 0.1:1.8:0.05 --seeds 5
    spinrenew classify --input traj.csv
    spinrenew selftest

Exit status: 0 success, 1 invalid input, 2 numerical failure.  Trajectories
are CSV with a ``#``-prefixed JSON header holding the resolved configuration;
spectral and coupling results are JSON.  ``--config FILE`` reads ``key = value``
lines named like the long flags; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
import traceback

import numpy as np

from . import __version__
from .analysis import (DEFAULT_AMP_THRESHOLD, DEFAULT_MAG_THRESHOLD, classify_trajectory,
                       onset_window, sweep_beta)
from .meanfield_pde import DEFAULT_DY, DensityGrid, default_y_max, run_pde
from .model import MAX_SEED, ModelParams
from .particle_sim import INITIAL_CONDITIONS, make_initial, simulate, simulate_coupled
from .spectral import SpectralError, find_hopf, scan_roots

log = logging.getLogger("spinrenew")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

# keys that never go into the provenance header
_NOT_CONFIG = {"config", "output", "command", "handler", "verbose"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- value parsing

def parse_beta_list(text: str) -> list[float]:
    """``lo:hi:step`` (endpoints inclusive within half a step), a comma list, or one value."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if not step > 0 or hi < lo:
            raise ValueError(f"range {text!r} needs step > 0 and hi >= lo")
        n = int(math.floor((hi - lo) / step + 0.5))
        return [round(lo + i * step, 12) for i in range(n + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


def parse_box(text: str) -> tuple[float, float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"box must be re_lo,re_hi,im_lo,im_hi, got {text!r}")
    if parts[1] < parts[0] or parts[3] < parts[2]:
        raise ValueError(f"box bounds must be ordered, got {text!r}")
    return tuple(parts)


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


# ---------------------------------------------------------------- config files

def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out


def format_config(config: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.items())


def _config_argv(config: dict[str, str]) -> list[str]:
    argv = []
    for key, value in config.items():
        argv.append(f"--{key}={value}")
    return argv


def _resolved(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in _NOT_CONFIG or value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(repr(float(v)) for v in value)
        out[key.replace("_", "-")] = value
    return out


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    return repr(float(x))


def write_atomic(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".spinrenew-", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(args) -> dict:
    return {"command": args.command, "version": __version__, "config": _resolved(args)}


def trajectory_csv(args, times, m, mean_y) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_header(args), sort_keys=True) + "\n")
    buf.write("t,m,mean_y\n")
    for a, b, c in zip(times, m, mean_y):
        buf.write(f"{_fmt(a)},{_fmt(b)},{_fmt(c)}\n")
    return buf.getvalue()


def json_output(args, payload: dict) -> str:
    doc = dict(_header(args))
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_trajectory_csv(path: str):
    """(times, m) from a file written by ``simulate`` or ``pde``."""
    times, m = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("t,"):
                continue
            parts = line.strip().split(",")
            if len(parts) < 2:
                continue
            times.append(float(parts[0]))
            m.append(float(parts[1]))
    if not times:
        raise ValueError(f"{path} holds no trajectory rows")
    return np.array(times), np.array(m)


# ---------------------------------------------------------------- commands

def _params(args, beta=None) -> ModelParams:
    return ModelParams(gamma=args.gamma, beta=args.beta if beta is None else beta,
                       n_particles=getattr(args, "n", 1), t_final=args.t_final,
                       seed=getattr(args, "seed", 0))


def cmd_simulate(args) -> int:
    params = _params(args)
    traj = simulate(params, make_initial(args.initial, params), sample_dt=args.sample_dt)
    write_atomic(args.output, trajectory_csv(args, traj.sample_times, traj.magnetization, traj.mean_age))
    return EXIT_OK


def _pde_initial(args) -> DensityGrid:
    y_max = args.y_max or default_y_max(args.gamma, args.beta)
    if args.initial == "stationary":
        return DensityGrid.stationary(args.gamma, y_max, args.dy)
    if args.initial == "tilted":
        return DensityGrid.stationary(args.gamma, y_max, args.dy, tilt=args.tilt)
    if args.initial == "all-plus":
        return DensityGrid.newborn(args.gamma, 1.0, y_max, args.dy)
    raise ValueError(f"unknown PDE initial condition {args.initial!r}")


def cmd_pde(args) -> int:
    params = _params(args)
    traj = run_pde(params, _pde_initial(args), sample_dt=args.sample_dt, dt=args.dt)
    write_atomic(args.output, trajectory_csv(args, traj.sample_times, traj.magnetization, traj.mean_age))
    return EXIT_OK


def cmd_spectral_roots(args) -> int:
    roots = scan_roots(args.beta, args.gamma, args.box, grid_density=args.density)
    payload = {
        "beta": args.beta,
        "gamma": args.gamma,
        "roots": [{"re": r.lam.re, "im": r.lam.im, "residual": r.residual} for r in roots],
        "flagged_cells": [list(c) for c in roots.flagged_cells],
    }
    write_atomic(args.output, json_output(args, payload))
    return EXIT_OK if not roots.flagged_cells else EXIT_NUMERIC


def cmd_spectral_hopf(args) -> int:
    res = find_hopf(args.gamma, args.beta_lo, args.beta_hi, tol_beta=args.tol)
    payload = {
        "gamma": args.gamma,
        "hopf": {"beta_c": res.beta_c, "omega_c": res.omega_c, "bracket": list(res.bracket)},
    }
    write_atomic(args.output, json_output(args, payload))
    return EXIT_OK


def cmd_couple(args) -> int:
    params = _params(args)
    y_max = default_y_max(args.gamma, args.beta)
    mf = run_pde(params, DensityGrid.newborn(args.gamma, 1.0, y_max, DEFAULT_DY), sample_dt=DEFAULT_DY)
    stats = simulate_coupled(params, mf, window=args.window)
    payload = {"n": stats.n, "distance": stats.distance,
               "max_particle_sup": float(np.max(stats.per_particle_sup))}
    write_atomic(args.output, json_output(args, payload))
    return EXIT_OK


def cmd_sweep(args) -> int:
    betas = args.beta
    if not betas:
        raise ValueError("empty beta list")
    params = ModelParams(gamma=args.gamma, beta=betas[0], n_particles=args.n,
                         t_final=args.t_final, seed=args.seed)
    rows = sweep_beta(params, betas, args.seeds, initial=args.initial, burn_in=args.burn_in,
                      amp_threshold=args.amp_threshold, mag_threshold=args.mag_threshold,
                      sample_dt=args.sample_dt, threads=args.threads)
    header = _header(args)
    window = onset_window(rows)
    header["onset_window"] = list(window) if window else None
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write("beta,label,votes,mean_amplitude,mean_period\n")
    for r in rows:
        period = "" if r.mean_period is None else _fmt(r.mean_period)
        buf.write(f"{_fmt(r.beta)},{r.label.value},{r.vote_split},{_fmt(r.mean_amplitude)},{period}\n")
    write_atomic(args.output, buf.getvalue())
    return EXIT_OK


def cmd_classify(args) -> int:
    t, m = read_trajectory_csv(args.input)
    lab = classify_trajectory((t, m), args.burn_in, args.amp_threshold, args.mag_threshold)
    payload = {"kind": lab.kind.value, "amplitude": lab.amplitude, "period": lab.period,
               "late_mean_abs_m": lab.late_mean_abs_m}
    write_atomic(args.output, json_output(args, payload))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(verbose=not args.quiet)
    return EXIT_OK if failures == 0 else EXIT_INVALID


# ---------------------------------------------------------------- parser

def _add_model(p, n=True, seed=True, beta=True):
    p.add_argument("--gamma", type=int, required=True, help="tail exponent (nonnegative integer)")
    if beta:
        p.add_argument("--beta", type=_nonneg, required=True, help="inverse temperature")
    if n:
        p.add_argument("--n", type=_count, default=1500, help="number of particles")
    p.add_argument("--t-final", type=_positive, default=100.0, help="time horizon")
    if seed:
        p.add_argument("--seed", type=_seed, default=0, help="64-bit master seed")


def _add_output(p):
    p.add_argument("-o", "--output", default=None, help="output file (default stdout)")


def _add_thresholds(p):
    p.add_argument("--burn-in", type=_nonneg, default=None, help="discarded transient (default T/2)")
    p.add_argument("--amp-threshold", type=_positive, default=DEFAULT_AMP_THRESHOLD)
    p.add_argument("--mag-threshold", type=_positive, default=DEFAULT_MAG_THRESHOLD)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinrenew", description="Age-dependent mean-field spin system toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="key = value file with default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="exact event-driven N-particle run")
    _add_model(p)
    p.add_argument("--sample-dt", type=_positive, default=0.05)
    p.add_argument("--initial", choices=INITIAL_CONDITIONS, default="all-plus")
    _add_output(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("pde", help="mean-field density solver")
    _add_model(p, n=False, seed=False)
    p.add_argument("--dy", type=_positive, default=DEFAULT_DY)
    p.add_argument("--dt", type=_positive, default=None, help="time step (default dy)")
    p.add_argument("--y-max", type=_positive, default=None)
    p.add_argument("--sample-dt", type=_positive, default=0.05)
    p.add_argument("--initial", choices=("stationary", "tilted", "all-plus"), default="all-plus")
    p.add_argument("--tilt", type=float, default=0.1, help="spin imbalance for --initial tilted")
    _add_output(p)
    p.set_defaults(handler=cmd_pde)

    p = sub.add_parser("spectral-roots", help="eigenvalues of the linearization in a box")
    p.add_argument("--gamma", type=int, required=True, choices=(1, 2))
    p.add_argument("--beta", type=_nonneg, required=True)
    p.add_argument("--box", type=parse_box, default=(-5.0, 5.0, -5.0, 5.0), help="re_lo,re_hi,im_lo,im_hi")
    p.add_argument("--density", type=_positive, default=1.5, help="Newton starts per unit length")
    _add_output(p)
    p.set_defaults(handler=cmd_spectral_roots)

    p = sub.add_parser("spectral-hopf", help="critical beta and frequency")
    p.add_argument("--gamma", type=int, required=True, choices=(1, 2))
    p.add_argument("--beta-lo", type=_nonneg, required=True)
    p.add_argument("--beta-hi", type=_nonneg, required=True)
    p.add_argument("--tol", type=_positive, default=1e-6)
    _add_output(p)
    p.set_defaults(handler=cmd_spectral_hopf)

    p = sub.add_parser("couple", help="distance between the interacting system and mean-field copies")
    _add_model(p)
    p.add_argument("--window", type=_positive, default=1.0, help="thinning bound refresh interval")
    _add_output(p)
    p.set_defaults(handler=cmd_couple)

    p = sub.add_parser("sweep", help="phase classification over a beta grid")
    p.add_argument("--gamma", type=int, required=True)
    p.add_argument("--beta", type=parse_beta_list, required=True, help="lo:hi:step or a comma list")
    p.add_argument("--n", type=_count, default=1500)
    p.add_argument("--t-final", type=_positive, default=100.0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--seeds", type=_count, default=5, help="replicas per beta")
    p.add_argument("--sample-dt", type=_positive, default=0.05)
    p.add_argument("--initial", choices=INITIAL_CONDITIONS, default="all-plus")
    p.add_argument("--threads", type=_count, default=None, help="worker cap (default SPINRENEW_THREADS or CPUs)")
    _add_thresholds(p)
    _add_output(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("classify", help="label a saved trajectory")
    p.add_argument("--input", required=True)
    _add_thresholds(p)
    _add_output(p)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("selftest", help="run the built-in example checks")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_selftest)
    return parser


def _expand_config(argv: list[str]) -> list[str]:
    """Splice ``--config`` values in right after the subcommand so explicit flags override them."""
    path = None
    rest = []
    it = iter(argv)
    for a in it:
        if a == "--config":
            path = next(it, None)
            if path is None:
                raise UsageError("--config needs a file")
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        else:
            rest.append(a)
    if path is None:
        return argv
    extra = _config_argv(read_config(path))
    for i, a in enumerate(rest):
        if not a.startswith("-"):
            return rest[: i + 1] + extra + rest[i + 1:]
    return rest + extra


def run_command(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError) as exc:
        print(f"spinrenew: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        code = args.handler(args)
    except SpectralError as exc:
        print(f"spinrenew: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"spinrenew: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, ArithmeticError) as exc:
        log.debug("%s", traceback.format_exc())
        print(f"spinrenew: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    return code


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
