"""Command-line front end: ``friction-walk <command> [options]``.

Exit codes: 0 success / all checks pass, 1 a check failed, 2 usage or
configuration error, 3 a resource cap was hit.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .analysis import CHECKS, run_check
from .constants import b_by_quadrature, closed_form_constants, logtheta_by_quadrature
from .errors import DomainError, FrictionWalkError, ResourceLimit, ZeroMomentum
from .kernel import PhysParams
from .meanfield import MeanFieldState, log_grid, meanfield_distance, meanfield_speed
from .rng import RandomStream
from .simulate import resolve_threads, run_ensemble, simulate_trajectory

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

# flags that never change the content of an output file
_NOT_CONFIG = {"out", "config", "threads", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _vec3(text):
    try:
        parts = [float(x) for x in text.replace(" ", "").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(parts) != 3 or not all(math.isfinite(x) for x in parts):
        raise argparse.ArgumentTypeError(f"expected three finite comma-separated numbers, got {text!r}")
    return parts


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be finite and > 0, got {text}")
    return v


def _count(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--m", type=float, default=1.0, help="tracer mass (default 1)")
    common.add_argument("--M", type=float, default=1.0, help="atom mass (default 1)")
    common.add_argument("--x0", type=_vec3, default=[0.0, 0.0, 0.0], help="initial position x,y,z (default 0,0,0)")
    common.add_argument("--k0", type=_vec3, default=[1.0, 0.0, 0.0], help="initial momentum x,y,z (default 1,0,0)")
    common.add_argument("--seed", type=_seed, default=0, help="64-bit base seed (default 0)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None, help="output format")
    common.add_argument("--threads", type=_count, default=None, help="worker threads (env FRICTION_WALK_THREADS, default 1)")
    common.add_argument("--config", default=None, help="re-run from the config embedded in an earlier output file")

    parser = _Parser(prog="friction-walk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("constants", parents=[common], help="limit constants as JSON")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("simulate", parents=[common], help="one trajectory, one row per jump")
    p.add_argument("--t-max", type=float, default=1e3, help="final time (default 1e3)")
    p.add_argument("--max-jumps", type=_count, default=10**8, help="jump cap (default 1e8)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ensemble", parents=[common], help="terminal states of many trajectories")
    p.add_argument("--t-max", type=float, default=1e3, help="final time (default 1e3)")
    p.add_argument("--count", type=_count, default=100, help="number of trajectories (default 100)")
    p.add_argument("--max-jumps", type=_count, default=10**8, help="jump cap per trajectory (default 1e8)")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("meanfield", parents=[common], help="mean-field |K| and |X - x0| on a log grid")
    p.add_argument("--t-min", type=_positive, default=0.1, help="first grid time (default 0.1)")
    p.add_argument("--t-max", type=_positive, default=1e6, help="last grid time (default 1e6)")
    p.add_argument("--per-decade", type=_count, default=8, help="grid points per decade (default 8)")
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("verify", parents=[common], help="run statistical checks")
    p.add_argument("--check", action="append", default=None, metavar="NAME", help=f"check to run, repeatable: {', '.join(CHECKS)}")
    p.add_argument("--all", action="store_true", help="run every check")
    p.add_argument("--timing", action="store_true", help="include wall_time in the report")
    p.set_defaults(func=cmd_verify)
    return parser


# -- config round trip ------------------------------------------------------


def _config_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}


def _meta(args) -> dict:
    return {"version": __version__, "seed": args.seed, "config": _config_of(args)}


def _read_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith(("{", "[")):
        data = json.loads(text)
        if isinstance(data, list):
            data = data[0] if data else {}
        meta = data.get("meta", data)
        return meta.get("config", meta)
    for line in text.splitlines():
        if line.startswith("# config "):
            return json.loads(line[len("# config ") :])
    raise UsageError(f"no embedded config found in {path}")


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _read_config(args.config)
        if cfg.get("command") != args.command:
            raise UsageError(f"config in {args.config} is for {cfg.get('command')!r}, not {args.command!r}")
        # explicit flags win over the embedded config
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k: v for k, v in cfg.items() if k != "command"})
        args = parser.parse_args(argv)
    return args


def _params(args) -> PhysParams:
    return PhysParams(args.m, args.M)


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _csv_header(args):
    return [f"friction-walk {__version__}", f"seed {args.seed}", "config " + json.dumps(_config_of(args), sort_keys=False)]


# -- commands ---------------------------------------------------------------


def cmd_constants(args) -> int:
    p = _params(args)
    c = closed_form_constants(p)
    out = {
        "a": c.a,
        "b": c.b,
        "theta": c.theta,
        "log_theta": c.log_theta,
        "sigma2": c.sigma2,
        "eta": p.eta,
        "quadrature_delta": {
            "b": abs(b_by_quadrature(c.a) - c.b),
            "log_theta": abs(logtheta_by_quadrature(c.a) - c.log_theta),
        },
    }
    if args.format == "csv":
        buf = io.StringIO()
        for line in _csv_header(args):
            buf.write(f"# {line}\n")
        buf.write("name,value\n")
        for k, v in out.items():
            if isinstance(v, dict):
                for k2, v2 in v.items():
                    buf.write(f"quadrature_delta_{k2},{v2!r}\n")
            else:
                buf.write(f"{k},{v!r}\n")
        _emit(args, buf.getvalue())
    else:
        out["meta"] = _meta(args)
        _emit(args, _dumps(out))
    return EXIT_OK


def _start(args):
    if not np.any(args.k0):
        raise ZeroMomentum("k0 = 0 is absorbing; give a nonzero --k0")
    if not (args.t_max > 0 and math.isfinite(args.t_max)):
        raise DomainError(f"--t-max must be finite and > 0, got {args.t_max}")


def cmd_simulate(args) -> int:
    p = _params(args)
    _start(args)
    tr = simulate_trajectory(p, args.x0, args.k0, args.t_max, RandomStream(args.seed).substream(0), max_jumps=args.max_jumps)
    if args.format == "json":
        d = tr.to_dict()
        d["meta"] = _meta(args)
        _emit(args, _dumps(d))
    else:
        buf = io.StringIO()
        tr.to_csv(buf, _csv_header(args))
        _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_ensemble(args) -> int:
    p = _params(args)
    _start(args)
    ens = run_ensemble(p, args.x0, args.k0, args.t_max, args.count, args.seed, threads=args.threads, max_jumps=args.max_jumps)
    if args.format == "csv":
        buf = io.StringIO()
        for line in _csv_header(args):
            buf.write(f"# {line}\n")
        buf.write("index,x1,x2,x3,k1,k2,k3,jumps\n")
        for i in range(ens.count):
            vals = [*ens.X[i], *ens.K[i]]
            buf.write(f"{i}," + ",".join(format(float(v), ".17g") for v in vals) + f",{ens.jumps[i]}\n")
        _emit(args, buf.getvalue())
    else:
        d = ens.to_dict()
        d["meta"] = _meta(args)
        _emit(args, _dumps(d))
    return EXIT_OK


def cmd_meanfield(args) -> int:
    p = _params(args)
    if not np.any(args.k0):
        raise ZeroMomentum("k0 = 0 is absorbing; give a nonzero --k0")
    if not args.t_min < args.t_max:
        raise DomainError("--t-min must be below --t-max")
    st = MeanFieldState.from_params(p, args.x0, args.k0)
    t = log_grid(args.t_min, args.t_max, args.per_decade)
    speed = meanfield_speed(st, t)
    dist = meanfield_distance(st, t)
    if args.format == "json":
        _emit(args, _dumps({"t": t.tolist(), "|K|": speed.tolist(), "|X-x0|": dist.tolist(), "meta": _meta(args)}))
    else:
        buf = io.StringIO()
        for line in _csv_header(args):
            buf.write(f"# {line}\n")
        buf.write("t,|K|,|X-x0|\n")
        for row in zip(t, speed, dist):
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(CHECKS) if args.all else (args.check or [])
    if not names:
        raise UsageError(f"name at least one --check or pass --all; valid checks: {', '.join(CHECKS)}")
    bad = [n for n in names if n not in CHECKS]
    if bad:
        raise UsageError(f"unknown check(s) {', '.join(bad)}; valid checks: {', '.join(CHECKS)}")
    p = _params(args)
    meta = _meta(args)
    reports = []
    for name in names:
        rep = run_check(name, p, args.seed, threads=args.threads)
        print(rep.line(), f"({rep.wall_time:.2f} s)", file=sys.stderr)
        d = rep.to_dict(timing=args.timing)
        d["meta"] = meta
        reports.append(d)
    _emit(args, _dumps(reports))
    return EXIT_OK if all(r["pass"] for r in reports) else EXIT_FAIL


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        resolve_threads(args.threads)
        if args.format is None:
            args.format = "csv" if args.command in ("simulate", "meanfield") else "json"
        return args.func(args)
    except UsageError as e:
        print(f"friction-walk: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimit as e:
        print(f"friction-walk: resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (FrictionWalkError, ValueError, OSError) as e:
        print(f"friction-walk: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
