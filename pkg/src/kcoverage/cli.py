"""Command line entry point: ``kcoverage <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 too many degenerate trials.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import re
import sys

import numpy as np

from . import constants, coverage, critical, euler, harness, pointcloud, window
from .errors import ConfigError, DegenerateTrial, KCoverageError, OutOfRegime
from .pointcloud import SeedSpec


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _load_cloud(args) -> pointcloud.PointCloud:
    if getattr(args, "points_file", None):
        with open(args.points_file) as fh:
            return pointcloud.read_jsonl(fh)
    if getattr(args, "points", None):
        return pointcloud.from_coords(_floats(args.points), args.d)
    if args.n is None:
        raise ConfigError("give --points, --points-file or --n")
    return pointcloud.sample_poisson(args.n, args.d, SeedSpec(args.seed, args.trial))


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows(args, rows: list[dict]) -> str:
    if args.format == "json":
        return json.dumps(rows, indent=2) + "\n"
    return harness.to_csv(rows)


def cmd_sample(args) -> int:
    cloud = pointcloud.sample_poisson(args.n, args.d, SeedSpec(args.seed, args.trial))
    buf = io.StringIO()
    pointcloud.write_jsonl(cloud, buf)
    _emit(args, buf.getvalue())
    return 0


def cmd_critical(args) -> int:
    cloud = _load_cloud(args)
    win = critical.EnumerationWindow(args.r_min, args.r_max, args.mu)
    crits = critical.enumerate_critical_points(cloud, args.k, win)
    crits.sort(key=lambda c: (c.rho, c.generators))
    if args.format == "json":
        buf = io.StringIO()
        critical.write_jsonl(crits, buf)
        _emit(args, buf.getvalue())
    else:
        rows = [{**{f"x{i + 1}": float(c.center[i]) for i in range(cloud.dim)},
                 "rho": c.rho, "mu": c.index_mu, "m": c.m, "delta": c.delta}
                for c in crits]
        _emit(args, harness.to_csv(rows))
    return 0


def cmd_coverage(args) -> int:
    cloud = _load_cloud(args)
    if args.method == "morse":
        verdict = coverage.is_covered_morse(cloud, args.k, args.r)
    elif args.method == "grid":
        verdict = coverage.is_covered_grid(cloud, args.k, args.r, h=args.h)
    else:
        verdict = coverage.is_covered(cloud, args.k, args.r)
    _emit(args, verdict.to_json() + "\n")
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = harness.SweepConfig.from_json(fh.read())
    else:
        if args.n is None or args.w is None:
            raise ConfigError("sweep needs --n and --w (or --config)")
        cfg = harness.SweepConfig(d=args.d, k=args.k, n_values=_floats(args.n),
                                  w_values=_floats(args.w), mu_targets=_ints(args.mu),
                                  trials=args.trials, master_seed=args.seed)
    rows = harness.run_sweep(cfg, threads=args.threads)
    _emit(args, _rows(args, rows))
    total = sum(r["trials"] + r["excluded"] for r in rows)
    return 2 if harness.degenerate_overflow(sum(r["excluded"] for r in rows), total) else 0


def cmd_window(args) -> int:
    cfg = window.WindowConfig(args.n, args.d, args.k, args.lambda0)
    runs = window.run_window(cfg, args.trials, args.seed)
    ok = [t for t in runs if t.points is not None]
    report = window.gof_poisson([t.points for t in ok], cfg)
    report.extra["excluded"] = len(runs) - len(ok)
    decided = [t.covered for t in ok if t.covered is not None]
    report.extra["p_covered"] = float(np.mean(decided)) if decided else float("nan")
    report.extra["void_prediction"] = math.exp(-report.c_hat)
    _emit(args, json.dumps(report.to_dict(), indent=2) + "\n")
    if args.points_out:
        rows = [{**{f"x{i + 1}": float(p.location[i]) for i in range(cfg.d)},
                 "lambda": p.mark, "rho": p.rho, "trial_id": t.trial_id}
                for t in ok for p in t.points]
        with open(args.points_out, "w", newline="") as fh:
            fh.write(harness.to_csv(rows))
    return 2 if harness.degenerate_overflow(len(runs) - len(ok), len(runs)) else 0


def cmd_euler(args) -> int:
    if args.Lambda:
        Ls = _floats(args.Lambda)
    else:
        base = math.log(args.n) + (args.d + args.k - 2) * math.log(math.log(args.n))
        Ls = [base + w for w in _floats(args.w)]
    rows = euler.expected_euler_curve(args.n, args.d, args.k, Ls, args.trials, args.seed)
    out = [{"Lambda": r.Lambda, "mean_chi": r.mean_chi, "se": r.se, "trials": r.trials}
           for r in rows]
    _emit(args, _rows(args, out))
    return 0


def cmd_constants(args) -> int:
    est = constants.estimate_Cd(args.d, args.k, args.samples, SeedSpec(args.seed),
                                rotate=args.rotate, normalization=args.normalization)
    _emit(args, json.dumps(est.to_dict()) + "\n")
    return 0


def cmd_oracle(args) -> int:
    lams = _floats(args.lambda0)
    base = math.log(args.n) + (args.d + args.k - 2) * math.log(math.log(args.n))
    radii = [window.radius_for_Lambda(base + lams[t % len(lams)], args.n, args.d)
             for t in range(args.trials)]
    rows = harness.oracle_compare(args.n, args.d, args.k, radii, args.seed)
    _emit(args, _rows(args, rows))
    bad = sum(1 for r in rows if r["morse"] not in ("yes", "no"))
    return 2 if harness.degenerate_overflow(bad, len(rows)) else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kcoverage", description="k-coverage of the flat torus by random balls")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # global flags are also accepted after the subcommand
    late = _Parser(add_help=False)
    late.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    late.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    late.add_argument("--out", default=argparse.SUPPRESS)
    late.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[late], **kw)

    def common(sp, k=True, n=True):
        sp.add_argument("--d", type=int, default=2)
        if k:
            sp.add_argument("--k", type=int, default=2)
        if n:
            sp.add_argument("--n", type=float, default=None)

    sp = sub.add_parser("sample", help="Poisson sample as JSONL")
    common(sp, k=False)
    sp.add_argument("--trial", type=int, default=0)
    sp.set_defaults(func=cmd_sample, fmt="json")

    sp = sub.add_parser("critical-points", help="enumerate critical points in a window")
    common(sp)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--points", default=None, help="comma-separated coordinates")
    sp.add_argument("--points-file", default=None)
    sp.add_argument("--r-min", type=float, default=0.0)
    sp.add_argument("--r-max", type=float, default=0.25)
    sp.add_argument("--mu", type=int, default=None)
    sp.set_defaults(func=cmd_critical, fmt="json")

    sp = sub.add_parser("coverage", help="k-coverage verdict at radius r")
    common(sp)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--points", default=None, help="comma-separated coordinates")
    sp.add_argument("--points-file", default=None)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--h", type=float, default=None)
    sp.add_argument("--method", choices=("auto", "morse", "grid"), default="auto")
    sp.set_defaults(func=cmd_coverage, fmt="json")

    sp = sub.add_parser("sweep", help="phase-transition sweep over n, w, mu")
    common(sp, n=False)
    sp.add_argument("--n", default=None, help="comma-separated rates")
    sp.add_argument("--w", default=None, help="comma-separated offsets")
    sp.add_argument("--mu", default="2", help="comma-separated indices")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--config", default=None, help="JSON SweepConfig with schema_version")
    sp.set_defaults(func=cmd_sweep, fmt="csv")

    sp = sub.add_parser("window", help="Poisson-limit diagnostics in the critical window")
    common(sp)
    sp.add_argument("--lambda0", type=float, default=0.0)
    sp.add_argument("--trials", type=int, default=500)
    sp.add_argument("--points-out", default=None, help="CSV of marked points")
    sp.set_defaults(func=cmd_window, fmt="json")

    sp = sub.add_parser("euler", help="mean Euler characteristic curve")
    common(sp)
    sp.add_argument("--Lambda", default=None, help="comma-separated Lambda values")
    sp.add_argument("--w", default="-4,-2,0,2,4", help="offsets from the window centre")
    sp.add_argument("--trials", type=int, default=100)
    sp.set_defaults(func=cmd_euler, fmt="csv")

    sp = sub.add_parser("constants", help="Monte Carlo estimate of C_d")
    common(sp, n=False)
    sp.add_argument("--samples", type=int, default=10 ** 6)
    sp.add_argument("--rotate", action="store_true")
    sp.add_argument("--normalization", choices=("mecke", "printed"), default="mecke")
    sp.set_defaults(func=cmd_constants, fmt="json")

    sp = sub.add_parser("oracle-compare", help="Morse vs grid coverage per instance")
    common(sp)
    sp.add_argument("--lambda0", default="-1,0,1,2", help="window offsets cycled over trials")
    sp.add_argument("--trials", type=int, default=20)
    sp.set_defaults(func=cmd_oracle, fmt="csv")
    return p


_NUMERIC = re.compile(r"^-[0-9.]")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Allow ``--w -6,-3,0`` by rewriting it to ``--w=-6,-3,0``."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NUMERIC.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_join_negative_values(argv))
        if args.format is None:
            args.format = args.fmt
        if getattr(args, "n", None) is not None and args.command in (
                "sample", "window", "euler", "oracle-compare") and args.n < 3:
            raise ConfigError("n must be >= 3")
        if args.command in ("sample", "window", "euler", "oracle-compare") and args.n is None:
            raise ConfigError("--n is required")
        return args.func(args)
    except DegenerateTrial as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, OutOfRegime, ValueError, KCoverageError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
