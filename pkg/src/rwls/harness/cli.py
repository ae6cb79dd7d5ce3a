"""Command-line entry point.

Exit status: 0 when every check passes, 2 on a statistical failure, 1 on a
usage or configuration error.  Settings come from ``--config FILE`` (JSON)
and are overridden by explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from rwls.exponents import ExponentTable
from rwls.green import assemble_green
from rwls.harness import mc
from rwls.lattice import Domain
from rwls.loopsoup import occupation, sample_soup
from rwls.rng import stream

EXIT_OK, EXIT_USAGE, EXIT_STAT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *names: str) -> None:
    p.add_argument("--config", help="JSON file with configuration keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="write here instead of stdout")
    p.add_argument("--workers", type=int, help="process-pool size (does not affect results)")
    opts = {
        "N": dict(type=int),
        "alpha": dict(type=float),
        "replicas": dict(type=int),
        "lambdas": dict(type=float, nargs="+"),
        "samples": dict(type=int),
    }
    for name in names:
        flags = {"replicas": ["--replicas", "--reps"], "lambdas": ["--lambdas", "--lambda"]}.get(name, [f"--{name}"])
        p.add_argument(*flags, dest=name, **opts[name])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rwls", description="Random walk loop soup laboratory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exponents", help="arm exponents as functions of alpha")
    p.add_argument("--alpha", type=float, nargs="+", default=[0.125, 0.25, 0.375, 0.5])
    p.add_argument("--output", "-o")

    p = sub.add_parser("green", help="exact Green's function facts on B_N")
    p.add_argument("--N", type=int, default=8)
    p.add_argument("--output", "-o")

    p = sub.add_parser("sample-soup", help="one soup as JSON lines")
    _common(p, "N", "alpha")

    p = sub.add_parser("occupation", help="occupation field of one soup as CSV")
    _common(p, "N", "alpha")

    p = sub.add_parser("crossing-curve", help="crossing probabilities on a lambda grid")
    _common(p, "N", "alpha", "replicas", "lambdas")

    p = sub.add_parser("critical-lambda", help="bisection for the crossing level")
    _common(p, "N", "alpha", "replicas")
    p.add_argument("--bounds", type=float, nargs=2)
    p.add_argument("--level", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("arm-scan", help="arm probabilities against d2/d1")
    _common(p, "alpha", "replicas")
    p.add_argument("--d1", type=int)
    p.add_argument("--ratios", type=int, nargs="+")

    p = sub.add_parser("iso-suite", help="exact-law statistical tests")
    _common(p, "N", "alpha", "samples")
    p.add_argument("--t", type=float)
    p.add_argument("--corrupt", action="store_true", default=None, help="negative control: wrong Gamma shape")

    p = sub.add_parser("thickpoints", help="thick points of the glued-boundary walk")
    _common(p, "N", "replicas")
    p.add_argument("--theta", type=float)
    p.add_argument("--a", type=float)

    p = sub.add_parser("metric-crossing", help="metric-graph against discrete crossings")
    _common(p, "N", "alpha", "replicas", "lambdas")
    p.add_argument("--m", type=int)
    p.add_argument("--K", type=float)
    return parser


_NOT_CONFIG = {"command", "config", "output", "workers"}


def load_config(args: argparse.Namespace) -> mc.McConfig:
    base: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
    for k, v in vars(args).items():
        if k not in _NOT_CONFIG and v is not None:
            base[k] = v
    base["kind"] = args.command
    if getattr(args, "workers", None) is not None:
        base["workers"] = args.workers
    try:
        return mc.McConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _run(args) -> int:
    cmd = args.command
    if cmd == "exponents":
        try:
            rows = [ExponentTable.at(a).as_dict() for a in args.alpha]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        _emit(_dump(rows), args.output)
        return EXIT_OK
    if cmd == "green":
        if args.N < 1:
            raise UsageError("N must be positive")
        d = Domain.box(args.N)
        G = assemble_green(d)
        g00 = G((0, 0), (0, 0))
        out = {
            "N": args.N,
            "G00": g00,
            "G00_minus_log_term": g00 - 2 / math.pi * math.log(args.N),
            "G_origin_to_east": G((0, 0), (1, 0)),
            "return_probability": 1 - 1 / g00,
        }
        if len(d) <= 4096:
            out["row_residual"] = G.row_residual()
        _emit(_dump(out), args.output)
        return EXIT_OK

    cfg = load_config(args)
    if cmd == "sample-soup":
        soup = sample_soup(Domain.box(cfg.N), cfg.alpha, stream(cfg.seed, 0, mc.SOUP), budget=cfg.budget, seed=cfg.seed)
        _emit(soup.to_jsonl(), args.output)
        return EXIT_OK
    if cmd == "occupation":
        d = Domain.box(cfg.N)
        soup = sample_soup(d, cfg.alpha, stream(cfg.seed, 0, mc.SOUP), budget=cfg.budget)
        f = occupation(soup, stream(cfg.seed, 0, mc.OCC))
        rows = [(int(x), int(y), int(n), repr(float(X)), repr(float(Z))) for (x, y), n, X, Z in zip(d.coords, f.Y, f.X, f.Z)]
        _emit(_csv(rows, ["x", "y", "visits", "X", "Z"]), args.output)
        return EXIT_OK
    if cmd == "crossing-curve":
        rep = mc.crossing_curve(cfg)
    elif cmd == "critical-lambda":
        rep = mc.critical_lambda_search(cfg)
    elif cmd == "arm-scan":
        rep = mc.arm_probability_scan(cfg)
    elif cmd == "iso-suite":
        rep = mc.isomorphism_suite(cfg)
    elif cmd == "thickpoints":
        rows = mc.thick_point_runs(cfg)
        _emit(_csv([(r, s, int(c)) for r, s, c in rows], ["replica", "thick_points", "crossed"]), args.output)
        return EXIT_OK
    elif cmd == "metric-crossing":
        rows = mc.metric_crossing_runs(cfg)
        _emit(_csv([(r, int(a), int(b), g) for r, a, b, g in rows], ["replica", "discrete", "metric", "lambda_good"]), args.output)
        return EXIT_OK
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown command {cmd}")
    _emit(rep.to_json(), args.output)
    return EXIT_OK if rep.passed else EXIT_STAT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except UsageError as exc:
        print(f"rwls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"rwls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
