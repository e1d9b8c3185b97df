"""Command-line entry point.

    becvortex run scenario.json [--beta 1 --set grid.points=128]
    becvortex sweep scenario.json --param beta=0:1:0.1 [--param x0=0.5,1]
    becvortex compare DIR_A DIR_B [-o report.json]
    becvortex detect field.bin [--r-edge R | --beta B]
    becvortex precession --x0 0.5,1,1.5 --beta 0,0.5,1

Exit status is 0 on success. On failure a JSON error manifest is printed
to stderr (and written to the output directory when there is one).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .field import GridSpec, read_snapshot
from .harness import Scenario, compare, parse_value, precession_experiment, run_scenario, sweep
from .tracking import DetectionError, detect, write_detections_csv

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3

# flags that mirror scenario keys
_SCENARIO_FLAGS = {
    "beta": float,
    "x0": float,
    "T": float,
    "dt": float,
    "stride": float,
    "family": str,
    "output": str,
    "name": str,
    "degree": int,
    "grid.points": int,
    "grid.extent": float,
}


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario JSON file")
    for key, typ in _SCENARIO_FLAGS.items():
        p.add_argument(f"--{key}", dest=key, type=typ, default=None)
    p.add_argument("--engines", type=lambda s: s.split(","), default=None, help="comma-separated engine list")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any scenario key")
    p.add_argument("--no-figures", action="store_true")


def _scenario_from_args(args) -> Scenario:
    s = Scenario.load(args.scenario)
    overrides = {k: getattr(args, k) for k in _SCENARIO_FLAGS if getattr(args, k) is not None}
    if args.engines is not None:
        overrides["engines"] = args.engines
    if args.no_figures:
        overrides["figures"] = False
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = parse_value(v)
    return s.with_overrides(overrides) if overrides else s


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="becvortex", description="Vortex dynamics in a trapped 2D condensate.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario with its engines")
    _add_scenario_args(p)

    p = sub.add_parser("sweep", help="run a scenario over parameter ranges")
    _add_scenario_args(p)
    p.add_argument("--param", action="append", required=True, metavar="KEY=A:B:STEP")

    p = sub.add_parser("compare", help="compare two engine bundles")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("-o", "--out", default=None, help="report path (default: stdout summary only)")

    p = sub.add_parser("detect", help="detect vortices in a field snapshot")
    p.add_argument("field")
    p.add_argument("--r-edge", type=float, default=None)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("-o", "--out", default=None, help="detections CSV (default: stdout)")

    p = sub.add_parser("precession", help="precession rate of a single vortex versus beta")
    p.add_argument("--x0", type=_floats, default=[0.1, 0.5, 1.0, 1.5, 2.0])
    p.add_argument("--beta", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--extent", type=float, default=8.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--periods", type=float, default=2.0)
    p.add_argument("--output", default="precession")
    return ap


def _error_manifest(command: str, exc: BaseException, output: str | None) -> dict:
    doc = {"status": "error", "command": command, "error_type": type(exc).__name__, "message": str(exc)}
    if output:
        try:
            Path(output).mkdir(parents=True, exist_ok=True)
            (Path(output) / "error.json").write_text(json.dumps(doc, indent=1) + "\n")
        except OSError:
            pass
    return doc


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    output = None
    try:
        if args.command in ("run", "sweep"):
            s = _scenario_from_args(args)
            output = s.output
            if args.command == "run":
                man = run_scenario(s)
            else:
                man = sweep(s, args.param)
            print(json.dumps({"status": "ok" if man["ok"] else "partial", "output": output}))
            return EXIT_OK if man["ok"] else EXIT_PARTIAL
        if args.command == "compare":
            rep = compare(args.dir_a, args.dir_b)
            if args.out:
                Path(args.out).write_text(json.dumps(rep, indent=1) + "\n")
            print(json.dumps(rep["summary"], indent=1))
            return EXIT_OK
        if args.command == "detect":
            f = read_snapshot(args.field)
            obs = detect(f, r_edge=args.r_edge, beta=args.beta)
            if args.out:
                write_detections_csv([obs], args.out)
            else:
                print("t,x,y,charge,residual")
                for o in obs:
                    print(f"{o.t:.10g},{o.x:.10g},{o.y:.10g},{o.charge},{o.residual:.3g}")
            return EXIT_OK
        if args.command == "precession":
            output = args.output
            res = precession_experiment(
                args.x0, args.beta, GridSpec(args.extent, args.points), args.dt, periods=args.periods, output=output
            )
            print(json.dumps(res["c"], indent=1))
            return EXIT_OK
    except (ValueError, DetectionError, OSError, RuntimeError) as exc:
        print(json.dumps(_error_manifest(args.command, exc, output)), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
