"""Command-line entry point: ``almostcx <subcommand> ...``.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a usage
or schema error.  Outputs go under ``$ALMOSTCX_OUTPUT_ROOT`` (default
``./almostcx-out``), one directory per experiment, plus ``runlog.jsonl``.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import harness
from .candidates import BUILTIN_CANDIDATES
from .errors import SchemaError
from .measure import BUILTIN_MEASURES
from .structure import BUILTIN_STRUCTURES

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text, n=None):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _complexes(text):
    try:
        return [[c.real, c.imag] for c in harness.complex_vector(text.split(","))]
    except ValueError:
        raise UsageError(f"expected comma-separated complex numbers, got {text!r}") from None


def _structure(arg):
    """A builtin name (optionally ``builtin:``-prefixed) or a JSON config path."""
    name = arg.split(":", 1)[1] if arg.startswith("builtin:") else arg
    if name in BUILTIN_STRUCTURES:
        return name
    path = Path(arg)
    if not path.exists():
        raise UsageError(f"no builtin structure or file named {arg!r}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"structure file is not valid JSON: {exc}") from None


def _candidate(arg):
    if arg in BUILTIN_CANDIDATES or arg.startswith("expr:"):
        return arg
    return "expr:" + arg


def _jets(arg, params):
    """``axis:count=..,radius=..,seed=..,rho=..`` or a JSON file of jets."""
    if arg.startswith("axis"):
        opts = arg.split(":", 1)[1] if ":" in arg else ""
        for kv in filter(None, opts.split(",")):
            key, _, val = kv.partition("=")
            if key not in ("count", "radius", "seed", "rho"):
                raise UsageError(f"unknown jet sampler option {key!r}")
            params["seed_jets" if key == "seed" else key] = int(val) if key in ("count", "seed") else float(val)
        return
    path = Path(arg)
    if not path.exists():
        raise UsageError(f"jet file {arg!r} not found")
    params["jets"] = json.loads(path.read_text())


def _decades(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError("--decades expects HI:LO, e.g. 1e-2:1e-8")
    hi, lo = (float(x) for x in parts)
    if not (0 < lo < hi < 1):
        raise UsageError("--decades needs 0 < LO < HI < 1")
    return hi, lo


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="almostcx", description="Discs, plurisubharmonic certificates and potential-theory experiments.", epilog="exit codes: 0 pass, 1 any check failed, 2 usage or schema error")
    p.add_argument("--output-root", help="override $%s" % harness.OUTPUT_ENV)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sd = sub.add_parser("solve-disc", help="solve one pseudoholomorphic disc")
    sd.add_argument("--structure", default="example_part3")
    sd.add_argument("--center", required=True, help="comma-separated complex, e.g. 0.3+0.1j,0.05")
    sd.add_argument("--deriv", required=True)
    sd.add_argument("--radius", type=float, default=0.05)
    sd.add_argument("--grid", type=int, default=256)
    sd.add_argument("--tol", type=float, default=1e-8)
    sd.add_argument("--out", help="copy the JSON solution here")

    cp = sub.add_parser("certify-psh", help="test a candidate on solved discs")
    cp.add_argument("--structure", default="example_part3")
    cp.add_argument("--candidate", default="prop1")
    cp.add_argument("--K", default="auto")
    cp.add_argument("--jets", default="axis:count=50,radius=1e-2,seed=0")
    cp.add_argument("--grid", type=int, default=16)
    cp.add_argument("--out", help="copy the per-jet report CSV here")

    ce = sub.add_parser("counterexample", help="run the explicit-disc attack")
    ce.add_argument("--candidate", default="log-z2")
    ce.add_argument("--K", type=float, default=1.0, help="candidate constant where it has one")
    ce.add_argument("--K2", type=float, default=8.0)
    ce.add_argument("--decades", default="1e-2:1e-8")
    ce.add_argument("--per-decade", type=int, default=1)
    ce.add_argument("--angles", type=int, default=64)
    ce.add_argument("--mask", default="", help="fat-set .npz written by measure-lab a1")
    ce.add_argument("--out", help="copy the attack CSV here")

    ml = sub.add_parser("measure-lab", help="potential-theory experiments")
    ml.add_argument("experiment", choices=["a1", "a2", "a3", "remark1"])
    ml.add_argument("--measure", action="append",
                    help="builtin measure or CSV cell dump (a1, repeatable)")
    ml.add_argument("--grid", type=int, default=2048)
    ml.add_argument("--out", help="copy the main table CSV here")

    nj = sub.add_parser("nijenhuis", help="evaluate the Nijenhuis tensor")
    nj.add_argument("--structure", default="example_part3")
    nj.add_argument("--point", default="0,0,0.5,0")
    nj.add_argument("--X", default="1,0,0,0")
    nj.add_argument("--Y", default="0,0,1,0")
    nj.add_argument("--h", type=float, default=1e-4)
    nj.add_argument("--expect-zero", action="store_true", help="integrable structure: skip the nonzero check")

    nm = sub.add_parser("normalize", help="build the axis normalization and test it")
    nm.add_argument("--structure", default="toy_normalizable")
    nm.add_argument("--jets", type=int, default=40)
    nm.add_argument("--out", help="copy the decay CSV here")

    rn = sub.add_parser("run", help="run JSON experiment specs or builtin:<name>")
    rn.add_argument("spec", nargs="+")
    rn.add_argument("--plotdata", help="also write long-format plot data here (single spec)")
    rn.add_argument("--parallel", type=int, default=1, help="worker processes for independent specs")

    sub.add_parser("list-builtins", help="list builtin experiments, structures, candidates, measures")
    return p


def _spec_for(args) -> tuple:
    """(ExperimentSpec, table-or-file to copy to --out)."""
    cmd = args.command
    if cmd == "solve-disc":
        params = {"structure": _structure(args.structure), "center": _complexes(args.center),
                  "deriv": _complexes(args.deriv), "radius": args.radius, "grid": args.grid,
                  "tol": args.tol}
        return harness.ExperimentSpec("solve-disc", "solve-disc", params, seed=args.seed), "solution.json"
    if cmd == "certify-psh":
        params = {"structure": _structure(args.structure), "candidate": _candidate(args.candidate),
                  "K": args.K if args.K == "auto" else float(args.K), "grid": args.grid}
        _jets(args.jets, params)
        return harness.ExperimentSpec("certify-psh", "certify-psh", params, seed=args.seed), "report.csv"
    if cmd == "counterexample":
        hi, lo = _decades(args.decades)
        params = {"candidate": _candidate(args.candidate), "K": args.K, "K2": args.K2, "r_max": hi,
                  "r_min": lo, "per_decade": args.per_decade, "n_angles": args.angles,
                  "mask": args.mask}
        if args.mask and not Path(args.mask).exists():
            raise UsageError(f"mask file {args.mask!r} not found")
        return harness.ExperimentSpec("counterexample", "attack", params, seed=args.seed), "attack.csv"
    if cmd == "measure-lab":
        op = {"a1": "measure-a1", "a2": "measure-a2", "a3": "measure-a3", "remark1": "measure-remark1"}
        params = {}
        if args.experiment in ("a1", "a2"):
            params["grid"] = args.grid
        if args.measure:
            if args.experiment != "a1":
                raise UsageError("--measure applies to a1 only")
            for m in args.measure:
                if m not in BUILTIN_MEASURES and not Path(m).exists():
                    raise UsageError(f"no builtin measure or file named {m!r}")
            params["measures"] = args.measure
        main_table = {"a1": "density.csv", "a2": "weak_l1.csv", "a3": "annuli.csv", "remark1": "annuli.csv"}
        name = f"measure-{args.experiment}"
        return harness.ExperimentSpec(name, op[args.experiment], params, seed=args.seed), \
            main_table[args.experiment]
    if cmd == "nijenhuis":
        params = {"structure": _structure(args.structure), "point": _floats(args.point),
                  "X": _floats(args.X), "Y": _floats(args.Y), "h": args.h,
                  "expect_nonzero": not args.expect_zero}
        if not (len(params["point"]) == len(params["X"]) == len(params["Y"])):
            raise UsageError("--point, --X and --Y must have the same length")
        return harness.ExperimentSpec("nijenhuis", "nijenhuis", params, seed=args.seed), None
    if cmd == "normalize":
        params = {"structure": _structure(args.structure), "jets": args.jets}
        return harness.ExperimentSpec("normalize", "normalize", params, seed=args.seed), "decay.csv"
    raise UsageError(f"unknown command {cmd!r}")


def _load_run_spec(arg, seed):
    if arg.startswith("builtin:"):
        try:
            return harness.builtin_spec(arg.split(":", 1)[1], seed=seed)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    if not Path(arg).exists():
        raise UsageError(f"spec file {arg!r} not found")
    return harness.load_spec(arg)


def _run_one(spec, root):
    return harness.run(spec, root=root)


def _report(rec, out=None, copy_name=None, plotdata=None):
    for check, v in rec.verdicts.items():
        print(f"{v:8s} {rec.name}: {check}")
    if rec.error:
        print(f"error: {rec.name}: {rec.error}", file=sys.stderr)
    for art in rec.artifacts:
        print(f"wrote {art['path']}")
    if out and copy_name:
        src = next((a["path"] for a in rec.artifacts if Path(a["path"]).name == copy_name), None)
        if src is not None:
            shutil.copyfile(src, out)
            print(f"wrote {out}")
    if plotdata:
        print(f"wrote {harness.emit_plotdata(rec, plotdata)}")


def list_builtins(out=None):
    out = sys.stdout if out is None else out
    print("experiments:", file=out)
    for name, b in harness.BUILTINS.items():
        print(f"  {name:22s} operation={b['operation']}", file=out)
    print("operations: " + ", ".join(harness.OPERATIONS), file=out)
    print("structures: " + ", ".join(BUILTIN_STRUCTURES), file=out)
    print("candidates: " + ", ".join(BUILTIN_CANDIDATES), file=out)
    print("measures:   " + ", ".join(BUILTIN_MEASURES), file=out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-builtins":
        list_builtins()
        return EXIT_PASS
    try:
        if args.command == "run":
            specs = [_load_run_spec(a, args.seed) for a in args.spec]
            if args.plotdata and len(specs) > 1:
                raise UsageError("--plotdata needs a single spec")
        else:
            spec, copy_name = _spec_for(args)
    except (UsageError, SchemaError) as exc:
        print(f"almostcx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command != "run":
        rec = harness.run(spec, root=args.output_root)
        _report(rec, getattr(args, "out", None), copy_name)
        return EXIT_PASS if rec.passed else EXIT_FAIL
    if args.parallel > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            records = list(pool.map(_run_one, specs, [args.output_root] * len(specs)))
    else:
        records = [_run_one(s, args.output_root) for s in specs]
    for rec in records:
        _report(rec, plotdata=args.plotdata)
    return EXIT_PASS if all(r.passed for r in records) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
