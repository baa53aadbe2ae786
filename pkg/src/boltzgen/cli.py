"""Command-line front end: ``boltzgen check|count|oracle|sample|hadamard``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

from . import controller, oracle
from .counting import count_upto
from .errors import BoltzgenError, ModeError, ParameterError, SpecError
from .parser import parse_file
from .rng import ALGORITHM, UniformStream, session_streams
from .sampler import assign_labels, compile
from .spec import Spec, validate_spec
from .structure import strip_classes, to_json, to_term

DEFAULT_EPSILON = 0.1


def _load(path: str, weights=()) -> Spec:
    try:
        spec = parse_file(path)
    except OSError as e:
        raise SpecError(f"cannot read {path}: {e.strerror}") from None
    if weights:
        spec = Spec(spec.mode, spec.defs, {**spec.weights, **dict(weights)})
    return spec


def _weight(text: str):
    name, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("weight must look like TYPE=W")
    try:
        w = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weight {val!r}") from None
    # "Z" names the plain atom
    return ("" if name in ("Z", "") else name, w)


def _class(spec: Spec, name: str | None) -> str:
    if name is None:
        return spec.defs[0].name
    if name not in spec:
        raise ParameterError(f"unknown class {name!r}")
    return name


def _err_bar(half: float) -> str:
    if half <= 0:
        return "0"
    return f"1e{math.ceil(math.log10(half))}"


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_check(args, out):
    spec = _load(args.spec, args.weight)
    report = validate_spec(spec)
    out.write((_dump(report.to_json()) if args.json else report.format()) + "\n")
    return 0 if report.ok else 2


def cmd_count(args, out):
    spec = _load(args.spec, args.weight)
    table = count_upto(spec, args.upto)
    names = [_class(spec, args.cls)] if args.cls else spec.names
    if args.json:
        out.write(_dump({n: [str(c) if c > 2**53 else c for c in table[n]] for n in names}) + "\n")
    else:
        for n in names:
            out.write(f"{n}: {' '.join(str(c) for c in table[n])}\n")
    return 0


def cmd_oracle(args, out):
    spec = _load(args.spec, args.weight)
    if args.what == "eval":
        if args.x is None:
            raise ParameterError("oracle eval needs --x")
        table = oracle.evaluate(spec, args.x)
        if args.json:
            out.write(_dump(table.to_json()) + "\n")
        else:
            out.write(f"x = {table.x!r}\nstatus = {table.status}\n")
            if table.converged:
                for n, v in table.values.items():
                    if args.cls is None or n == args.cls:
                        out.write(f"{n} = {v!r}\n")
            else:
                out.write(f"reason = {table.reason}\n")
        return 0 if table.converged else 3
    cls = _class(spec, args.cls)
    if args.what == "rho":
        rho, half = oracle.find_radius(spec, cls)
        if args.json:
            out.write(_dump({"class": cls, "rho": None if math.isinf(rho) else rho, "error": half}) + "\n")
        elif math.isinf(rho):
            out.write("rho = inf\n")
        else:
            out.write(f"rho = {rho:.9f} ± {_err_bar(half)}\n")
        return 0
    if args.size is None:
        raise ParameterError("oracle tune needs --size")
    res = oracle.tune(spec, cls, args.size)
    if args.json:
        out.write(_dump(res.to_json()) + "\n")
    else:
        out.write(f"x = {res.x!r}\nexpected_size = {res.achieved!r}\n")
        if res.singular:
            out.write("singular = true (expected size stays below the target up to rho)\n")
    return 0


def _render(structure, args) -> str | dict:
    if args.no_classes:
        structure = strip_classes(structure)
    if args.format == "term":
        return to_term(structure, labels=args.labels)
    return json.loads(to_json(structure, labels=args.labels))


def _ledger_summary(ledger) -> dict:
    if not ledger:
        return {"constants": 0}
    rel = [e.interval.width / abs(e.value) if e.value else e.interval.width for e in ledger.values()]
    tight = min(ledger.items(), key=lambda kv: kv[1].interval.width)
    return {"constants": len(ledger), "narrowestConstant": tight[0],
            "narrowest": tight[1].interval.to_json(), "minRelativeWidth": min(rel)}


def cmd_sample(args, out):
    spec = _load(args.spec, args.weight)
    cls = _class(spec, args.cls)
    if (args.x is None) == (args.size is None):
        raise ParameterError("give exactly one of --x and --size")
    if args.labels and not spec.labelled:
        raise ModeError("--labels needs a labelled specification")
    mode = args.mode or ("free" if args.x is not None else "approx")
    singular = mode.startswith("singular")
    if mode != "free" and args.size is None:
        raise ParameterError(f"mode {mode} needs --size")
    eps = args.epsilon if args.epsilon is not None else DEFAULT_EPSILON
    exact = mode in ("exact", "singular-exact")
    if args.x is not None:
        sampler = compile(spec, args.x, ceiling=args.ceiling)
    else:
        sampler, singular_fallback = controller.sampler_for(spec, cls, n=args.size, singular=singular,
                                                            ceiling=args.ceiling)
        if singular_fallback and not singular and mode != "free":
            mode = "singular-exact" if exact else "singular-approx"
            singular = True

    def one(stream: UniformStream) -> str:
        rec: dict = {}
        if mode == "free":
            res = sampler.sample(cls, stream, track=args.stats)
            s, report, ledger = res.structure, res.report, res.ledger
        elif exact:
            cr = controller.sample_exact(sampler, cls, args.size, stream, singular=singular, track=args.stats)
            s, report, ledger = cr.structure, cr.report, cr.ledger
            rec["control"] = cr.to_json()
        else:
            cr = controller.sample_approx(sampler, cls, args.size, eps, stream, singular=singular,
                                          track=args.stats)
            s, report, ledger = cr.structure, cr.report, cr.ledger
            rec["control"] = cr.to_json()
        if s is not None and args.labels:
            assign_labels(s, stream)
        if args.format == "term" and not args.stats:
            return "ABORTED" if s is None else _render(s, args)
        if s is None:
            rec["aborted"] = True
        else:
            rec["size"] = s.size
            rec["structure"] = _render(s, args)
        if args.stats:
            rec["report"] = report.to_json()
            rec["ledger"] = _ledger_summary(ledger)
        return _dump(rec)

    seed = args.seed if args.seed is not None else int(UniformStream().gen.integers(0, 2**63))
    header = {"rng": ALGORITHM, "seed": seed, "class": cls, "x": sampler.x, "mode": mode}
    if args.size is not None:
        header["size"] = args.size
    if mode in ("approx", "singular-approx"):
        header["epsilon"] = eps
    if args.format == "json":
        out.write(_dump({"header": header}) + "\n")
    else:
        out.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
    streams = session_streams(seed, args.count)
    if args.jobs > 1 and args.count > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            for line in pool.map(one, streams):
                out.write(line + "\n")
    else:
        for st in streams:
            out.write(one(st) + "\n")
    return 0


def _side(text: str, weights):
    path, cls, x = _split_side(text)
    spec = _load(path, weights)
    cls = _class(spec, cls)
    return compile(spec, x), cls


def _split_side(text: str):
    parts = text.rsplit(":", 2)
    if len(parts) != 3:
        raise ParameterError(f"expected SPEC:CLASS:X, got {text!r}")
    try:
        x = float(parts[2])
    except ValueError:
        raise ParameterError(f"bad parameter in {text!r}") from None
    return parts[0], parts[1] or None, x


def cmd_hadamard(args, out):
    left = _side(args.left, args.weight)
    right = _side(args.right, args.weight)
    seed = args.seed if args.seed is not None else int(UniformStream().gen.integers(0, 2**63))
    mode = controller.HADAMARD_BIRTHDAY if args.birthday else controller.HADAMARD_NAIVE
    header = {"rng": ALGORITHM, "seed": seed, "mode": mode, "x": [left[0].x, right[0].x]}
    if args.format == "json":
        out.write(_dump({"header": header}) + "\n")
    else:
        out.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
    for st in session_streams(seed, args.count):
        if args.birthday:
            cr = controller.sample_hadamard_birthday(left, right, st, args.alternation)
        else:
            cr = controller.sample_hadamard_naive(left, right, st)
        a, b = cr.structure
        if args.format == "term":
            out.write(f"{to_term(a, False)} {to_term(b, False)}\n")
        else:
            out.write(_dump({"size": a.size, "left": json.loads(to_json(a, False)),
                             "right": json.loads(to_json(b, False)), "control": cr.to_json()}) + "\n")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boltzgen", description="Boltzmann samplers from class specifications.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_class=False):
        sp.add_argument("--spec", required=True, help="specification file")
        sp.add_argument("--class", dest="cls", required=need_class, help="class name")
        sp.add_argument("--weight", action="append", type=_weight, default=[], metavar="TYPE=W",
                        help="atom weight (repeatable; Z for the plain atom)")

    sp = sub.add_parser("check", help="validate a specification")
    common(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("count", help="exact counts up to a size")
    common(sp)
    sp.add_argument("--upto", type=int, required=True)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_count)

    sp = sub.add_parser("oracle", help="generating-function values, radius, tuning")
    sp.add_argument("what", choices=["eval", "rho", "tune"])
    common(sp)
    sp.add_argument("--x", type=float)
    sp.add_argument("--size", type=int)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("sample", help="draw structures")
    common(sp)
    sp.add_argument("--x", type=float)
    sp.add_argument("--size", type=int)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--mode", choices=["free", "approx", "exact", "singular", "singular-approx", "singular-exact"])
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=["json", "term"], default="json")
    sp.add_argument("--labels", action="store_true", help="assign labels (labelled specifications)")
    sp.add_argument("--ceiling", type=int)
    sp.add_argument("--stats", action="store_true", help="append cost report and safety-ledger summary")
    sp.add_argument("--no-classes", action="store_true", help="drop class wrappers from the output")
    sp.add_argument("--jobs", type=int, default=1, help="worker threads for --count > 1")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("hadamard", help="equal-size pairs from two samplers")
    sp.add_argument("--left", required=True, metavar="SPEC:CLASS:X")
    sp.add_argument("--right", required=True, metavar="SPEC:CLASS:X")
    sp.add_argument("--birthday", action="store_true")
    sp.add_argument("--alternation", choices=["deterministic", "random"], default="deterministic")
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=["json", "term"], default="json")
    sp.add_argument("--weight", action="append", type=_weight, default=[], metavar="TYPE=W")
    sp.set_defaults(func=cmd_hadamard)
    return p


def run_cli(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "count", 1) is not None and getattr(args, "count", 1) < 1:
        err.write("boltzgen: error: --count must be >= 1\n")
        return 2
    if args.command == "sample" and args.mode == "singular":
        args.mode = "singular-approx"
    try:
        return args.func(args, out)
    except BoltzgenError as e:
        err.write(f"boltzgen: error: {e}\n")
        return e.exit_code
    except RecursionError:
        err.write("boltzgen: error: recursion limit reached\n")
        return 4
    except MemoryError:
        err.write("boltzgen: error: out of memory\n")
        return 4


def main(argv=None):
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
