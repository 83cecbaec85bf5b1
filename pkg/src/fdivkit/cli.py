"""Command-line front end: ``fdivkit <subcommand> [flags]``.

Results go to stdout (or ``--out``) as JSON with a ``meta`` block; curves and
sweeps are CSV.  Exit status is 2 for bad input, 1 when a checked property
fails and 0 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from itertools import product

import numpy as np

from . import __version__
from .calibration import calibration_check
from .divergences import f_divergence, f_divergence_quantized, make_generator
from .equivalence import affine_equivalence_f, affine_equivalence_U, counterexample_search
from .experiment import Quantizer, load_experiment
from .losses import (
    generator_from_loss,
    loss_from_generator,
    loss_from_uncertainty,
    make_loss,
    uncertainty_of,
)
from .quantize import consistency_experiment, enumerate_quantizers, optimize_quantizer, quantized_bayes_risk
from .uncertainty import make_uncertainty, statistical_information

TOLERANCES = {"sum": 1e-9, "affine_rel": 1e-6, "rank_tie": 1e-9, "transport": 1e-10}


class PropertyFailure(Exception):
    pass


# -- serialization -------------------------------------------------------------

def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, ".17g")
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if obj is None:
        return "null"
    return json.dumps(obj)


def _threads() -> int:
    raw = os.environ.get("FDIVKIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FDIVKIT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"FDIVKIT_THREADS must be a positive integer, got {raw!r}")
    return n


def _meta(args) -> dict:
    return {"version": __version__, "command": args.command, "seed": args.seed,
            "tolerances": TOLERANCES, "threads": _threads()}


def _emit(args, payload: dict) -> None:
    text = dumps({**payload, "meta": _meta(args)}) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    if path:
        with open(path, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


# -- input parsing -------------------------------------------------------------

def _json_or_name(text: str, key: str) -> dict:
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"bad JSON: {exc}") from None
    return {key: text}


def _loss(text: str, k: int):
    spec = _json_or_name(text, "kind")
    return make_loss(spec["kind"], int(spec.get("k", k)), spec.get("C"))


def _generator(text: str, k: int):
    spec = _json_or_name(text, "name")
    return make_generator(spec["name"], int(spec.get("k", k)))


def _quantizer(text: str | None, m: int):
    if text is None:
        return None
    try:
        a = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad quantizer: {exc}") from None
    q = Quantizer.from_assignment(a)
    q.check_total(m)
    return q


def _need(args, *names):
    for n in names:
        if getattr(args, n.replace("-", "_")) is None:
            raise ValueError(f"--{n} is required for {args.command}")


def _k(args, exp=None) -> int:
    if exp is not None:
        return exp.k
    if args.k is None:
        raise ValueError("--k is required without --experiment")
    return args.k


# -- subcommands ---------------------------------------------------------------

def cmd_div(args):
    _need(args, "experiment", "generator")
    exp = load_experiment(args.experiment)
    g = _generator(args.generator, exp.k)
    q = _quantizer(args.quantizer, exp.m)
    value = f_divergence(exp.conditionals, g) if q is None else \
        f_divergence_quantized(exp.conditionals, g, q)
    _emit(args, {"value": value, "generator": g.name})


def cmd_info(args):
    _need(args, "experiment", "loss-a")
    exp = load_experiment(args.experiment)
    U = uncertainty_of(_loss(args.loss_a, exp.k))
    rep = statistical_information(exp, U, _quantizer(args.quantizer, exp.m))
    _emit(args, rep.to_dict())


def cmd_loss_build(args):
    """Sample the loss built from a generator (``--generator``) or from an
    uncertainty kind (``--loss-a entropy``) on a grid of decision vectors."""
    k = _k(args)
    if args.generator is not None:
        _, loss = loss_from_generator(_generator(args.generator, k))
    elif args.loss_a is not None:
        spec = _json_or_name(args.loss_a, "kind")
        loss = loss_from_uncertainty(make_uncertainty(spec["kind"], k, spec.get("C")))
    else:
        raise ValueError("loss-build needs --generator or --loss-a (an uncertainty kind)")
    ticks = np.linspace(-2.0, 2.0, args.resolution + 1)
    rows = []
    for alpha in product(ticks, repeat=k):
        a = np.array(alpha)
        rows.append([*a.tolist(), *loss.values(a).tolist()])
    header = [f"alpha{i + 1}" for i in range(k)] + [f"loss{i + 1}" for i in range(k)]
    _write_csv(args.out, header, rows)


def cmd_equiv(args):
    _need(args, "loss-a", "loss-b")
    k = _k(args)
    A, B = _loss(args.loss_a, k), _loss(args.loss_b, k)
    if args.mode == "U":
        res = affine_equivalence_U(uncertainty_of(A), uncertainty_of(B)).to_dict()
    elif args.mode == "f":
        pi = np.full(k, 1.0 / k)
        res = affine_equivalence_f(generator_from_loss(A, pi), generator_from_loss(B, pi), pi).to_dict()
    else:
        res = counterexample_search(A, B, k, budget=args.budget, seed=args.seed).to_dict()
    _emit(args, {"mode": args.mode, "loss_a": A.kind, "loss_b": B.kind, "result": res})


def cmd_calibrate(args):
    _need(args, "loss-a")
    k = _k(args)
    loss = _loss(args.loss_a, k)
    C = loss.C if loss.kind in ("hinge", "weighted-zero-one") else None
    rng = np.random.default_rng(args.seed)
    rows, failed = [], 0
    for t in range(args.reps):
        pi = rng.dirichlet(np.ones(k))
        score = pi @ C if C is not None else -pi
        cand = np.flatnonzero(score > score.min() + 1e-9)
        if cand.size == 0:
            continue
        i = int(rng.choice(cand))
        v = calibration_check(loss, pi, i, C)
        failed += not v.calibrated
        rows.append([t, " ".join(format(x, ".17g") for x in pi), i, v.margin, int(v.calibrated)])
    _write_csv(args.out, ["trial", "pi", "i_star", "margin", "verdict"], rows)
    if failed:
        raise PropertyFailure(f"{failed} of {len(rows)} trials not calibrated")


def cmd_quantize(args):
    _need(args, "experiment", "loss-a")
    exp = load_experiment(args.experiment)
    loss = _loss(args.loss_a, exp.k)
    max_codes = args.max_codes or exp.m
    q, value = optimize_quantizer(exp, loss, max_codes)
    table = [{"quantizer": c.assignment.tolist(), "risk": quantized_bayes_risk(exp, loss, c)}
             for c in enumerate_quantizers(exp.m, max_codes)] if exp.m <= 8 else []
    _emit(args, {"quantizer": q.assignment.tolist(), "value": value, "candidates": table})


def cmd_erm(args):
    _need(args, "experiment", "loss-a")
    exp = load_experiment(args.experiment)
    loss = _loss(args.loss_a, exp.k)
    schedule = [int(float(s)) for s in args.schedule.split(",")]
    rep = consistency_experiment(exp, loss, schedule, args.reps, args.seed, force=args.force,
                                 max_codes=args.max_codes or min(3, exp.m))
    _emit(args, rep.to_dict())
    curve = args.curve or (os.path.splitext(args.out)[0] + ".csv" if args.out else None)
    if curve:
        _write_csv(curve, ["n", "mean_gap", "std_gap"],
                   zip(rep.schedule, rep.mean_gap, rep.std_gap))
    if rep.fisher_violations:
        raise PropertyFailure(f"{rep.fisher_violations} Fisher-gap violations")


def cmd_selftest(args):
    from .selftest import run_selftest

    results = run_selftest()
    failed = [name for name, ok in results if not ok]
    _emit(args, {"checks": {name: ok for name, ok in results}, "passed": not failed})
    if failed:
        raise PropertyFailure("selftest failed: " + ", ".join(failed))


COMMANDS = {
    "div": cmd_div, "info": cmd_info, "loss-build": cmd_loss_build, "equiv": cmd_equiv,
    "calibrate": cmd_calibrate, "quantize": cmd_quantize, "erm": cmd_erm,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdivkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--experiment")
        s.add_argument("--generator")
        s.add_argument("--loss-a")
        s.add_argument("--loss-b")
        s.add_argument("--quantizer")
        s.add_argument("--max-codes", type=int)
        s.add_argument("--schedule", default="100,1000,10000")
        s.add_argument("--reps", type=int, default=50)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--budget", type=int, default=100000)
        s.add_argument("--out")
        s.add_argument("--curve")
        s.add_argument("--force", action="store_true")
        s.add_argument("--mode", choices=("U", "f", "search"), default="U")
        s.add_argument("--k", type=int)
        s.add_argument("--resolution", type=int, default=10)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _threads()
        COMMANDS[args.command](args)
    except PropertyFailure as exc:
        print(f"fdivkit: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"fdivkit: error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
