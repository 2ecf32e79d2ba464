"""Command-line front end.

Every report embeds the tool version, the full configuration and the root
seed. The same configuration always reproduces byte-identical output.
Exit codes: 0 success, 2 bad input, 3 coin/sample budget exhausted.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .errors import BudgetExhausted
from .probability import JointDist, PartitionedInput
from .protocol import (FunctionSpec, SimulProtocol, communication_cost,
                       conditional_information_cost, evaluate_error, information_cost,
                       load_protocol)
from .rng import seed_from_text, stream

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3


class InputError(Exception):
    pass


# Output.

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int = 2) -> str:
    """JSON with sorted keys and 17-significant-digit floats."""

    def enc(v, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v[k], level + 1)}" for k in sorted(v)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            if all(not isinstance(e, (dict, list)) for e in v):
                return "[" + ", ".join(enc(e, level + 1) for e in v) + "]"
            return "[\n" + ",\n".join(pad + enc(e, level + 1) for e in v) + "\n" + end + "]"
        if isinstance(v, float):
            return _fmt_float(v)
        return json.dumps(v)

    return enc(_plain(obj), 0) + "\n"


def write_atomic(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".ccompress-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# Input.

def _load_json(path: str, what: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} file {path}: line {exc.lineno}, column {exc.colno}: "
                         f"{exc.msg}") from None


def _parse(path: str, what: str, loader):
    obj = _load_json(path, what)
    try:
        return loader(obj)
    except KeyError as exc:
        raise InputError(f"{what} file {path}: missing field {exc.args[0]!r}") from None
    except (ValueError, TypeError) as exc:
        raise InputError(f"{what} file {path}: {exc}") from None


def _mu_for(args, proto):
    if args.mu:
        return _parse(args.mu, "distribution", JointDist.from_json)
    from .generators import uniform_inputs
    return uniform_inputs(proto.x_range, proto.y_range)


# Commands.

def cmd_info_cost(args, config) -> tuple[dict, int]:
    proto = _parse(args.protocol, "protocol", load_protocol)
    f = _parse(args.function, "function", FunctionSpec.from_json)
    mu = _mu_for(args, proto)
    out = {"information_cost": information_cost(proto, mu),
           "communication_cost": communication_cost(proto),
           "error_report": evaluate_error(proto, f, mu).to_json()}
    if args.partition:
        pm = _parse(args.partition, "partition", PartitionedInput.from_json)
        out["conditional_information_cost"] = conditional_information_cost(proto, pm)
    else:
        out["conditional_information_cost"] = out["information_cost"]
    return out, EXIT_OK


def cmd_compress(args, config) -> tuple[dict, int]:
    from .compressor import compress_multiround, compress_simultaneous
    proto = _parse(args.protocol, "protocol", load_protocol)
    f = _parse(args.function, "function", FunctionSpec.from_json)
    seed = config["seed"]
    try:
        if args.mode == "simul":
            if not isinstance(proto, SimulProtocol):
                raise InputError("simul mode needs a simultaneous protocol")
            mu = _parse(args.mu, "distribution", JointDist.from_json) if args.mu else None
            rep = compress_simultaneous(proto, f, args.eps, seed, mu=mu)
            out = rep.to_json()
            out["new_protocol"] = rep.new_protocol.to_json()
        else:
            if isinstance(proto, SimulProtocol):
                raise InputError("rounds mode needs a tree protocol")
            mu = _mu_for(args, proto)
            rep = compress_multiround(proto, f, mu, args.eps, seed, t_max=args.tmax,
                                      coin_budget=args.budget)
            out = rep.to_json()
            out["final_protocol"] = rep.final_protocol.to_json()
    except BudgetExhausted as exc:
        return {"status": "budget_exhausted", "message": str(exc)}, EXIT_BUDGET
    out["status"] = "ok"
    return out, EXIT_OK


def cmd_bounds(args, config) -> tuple[dict, int]:
    from . import direct_sum as ds
    if args.kind == "multiround":
        rep = ds.multiround_bound(args.copies, args.rounds, args.eps, args.delta,
                                  _need(args.c_value, "--c-value"), args.h_kappa)
    elif args.kind == "simul":
        rep = ds.simul_bound(args.copies, _need(args.n, "--n"), args.eps, args.delta,
                             _need(args.r_tilde, "--r-tilde"))
    else:
        if not args.function or not args.mu:
            raise InputError("ic bound needs --function and --mu")
        f = _parse(args.function, "function", FunctionSpec.from_json)
        mu = _parse(args.mu, "distribution", JointDist.from_json)
        rep = ds.ic_lower_bound_from_C(f, mu, args.delta, args.eps, args.rounds)
    return rep.to_json(), EXIT_OK


def _need(v, flag):
    if v is None:
        raise InputError(f"{flag} is required")
    return v


def cmd_quantum(args, config):
    from . import quantum as q
    seed = config["seed"]
    if args.experiment == "tails":
        reports = q.overlap_tails(args.m, args.d, args.l, args.trials, seed)
        reports.append(q.orthopair_tail(args.m, args.d, args.l, args.trials, seed))
        reports.append(q.subspace_energy(args.m, args.d, args.l, args.trials, seed))
        for r in reports:
            if not r.hypotheses_ok:
                print(f"warning: {r.event} run outside its hypotheses (exploratory)",
                      file=sys.stderr)
        if args.format == "csv":
            buf = io.StringIO()
            q.write_tail_csv(reports, buf)
            return buf.getvalue(), EXIT_OK
        return {"rows": [r.row() for r in reports]}, EXIT_OK
    ens = q.build_ensemble(args.m, args.k_exp, args.n, stream(seed, 9))
    if args.experiment == "ensemble":
        checks = ens.checks()
        if args.format == "csv":
            buf = io.StringIO()
            buf.write("check,deviation\n")
            for k in sorted(checks):
                buf.write(f"{k},{_fmt_float(float(checks[k]))}\n")
            return buf.getvalue(), EXIT_OK
        return {"checks": checks, "violations": ens.violations(), "ensemble": ens.to_json()}, \
            EXIT_OK
    reports = [q.incompressibility_trial(ens, args.d, args.samples, seed, kind=kind)
               for kind in ("haar", "ensemble")]
    if args.format == "csv":
        buf = io.StringIO()
        buf.write("m,n,k_exp,d,kind,sample,fraction\n")
        for r in reports:
            for s, fr in enumerate(r.fractions):
                buf.write(f"{r.m},{r.n},{r.k_exp},{r.d},{r.kind},{s},{_fmt_float(fr)}\n")
        return buf.getvalue(), EXIT_OK
    return {"reports": [r.to_json() for r in reports]}, EXIT_OK


COMMANDS = {"info-cost": cmd_info_cost, "compress": cmd_compress, "bounds": cmd_bounds,
            "quantum": cmd_quantum}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccompress",
                                description="Protocol compression and direct-sum experiments")
    p.add_argument("--version", action="version", version=f"ccompress {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help="root seed (default: derived from the configuration)")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = sub.add_parser("info-cost", help="information cost, cost and error of a protocol")
    sp.add_argument("--protocol", required=True)
    sp.add_argument("--function", required=True)
    sp.add_argument("--mu", help="input distribution (default uniform)")
    sp.add_argument("--partition", help="partitioned input for the conditional cost")
    common(sp)

    sp = sub.add_parser("compress", help="compress a protocol")
    sp.add_argument("--mode", choices=("simul", "rounds"), required=True)
    sp.add_argument("--protocol", required=True)
    sp.add_argument("--function", required=True)
    sp.add_argument("--mu")
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--budget", type=int, default=64, help="coin realizations to search")
    sp.add_argument("--tmax", type=int, default=None, help="cap on each public stream")
    common(sp)

    sp = sub.add_parser("bounds", help="direct-sum lower bounds")
    sp.add_argument("--kind", choices=("multiround", "simul", "ic"), default="multiround")
    sp.add_argument("--copies", type=int, default=1)
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--c-value", type=float, default=None)
    sp.add_argument("--h-kappa", type=float, default=0.0)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--r-tilde", type=float, default=None)
    sp.add_argument("--function")
    sp.add_argument("--mu")
    common(sp)

    sp = sub.add_parser("quantum", help="quantum incompressibility experiments")
    sp.add_argument("experiment", choices=("tails", "ensemble", "incompress"))
    sp.add_argument("--m", type=int, default=512)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--l", type=int, default=4)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--k-exp", type=int, default=1)
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--samples", type=int, default=8)
    common(sp)
    return p


def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("seed", "out")}
    seed = args.seed if args.seed is not None else seed_from_text(json.dumps(cfg, sort_keys=True))
    cfg["seed"] = seed
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _config(args)
    try:
        result, code = COMMANDS[args.command](args, config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if isinstance(result, str):
        header = (f"# ccompress {__version__}\n"
                  f"# config {json.dumps(_plain(config), sort_keys=True)}\n")
        text = header + result
    else:
        text = dumps({"tool": "ccompress", "version": __version__, "config": config,
                      "seed": config["seed"], "command": args.command, "result": result})
    write_atomic(args.out, text)
    if code == EXIT_BUDGET:
        print("error: search budget exhausted; see the report", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
