"""Command-line front end.

Every output starts from the fully resolved run settings so a file can be
regenerated from its own header.  JSON outputs hold ``{"runspec", "result"}``;
CSV outputs put the run settings on a leading ``#`` line.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import binary
from .constraint import (CausalInstance, CausalOptions, StrictInstance, StrictOptions,
                         decomposition_check, maximize_causal, maximize_strict)
from .errors import (ConfigurationError, CoordkitError, InfeasibleConfigurationError,
                     InstanceFormatError)
from .prob import FiniteDist, Kernel
from .region import (UtilityOptions, UtilitySpec, channel_capacity, distortion_cost_region,
                     max_utility_generic, membership)
from .sim import CodeConfig, monte_carlo, plan_rates

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


class NumericFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# instance files


def _array(doc: dict, key: str, ndim: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.array(doc[key], dtype=float)
    except KeyError:
        raise InstanceFormatError(f"instance is missing field {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"field {key!r} is not a numeric array: {exc}") from None
    if ndim is not None and arr.ndim != ndim:
        raise InstanceFormatError(f"field {key!r} must have {ndim} dimensions, got shape {arr.shape}")
    return arr


def parse_instance(doc: dict) -> dict:
    """Parse an instance document into source, channel, target and optional utility."""
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance file must hold a JSON object")
    sizes = doc.get("alphabets")
    if not isinstance(sizes, dict):
        raise InstanceFormatError("instance is missing the 'alphabets' object")
    try:
        nu, nx, ny, nv = (int(sizes[k]) for k in ("U", "X", "Y", "V"))
    except KeyError as exc:
        raise InstanceFormatError(f"alphabets is missing size {exc.args[0]!r}") from None
    if min(nu, nx, ny, nv) < 1:
        raise InstanceFormatError("alphabet sizes must be positive")
    source = _array(doc, "source", 1)
    channel = _array(doc, "channel", 2)
    if source.shape != (nu,):
        raise InstanceFormatError(f"source must have |U|={nu} entries, got {source.shape[0]}")
    if channel.shape != (nx, ny):
        raise InstanceFormatError(f"channel must be |X|x|Y|=({nx},{ny}), got {channel.shape}")
    out = {"sizes": (nu, nx, ny, nv), "source": source, "channel": channel}
    if "target" in doc:
        target = _array(doc, "target", 2)
        if target.shape != (nu, nx * nv):
            raise InstanceFormatError(
                f"target must be |U| rows of |X|·|V|={nx * nv} entries (x-major), got {target.shape}")
        out["instance"] = StrictInstance.from_arrays(source, channel, target.reshape(nu, nx, nv))
    else:
        # still validate source and channel
        FiniteDist(("U",), source)
        Kernel(("X",), ("Y",), channel)
    if "utility" in doc:
        phi = _array(doc, "utility")
        if phi.ndim == 2 and phi.shape == (nu, nx * ny * nv):
            phi = phi.reshape(nu, nx, ny, nv)
        if phi.shape != (nu, nx, ny, nv):
            raise InstanceFormatError(f"utility must be a (U,X,Y,V) table, got shape {phi.shape}")
        d = _array(doc, "distortion", 2) if "distortion" in doc else None
        c = _array(doc, "cost", 1) if "cost" in doc else None
        out["utility"] = UtilitySpec(phi, d, c)
    elif "distortion" in doc and "cost" in doc:
        w = float(doc.get("cost_weight", 1.0))
        out["utility"] = UtilitySpec.from_distortion_cost(_array(doc, "distortion", 2),
                                                          _array(doc, "cost", 1), ny, w)
    if "joint" in doc:
        j = _array(doc, "joint")
        if j.size != nu * nx * ny * nv:
            raise InstanceFormatError(f"joint must have {nu * nx * ny * nv} entries, got {j.size}")
        out["joint"] = FiniteDist(("U", "X", "Y", "V"), j.reshape(nu, nx, ny, nv))
    return out


def load_instance(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InstanceFormatError(f"cannot read instance file {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"instance file {path!r} is not valid JSON: {exc}") from None
    return parse_instance(doc)


def _need(parsed: dict, key: str):
    if key not in parsed:
        raise InstanceFormatError(f"this subcommand needs the instance field {key!r}")
    return parsed[key]


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if not math.isfinite(val):
            raise NumericFailure(f"non-finite value {val!r} in result")
        return val
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dump_json(runspec: dict, result: dict) -> str:
    return json.dumps({"runspec": _clean(runspec), "result": _clean(result)},
                      sort_keys=True, indent=2) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(float(v)):
            raise NumericFailure(f"non-finite value {v!r} in table")
        return "%.12g" % float(v)
    return str(v)


def dump_csv(runspec: dict, columns: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_clean(runspec), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def _strict_opts(a) -> StrictOptions:
    opts = StrictOptions(w_size=a.w_size, restarts=a.restarts, max_iters=a.max_iters,
                         tol=a.tol, seed=a.seed, override=a.override)
    opts.validate()
    return opts


def cmd_eval(a):
    inst = _need(load_instance(a.instance), "instance")
    return "json", maximize_strict(inst, _strict_opts(a)).to_dict()


def cmd_causal_eval(a):
    inst = _need(load_instance(a.instance), "instance")
    opts = CausalOptions(w1_size=a.w1_size, w2_size=a.w2_size, restarts=a.restarts,
                         max_iters=a.max_iters, tol=a.tol, seed=a.seed, override=a.override)
    opts.validate()
    return "json", maximize_causal(CausalInstance.from_strict(inst), opts).to_dict()


def cmd_check(a):
    parsed = load_instance(a.instance)
    joint = parsed.get("joint")
    if joint is None:
        joint = _need(parsed, "instance").joint()
    ok, dev = decomposition_check(joint, FiniteDist(("U",), parsed["source"]),
                                  _channel(parsed), a.mode, a.tol)
    return "json", {"mode": a.mode, "passed": ok, "deviation": dev}


def _channel(parsed):
    return Kernel(("X",), ("Y",), parsed["channel"])


def cmd_capacity(a):
    parsed = load_instance(a.instance)
    cap = channel_capacity(_channel(parsed), tol=a.tol)
    return "json", {"capacity": cap["capacity"], "gap": cap["gap"],
                    "argmax_input": cap["argmax_input"].table}


def cmd_membership(a):
    inst = _need(load_instance(a.instance), "instance")
    res = membership(inst, _strict_opts(a))
    out = {k: v for k, v in res.items() if k != "report"}
    out["report"] = None if res["report"] is None else res["report"].to_dict()
    return "json", out


def _range(lo, hi, step, name):
    if not step > 0:
        raise ConfigurationError(f"{name} step must be positive, got {step!r}")
    if hi < lo:
        raise ConfigurationError(f"{name} range is empty: [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) for i in range(n + 1)]


def cmd_sweep_gamma(a):
    src = binary.bernoulli_source(0.5)
    ch = binary.bsc(a.eps)
    opts = StrictOptions(restarts=a.restarts, max_iters=a.max_iters, tol=a.tol, seed=a.seed)
    rows = []
    for g in _range(a.gamma_min, a.gamma_max, a.gamma_step, "gamma"):
        b = binary.coordination_bounds(binary.GameParams(0.5, a.eps, g))
        row = {"gamma": g, "lower": b["lower"], "upper": b["upper"]}
        if a.certified:
            inst = StrictInstance(src, ch, binary.game_target(g))
            row["certified"] = maximize_strict(inst, opts).value
        rows.append(row)
    cols = ["gamma", "lower", "upper"] + (["certified"] if a.certified else [])
    return "csv", (cols, rows)


def cmd_gamma_star(a):
    rows = []
    for e in _range(a.eps_min, a.eps_max, a.eps_step, "eps"):
        rows.append({"eps": e, "gamma_lower": binary.gamma_star(e, "lower", a.tol),
                     "gamma_upper": binary.gamma_star(e, "upper", a.tol)})
    return "csv", (["eps", "gamma_lower", "gamma_upper"], rows)


def cmd_dc_region(a):
    grid = distortion_cost_region(a.p, a.eps, a.grid_step)
    rows = sorted(grid.rows(), key=lambda r: (r["D"], r["C"]))
    return "csv", (["D", "C", "constraint", "achievable"], rows)


def cmd_utility_max(a):
    parsed = load_instance(a.instance)
    util = _need(parsed, "utility")
    opts = UtilityOptions(restarts=a.restarts, iters=a.iters, seed=a.seed,
                          strict=StrictOptions(restarts=4, max_iters=a.max_iters, tol=a.tol,
                                               seed=a.seed))
    res = max_utility_generic(FiniteDist(("U",), parsed["source"]), _channel(parsed), util, opts)
    return "json", {"utility": res["utility"], "fallback": res["fallback"],
                    "target_star": res["target_star"].table, "report": res["report"].to_dict()}


def cmd_simulate(a):
    inst = _need(load_instance(a.instance), "instance")
    if a.mode == "zero_capacity":
        aux = None
    elif a.mode == "causal":
        rep = maximize_causal(CausalInstance.from_strict(inst),
                              CausalOptions(restarts=a.restarts, max_iters=a.max_iters,
                                            tol=a.tol, seed=a.seed))
        if rep.certificate is None or rep.value is None or rep.value < 0:
            raise InfeasibleConfigurationError("no causal certificate with a nonnegative value")
        aux = rep.certificate
        inst = CausalInstance.from_strict(inst)
    else:
        rep = maximize_strict(inst, _strict_opts(a))
        if rep.value < 0:
            raise InfeasibleConfigurationError(
                f"certified constraint value {rep.value:.6g} is negative; no code to simulate")
        aux = rep.certificate
    rows = []
    for n in sorted(a.n):
        cfg = CodeConfig(n=n, B=a.blocks, delta=a.delta, eps_typ=a.eps_typ, seed=a.seed,
                         codeword_cap=a.codeword_cap, virtual=a.virtual)
        if aux is not None:
            rates = plan_rates(inst if a.mode == "strict" else None, aux, a.delta)
            if not rates["feasible"]:
                raise InfeasibleConfigurationError(f"rate plan refused: {rates['violated']}")
        s = monte_carlo(inst, aux, cfg, a.trials, a.mode)
        row = {k: s[k] for k in ("n", "B", "delta", "eps_typ", "trials", "pe",
                                 "mean_tv_full", "mean_tv_trunc", "ci_halfwidth")}
        row.update({f"rate_{k}": v for k, v in s["event_rates"].items()})
        rows.append(row)
    cols = ["n", "B", "delta", "eps_typ", "trials", "pe", "mean_tv_full", "mean_tv_trunc",
            "ci_halfwidth"] + [c for c in rows[0] if c.startswith("rate_")]
    return "csv", (cols, rows)


# ---------------------------------------------------------------------------
# parser


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {s}")
    return v


def _unit_float(s):
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coordkit",
                                description="Empirical coordination evaluators and simulator.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, instance=True, optim=True):
        if instance:
            sp.add_argument("instance", help="instance JSON file")
        sp.add_argument("-o", "--output", help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: $COORDKIT_SEED or 0)")
        if optim:
            sp.add_argument("--tol", type=_positive_float, default=1e-9)
            sp.add_argument("--restarts", type=int, default=16)
            sp.add_argument("--max-iters", type=_positive_int, default=500)

    for name, fn in (("eval", cmd_eval), ("membership", cmd_membership)):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--w-size", type=_positive_int, default=None)
        sp.add_argument("--override", action="store_true",
                        help="allow auxiliary alphabets above the cardinality ceiling")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("causal-eval")
    common(sp)
    sp.add_argument("--w1-size", type=_positive_int, default=None)
    sp.add_argument("--w2-size", type=_positive_int, default=None)
    sp.add_argument("--override", action="store_true")
    sp.set_defaults(func=cmd_causal_eval)

    sp = sub.add_parser("check")
    common(sp, optim=False)
    sp.add_argument("--mode", choices=("strict", "causal"), default="strict")
    sp.add_argument("--tol", type=_positive_float, default=1e-7)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("capacity")
    common(sp, optim=False)
    sp.add_argument("--tol", type=_positive_float, default=1e-10)
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("sweep-gamma")
    common(sp, instance=False)
    sp.add_argument("--eps", type=_unit_float, default=0.0)
    sp.add_argument("--gamma-min", type=_unit_float, default=0.0)
    sp.add_argument("--gamma-max", type=_unit_float, default=1.0)
    sp.add_argument("--gamma-step", type=_positive_float, default=0.05)
    sp.add_argument("--no-certified", dest="certified", action="store_false",
                    help="skip the certified column")
    sp.set_defaults(func=cmd_sweep_gamma, restarts=4)

    sp = sub.add_parser("gamma-star")
    common(sp, instance=False, optim=False)
    sp.add_argument("--eps-min", type=_unit_float, default=0.0)
    sp.add_argument("--eps-max", type=_unit_float, default=0.5)
    sp.add_argument("--eps-step", type=_positive_float, default=0.05)
    sp.add_argument("--tol", type=_positive_float, default=1e-6)
    sp.set_defaults(func=cmd_gamma_star)

    sp = sub.add_parser("dc-region")
    common(sp, instance=False, optim=False)
    sp.add_argument("--p", type=_unit_float, default=0.5)
    sp.add_argument("--eps", type=_unit_float, default=0.25)
    sp.add_argument("--grid-step", type=_positive_float, default=0.01)
    sp.set_defaults(func=cmd_dc_region)

    sp = sub.add_parser("utility-max")
    common(sp)
    sp.add_argument("--iters", type=_positive_int, default=80)
    sp.set_defaults(func=cmd_utility_max, restarts=2, max_iters=200)

    sp = sub.add_parser("simulate")
    common(sp)
    sp.add_argument("--mode", choices=("strict", "causal", "zero_capacity"), default="strict")
    sp.add_argument("--n", type=_positive_int, nargs="+", default=[100])
    sp.add_argument("--blocks", type=_positive_int, default=12)
    sp.add_argument("--delta", type=_positive_float, default=0.05)
    sp.add_argument("--eps-typ", type=_positive_float, default=0.1)
    sp.add_argument("--trials", type=_positive_int, default=20)
    sp.add_argument("--codeword-cap", type=_positive_int, default=2 ** 20)
    sp.add_argument("--virtual", action="store_true",
                    help="sample codebooks lazily instead of materializing them")
    sp.add_argument("--w-size", type=_positive_int, default=None)
    sp.add_argument("--override", action="store_true")
    sp.set_defaults(func=cmd_simulate)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Apply the seed fallback and return the run settings."""
    if args.seed is None:
        env = os.environ.get("COORDKIT_SEED")
        try:
            args.seed = int(env) if env is not None else 0
        except ValueError:
            raise ConfigurationError(f"COORDKIT_SEED must be an integer, got {env!r}") from None
    if not 0 <= args.seed < 2 ** 63:
        raise ConfigurationError(f"seed must lie in [0, 2^63), got {args.seed}")
    if getattr(args, "restarts", 0) < 0:
        raise ConfigurationError("restarts must be >= 0")
    out = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return out


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        runspec = resolve(args)
        kind, payload = args.func(args)
        text = dump_json(runspec, payload) if kind == "json" else dump_csv(runspec, *payload)
    except InfeasibleConfigurationError as exc:
        print(f"coordkit: infeasible: {exc}", file=stderr)
        return EXIT_INFEASIBLE
    except (CoordkitError, ValueError) as exc:
        print(f"coordkit: invalid input: {exc}", file=stderr)
        return EXIT_VALIDATION
    except (NumericFailure, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"coordkit: numeric failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
