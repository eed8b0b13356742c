"""Command-line entry point: ``mapchaos <command> [--config FILE] [overrides]``.

Commands
--------
simulate       write one CSV per path
moments        moment tables of nu1 (joint with U) and nu2
orthogonalize  Gram matrices and coefficient triangles of H and G
verify         run a verification suite and write its JSON report
replicate      LSMC replication report (JSON, optional CSV of integrands)
chaos-check    pathwise check of one monomial expansion across meshes

A run is configured by a JSON object (``--config``) whose keys are validated
against a per-command schema; unknown keys are rejected.  Command-line flags
override the file.  Exit codes: 0 success, 2 schema or usage error,
3 numerical failure, 4 verification verdict FAIL.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import levy_measures as lm
from .errors import DegenerateDirection, MapChaosError, UnknownSuite, ValidationError
from .map_model import default_spec, spec_from_dict, spec_to_dict, validate
from .mc_verify import SUITES, SuiteConfig, run_suite
from .monomial_chaos import evaluate, expand, render
from .ortho_basis import build_basis, resolve_alpha
from .path_sim import derive_seed, simulate, write_csv
from .predictable_rep import Payoff, sweep
from .teugels import Family, power_jump

SCHEMA_VERSION = "v1"
EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4

# --------------------------------------------------------------------------
# schemas
# --------------------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_LAW = {
    "oneOf": [
        _obj({"type": {"const": "gaussian"}, "mean": _NUM, "stddev": _POS}, ["type", "mean", "stddev"]),
        _obj({"type": {"const": "uniform"}, "lo": _NUM, "hi": _NUM}, ["type", "lo", "hi"]),
        _obj({"type": {"const": "twopoint"}, "x1": _NUM, "p1": _NUM, "x2": _NUM, "p2": _NUM},
             ["type", "x1", "p1", "x2", "p2"]),
        _obj({"type": {"const": "exponential"}, "rate": _POS, "sign": {"enum": [-1, 1]}}, ["type", "rate"]),
    ]
}
_MEASURE = _obj({"intensity": {"type": "number", "minimum": 0}, "law": _LAW}, ["intensity", "law"])
_COEF = {
    "oneOf": [
        _obj({"type": {"const": "constant"}, "value": _NUM}, ["type", "value"]),
        _obj({"type": {"const": "affine"}, "slope": _NUM, "intercept": _NUM, "lo": _NUM, "hi": _NUM},
             ["type", "slope", "intercept", "lo", "hi"]),
        _obj({"type": {"const": "table"}, "knots": {"type": "array", "items": _NUM, "minItems": 1},
              "values": {"type": "array", "items": _NUM, "minItems": 1}}, ["type", "knots", "values"]),
    ]
}
_TRIGGERED = {
    "oneOf": [
        _obj({"type": {"const": "deterministic"}, "scale": _NUM}, ["type", "scale"]),
        _obj({"type": {"const": "affine"}, "slope": _NUM, "intercept": _NUM, "noise": {"type": "number", "minimum": 0}},
             ["type", "slope", "intercept", "noise"]),
        _obj({"type": {"const": "independent"}, "law": _LAW}, ["type", "law"]),
    ]
}
MODEL_SCHEMA = _obj(
    {
        "modulator": _obj({"mu1": _NUM, "sigma1": _NUM, "nu1": _MEASURE}, ["mu1", "sigma1", "nu1"]),
        "ordinate": _obj({"mu2": _COEF, "sigma2": _COEF, "nu2": _MEASURE}, ["mu2", "sigma2", "nu2"]),
        "triggered": _TRIGGERED,
        "xi0": _NUM,
        "horizon": _POS,
        "k_max": {"type": "integer", "minimum": 1, "maximum": lm.K_MAX_LIMIT},
    },
    ["modulator", "ordinate", "triggered"],
)

_INT1 = {"type": "integer", "minimum": 1}
_COMMON = {"model": MODEL_SCHEMA, "seed": {"type": "integer", "minimum": 0}, "threads": _INT1,
           "output": {"type": "string"}}
_MONO = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3}
_PAYOFF = {
    "oneOf": [
        _obj({"kind": {"enum": ["terminal_ordinate", "terminal_square"]}}, ["kind"]),
        _obj({"kind": {"const": "monomial"}, "exponents": _MONO}, ["kind", "exponents"]),
        _obj({"kind": {"const": "polynomial"},
              "terms": {"type": "array", "minItems": 1,
                        "items": _obj({"weight": _NUM, "exponents": _MONO}, ["weight", "exponents"])}},
             ["kind", "terms"]),
    ]
}

COMMAND_SCHEMAS = {
    "simulate": _obj({**_COMMON, "dt": _POS, "n_paths": _INT1, "orders": {"type": "integer", "minimum": 0},
                      "output_dir": {"type": "string"}}),
    "moments": _obj({**_COMMON}),
    "orthogonalize": _obj({**_COMMON, "K": _INT1, "g_shape": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                                              "minItems": 2, "maxItems": 2},
                           "alpha": {"type": "number", "minimum": 0}, "alpha_paths": _INT1, "dt": _POS,
                           "reduce": {"type": "boolean"}}),
    "verify": _obj({**_COMMON, "suite": {"enum": list(SUITES)}, "dt": _POS, "n_paths": _INT1,
                    "suite_config": {"type": "object"}}, ["suite"]),
    "replicate": _obj({**_COMMON, "payoff": _PAYOFF, "K": {"type": "array", "items": _INT1, "minItems": 1},
                       "n_paths": {"type": "integer", "minimum": 4}, "dt": _POS, "n_buckets": _INT1,
                       "csv": {"type": "string"}}, ["payoff"]),
    "chaos-check": _obj({**_COMMON, "monomial": _MONO, "dts": {"type": "array", "items": _POS, "minItems": 1},
                         "n_paths": _INT1}, ["monomial"]),
}

_SUITE_KEYS = {f.name for f in SuiteConfig.__dataclass_fields__.values()}


class UsageError(Exception):
    pass


def _validate(command: str, cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, COMMAND_SCHEMAS[command])
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise UsageError(f"config error at {where}: {e.message}") from None
    extra = set(cfg.get("suite_config", {})) - _SUITE_KEYS
    if extra:
        raise UsageError(f"config error at suite_config: unknown keys {sorted(extra)}")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _model(cfg: dict):
    return validate(spec_from_dict(cfg["model"])) if "model" in cfg else default_spec()


def _emit(obj, cfg: dict) -> None:
    text = json.dumps(_jsonable(obj), indent=2) + "\n"
    out = cfg.get("output")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    return x


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    spec = _model(cfg)
    dt, n, seed = cfg.get("dt", 0.01), cfg.get("n_paths", 1), cfg.get("seed", 0)
    orders = cfg.get("orders", 0)
    out = Path(cfg.get("output_dir", "paths"))
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(n):
        path = simulate(spec, dt, derive_seed(seed, i))
        extra = {}
        for fam, tag in ((Family.THETA, "Theta_bar"), (Family.XI_L, "xi_bar"), (Family.XI_F, "xi_bar_f")):
            for k in range(1, orders + 1):
                extra[f"{tag}_{k}"] = power_jump(path, fam, k).compensated
        name = out / f"path_{i:05d}.csv"
        with open(name, "w", encoding="utf-8", newline="") as fh:
            write_csv(path, fh, extra)
        written.append(str(name))
    _emit({"schema": SCHEMA_VERSION, "files": written, "seed": seed, "dt": dt}, {"output": cfg.get("output")})
    return EXIT_OK


def cmd_moments(cfg: dict) -> int:
    spec = _model(cfg)
    t1, t2 = spec.table1(), spec.table2()
    top = 2 * spec.k_max
    joint = {f"c_{k},{l}": t1.c(k, l) for k in range(1, top + 1) for l in range(0, top + 1 - k)}
    _emit({
        "schema": SCHEMA_VERSION,
        "model": spec_to_dict(spec),
        "nu1": {"m": t1.scalar.tolist(), "big_jump_mean": t1.big_jump_mean},
        "nu2": {"m": t2.scalar.tolist(), "big_jump_mean": t2.big_jump_mean},
        "joint": joint,
    }, cfg)
    return EXIT_OK


def cmd_orthogonalize(cfg: dict) -> int:
    spec = _model(cfg)
    if "alpha" in cfg:
        alpha = cfg["alpha"]
    else:
        alpha = resolve_alpha(spec, n_paths=cfg.get("alpha_paths", 20_000), dt=cfg.get("dt", 0.01),
                              seed=cfg.get("seed", 0))
    basis = build_basis(spec, K=cfg.get("K"), g_shape=cfg.get("g_shape"), alpha=alpha,
                        reduce=cfg.get("reduce", False))
    _emit(basis.to_dict(), cfg)
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    spec = _model(cfg)
    sc = dict(cfg.get("suite_config", {}))
    for key in ("seed", "dt", "n_paths", "threads"):
        if key in cfg:
            sc[key] = cfg[key]
    report = run_suite(cfg["suite"], spec, SuiteConfig.from_dict(sc))
    _emit(report.to_dict(), cfg)
    sys.stderr.write(report.summary() + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_replicate(cfg: dict) -> int:
    spec = _model(cfg)
    payoff = Payoff.from_dict(cfg["payoff"])
    orders = cfg.get("K", [1])
    reports, comparisons = sweep(spec, payoff, orders, cfg.get("n_paths", 20_000), cfg.get("dt", 0.01),
                                 cfg.get("seed", 0), cfg.get("n_buckets", 10), cfg.get("threads", 1))
    body = {
        "schema": SCHEMA_VERSION,
        "reports": [r.to_dict() for r in reports],
        "comparisons": [{"k_a": c.k_a, "k_b": c.k_b, "difference": c.difference, "stderr": c.stderr, "z": c.z}
                        for c in comparisons],
    }
    _emit(body, cfg)
    if "csv" in cfg:
        with open(cfg["csv"], "w", encoding="utf-8", newline="") as fh:
            reports[-1].write_csv(fh)
    return EXIT_OK


def cmd_chaos_check(cfg: dict) -> int:
    spec = _model(cfg)
    tree = expand(*cfg["monomial"])
    dts = cfg.get("dts", [1e-2, 5e-3, 2.5e-3])
    n, seed = cfg.get("n_paths", 100), cfg.get("seed", 0)
    rows = []
    for dt in dts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            errs = [evaluate(tree, simulate(spec, dt, derive_seed(seed, i))).abs_error for i in range(n)]
        rows.append({"dt": dt, "rms_error": float(np.sqrt(np.mean(np.square(errs)))), "max_error": float(max(errs))})
    _emit({"schema": SCHEMA_VERSION, "monomial": cfg["monomial"], "expansion": render(tree).splitlines(),
           "meshes": rows}, cfg)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "orthogonalize": cmd_orthogonalize,
    "verify": cmd_verify,
    "replicate": cmd_replicate,
    "chaos-check": cmd_chaos_check,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mapchaos",
        description="Simulate Markov additive processes and verify their martingale structure.",
        epilog="Exit codes: 0 ok, 2 schema/usage error, 3 numerical failure, 4 verification FAIL.",
    )
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON run configuration; flags override its keys")
        sp.add_argument("--seed", type=int, help="base seed (path i uses a seed derived from (seed, i))")
        sp.add_argument("--threads", type=int, help="maximum parallel path workers")
        sp.add_argument("--output", help="write the JSON result here instead of stdout")

    sp = sub.add_parser("simulate", help="write one CSV per simulated path")
    common(sp)
    sp.add_argument("--dt", type=float, help="mesh step of the uniform part of the grid")
    sp.add_argument("--n-paths", type=int, dest="n_paths", help="number of paths")
    sp.add_argument("--orders", type=int, help="add compensated power-jump columns up to this order")
    sp.add_argument("--output-dir", dest="output_dir", help="directory for path_NNNNN.csv files")

    sp = sub.add_parser("moments", help="print moment tables")
    common(sp)

    sp = sub.add_parser("orthogonalize", help="Gram matrices and orthogonal coefficient triangles")
    common(sp)
    sp.add_argument("--K", type=int, help="size of the H-family")
    sp.add_argument("--g-shape", type=int, nargs=2, dest="g_shape", metavar=("k", "l"),
                    help="G-family shape: k modulator powers then l triggered powers")
    sp.add_argument("--alpha", type=float, help="fix the S1 point-mass weight instead of computing it")
    sp.add_argument("--reduce", action="store_true", default=None,
                    help="drop labels a zero jump measure makes null")

    sp = sub.add_parser("verify", help="run a verification suite")
    common(sp)
    sp.add_argument("--suite", help=f"one of: {', '.join(SUITES)}")
    sp.add_argument("--dt", type=float, help="mesh step")
    sp.add_argument("--n-paths", type=int, dest="n_paths", help="Monte Carlo path count")

    sp = sub.add_parser("replicate", help="LSMC replication of a payoff")
    common(sp)
    sp.add_argument("--payoff", choices=["terminal_ordinate", "terminal_square"], help="payoff shortcut")
    sp.add_argument("--K", type=int, nargs="+", help="basis orders to sweep")
    sp.add_argument("--n-paths", type=int, dest="n_paths", help="paths (split evenly into train and held-out)")
    sp.add_argument("--dt", type=float, help="mesh step")
    sp.add_argument("--n-buckets", type=int, dest="n_buckets", help="time buckets")
    sp.add_argument("--csv", help="write per-bucket integrand estimates of the last order here")

    sp = sub.add_parser("chaos-check", help="pathwise check of a monomial expansion")
    common(sp)
    sp.add_argument("--monomial", type=int, nargs=3, metavar=("g", "p", "b"), help="exponents")
    sp.add_argument("--dts", type=float, nargs="+", help="mesh steps")
    sp.add_argument("--n-paths", type=int, dest="n_paths", help="paths per mesh")
    return p


def build_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        if key == "payoff":
            val = {"kind": val}
        cfg[key] = val
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_SCHEMA
    try:
        if args.command == "verify" and args.suite is not None and args.suite not in SUITES:
            raise UnknownSuite(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
        cfg = build_config(args)
        _validate(args.command, cfg)
        return COMMANDS[args.command](cfg)
    except (UsageError, UnknownSuite, ValidationError) as e:
        sys.stderr.write(f"mapchaos: {e}\n")
        return EXIT_SCHEMA
    except DegenerateDirection as e:
        sys.stderr.write(f"mapchaos: {e}\n")
        return EXIT_NUMERIC
    except MapChaosError as e:
        sys.stderr.write(f"mapchaos: [{e.code}] {e}\n")
        return EXIT_NUMERIC
    except OSError as e:
        sys.stderr.write(f"mapchaos: {e}\n")
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
