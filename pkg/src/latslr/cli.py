"""Command-line entry point: ``latslr <subcommand> ...``.

Exit codes: 0 success, 1 a verification that ran but failed, 2 bad
configuration or arguments, 3 file I/O problems.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import clwe as clwe_mod
from .errors import ConfigInvalid, HashMismatch, IoError, LatslrError, SchemaVersionUnsupported
from .harness import (
    ExperimentConfig,
    emit_csv,
    emit_json,
    emit_plot_script,
    parse_csv,
    plot_script_text,
    run_experiment,
    summarize,
)
from .lattice import BinaryBddInstance, make_binary_bdd, sample_random_basis, verify_binary_bdd_solution
from .reduction import ReductionTranscript, SlrInstance, build_slr_instance, extract_bdd_solution
from .serialize import load_instance, save_instance
from .solvers import SOLVERS

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    return Path(args.out or ".")


def _load(path, expected):
    obj = load_instance(path)
    if not isinstance(obj, expected):
        raise ConfigInvalid(f"{path} holds a {type(obj).__name__}, expected {expected.__name__}")
    return obj


def cmd_gen_bdd(args) -> int:
    rng = np.random.default_rng(args.seed)
    basis = sample_random_basis(args.d, args.kappa, rng)
    inst = make_binary_bdd(basis, args.alpha, args.noise_ratio, rng)
    path = save_instance(_out_dir(args) / "bdd.json", inst, include_secrets=args.include_secrets)
    print(json.dumps({"instance": str(path), "d": inst.d, "kappa": basis.kappa, "lambda1_bin": inst.lambda1_bin}))
    return EXIT_OK


def cmd_reduce(args) -> int:
    inst = _load(args.instance, BinaryBddInstance)
    lam = args.lambda1_hat if args.lambda1_hat else inst.get_lambda1_bin()
    slr, tr = build_slr_instance(inst, args.m, args.k, lam, args.seed)
    out = _out_dir(args)
    p1 = save_instance(out / "slr.json", slr)
    p2 = save_instance(out / "transcript.json", tr)
    print(json.dumps({"slr": str(p1), "transcript": str(p2), "m": slr.m, "n": slr.n,
                      "delta": slr.delta, "gamma": tr.params.gamma, "Z": tr.params.Z}))
    return EXIT_OK


def cmd_solve(args) -> int:
    slr = _load(args.instance, SlrInstance)
    if args.solver not in SOLVERS:
        raise ConfigInvalid(f"unknown solver {args.solver!r}; choose from {sorted(SOLVERS)}")
    fit = SOLVERS[args.solver](slr, None)
    theta = np.asarray(fit.theta_hat, dtype=float)
    doc = {
        "solver": args.solver,
        "theta_hat": theta.tolist(),
        "residual_mse": slr.residual_mse(theta),
        "delta_sq": slr.delta**2,
        "valid": bool(slr.is_valid_solution(theta)),
    }
    path = _out_dir(args) / "solution.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    print(json.dumps({k: doc[k] for k in ("solver", "residual_mse", "delta_sq", "valid")}))
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = _load(args.instance, BinaryBddInstance)
    if args.z:
        z = np.array([int(v) for v in args.z.split(",")])
    else:
        if not (args.solution and args.transcript):
            raise ConfigInvalid("verify needs --z, or both --solution and --transcript")
        tr = _load(args.transcript, ReductionTranscript)
        try:
            theta = json.loads(Path(args.solution).read_text())["theta_hat"]
        except OSError as exc:
            raise IoError(f"cannot read {args.solution}: {exc}") from exc
        z = extract_bdd_solution(np.array(theta, dtype=float), tr)
    ok = verify_binary_bdd_solution(inst, z)
    print(json.dumps({"z": [int(v) for v in z], "verified": bool(ok)}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_clwe(args) -> int:
    n = args.n or clwe_mod.clwe_n(args.m, args.k, args.c)
    gamma = args.gamma or 2.0 * math.sqrt(args.m)
    beta = args.beta if args.beta is not None else 0.01 / math.sqrt(args.k)
    rng = np.random.default_rng(args.seed)
    if args.null:
        sample = clwe_mod.sample_null(args.m, n, rng, gamma, beta)
    else:
        sample = clwe_mod.sample_clwe(args.m, n, gamma, beta, rng)
    out = _out_dir(args)
    path = save_instance(out / "clwe.json", sample, include_secrets=args.include_secrets)
    report = {"sample": str(path), "m": args.m, "n": n, "gamma_clwe": gamma, "beta": beta, "provenance": sample.provenance}
    if args.solve:
        inst = clwe_mod.build_slr_from_clwe(sample, args.k, gamma)
        fit = SOLVERS[args.solver](inst.slr, None)
        report["residual_mse"] = inst.slr.residual_mse(fit.theta_hat)
        report["delta_sq"] = inst.slr.delta**2
        report["distinguisher"] = clwe_mod.distinguish(sample, fit.theta_hat)
    print(json.dumps(report))
    return EXIT_OK


def _read_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigInvalid("experiment needs --config <json>")
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{args.config} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    if args.out:
        raw["out_dir"] = args.out
    return ExperimentConfig.from_dict(raw)


def cmd_experiment(args) -> int:
    cfg = _read_config(args)
    records = run_experiment(cfg)
    out = Path(cfg.out_dir)
    csv_path = emit_csv(records, out / f"{cfg.experiment}.csv")
    emit_json(records, out / f"{cfg.experiment}.json")
    emit_plot_script(records, cfg.experiment, out / f"plot_{cfg.experiment.replace('-', '_')}.py")
    print(json.dumps({"csv": str(csv_path), "records": len(records), "summary": summarize(records)}, indent=1))
    return EXIT_OK


def cmd_emit_plots(args) -> int:
    kind = args.kind
    if kind is None:
        try:
            rows = parse_csv(Path(args.csv).read_text())
        except OSError as exc:
            raise IoError(f"cannot read {args.csv}: {exc}") from exc
        kinds = {r["experiment"] for r in rows}
        if len(kinds) != 1:
            raise ConfigInvalid("cannot infer the experiment kind from the CSV; pass --kind")
        kind = kinds.pop()
    path = _out_dir(args) / f"plot_{kind.replace('-', '_')}.py"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(plot_script_text(kind))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    print(str(path))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (master seed for experiments)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--include-secrets", action="store_true", help="store planted solutions and secrets")

    p = _Parser(prog="latslr", description="Lattice problems reduced to sparse linear regression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-bdd", parents=[common], help="sample a planted BinaryBDD instance")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--kappa", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=0.05)
    g.add_argument("--noise-ratio", type=float, default=1.0, help="||e|| as a fraction of alpha*lambda1_bin")
    g.set_defaults(func=cmd_gen_bdd)

    r = sub.add_parser("reduce", parents=[common], help="map a BinaryBDD instance to k-SLR")
    r.add_argument("--instance", required=True)
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--m", type=int, default=None, help="samples (default 17 d)")
    r.add_argument("--lambda1-hat", type=float, default=None)
    r.set_defaults(func=cmd_reduce)

    s = sub.add_parser("solve", parents=[common], help="run an SLR solver on a stored instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--solver", default="l0_partite", help=f"one of {sorted(SOLVERS)}")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", parents=[common], help="check a candidate BinaryBDD answer")
    v.add_argument("--instance", required=True)
    v.add_argument("--z", default=None, help="comma-separated signs, e.g. 1,-1,1")
    v.add_argument("--solution", default=None)
    v.add_argument("--transcript", default=None)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("clwe", parents=[common], help="sample CLWE (or null) and optionally distinguish")
    c.add_argument("--m", type=int, default=16)
    c.add_argument("--k", type=int, default=4)
    c.add_argument("--n", type=int, default=0, help="columns (default from --c)")
    c.add_argument("--c", type=float, default=0.3, help="constant in the n sizing rule")
    c.add_argument("--gamma", type=float, default=0.0, help="secret norm (default 2 sqrt(m))")
    c.add_argument("--beta", type=float, default=None, help="error width (default 0.01/sqrt(k))")
    c.add_argument("--null", action="store_true", help="sample the uniform null distribution")
    c.add_argument("--solve", action="store_true", help="solve the SLR embedding and run the distinguisher")
    c.add_argument("--solver", default="l0_partite")
    c.set_defaults(func=cmd_clwe)

    e = sub.add_parser("experiment", parents=[common], help="run a configured sweep")
    e.add_argument("--config", required=False)
    e.add_argument("--jobs", type=int, default=None)
    e.set_defaults(func=cmd_experiment)

    pl = sub.add_parser("emit-plots", parents=[common], help="write a matplotlib script for a results CSV")
    pl.add_argument("--csv", required=False, default=None)
    pl.add_argument("--kind", default=None)
    pl.set_defaults(func=cmd_emit_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "emit-plots" and not (args.csv or args.kind):
            raise ConfigInvalid("emit-plots needs --csv or --kind")
        return args.func(args)
    except (IoError, HashMismatch, SchemaVersionUnsupported, OSError) as exc:
        print(f"latslr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LatslrError, ValueError) as exc:
        print(f"latslr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
