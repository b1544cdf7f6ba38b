"""Seeded experiment sweeps, CSV/JSON output and plot-script emission.

Each trial draws everything from its own seed, derived by hashing
(master_seed, experiment, cell, trial) with BLAKE2b. Records come back in
(cell, trial) order whatever the worker count, so output files are a pure
function of the configuration.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import math
import signal
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import clwe as clwe_mod
from .errors import ConfigInvalid, IoError, NotKSparse, NotPartite, NotSignVector
from .lattice import (
    babai_round,
    lambda1_bin_exact,
    make_binary_bdd,
    sample_random_basis,
    verify_binary_bdd_solution,
)
from .reduction import (
    SAMPLES_PER_DIM,
    build_slr_instance,
    column_normalize,
    extract_bdd_solution,
    planted_theta,
    reduce_and_solve,
)
from .solvers import SOLVERS, in_cone, l0_tuple_residuals, re_constant_estimate, tuple_index_to_theta

EXPERIMENTS = (
    "bdd-completeness",
    "bdd-soundness",
    "lasso-vs-kappa",
    "babai-vs-lasso",
    "re-trend",
    "clwe-advantage",
    "runtime-vs-k",
)

CSV_FIELDS = (
    "experiment", "d", "k", "m", "n", "alpha", "kappa_target", "kappa_actual", "lambda1_bin",
    "solver", "trial", "seed", "success", "residual_mse", "prediction_error", "re_estimate", "wall_time_ms",
)
_INT_FIELDS = {"d", "k", "m", "n", "trial", "seed"}
_FLOAT_FIELDS = {
    "alpha", "kappa_target", "kappa_actual", "lambda1_bin", "residual_mse",
    "prediction_error", "re_estimate", "wall_time_ms",
}

_DEFAULT_SOLVERS = {
    "bdd-completeness": ["planted"],
    "bdd-soundness": ["enumerate"],
    "lasso-vs-kappa": ["thresholded_lasso"],
    "babai-vs-lasso": ["babai", "thresholded_lasso"],
    "re-trend": ["re_sampler"],
    "clwe-advantage": ["l0_partite"],
    "runtime-vs-k": ["l0_partite"],
}


@dataclass
class ExperimentConfig:
    experiment: str
    d: list = field(default_factory=lambda: [8])
    k: list = field(default_factory=lambda: [2])
    m: list = field(default_factory=list)
    alpha: list = field(default_factory=lambda: [0.05])
    kappa_target: list = field(default_factory=lambda: [10.0])
    solver: list = field(default_factory=list)
    beta_exponent: list = field(default_factory=list)
    trials: int = 10
    master_seed: int = 0
    out_dir: str = "results"
    jobs: int = 1
    timeout_s: float = 60.0
    record_timing: Optional[bool] = None
    noise_ratio: float = 1.0
    lambda_mode: str = "exact"
    alpha_constant: float = 1.0
    re_budget: int = 10_000
    # clwe-advantage axes: n (0 = sized from clwe_c), gamma_clwe (0 = 2 sqrt(m)), beta (0 = 0.01/sqrt(k))
    n: list = field(default_factory=lambda: [0])
    gamma_clwe: list = field(default_factory=lambda: [0.0])
    beta: list = field(default_factory=lambda: [0.0])
    clwe_c: float = 0.3

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc
        cfg.validate()
        return cfg

    @property
    def timing(self) -> bool:
        if self.record_timing is None:
            return self.experiment == "runtime-vs-k"
        return bool(self.record_timing)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}; choose from {list(EXPERIMENTS)}")
        if not isinstance(self.trials, int) or self.trials < 0:
            raise ConfigInvalid(f"trials must be a non-negative integer, got {self.trials!r}")
        if self.jobs < 1:
            raise ConfigInvalid(f"jobs must be >= 1, got {self.jobs}")
        for name in ("d", "k", "m", "alpha", "kappa_target", "solver", "beta_exponent", "n", "gamma_clwe", "beta"):
            if not isinstance(getattr(self, name), list):
                raise ConfigInvalid(f"{name} must be a list")
        self.cells()

    def cells(self) -> list[dict]:
        """Expand the grids into validated parameter cells, in a fixed order."""
        solvers = self.solver or _DEFAULT_SOLVERS[self.experiment]
        if self.experiment == "clwe-advantage":
            out = []
            for m, k, n, g, b, s in itertools.product(self.m or [16], self.k, self.n, self.gamma_clwe, self.beta, solvers):
                n = n or clwe_mod.clwe_n(m, k, self.clwe_c)
                if n % k:
                    raise ConfigInvalid(f"cell m={m}, k={k}, n={n}: k must divide n")
                g = g or 2.0 * math.sqrt(m)
                b = b or 0.01 / math.sqrt(k)
                for arm in ("clwe", "null"):
                    out.append({"m": m, "k": k, "n": n, "gamma_clwe": g, "beta": b, "solver": s, "arm": arm})
            return out
        for s in solvers:
            if s not in _known_solvers(self.experiment):
                raise ConfigInvalid(f"solver {s!r} is not available for {self.experiment}")
        out = []
        if self.alpha:
            alpha_axis = [("alpha", a) for a in self.alpha]
        elif self.beta_exponent:
            alpha_axis = [("beta_exponent", b) for b in self.beta_exponent]
        else:
            raise ConfigInvalid("give an alpha grid or, with alpha empty, a beta_exponent grid")
        for d, k, kappa, (akind, aval), s in itertools.product(self.d, self.k, self.kappa_target, alpha_axis, solvers):
            if k < 1 or d % k:
                raise ConfigInvalid(f"cell d={d}, k={k}: k must divide d")
            ms = self.m or [SAMPLES_PER_DIM * d]
            for m in ms:
                if m < SAMPLES_PER_DIM * d:
                    raise ConfigInvalid(f"cell d={d}, m={m}: need m >= {SAMPLES_PER_DIM}*d")
                cell = {"d": d, "k": k, "m": m, "kappa_target": float(kappa), "solver": s}
                if akind == "alpha":
                    cell["alpha"] = float(aval)
                else:
                    beta = float(aval)
                    cell["beta_exponent"] = beta
                    cell["alpha"] = self.alpha_constant * k ** (1 - beta / 2) / (d ** (5 - 2 * beta) * kappa ** (2 - beta))
                if not 0 < cell["alpha"] < 0.5:
                    raise ConfigInvalid(f"cell {cell}: alpha must lie in (0, 1/2)")
                out.append(cell)
        return out


def _known_solvers(experiment: str) -> set:
    if experiment == "bdd-completeness":
        return {"planted"}
    if experiment == "bdd-soundness":
        return {"enumerate"}
    if experiment == "re-trend":
        return {"re_sampler"}
    return set(SOLVERS) | {"babai"}


@dataclass
class TrialRecord:
    experiment: str
    d: Optional[int]
    k: Optional[int]
    m: Optional[int]
    n: Optional[int]
    alpha: Optional[float]
    kappa_target: Optional[float]
    kappa_actual: Optional[float]
    lambda1_bin: Optional[float]
    solver: str
    trial: int
    seed: int
    success: bool
    residual_mse: Optional[float] = None
    prediction_error: Optional[float] = None
    re_estimate: Optional[float] = None
    wall_time_ms: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def derive_seed(master_seed: int, experiment: str, cell: dict, trial: int) -> int:
    """64-bit seed from BLAKE2b over the canonical JSON of (master_seed, experiment, cell, trial)."""
    key = json.dumps([int(master_seed), experiment, sorted(cell.items()), int(trial)], separators=(",", ":"))
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


def plan_trials(cfg: ExperimentConfig) -> list[tuple[dict, int, int]]:
    tasks = []
    for cell in cfg.cells():
        for trial in range(cfg.trials):
            tasks.append((cell, trial, derive_seed(cfg.master_seed, cfg.experiment, cell, trial)))
    seeds = [t[2] for t in tasks]
    if len(set(seeds)) != len(seeds):
        raise ConfigInvalid("derived seeds collide; change master_seed")
    return tasks


class _TrialTimeout(Exception):
    pass


def _alarm(signum, frame):
    raise _TrialTimeout()


def _run_one(args) -> TrialRecord:
    cfg, cell, trial, seed = args
    use_alarm = cfg.timeout_s and threading.current_thread() is threading.main_thread() and hasattr(signal, "setitimer")
    if use_alarm:
        previous = signal.signal(signal.SIGALRM, _alarm)
        signal.setitimer(signal.ITIMER_REAL, cfg.timeout_s)
    start = time.perf_counter()
    try:
        rec = _TRIALS[cfg.experiment](cfg, cell, trial, seed)
    except _TrialTimeout:
        rec = _blank(cfg, cell, trial, seed)
        rec.extra["timed_out"] = True
    except Exception as exc:  # a failing trial is recorded, the sweep goes on
        rec = _blank(cfg, cell, trial, seed)
        rec.extra["error"] = f"{type(exc).__name__}: {exc}"
    finally:
        if use_alarm:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, previous)
    elapsed = (time.perf_counter() - start) * 1000.0
    if not cfg.timing:
        rec.wall_time_ms = None
    elif rec.wall_time_ms is None:
        rec.wall_time_ms = elapsed
    rec.extra.setdefault("timed_out", False)
    return rec


def _blank(cfg, cell, trial, seed) -> TrialRecord:
    return TrialRecord(
        cfg.experiment, cell.get("d"), cell.get("k"), cell.get("m"), cell.get("n"), cell.get("alpha"),
        cell.get("kappa_target"), None, None, _solver_label(cell), trial, seed, False,
        extra={k: v for k, v in cell.items() if k in ("beta_exponent", "gamma_clwe", "beta", "arm")},
    )


def _solver_label(cell: dict) -> str:
    return f"{cell['solver']}/{cell['arm']}" if "arm" in cell else cell["solver"]


def _bdd_setup(cell, seed):
    rng = np.random.default_rng(seed)
    basis = sample_random_basis(cell["d"], cell["kappa_target"], rng)
    lam = lambda1_bin_exact(basis)
    return rng, basis, lam


def _record(cfg, cell, trial, seed, basis, lam, n, success, **metrics) -> TrialRecord:
    rec = _blank(cfg, cell, trial, seed)
    rec.n = n
    rec.kappa_actual = basis.kappa
    rec.lambda1_bin = lam
    rec.success = bool(success)
    for key in ("residual_mse", "prediction_error", "re_estimate", "wall_time_ms"):
        if key in metrics:
            setattr(rec, key, metrics.pop(key))
    rec.extra.update(metrics)
    return rec


def _trial_completeness(cfg, cell, trial, seed):
    rng, basis, lam = _bdd_setup(cell, seed)
    inst = make_binary_bdd(basis, cell["alpha"], cfg.noise_ratio, rng, lam)
    slr, tr = build_slr_instance(inst, cell["m"], cell["k"], lam, rng)
    theta = planted_theta(inst, tr.shape)
    mse = slr.residual_mse(theta)
    z = extract_bdd_solution(theta, tr)
    ok = mse <= slr.delta**2 and verify_binary_bdd_solution(inst, z)
    return _record(cfg, cell, trial, seed, basis, lam, slr.n, ok, residual_mse=mse,
                   prediction_error=0.0, gamma_gate=tr.params.gamma_gate)


def _trial_soundness(cfg, cell, trial, seed):
    rng, basis, lam = _bdd_setup(cell, seed)
    inst = make_binary_bdd(basis, cell["alpha"], cfg.noise_ratio, rng, lam)
    slr, tr = build_slr_instance(inst, cell["m"], cell["k"], lam, rng)
    # every k-tuple of columns, a superset of the partite candidates
    res = l0_tuple_residuals(slr.X, slr.y, slr.k) / slr.m
    within = np.flatnonzero(res <= slr.delta**2)
    wrong = 0
    for idx in within:
        try:
            z = extract_bdd_solution(tuple_index_to_theta(int(idx), slr.n, slr.k), tr)
        except (NotKSparse, NotPartite):
            z = None
        wrong += z is None or not np.array_equal(z, inst.hidden_z)
    partite = tr.shape.block_width**slr.k
    return _record(cfg, cell, trial, seed, basis, lam, slr.n, wrong == 0, residual_mse=float(res.min()),
                   candidates=int(res.size), partite_candidates=int(partite), within_budget=int(within.size),
                   wrong_decodings=int(wrong))


def _trial_solver(cfg, cell, trial, seed):
    rng, basis, lam = _bdd_setup(cell, seed)
    inst = make_binary_bdd(basis, cell["alpha"], cfg.noise_ratio, rng, lam)
    n = cell["k"] << (cell["d"] // cell["k"])
    if cell["solver"] == "babai":
        z = babai_round(basis, inst.target)
        try:
            ok = verify_binary_bdd_solution(inst, z)
        except NotSignVector:
            ok = False
        return _record(cfg, cell, trial, seed, basis, lam, n, ok)
    rep = reduce_and_solve(inst, SOLVERS[cell["solver"]], cell["m"], cell["k"], rng, cfg.lambda_mode, cell["solver"])
    ok = rep.solved and verify_binary_bdd_solution(inst, rep.z_hat)
    # the recorded time covers reduce, solve, extract and verify; instance sampling is excluded
    return _record(cfg, cell, trial, seed, basis, lam, n, ok, residual_mse=rep.slr_residual_mse,
                   prediction_error=rep.prediction_error, wall_time_ms=rep.wall_time * 1000.0, detail=rep.detail)


def _trial_re(cfg, cell, trial, seed):
    rng, basis, lam = _bdd_setup(cell, seed)
    inst = make_binary_bdd(basis, cell["alpha"], cfg.noise_ratio, rng, lam)
    slr, tr = build_slr_instance(inst, cell["m"], cell["k"], lam, rng)
    Xt, _ = column_normalize(slr.X)
    theta = planted_theta(inst, tr.shape)
    support = np.flatnonzero(theta)
    eps = cell["k"] / (50.0 * cell["d"])
    est = re_constant_estimate(Xt, support, eps, cfg.re_budget, rng)
    v = Xt @ est.witness
    witnessed = in_cone(est.witness, support, eps) and abs(float(v @ v) / (slr.m * float(est.witness @ est.witness)) - est.value) <= 1e-9
    return _record(cfg, cell, trial, seed, basis, lam, slr.n, witnessed, re_estimate=est.value, epsilon=eps)


def _trial_clwe(cfg, cell, trial, seed):
    rng = np.random.default_rng(seed)
    m, n, k = cell["m"], cell["n"], cell["k"]
    if cell["arm"] == "clwe":
        sample = clwe_mod.sample_clwe(m, n, cell["gamma_clwe"], cell["beta"], rng).without_secret()
    else:
        sample = clwe_mod.sample_null(m, n, rng)
    inst = clwe_mod.build_slr_from_clwe(sample, k, cell["gamma_clwe"])
    fit = SOLVERS[cell["solver"]](inst.slr, None)
    bit = clwe_mod.distinguish(sample, fit.theta_hat)
    mse = inst.slr.residual_mse(fit.theta_hat)
    rec = _blank(cfg, cell, trial, seed)
    rec.n = n
    rec.success = bool(bit)
    rec.residual_mse = mse
    rec.extra["within_budget"] = bool(mse <= inst.slr.delta**2)
    return rec


_TRIALS = {
    "bdd-completeness": _trial_completeness,
    "bdd-soundness": _trial_soundness,
    "lasso-vs-kappa": _trial_solver,
    "babai-vs-lasso": _trial_solver,
    "re-trend": _trial_re,
    "clwe-advantage": _trial_clwe,
    "runtime-vs-k": _trial_solver,
}


def run_experiment(cfg: ExperimentConfig, jobs: Optional[int] = None) -> list[TrialRecord]:
    cfg.validate()
    tasks = [(cfg, cell, trial, seed) for cell, trial, seed in plan_trials(cfg)]
    jobs = cfg.jobs if jobs is None else jobs
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        parsed = {}
        for key in CSV_FIELDS:
            raw = row[key]
            if raw == "":
                parsed[key] = None
            elif key in _INT_FIELDS:
                parsed[key] = int(raw)
            elif key in _FLOAT_FIELDS:
                parsed[key] = float(raw)
            elif key == "success":
                parsed[key] = raw == "true"
            else:
                parsed[key] = raw
        out.append(parsed)
    return out


def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(records, path) -> Path:
    return _write(path, records_to_csv(records))


def emit_json(records, path) -> Path:
    return _write(path, json.dumps([r.as_dict() for r in records], indent=1, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


_PLOTS = {
    "bdd-completeness": ("alpha", "success", "success rate"),
    "bdd-soundness": ("alpha", "success", "success rate"),
    "lasso-vs-kappa": ("kappa_target", "success", "success rate"),
    "babai-vs-lasso": ("kappa_target", "success", "success rate"),
    "re-trend": ("kappa_target", "re_estimate", "median RE estimate"),
    "clwe-advantage": ("n", "success", "fraction output 1"),
    "runtime-vs-k": ("k", "wall_time_ms", "median wall time (ms)"),
}

_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot {kind} results from a latslr CSV. Usage: python3 {{script}} results.csv [out.png]"""
import csv
import statistics
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

X_FIELD, Y_FIELD, Y_LABEL, LOG_Y = {x!r}, {y!r}, {label!r}, {log_y!r}


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "results.csv"
    out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"
    groups = defaultdict(lambda: defaultdict(list))
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if row[Y_FIELD] == "" or row[X_FIELD] == "":
                continue
            y = 1.0 if row[Y_FIELD] == "true" else 0.0 if row[Y_FIELD] == "false" else float(row[Y_FIELD])
            groups[row["solver"]][float(row[X_FIELD])].append(y)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for solver, series in sorted(groups.items()):
        xs = sorted(series)
        agg = statistics.fmean if Y_FIELD == "success" else statistics.median
        ax.plot(xs, [agg(series[x]) for x in xs], marker="o", label=solver)
    ax.set_xlabel(X_FIELD)
    ax.set_ylabel(Y_LABEL)
    if LOG_Y:
        ax.set_yscale("log")
    if X_FIELD in ("kappa_target", "alpha"):
        ax.set_xscale("log")
    ax.legend()
    ax.set_title({kind!r})
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
'''


def plot_script_text(kind: str) -> str:
    if kind not in _PLOTS:
        raise ConfigInvalid(f"no plot recipe for {kind!r}")
    x, y, label = _PLOTS[kind]
    return _PLOT_TEMPLATE.format(kind=kind, x=x, y=y, label=label, log_y=y in ("re_estimate", "wall_time_ms"))


def emit_plot_script(records, kind: Optional[str], path) -> Path:
    if kind is None:
        kinds = {r.experiment for r in records}
        if len(kinds) != 1:
            raise ConfigInvalid("records mix experiments; pass the kind explicitly")
        kind = kinds.pop()
    return _write(path, plot_script_text(kind))


def summarize(records) -> dict:
    """Per-(cell, solver) success rates and medians, keyed by a readable label."""
    groups: dict = {}
    for r in records:
        key = (r.d, r.k, r.m, r.n, r.alpha, r.kappa_target, r.solver)
        groups.setdefault(key, []).append(r)
    out = {}
    for key, recs in groups.items():
        label = "d={} k={} m={} n={} alpha={} kappa={} solver={}".format(*key)

        def med(name):
            vals = [getattr(r, name) for r in recs if getattr(r, name) is not None]
            return float(np.median(vals)) if vals else None

        out[label] = {
            "trials": len(recs),
            "success_rate": sum(r.success for r in recs) / len(recs),
            "median_residual_mse": med("residual_mse"),
            "median_prediction_error": med("prediction_error"),
            "median_re_estimate": med("re_estimate"),
            "median_wall_time_ms": med("wall_time_ms"),
        }
    return out
