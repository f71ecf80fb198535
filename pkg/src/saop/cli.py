"""Command-line front end: ``saop run``, ``saop multirun`` and ``saop verify``.

A JSON config selects a benchmark problem, optional constructor overrides,
search hyperparameters and an optional robust (tube check) block. Every
output directory gets a manifest that is enough to repeat the run.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bench import PROBLEMS
from .contraction import ContractionSpec, bound_envelope, metric_deviation, ultimate_bound
from .dynamics import piecewise_disturbance
from .mras import SaopConfig, config_dict, run

CONVERGENCE_COLUMNS = ["k", "N_k", "kappa", "gamma", "best_J", "mean_J", "sigma_norm", "elites", "rejected_robust"]
TOP_LEVEL_KEYS = {"problem", "saop", "robust", "runs", "seed", "output_dir"}
SAOP_KEYS = {f.name for f in fields(SaopConfig)} - {"seed"}
SPEC_KEYS = {f.name for f in fields(ContractionSpec)}


class ConfigError(ValueError):
    """Invalid config; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass
class ExperimentConfig:
    problem: str
    overrides: dict = field(default_factory=dict)
    saop: SaopConfig = field(default_factory=SaopConfig)
    robust: Optional[dict] = None
    runs: int = 1
    seed: int = 0
    output_dir: str = "saop_out"

    @classmethod
    def from_dict(cls, data, env=None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        _reject_unknown(data, TOP_LEVEL_KEYS, "")
        prob = data.get("problem")
        if not isinstance(prob, dict):
            raise ConfigError("problem", "required object with a 'name'")
        _reject_unknown(prob, {"name", "overrides"}, "problem.")
        name = prob.get("name")
        if name not in PROBLEMS:
            raise ConfigError("problem.name", f"must be one of {sorted(PROBLEMS)}")
        overrides = prob.get("overrides", {}) or {}
        if not isinstance(overrides, dict):
            raise ConfigError("problem.overrides", "must be an object")
        accepted = set(inspect.signature(PROBLEMS[name]).parameters)
        _reject_unknown(overrides, accepted, "problem.overrides.")

        saop = dict(data.get("saop", {}) or {})
        if not isinstance(saop, dict):
            raise ConfigError("saop", "must be an object")
        if "lambda" in saop:
            if "lam" in saop:
                raise ConfigError("saop.lambda", "give either 'lambda' or 'lam', not both")
            saop["lam"] = saop.pop("lambda")
        _reject_unknown(saop, SAOP_KEYS, "saop.")

        seed = data.get("seed", 0)
        env = os.environ if env is None else env
        if env.get("SAOP_SEED"):
            seed = env["SAOP_SEED"]
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise ConfigError("seed", "must be an integer") from None
        try:
            cfg = SaopConfig(seed=seed, **saop)
        except (TypeError, ValueError) as exc:
            raise ConfigError("saop", str(exc)) from None

        robust = data.get("robust")
        if robust is not None:
            if not isinstance(robust, dict):
                raise ConfigError("robust", "must be an object or null")
            _reject_unknown(robust, SPEC_KEYS, "robust.")

        runs = data.get("runs", 1)
        if not isinstance(runs, int) or isinstance(runs, bool) or runs < 1:
            raise ConfigError("runs", "must be an integer >= 1")
        out = data.get("output_dir", "saop_out")
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir", "must be a nonempty string")
        return cls(name, overrides, cfg, robust, runs, seed, out)

    def to_dict(self) -> dict:
        saop = config_dict(self.saop)
        saop.pop("seed")
        return {
            "problem": {"name": self.problem, "overrides": self.overrides},
            "saop": saop,
            "robust": self.robust,
            "runs": self.runs,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    def build_problem(self):
        try:
            return PROBLEMS[self.problem](**self.overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError("problem.overrides", str(exc)) from None

    def contraction_spec(self, problem) -> Optional[ContractionSpec]:
        """Robust block merged over the problem's default spec (``None`` if disabled)."""
        if self.robust is None:
            return None
        base = problem.contraction.to_dict() if problem.contraction is not None else {}
        merged = {**base, **self.robust}
        try:
            return ContractionSpec(**merged)
        except (TypeError, ValueError) as exc:
            raise ConfigError("robust", str(exc)) from None


def _reject_unknown(block, allowed, prefix):
    for key in block:
        if key not in allowed:
            raise ConfigError(prefix + str(key), "unknown key")


def load_config(path, env=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data, env)


def _dump(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _fmt(v):
    return repr(float(v))


def write_convergence(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        for r in history:
            w.writerow([r.k, r.n_k, _fmt(r.kappa), _fmt(r.gamma), _fmt(r.best_j), _fmt(r.mean_j),
                        _fmt(r.sigma_norm), r.elites, r.rejected_robust])


def write_mu_trace(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        dim = history[0].mu.shape[0] if history else 0
        w.writerow(["k"] + [f"mu{i + 1}" for i in range(dim)])
        for r in history:
            w.writerow([r.k] + [_fmt(v) for v in r.mu])


def manifest(config: ExperimentConfig, seed, command) -> dict:
    return {"version": __version__, "command": command, "seed": seed, "config": config.to_dict()}


def execute(config: ExperimentConfig, seed: int, out_dir) -> dict:
    """One seeded run with all artifacts written to ``out_dir``; returns result.json content."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = config.build_problem()
    spec = config.contraction_spec(problem)
    saop = SaopConfig(**{**config_dict(config.saop), "seed": seed})
    result = run(problem, saop, robust=spec)
    write_convergence(out_dir / "convergence.csv", result.history)
    write_mu_trace(out_dir / "mu_trace.csv", result.history)
    if problem.static_objective is None:
        traj, _ = problem.trajectory(result.w_star)
        traj.to_csv(out_dir / "trajectory.csv")
    body = result.to_dict()
    body["problem"] = problem.name
    body["config"] = config.to_dict()
    body["config"]["seed"] = seed
    body["version"] = __version__
    _dump(out_dir / "result.json", body)
    _dump(out_dir / "manifest.json", manifest(config, seed, "run"))
    return body


def _error(kind, **info):
    print(json.dumps({"error": kind, **info}), file=sys.stderr)


def cmd_run(args) -> int:
    config = load_config(args.config)
    body = execute(config, config.seed, config.output_dir)
    print(json.dumps({k: body[k] for k in ("j_star", "iterations", "total_samples", "status")}))
    if not body["converged"]:
        _error("not_converged", status=body["status"], output_dir=config.output_dir)
        return 1
    return 0


def _execute_safe(config, seed, out_dir):
    try:
        return execute(config, seed, out_dir)
    except Exception as exc:  # recorded per run, summary uses the successes
        return {"error": f"{type(exc).__name__}: {exc}", "seed": seed}


def summarize(bodies) -> dict:
    good = [b for b in bodies if "error" not in b]
    costs = np.array([b["j_star"] for b in good], dtype=float)
    out = {
        "runs": len(bodies),
        "succeeded": len(good),
        "converged": sum(bool(b["converged"]) for b in good),
        "failures": [{"seed": b["seed"], "reason": b.get("error", b.get("status"))}
                     for b in bodies if "error" in b or not b["converged"]],
        "costs": costs.tolist(),
        "seeds": [b["seed"] for b in good],
    }
    if costs.size:
        out.update(
            mean=float(np.mean(costs)),
            std=float(np.std(costs, ddof=1)) if costs.size > 1 else 0.0,
            min=float(np.min(costs)),
            max=float(np.max(costs)),
        )
    return out


def write_histogram(path, costs, bins=10):
    costs = np.asarray(costs, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lower", "bin_upper", "count"])
        if costs.size:
            counts, edges = np.histogram(costs, bins=bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([_fmt(lo), _fmt(hi), int(c)])


def cmd_multirun(args) -> int:
    config = load_config(args.config)
    runs = args.runs if args.runs is not None else config.runs
    if runs < 2:
        raise ConfigError("runs", "multirun needs at least 2 runs")
    config.runs = runs
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [config.seed if args.same_seed else config.seed + i for i in range(runs)]
    dirs = [out / f"run_{i:03d}" for i in range(runs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            bodies = list(pool.map(_execute_safe, [config] * runs, seeds, dirs))
    else:
        bodies = [_execute_safe(config, s, d) for s, d in zip(seeds, dirs)]
    summary = summarize(bodies)
    summary["same_seed"] = bool(args.same_seed)
    _dump(out / "summary.json", summary)
    write_histogram(out / "histogram.csv", summary["costs"])
    _dump(out / "manifest.json", {**manifest(config, config.seed, "multirun"), "seeds": seeds})
    print(json.dumps({k: summary.get(k) for k in ("runs", "converged", "mean", "std", "min", "max")}))
    if summary["failures"]:
        _error("runs_failed", failures=summary["failures"])
        return 1
    return 0


def load_weights(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("w_star", data.get("weights"))
    return np.asarray(data, dtype=float).ravel()


def disturbed_deviation(problem, w, spec, count, seed):
    """Largest ``||x - xbar||_M^2`` and envelope excess over ``count`` disturbed rollouts."""
    nominal, _ = problem.trajectory(w)
    env = bound_envelope(spec, nominal.times)
    n = problem.model.state_dim
    rng = np.random.default_rng(seed)
    worst_dev, worst_excess = 0.0, -np.inf
    for _ in range(count):
        d = piecewise_disturbance(spec.rho_max, n, problem.cost.horizon, rng)
        traj, _ = problem.trajectory(w, disturbance=d)
        dev = metric_deviation(traj.states, nominal.states, spec.M)
        worst_dev = max(worst_dev, float(dev.max()))
        worst_excess = max(worst_excess, float(np.max(dev - env)))
    return worst_dev, worst_excess


def cmd_verify(args) -> int:
    config = load_config(args.config)
    problem = config.build_problem()
    if problem.static_objective is not None:
        raise ConfigError("problem.name", "static problems have no dynamics to verify")
    w = load_weights(args.weights)
    if w.shape[0] != problem.dim:
        _error("dimension_mismatch", expected=problem.dim, got=int(w.shape[0]))
        return 2
    spec = config.contraction_spec(problem) or problem.contraction
    if spec is None:
        raise ConfigError("robust", "problem has no default contraction spec; supply one")
    report = problem.verify(w, spec)
    print("PASS" if report.passed else "FAIL", f"worst_margin={report.worst_margin!r}")
    for t, m in zip(report.times, report.margins):
        print(f"t={t!r} margin={m!r}")
    dev, excess = disturbed_deviation(problem, w, spec, args.disturbances, config.seed)
    summary = {
        "passed": report.passed,
        "first_violation": report.to_dict()["first_violation"],
        "ultimate_bound": ultimate_bound(spec),
        "max_deviation": dev,
        "max_envelope_excess": excess,
        "within_envelope": excess <= 0.0,
    }
    print(json.dumps(summary))
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one seeded search")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("multirun", help="independent runs with seeds seed+i")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--same-seed", action="store_true", help="reuse one seed for every run (determinism audit)")
    p.set_defaults(func=cmd_multirun)

    p = sub.add_parser("verify", help="tube check and disturbed rollouts for given weights")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-w", "--weights", required=True)
    p.add_argument("--disturbances", type=int, default=20)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _error("invalid_config", key=exc.key, message=exc.message)
        return 2
    except FileNotFoundError as exc:
        _error("file_not_found", path=str(exc.filename))
        return 2


if __name__ == "__main__":
    sys.exit(main())
