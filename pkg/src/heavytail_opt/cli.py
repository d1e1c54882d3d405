"""Configuration-driven command-line front end.

Subcommands: ``params`` derives and prints method parameters; ``run``
executes one experiment and writes plot-ready CSV/JSON; ``sweep`` expands an
(eps, nu, method) grid into multiple runs sharing one seed policy; ``check``
runs the schedule-inequality, smoothness-certificate, and clipped-moment
validation suites.

Configs are strict TOML: unknown keys are rejected, and the physical
quantities (eps, beta, sigma) have no defaults.  Output files are
byte-stable for a fixed config and seed: 17-significant-digit floats,
'\\n' line endings, UTF-8, sorted JSON keys.

Exit codes: 0 success; 2 invalid or infeasible configuration (the violated
condition is named); 3 --assert-success was set and the binomial gate
failed; 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from itertools import product
from os import environ
from pathlib import Path
from typing import Any, Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

import numpy as np

from .core import holder_certificate_check
from .harness import (
    METHODS,
    PARAM_MODES,
    ExperimentSpec,
    binomial_gate,
    clipped_moment_check,
    derive_parameters,
    planned_oracle_budget,
    run_experiment,
)
from .problems import (
    NOISE_FAMILIES,
    PROBLEM_KINDS,
    ProblemSpec,
    make_noise,
    make_problem_with_payload,
)
from .records import RunRecord
from .schedules import (
    ConfigError,
    RestartPlan,
    SSTMConfig,
    check_schedule_bounds,
    sstm_theorem_params,
    sstm_total_oracle_calls,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GATE = 3
EXIT_IO = 4
EXIT_CHECK_FAILED = 1

WORKERS_ENV_VAR = "HEAVYTAIL_OPT_WORKERS"
DEFAULT_NU_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_CHECK_K_MAX = 100_000
DEFAULT_CHECK_PAIRS = 10_000
DEFAULT_CHECK_DRAWS = 100_000

TRAJECTORY_HEADER = "trial,iter,oracle_calls,f_gap,dist_sq"

# ---------------------------------------------------------------------------
# Strict config parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {"problem", "noise", "method", "targets", "experiment", "output", "sweep", "check"}
_PROBLEM_KEYS = {
    "kind", "dim", "scale", "nu", "eig_min", "eig_max", "huber_delta",
    "n_pieces", "mu", "norm_weight", "ball_radius", "shift", "seed",
}
_NOISE_KEYS = {"family", "sigma", "tail_param"}
_METHOD_KEYS = {"name", "param_mode", "ak_ratio_cap", "manual"}
_TARGET_KEYS = {"eps", "beta", "r0"}
_EXPERIMENT_KEYS = {"trials", "seed", "record", "budget_fractions", "workers"}
_OUTPUT_KEYS = {"dir"}
_SWEEP_KEYS = {"eps", "nu", "method"}
_CHECK_KEYS = {"k_max", "nu_grid", "pairs", "draws"}

_PROBLEM_FLOAT_KEYS = (
    "scale", "nu", "eig_min", "eig_max", "huber_delta", "mu",
    "norm_weight", "ball_radius",
)


def _reject_unknown(table: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(
            f"known keys in [{where}]",
            f"unknown key(s) {unknown} in [{where}]; allowed: {sorted(allowed)}",
        )


def _require(table: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in table:
        raise ConfigError(
            f"[{where}] {key} present",
            f"missing required key '{key}' in [{where}] (no default)",
        )
    return table[key]


def _as_float(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} numeric", f"{name} must be a number, got {value!r}")
    return float(value)


def _as_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} integer", f"{name} must be an integer, got {value!r}")
    return int(value)


def _as_table(value: Any, name: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] is a table", f"[{name}] must be a table of keys")
    return value


@dataclasses.dataclass
class CLIConfig:
    """Parsed, validated configuration plus the raw dict for round-trips."""

    spec: ExperimentSpec
    out_dir: str | None
    workers: int | None
    sweep: dict[str, Any] | None
    check: dict[str, Any]
    raw: dict[str, Any]


def parse_config_dict(data: Mapping[str, Any]) -> CLIConfig:
    """Validate a configuration mapping (from TOML or JSON) strictly."""
    if not isinstance(data, dict):
        raise ConfigError("config is a table", "top-level config must be a table")
    _reject_unknown(data, _TOP_KEYS, "config root")

    prob_t = _as_table(_require(data, "problem", "config root"), "problem")
    _reject_unknown(prob_t, _PROBLEM_KEYS, "problem")
    kind = _require(prob_t, "kind", "problem")
    if kind not in PROBLEM_KINDS:
        raise ConfigError(
            "problem.kind known",
            f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}",
        )
    prob_kwargs: dict[str, Any] = {
        "kind": kind,
        "dim": _as_int(_require(prob_t, "dim", "problem"), "problem.dim"),
    }
    for key in _PROBLEM_FLOAT_KEYS:
        if key in prob_t:
            prob_kwargs[key] = _as_float(prob_t[key], f"problem.{key}")
    if "n_pieces" in prob_t:
        prob_kwargs["n_pieces"] = _as_int(prob_t["n_pieces"], "problem.n_pieces")
    if "seed" in prob_t:
        prob_kwargs["seed"] = _as_int(prob_t["seed"], "problem.seed")
    if "shift" in prob_t:
        shift = prob_t["shift"]
        if isinstance(shift, list):
            prob_kwargs["shift"] = tuple(_as_float(s, "problem.shift[i]") for s in shift)
        else:
            prob_kwargs["shift"] = _as_float(shift, "problem.shift")
    problem = ProblemSpec(**prob_kwargs)

    noise_t = _as_table(_require(data, "noise", "config root"), "noise")
    _reject_unknown(noise_t, _NOISE_KEYS, "noise")
    family = _require(noise_t, "family", "noise")
    if family not in NOISE_FAMILIES:
        raise ConfigError(
            "noise.family known",
            f"unknown noise family {family!r}; expected one of {NOISE_FAMILIES}",
        )
    sigma = _as_float(_require(noise_t, "sigma", "noise"), "noise.sigma")
    tail_param = _as_float(noise_t.get("tail_param", 0.0), "noise.tail_param")

    method_t = _as_table(_require(data, "method", "config root"), "method")
    _reject_unknown(method_t, _METHOD_KEYS, "method")
    method = _require(method_t, "name", "method")
    if method not in METHODS:
        raise ConfigError(
            "method.name known",
            f"unknown method {method!r}; expected one of {METHODS}",
        )
    param_mode = method_t.get("param_mode", "theorem")
    if param_mode not in PARAM_MODES:
        raise ConfigError(
            "method.param_mode known",
            f"unknown param_mode {param_mode!r}; expected one of {PARAM_MODES}",
        )
    ak_ratio_cap = None
    if "ak_ratio_cap" in method_t:
        ak_ratio_cap = _as_float(method_t["ak_ratio_cap"], "method.ak_ratio_cap")
    manual = None
    if "manual" in method_t:
        manual_t = _as_table(method_t["manual"], "method.manual")
        manual = {}
        for key, value in manual_t.items():
            if key == "clip_mode":
                manual[key] = str(value)
            else:
                manual[key] = _as_float(value, f"method.manual.{key}")

    targets_t = _as_table(_require(data, "targets", "config root"), "targets")
    _reject_unknown(targets_t, _TARGET_KEYS, "targets")
    eps = _as_float(_require(targets_t, "eps", "targets"), "targets.eps")
    beta = _as_float(_require(targets_t, "beta", "targets"), "targets.beta")
    r0 = _as_float(_require(targets_t, "r0", "targets"), "targets.r0")

    exp_t = _as_table(_require(data, "experiment", "config root"), "experiment")
    _reject_unknown(exp_t, _EXPERIMENT_KEYS, "experiment")
    trials = _as_int(_require(exp_t, "trials", "experiment"), "experiment.trials")
    seed = _as_int(_require(exp_t, "seed", "experiment"), "experiment.seed")
    record = exp_t.get("record", False)
    if not isinstance(record, bool):
        raise ConfigError("experiment.record boolean", "experiment.record must be a boolean")
    spec_kwargs: dict[str, Any] = {}
    if "budget_fractions" in exp_t:
        fractions = exp_t["budget_fractions"]
        if not isinstance(fractions, list) or not fractions:
            raise ConfigError(
                "experiment.budget_fractions list",
                "experiment.budget_fractions must be a non-empty list",
            )
        spec_kwargs["budget_fractions"] = tuple(
            _as_float(f, "experiment.budget_fractions[i]") for f in fractions
        )
    workers = None
    if "workers" in exp_t:
        workers = _as_int(exp_t["workers"], "experiment.workers")
        if workers < 1:
            raise ConfigError("experiment.workers >= 1", "experiment.workers must be >= 1")

    out_dir = None
    if "output" in data:
        out_t = _as_table(data["output"], "output")
        _reject_unknown(out_t, _OUTPUT_KEYS, "output")
        if "dir" in out_t:
            out_dir = str(out_t["dir"])

    sweep = None
    if "sweep" in data:
        sweep_t = _as_table(data["sweep"], "sweep")
        _reject_unknown(sweep_t, _SWEEP_KEYS, "sweep")
        sweep = dict(sweep_t)

    check_t: dict[str, Any] = {}
    if "check" in data:
        check_t = dict(_as_table(data["check"], "check"))
        _reject_unknown(check_t, _CHECK_KEYS, "check")

    spec = ExperimentSpec(
        problem=problem,
        noise_family=family,
        sigma=sigma,
        tail_param=tail_param,
        method=method,
        eps=eps,
        beta=beta,
        r0=r0,
        trials=trials,
        seed=seed,
        param_mode=param_mode,
        manual=manual,
        record=record,
        ak_ratio_cap=ak_ratio_cap,
        **spec_kwargs,
    )
    return CLIConfig(
        spec=spec,
        out_dir=out_dir,
        workers=workers,
        sweep=sweep,
        check=check_t,
        raw=json.loads(json.dumps(dict(data))),
    )


def load_config(path: str | Path) -> CLIConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return parse_config_dict(data)


def resolve_workers(cli_value: int | None, config_value: int | None) -> int:
    """--workers flag beats the HEAVYTAIL_OPT_WORKERS env var beats config."""
    if cli_value is not None:
        value = cli_value
    elif WORKERS_ENV_VAR in environ:
        raw = environ[WORKERS_ENV_VAR]
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(
                f"{WORKERS_ENV_VAR} integer",
                f"{WORKERS_ENV_VAR}={raw!r} is not an integer",
            ) from None
    elif config_value is not None:
        value = config_value
    else:
        value = 1
    if value < 1:
        raise ConfigError("workers >= 1", f"worker count must be >= 1, got {value}")
    return value


# ---------------------------------------------------------------------------
# Serialization helpers (byte-stable output)
# ---------------------------------------------------------------------------


def _g17(x: float) -> str:
    """Fixed 17-significant-digit decimal rendering (round-trip exact)."""
    return format(float(x), ".17g")


def _jsonable(obj: Any) -> Any:
    """Recursively convert to strict-JSON values; non-finite floats to strings."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        obj = int(obj)
    if isinstance(obj, float):
        if math.isfinite(obj):
            return obj
        if obj == math.inf:
            return "inf"
        return "-inf" if obj == -math.inf else "nan"
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dump_json(payload: Mapping[str, Any]) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def params_payload(config: Any) -> dict[str, Any]:
    """Machine-readable view of a derived parameter set."""
    if isinstance(config, RestartPlan):
        return {
            "kind": "restart_plan",
            "method": config.method,
            "tau": config.tau,
            "mu": config.mu,
            "total_iterations": config.total_iterations(),
            "total_oracle_calls": config.total_oracle_calls(),
            "stages": [
                {
                    "t": s.t,
                    "eps_t": s.eps_t,
                    "r_eff": s.r_eff,
                    "beta_stage": s.beta_stage,
                    **_base_params(s.cfg),
                }
                for s in config.stages
            ],
        }
    return _base_params(config)


def _base_params(config: Any) -> dict[str, Any]:
    if isinstance(config, SSTMConfig):
        return {
            "kind": "sstm",
            "N": config.N,
            "a": config.a,
            "alpha0": config.alpha0,
            "B": config.B,
            "nu": config.nu,
            "m_nu": config.m_nu,
            "ln_factor": config.ln_factor,
            "ak_ratio_cap": config.ak_ratio_cap,
            "total_oracle_calls": sstm_total_oracle_calls(config),
        }
    return {
        "kind": "sgd",
        "N": config.N,
        "gamma": config.gamma,
        "lam": config.lam,
        "m": config.m,
        "clip_mode": config.clip_mode,
        "momentum": config.momentum,
        "nu": config.nu,
        "m_nu": config.m_nu,
        "ln_factor": config.ln_factor,
        "total_oracle_calls": config.N * config.m,
    }


def _params_text(payload: Mapping[str, Any]) -> str:
    lines = []
    if payload["kind"] == "restart_plan":
        head = {k: v for k, v in payload.items() if k != "stages"}
        for key in sorted(head):
            lines.append(f"{key:>22}: {head[key]}")
        lines.append(f"{'stages':>22}:")
        for stage in payload["stages"]:
            parts = ", ".join(f"{k}={stage[k]}" for k in sorted(stage))
            lines.append(f"    t={stage['t']}: {parts}")
    else:
        for key in sorted(payload):
            lines.append(f"{key:>22}: {payload[key]}")
    return "\n".join(lines) + "\n"


def write_trajectories_csv(path: Path, records: Sequence[RunRecord]) -> None:
    """One row per recorded iteration per trial, byte-stable formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for trial_id, rec in enumerate(records):
            iters = rec.iters
            calls = rec.oracle_calls
            gaps = rec.f_gap
            dists = rec.dist_sq
            for i in range(len(iters)):
                fh.write(
                    f"{trial_id},{int(iters[i])},{int(calls[i])},"
                    f"{_g17(gaps[i])},{_g17(dists[i])}\n"
                )


def summary_payload(result: Any, gate: Any) -> dict[str, Any]:
    spec = result.spec
    return {
        "method": spec.method,
        "param_mode": spec.param_mode,
        "problem_kind": spec.problem.kind,
        "dim": spec.problem.dim,
        "noise_family": spec.noise_family,
        "sigma": spec.sigma,
        "tail_param": spec.tail_param,
        "eps": spec.eps,
        "beta": spec.beta,
        "r0": spec.r0,
        "trials": spec.trials,
        "seed": spec.seed,
        "success_count": result.success_count,
        "success_rate": result.success_rate,
        "ci_lower_95": result.ci_lower_95,
        "divergence_count": result.divergence_count,
        "gap_quantiles": dict(result.gap_quantiles),
        "budgets": [
            {
                "fraction": b.fraction,
                "oracle_calls": b.oracle_calls,
                **{k: v for k, v in sorted(b.quantiles.items())},
            }
            for b in result.budget_quantiles
        ],
        "planned_oracle_budget": result.planned_budget,
        "binomial_gate": {
            "p0": gate.p0,
            "alpha": gate.alpha,
            "passed": gate.passed,
            "p_value": gate.p_value,
            "min_successes": gate.min_successes,
        },
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_params(cfg: CLIConfig, args: argparse.Namespace) -> int:
    p, _ = make_problem_with_payload(cfg.spec.problem)
    config = derive_parameters(cfg.spec, p)
    payload = params_payload(config)
    if args.json:
        sys.stdout.write(_dump_json({"config": cfg.raw, "params": payload}))
    else:
        sys.stdout.write(_params_text(_jsonable(payload)))
    return EXIT_OK


def _run_one(
    spec: ExperimentSpec, workers: int, out_dir: Path, raw_config: dict[str, Any]
) -> tuple[Any, Any]:
    """Execute one experiment and write its three output files."""
    spec = dataclasses.replace(spec, record=True)
    result = run_experiment(spec, workers=workers)
    gate = binomial_gate(result.success_count, spec.trials, p0=1.0 - spec.beta)
    p, _ = make_problem_with_payload(spec.problem)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "params.json", "w", encoding="utf-8", newline="") as fh:
        fh.write(_dump_json({"config": raw_config, "params": params_payload(result.config)}))
    write_trajectories_csv(out_dir / "trajectories.csv", result.records)
    with open(out_dir / "summary.json", "w", encoding="utf-8", newline="") as fh:
        fh.write(_dump_json(summary_payload(result, gate)))
    return result, gate


def cmd_run(cfg: CLIConfig, args: argparse.Namespace) -> int:
    spec = cfg.spec
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    workers = resolve_workers(args.workers, cfg.workers)
    out_dir = Path(args.out if args.out is not None else (cfg.out_dir or "."))
    result, gate = _run_one(spec, workers, out_dir, cfg.raw)
    line = (
        f"{spec.method}: {result.success_count}/{spec.trials} trials reached "
        f"gap <= {_g17(spec.eps)} (CI lower bound {result.ci_lower_95:.4f}, "
        f"{result.divergence_count} diverged)\n"
    )
    sys.stdout.write(line)
    if args.json:
        sys.stdout.write(_dump_json(summary_payload(result, gate)))
    if args.assert_success and not gate.passed:
        sys.stderr.write(
            f"assert-success: binomial gate failed: {gate.successes}/{gate.trials} "
            f"successes, need >= {gate.min_successes} to keep p >= {_g17(gate.p0)} "
            f"plausible at level {gate.alpha}\n"
        )
        return EXIT_GATE
    return EXIT_OK


def _cell_name(method: str, eps: float, nu: float | None) -> str:
    name = f"{method}_eps{eps:g}"
    if nu is not None:
        name += f"_nu{nu:g}"
    return name.replace(".", "p")


def cmd_sweep(cfg: CLIConfig, args: argparse.Namespace) -> int:
    if cfg.sweep is None:
        raise ConfigError("[sweep] present", "sweep command needs a [sweep] table")
    sweep = cfg.sweep
    if "eps" not in sweep or not isinstance(sweep["eps"], list) or not sweep["eps"]:
        raise ConfigError("sweep.eps list", "[sweep] must list eps values")
    eps_values = [_as_float(e, "sweep.eps[i]") for e in sweep["eps"]]
    methods = sweep.get("method", [cfg.spec.method])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("sweep.method list", "sweep.method must be a non-empty list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError("sweep.method known", f"unknown method {m!r} in sweep")
    nu_values: list[float | None] = [None]
    if "nu" in sweep:
        if cfg.spec.problem.kind != "power_norm":
            raise ConfigError(
                "sweep.nu needs a nu-parameterized problem",
                "a nu sweep requires problem.kind = 'power_norm'",
            )
        nu_values = [_as_float(v, "sweep.nu[i]") for v in sweep["nu"]]

    spec0 = cfg.spec
    if args.seed is not None:
        spec0 = dataclasses.replace(spec0, seed=args.seed)
    workers = resolve_workers(args.workers, cfg.workers)
    out_root = Path(args.out if args.out is not None else (cfg.out_dir or "."))
    out_root.mkdir(parents=True, exist_ok=True)

    rows = []
    any_gate_failed = False
    # Shared seed policy: every cell reuses the same base seed, so trial i
    # sees identical noise across cells (paired comparisons).
    for method, eps, nu in product(methods, eps_values, nu_values):
        spec = dataclasses.replace(spec0, method=method, eps=eps)
        if nu is not None:
            spec = dataclasses.replace(
                spec, problem=dataclasses.replace(spec.problem, nu=nu)
            )
        cell = _cell_name(method, eps, nu)
        result, gate = _run_one(spec, workers, out_root / cell, cfg.raw)
        any_gate_failed = any_gate_failed or not gate.passed
        config = result.config
        iterations = (
            config.total_iterations() if isinstance(config, RestartPlan) else config.N
        )
        rows.append(
            (
                method,
                eps,
                nu if nu is not None else spec.problem.nu,
                spec.trials,
                result.success_count,
                result.success_rate,
                result.ci_lower_95,
                result.divergence_count,
                result.gap_quantiles["q50"],
                result.gap_quantiles["q90"],
                result.gap_quantiles["q95"],
                iterations,
                result.planned_budget,
            )
        )
        sys.stdout.write(
            f"{cell}: success {result.success_count}/{spec.trials}, "
            f"iterations {iterations}, oracle calls {result.planned_budget}\n"
        )

    with open(out_root / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(
            "method,eps,nu,trials,success_count,success_rate,ci_lower_95,"
            "divergence_count,q50,q90,q95,iterations,planned_oracle_budget\n"
        )
        for row in rows:
            method, eps, nu, trials, sc, sr, ci, dc, q50, q90, q95, iters, budget = row
            fh.write(
                f"{method},{_g17(eps)},{_g17(nu)},{trials},{sc},{_g17(sr)},"
                f"{_g17(ci)},{dc},{_g17(q50)},{_g17(q90)},{_g17(q95)},"
                f"{iters},{budget}\n"
            )
    if args.assert_success and any_gate_failed:
        sys.stderr.write("assert-success: at least one sweep cell failed its gate\n")
        return EXIT_GATE
    return EXIT_OK


def _check_problem_for_nu(spec: ExperimentSpec, nu: float) -> ProblemSpec:
    """Grid instance for one Hölder exponent (the configured problem when it
    already certifies this exponent, a norm-power instance otherwise)."""
    base = spec.problem
    if base.kind == "power_norm":
        return dataclasses.replace(base, nu=nu)
    p, _ = make_problem_with_payload(base)
    if abs(p.smoothness.nu - nu) < 1e-12:
        return base
    return ProblemSpec(kind="power_norm", dim=base.dim, scale=1.0, nu=nu)


def cmd_check(cfg: CLIConfig, args: argparse.Namespace) -> int:
    spec = cfg.spec
    k_max = int(cfg.check.get("k_max", DEFAULT_CHECK_K_MAX))
    nu_grid = tuple(cfg.check.get("nu_grid", DEFAULT_NU_GRID))
    pairs = int(cfg.check.get("pairs", DEFAULT_CHECK_PAIRS))
    draws = int(cfg.check.get("draws", DEFAULT_CHECK_DRAWS))
    failures: list[str] = []
    out = sys.stdout

    def report(tag: str, ok: bool, detail: str) -> None:
        status = "ok" if ok else "FAILED"
        out.write(f"[{tag}] {status}: {detail}\n")
        if not ok:
            failures.append(f"[{tag}] {detail}")

    # Manual accelerated parameters, if configured, are checked verbatim —
    # this is the hook that catches corrupted schedule constants.
    if spec.param_mode == "manual" and spec.method in ("clipped_sstm", "r_clipped_sstm"):
        p, _ = make_problem_with_payload(spec.problem)
        config = derive_parameters(spec, p)
        if isinstance(config, SSTMConfig):
            eff_k = min(config.N, k_max)
            res = check_schedule_bounds(config, k_max=eff_k)
            detail = f"manual config (nu={config.nu:g}, N={config.N}), k <= {eff_k}"
            if not res.ok:
                detail += (
                    f"; {res.inequality} violated at k={res.first_violation_k}: "
                    f"lhs={_g17(res.lhs)}, rhs={_g17(res.rhs)}"
                )
            report("schedule", res.ok, detail)

    rng = np.random.default_rng(spec.seed)
    for nu in nu_grid:
        prob_spec = _check_problem_for_nu(spec, float(nu))
        p, _ = make_problem_with_payload(prob_spec)
        sched_cfg = sstm_theorem_params(
            p.smoothness.nu, p.smoothness.m_nu, spec.eps, spec.beta, spec.r0, spec.sigma
        )
        eff_k = min(sched_cfg.N, k_max)
        res = check_schedule_bounds(sched_cfg, k_max=eff_k)
        detail = f"nu={nu:g}, k <= {eff_k}"
        if float(nu) == 0.0:
            exact = res.eq_gap_max <= 1e-12
            detail += (
                f", stepsize-denominator equality gap {res.eq_gap_max:.3e}"
                f" ({'exact' if exact else 'NOT exact'})"
            )
        if not res.ok:
            detail += (
                f"; {res.inequality} violated at k={res.first_violation_k}: "
                f"lhs={_g17(res.lhs)}, rhs={_g17(res.rhs)}"
            )
        report("schedule", res.ok and (float(nu) != 0.0 or res.eq_gap_max <= 1e-12), detail)

        cert = holder_certificate_check(p, pairs, rng)
        cert_detail = (
            f"nu={nu:g} {prob_spec.kind}: worst ratio {cert.worst_ratio:.6g} "
            f"vs bound {cert.bound:.6g} over {pairs} pairs"
        )
        report("certificate", cert.ok, cert_detail)

        noise = make_noise(spec.noise_family, spec.sigma, spec.tail_param, p.dim)
        x = p.x_star + 0.05 * spec.r0 * np.ones(p.dim) / math.sqrt(p.dim)
        grad_norm = float(np.linalg.norm(p.gradient(x)))
        lam = 4.0 * grad_norm if grad_norm > 0.0 else 1.0
        mc = clipped_moment_check(p, noise, x, lam, m=1, draws=draws, rng=rng)
        if mc.skipped:
            report("moment", True, f"nu={nu:g}: skipped ({mc.reason})")
        else:
            mc_detail = (
                f"nu={nu:g}: bias {mc.bias_norm:.4g} <= {mc.bias_bound:.4g}+3SE, "
                f"distortion {mc.distortion:.4g} <= {mc.distortion_bound:.4g}+3SE, "
                f"variance {mc.variance:.4g} <= {mc.variance_bound:.4g}+3SE, "
                f"max magnitude {mc.max_magnitude:.4g} <= {mc.magnitude_bound:.4g}"
            )
            report("moment", mc.ok, mc_detail)

    if failures:
        out.write(f"{len(failures)} check(s) failed; first: {failures[0]}\n")
        return EXIT_CHECK_FAILED
    out.write("all checks passed\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heavytail-opt",
        description="Clipped stochastic first-order methods: parameter "
        "derivation, Monte-Carlo experiments, and validation suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="derive and print method parameters")
    sp.add_argument("--config", required=True, help="TOML config path")
    sp.add_argument("--json", action="store_true", help="machine-readable output")

    for name, help_text in (
        ("run", "run one experiment, write trajectories.csv/summary.json/params.json"),
        ("sweep", "expand the [sweep] grid into multiple runs plus sweep.csv"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="TOML config path")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None, help="worker processes")
        sp.add_argument("--seed", type=int, default=None, help="override base seed")
        sp.add_argument("--json", action="store_true", help="also print summary JSON")
        sp.add_argument(
            "--assert-success",
            action="store_true",
            help="exit 3 unless the binomial gate at p0 = 1 - beta passes",
        )

    sp = sub.add_parser("check", help="run schedule/certificate/moment validation suites")
    sp.add_argument("--config", required=True, help="TOML config path")
    return parser


_COMMANDS = {
    "params": cmd_params,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        sys.stderr.write(f"I/O error reading config: {exc}\n")
        return EXIT_IO
    except ConfigError as exc:
        sys.stderr.write(f"config error ({exc.condition}): {exc}\n")
        return EXIT_CONFIG
    except ValueError as exc:  # TOML syntax errors and spec validation
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        sys.stderr.write(f"config error ({exc.condition}): {exc}\n")
        return EXIT_CONFIG
    except ValueError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
