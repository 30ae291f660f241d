"""Command-line entry point.

    ksradial simulate     [--config FILE] [--KEY VALUE ...]
    ksradial verify       ...
    ksradial eps-sweep    ...
    ksradial blowup-scan  ...
    ksradial calibrate    ...
    ksradial oracle NAME key=value ...

Configuration is a flat JSON object; every key can also be given as a flag
of the same name (flags win).  Unknown keys are errors.  The output
directory defaults to ``$KSRADIAL_OUTPUT_DIR`` and the worker count comes
from ``$KSRADIAL_WORKERS``.

Exit status: 0 completed without violations, 2 completed with violations,
1 error.  The last line on stdout is always ``SUMMARY {json}``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import oracles
from .evolution import FAULTS, FINISHED, RUNNING, load_checkpoint, save_checkpoint, simulate
from .grid import INITIAL_KINDS, build_grid
from .harness import (
    CHECK_IDS,
    CheckMatrix,
    InitialSpec,
    Scenario,
    Tolerance,
    blowup_scan,
    calibrate_constants,
    canonical_scenarios,
    check_step,
    eps_sweep,
    run_theorem_suite,
    sabotage_scenarios,
)
from .elliptic import estimate_elliptic_constant
from .params import ModelParams
from .reports import dump_json, jsonable, version_stamp, write_json, write_records_csv, write_svg, write_table_csv

__all__ = ["ConfigError", "RunSpec", "parse_config", "run", "main", "COMMANDS"]

COMMANDS = ("simulate", "verify", "eps-sweep", "blowup-scan", "oracle", "calibrate")
SUITES = ("canonical", "single", "sabotage", "empty")
ENV_OUTPUT = "KSRADIAL_OUTPUT_DIR"
ENV_WORKERS = "KSRADIAL_WORKERS"


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {msg}" for k, msg in self.errors))


@dataclass(frozen=True)
class RunSpec:
    command: str = "simulate"
    # model and scheme
    dim: int = 3
    radius: float = 1.0
    cells: int = 128
    kappa: float = 0.0
    mu: float = 1.0
    eps: float = 0.01
    p_exponent: float = 2.0
    q_exponent: float | None = None
    eta: float = 0.0
    cfl_safety: float = 0.4
    blowup_cap: float | None = None
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    advection: str = "fitted"
    # initial data
    initial_kind: str = "poly_bump"
    amplitude: float = 1.0
    center: float = 0.0
    width: float | None = None
    # time
    t_end: float = 1.0
    cadence: float = 0.01
    # checks
    lp_set: tuple = (1.0, 2.0)
    variant: str = "5q"
    seed: int = 0
    probes: int = 100
    checks: tuple = ()
    disabled_checks: tuple = ()
    suite: str = "canonical"
    fault: str | None = None
    # sweeps
    eps0: float = 0.1
    levels: int = 5
    M_list: tuple = (500.0,)
    eps_grid: tuple = (0.1, 0.01, 0.001, 0.0001)
    T_budget: float = 1.0
    # io
    output_dir: str = "ksradial-out"
    plot: bool = False
    resume: str | None = None

    @property
    def params(self) -> ModelParams:
        return ModelParams(
            dim=self.dim, radius=self.radius, kappa=self.kappa, mu=self.mu, eps=self.eps,
            p_exponent=self.p_exponent, q_exponent=self.q_exponent, eta=self.eta, cfl_safety=self.cfl_safety,
            blowup_cap=self.blowup_cap, dt_min=self.dt_min, dt_max=self.dt_max, advection=self.advection,
        )

    @property
    def initial(self) -> InitialSpec:
        return InitialSpec(self.initial_kind, self.amplitude, self.center, self.width)

    @property
    def matrix(self) -> CheckMatrix:
        enabled = tuple(c for c in CHECK_IDS if c not in self.disabled_checks)
        return CheckMatrix().with_overrides({c: dict(f) for c, f in self.checks}, enabled=enabled)

    def to_config(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "checks":
                val = {c: dict(fl) for c, fl in val}
            elif isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out


_KINDS = {
    "command": "str", "dim": "int", "radius": "float", "cells": "int", "kappa": "float", "mu": "float",
    "eps": "float", "p_exponent": "float", "q_exponent": "float?", "eta": "float", "cfl_safety": "float",
    "blowup_cap": "float?", "dt_min": "float", "dt_max": "float", "advection": "str",
    "initial_kind": "str", "amplitude": "float", "center": "float", "width": "float?",
    "t_end": "float", "cadence": "float", "lp_set": "floats", "variant": "str", "seed": "int",
    "probes": "int", "checks": "dict", "disabled_checks": "strs", "suite": "str", "fault": "str?",
    "eps0": "float", "levels": "int", "M_list": "floats", "eps_grid": "floats", "T_budget": "float",
    "output_dir": "str", "plot": "bool", "resume": "str?",
}


def _coerce(key, kind, val):
    """Convert one raw value (JSON value or flag string) to its field type."""
    if kind.endswith("?"):
        if val is None or (isinstance(val, str) and val.lower() in ("none", "null")):
            return None
        kind = kind[:-1]
    if kind == "int":
        if isinstance(val, bool):
            raise ValueError("expected an integer")
        if isinstance(val, str):
            val = int(val)
        if isinstance(val, float):
            if not val.is_integer():
                raise ValueError("expected an integer")
            val = int(val)
        if not isinstance(val, int):
            raise ValueError("expected an integer")
        return val
    if kind == "float":
        if isinstance(val, bool):
            raise ValueError("expected a number")
        val = float(val)
        if math.isnan(val):
            raise ValueError("must not be NaN")
        return val
    if kind == "str":
        if not isinstance(val, str):
            raise ValueError("expected a string")
        return val
    if kind == "bool":
        if isinstance(val, str):
            if val.lower() in ("1", "true", "yes"):
                return True
            if val.lower() in ("0", "false", "no"):
                return False
        if not isinstance(val, bool):
            raise ValueError("expected true or false")
        return val
    if kind in ("floats", "strs"):
        if isinstance(val, str):
            val = json.loads(val) if val.strip().startswith("[") else [x for x in val.split(",") if x.strip()]
        if not isinstance(val, (list, tuple)):
            raise ValueError("expected a list")
        if kind == "strs":
            return tuple(str(x).strip() for x in val)
        return tuple(_coerce(key, "float", x) for x in val)
    if kind == "dict":
        if isinstance(val, str):
            val = json.loads(val)
        if not isinstance(val, dict):
            raise ValueError("expected an object {check: {field: value}}")
        out = []
        tol_fields = {f.name for f in fields(Tolerance)}
        for check in sorted(val):
            if check not in CHECK_IDS:
                raise ValueError(f"unknown check {check!r}")
            sub = val[check]
            if not isinstance(sub, dict) or set(sub) - tol_fields:
                raise ValueError(f"{check}: expected fields among {sorted(tol_fields)}")
            out.append((check, tuple(sorted((k, _coerce(key, "float", v)) for k, v in sub.items()))))
        return tuple(out)
    raise AssertionError(kind)


def _validate(spec: RunSpec) -> list:
    errors = []
    try:
        spec.params
    except ValueError as exc:
        errors += [tuple(part.split(": ", 1)) for part in str(exc).split("; ")]
    if spec.command not in COMMANDS:
        errors.append(("command", f"must be one of {COMMANDS}"))
    if spec.cells < 4:
        errors.append(("cells", "must be >= 4"))
    if spec.initial_kind not in INITIAL_KINDS:
        errors.append(("initial_kind", f"must be one of {INITIAL_KINDS}"))
    if not spec.amplitude >= 0 or not math.isfinite(spec.amplitude):
        errors.append(("amplitude", "must be finite and >= 0"))
    if not 0 <= spec.center <= spec.radius:
        errors.append(("center", "must lie in [0, radius]"))
    if spec.width is not None and not 0 < spec.width <= spec.radius:
        errors.append(("width", "must lie in (0, radius]"))
    if spec.initial_kind in ("gaussian_bump", "mollified_step") and spec.width is None:
        errors.append(("width", f"required for {spec.initial_kind}"))
    for key in ("t_end", "cadence", "T_budget", "eps0"):
        val = getattr(spec, key)
        if not (val > 0 and math.isfinite(val)):
            errors.append((key, "must be positive and finite"))
    if not spec.lp_set or any(not (p >= 1 and math.isfinite(p)) for p in spec.lp_set):
        errors.append(("lp_set", "needs at least one finite exponent >= 1"))
    if spec.variant not in ("5q", "reduced"):
        errors.append(("variant", "must be '5q' or 'reduced'"))
    if spec.seed < 0:
        errors.append(("seed", "must be >= 0"))
    if spec.probes < 10:
        errors.append(("probes", "must be >= 10"))
    bad = set(spec.disabled_checks) - set(CHECK_IDS)
    if bad:
        errors.append(("disabled_checks", f"unknown checks {sorted(bad)}"))
    for c, fl in spec.checks:
        if any(not (v >= 0 and math.isfinite(v)) for _, v in fl):
            errors.append(("checks", f"{c}: tolerances must be finite and >= 0"))
    if spec.suite not in SUITES:
        errors.append(("suite", f"must be one of {SUITES}"))
    if spec.fault is not None and spec.fault not in FAULTS:
        errors.append(("fault", f"must be one of {FAULTS}"))
    if spec.levels < 3:
        errors.append(("levels", "must be >= 3"))
    if not spec.M_list or any(b <= a for a, b in zip(spec.M_list, spec.M_list[1:])):
        errors.append(("M_list", "must be a nonempty increasing list"))
    if not spec.eps_grid or any(b >= a for a, b in zip(spec.eps_grid, spec.eps_grid[1:])):
        errors.append(("eps_grid", "must be a nonempty decreasing list"))
    if any(not e > 0 for e in spec.eps_grid):
        errors.append(("eps_grid", "entries must be positive"))
    if spec.resume is not None and not Path(spec.resume).is_file():
        errors.append(("resume", f"checkpoint {spec.resume!r} does not exist"))
    return errors


def parse_config(path=None, overrides: dict | None = None, command: str | None = None) -> RunSpec:
    """Merge defaults, an optional JSON file and overrides into a validated :class:`RunSpec`.

    Raises :class:`ConfigError` listing every bad field; ``FileNotFoundError``
    if ``path`` does not exist.
    """
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {str(path)!r} does not exist")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([("config", f"{path}: invalid JSON ({exc})")]) from None
        if not isinstance(raw, dict):
            raise ConfigError([("config", "top level must be an object")])
    raw = {**raw, **(overrides or {})}
    if command is not None:
        raw["command"] = command
    errors = [(k, "unknown key") for k in sorted(set(raw) - set(_KINDS))]
    values = {}
    for key in _KINDS:
        if key in raw:
            try:
                values[key] = _coerce(key, _KINDS[key], raw[key])
            except (ValueError, TypeError) as exc:
                errors.append((key, str(exc)))
    if "output_dir" not in values and os.environ.get(ENV_OUTPUT):
        values["output_dir"] = os.environ[ENV_OUTPUT]
    if errors:
        raise ConfigError(errors)
    spec = RunSpec(**values)
    errors = _validate(spec)
    if errors:
        raise ConfigError(errors)
    return spec


def _workers() -> int:
    val = os.environ.get(ENV_WORKERS, "1")
    try:
        n = int(val)
    except ValueError:
        raise ConfigError([(ENV_WORKERS, f"expected an integer, got {val!r}")]) from None
    if n < 1:
        raise ConfigError([(ENV_WORKERS, "must be >= 1")])
    return n


# ------------------------------------------------------------------ commands


def _k_hat(spec: RunSpec) -> float:
    g = build_grid(spec.dim, spec.radius, spec.cells)
    return estimate_elliptic_constant(g, spec.params.q, spec.probes, seed=spec.seed)


def _scenario_from_spec(spec: RunSpec, K_hat) -> Scenario:
    return Scenario(
        "single", spec.params, cells=spec.cells, initial=spec.initial, t_end=spec.t_end, cadence=spec.cadence,
        fault=spec.fault, lp_set=spec.lp_set, variant=spec.variant, K_hat=K_hat,
    )


def _cmd_simulate(spec: RunSpec, out: Path, config: dict) -> tuple[int, dict]:
    from .diagnostics import Recorder

    p, m = spec.params, spec.matrix
    g = build_grid(spec.dim, spec.radius, spec.cells)
    K = _k_hat(spec)
    u0 = spec.initial.build(g)
    state = None
    if spec.resume is not None:
        state, p_saved, extra = load_checkpoint(spec.resume)
        if p_saved != p or state.grid != g:
            raise ConfigError([("resume", "checkpoint parameters or grid differ from the configuration")])
        u0 = extra.get("u0", u0)
        if state.status == FINISHED and state.t < spec.t_end:
            state.status = RUNNING
    rec = Recorder(p, g, u0, lp_set=spec.lp_set, K_hat=K, variant=spec.variant, extra_p=(p.p_exponent,))
    if state is not None and "recorder" in extra:
        rec.load_state_dict(extra["recorder"], state.u)
    traj = simulate(u0, p, g, spec.t_end, spec.cadence, rec, state=state, fault=spec.fault)
    violations, prev = [], None
    for r in traj.records:
        violations += check_step(prev, r, p, m, g.h)
        prev = r
    lp = rec.lp_set
    write_records_csv(out / "records.csv", traj.records, lp, config, m.enabled)
    save_checkpoint(out / "checkpoint.json", traj.state, p, {"recorder": rec.state_dict(), "u0": [float(x) for x in u0]})
    if spec.plot:
        write_svg(out / "records.svg", traj.records, config, "single run")
    worst = {}
    for c in m.enabled:
        vals = [r.margins[c] for r in traj.records if not math.isnan(r.margins.get(c, math.nan))]
        worst[c] = min(vals) if vals else math.nan
    summary = {
        "status": traj.status,
        "t_reached": traj.state.t,
        "steps": traj.steps,
        "linf_max": traj.linf_max,
        "K_hat": K,
        "violations": len(violations),
        "worst_margins": worst,
    }
    write_json(out / "summary.json", summary, config)
    return (2 if violations else 0), summary


def _cmd_verify(spec: RunSpec, out: Path, config: dict) -> tuple[int, dict]:
    K = _k_hat(spec)
    if spec.suite == "canonical":
        scenarios = canonical_scenarios(spec.dim, spec.cells, spec.eps, K_hat=K, variant=spec.variant)
    elif spec.suite == "sabotage":
        scenarios = sabotage_scenarios(spec.cells, K_hat=K)
    elif spec.suite == "single":
        scenarios = [_scenario_from_spec(spec, K)]
    else:
        scenarios = []
    report = run_theorem_suite(scenarios, spec.matrix, workers=_workers())
    files = []
    for sc, res in zip(scenarios, report.results):
        path = write_records_csv(out / f"{res.name}.csv", res.records, res.records[0].upow.keys() if res.records else sc.lp_set,
                                 config, spec.matrix.enabled)
        files.append(path.name)
        if spec.plot:
            write_svg(out / f"{res.name}.svg", res.records, config, res.name)
    doc = report.to_dict()
    doc["files"] = files
    write_json(out / "summary.json", doc, config)
    failed = [r.name for r in report.results if not r.ok]
    summary = {"scenarios": len(scenarios), "failed": failed, "K_hat": K}
    return (2 if failed else 0), summary


def _cmd_eps_sweep(spec: RunSpec, out: Path, config: dict) -> tuple[int, dict]:
    rep = eps_sweep(spec.initial, spec.params, spec.eps0, spec.levels, spec.t_end, spec.cells, spec.cadence, _workers())
    rows = []
    for j, (e, o) in enumerate(zip(rep.eps_list, rep.outcomes)):
        d = rep.distances[j] if j < len(rep.distances) else math.nan
        ratio = rep.ratios[j - 1] if 0 < j <= len(rep.ratios) else math.nan
        rows.append([j, e, o["status"], o["T_reached"], o["linf_max"], d, ratio])
    write_table_csv(out / "sweep.csv", ["level", "eps", "status", "T_reached", "linf_max", "d_next", "ratio_prev"],
                    rows, config, "eps-sweep")
    write_json(out / "sweep.json", rep.to_dict(), config)
    summary = {"distances": rep.distances, "ratios": rep.ratios, "truncated": rep.truncated}
    return 0, summary


def _cmd_blowup_scan(spec: RunSpec, out: Path, config: dict) -> tuple[int, dict]:
    rep = blowup_scan(spec.initial, spec.params, spec.M_list, spec.eps_grid, spec.T_budget, spec.cells,
                      spec.cadence, _workers())
    rows = [[e, o["status"], o["T_reached"], o["linf_max"], o["blowup_observed"]] for e, o in zip(rep.eps_list, rep.outcomes)]
    write_table_csv(out / "scan.csv", ["eps", "status", "T_reached", "linf_max", "blowup_observed"], rows, config,
                    "blowup-scan")
    trows = [[r["M"], r["eps0"], r["t"], r["r"]] for r in rep.thresholds]
    write_table_csv(out / "thresholds.csv", ["M", "eps0", "t", "r"], trows, config, "thresholds")
    write_json(out / "scan.json", rep.to_dict(), config)
    summary = {"thresholds": rep.thresholds, "monotone": rep.monotone}
    return 0, summary


def _cmd_calibrate(spec: RunSpec, out: Path, config: dict) -> tuple[int, dict]:
    cal = calibrate_constants(spec.dim, spec.cells, spec.q_exponent, spec.probes, spec.seed)
    write_json(out / "calibration.json", cal, config)
    print(f"K_hat = {cal['K_hat']!r}")
    print(f"B_hat = {cal['B_hat']!r}")
    return 0, {"K_hat": cal["K_hat"], "B_hat": cal["B_hat"]}


_ORACLES = {
    "blowup-time": (oracles.blowup_time_bound, ("a", "b", "d", "kappa")),
    "logistic-bound": (oracles.logistic_bound, ("kappa", "mu", "m", "t")),
    "lp-bound": (oracles.lp_power_bound, ("p", "kappa", "mu", "u0_power", "volume")),
    "mass-bound": (oracles.mass_bound, ("kappa", "mu", "mass0", "volume")),
    "threshold": (oracles.blowup_threshold, ("p", "mu", "volume", "B_hat")),
    "existence-time": (
        lambda **kw: oracles.common_existence_time(**kw).T_of_D,
        ("D", "q", "kappa", "volume", "c1", "c3", "K"),
    ),
}


def _cmd_oracle(name: str, args: list) -> tuple[int, dict]:
    if name not in _ORACLES:
        raise ConfigError([("oracle", f"unknown oracle {name!r}; expected one of {sorted(_ORACLES)}")])
    fn, keys = _ORACLES[name]
    kw, errors = {}, []
    for item in args:
        k, sep, v = item.partition("=")
        if not sep or k not in keys:
            errors.append((k or item, f"expected key=value with key among {keys}"))
            continue
        try:
            kw[k] = float(v)
        except ValueError:
            errors.append((k, f"not a number: {v!r}"))
    errors += [(k, "missing") for k in keys if k not in kw and not any(e[0] == k for e in errors)]
    if errors:
        raise ConfigError(errors)
    value = fn(**kw)
    print(f"{value:.15g}")
    return 0, {"oracle": name, "value": value}


_DISPATCH = {
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "eps-sweep": _cmd_eps_sweep,
    "blowup-scan": _cmd_blowup_scan,
    "calibrate": _cmd_calibrate,
}


def run(spec: RunSpec) -> int:
    """Execute a parsed spec, write its outputs and print the summary line."""
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = spec.to_config()
    code, summary = _DISPATCH[spec.command](spec, out, config)
    _summary_line(spec.command, code, summary, str(out))
    return code


def _summary_line(command, code, info, output_dir=None):
    doc = {"command": command, "exit": code, "version": version_stamp(), **info}
    if output_dir is not None:
        doc["output_dir"] = output_dir
    print("SUMMARY " + json.dumps(jsonable(doc), sort_keys=True, separators=(",", ":")))


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksradial", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("rest", nargs="*", help="oracle name and key=value arguments")
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--echo-config", action="store_true", help="print the full configuration and exit")
    for key in _KINDS:
        if key == "command":
            continue
        ap.add_argument(f"--{key}", dest=f"cfg_{key}", default=None, metavar=key.upper())
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = _build_parser().parse_args(argv)
    except SystemExit as exc:
        code = 0 if exc.code == 0 else 1
        _summary_line(None, code, {"error": "bad command line"} if code else {})
        return code
    try:
        if ns.command == "oracle":
            if not ns.rest:
                raise ConfigError([("oracle", "name required")])
            code, info = _cmd_oracle(ns.rest[0], ns.rest[1:])
            _summary_line("oracle", code, info)
            return code
        if ns.rest:
            raise ConfigError([("arguments", f"unexpected {ns.rest}")])
        flags = {k[4:]: v for k, v in vars(ns).items() if k.startswith("cfg_") and v is not None}
        spec = parse_config(ns.config, flags, command=ns.command)
        if ns.echo_config:
            sys.stdout.write(dump_json(spec.to_config()))
            _summary_line(ns.command, 0, {"echo": True})
            return 0
        return run(spec)
    except ConfigError as exc:
        for k, msg in exc.errors:
            print(f"error: {k}: {msg}", file=sys.stderr)
        _summary_line(ns.command, 1, {"error": str(exc)})
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _summary_line(ns.command, 1, {"error": str(exc)})
        return 1


if __name__ == "__main__":
    sys.exit(main())
