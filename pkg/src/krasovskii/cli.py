"""Batch experiment runner.

Experiments are described by a flat key = value config file with dotted
section names (diff-friendly; exact grammar in the README).  Runs are
deterministic given config + seed: output CSVs are byte-identical apart
from one leading "# generated" timestamp comment line.

Exit codes: 0 all checks passed / quantities computed, 1 a violation or
refutation was found, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import certify, estimate, functionals, solver, systems

__all__ = ["main", "run", "parse_config_file", "ConfigError"]


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing

_KNOWN_KEYS = {
    "command", "seed", "budget", "horizon", "step", "out", "tolerance",
    "system.name", "system.delay", "system.a", "system.b", "system.epsilon",
    "system.uncertainty",
    "constants.a_lower", "constants.a_upper", "constants.a", "constants.c",
    "constants.rho", "constants.sigma_right", "constants.sigma_left",
    "constants.gamma", "constants.P",
    "history.kind", "history.bound", "history.modes", "history.value",
    "history.seed",
    "input.kind", "input.value", "input.t_switch", "input.before",
    "input.after", "input.amplitude", "input.omega", "input.phase",
    "input.switch_dt",
    "ensemble.count", "envelope.k_cap", "contraction.horizon",
    "example2.deltas",
}


def parse_config_file(path) -> dict:
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in cfg:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key}")
        cfg[key] = value
    for key in cfg:
        if key not in _KNOWN_KEYS and not key.startswith("lkf.term."):
            raise ConfigError(f"unknown config field {key!r}")
    return cfg


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"missing config field {key!r}")
    return cfg[key]


def _as_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config field {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"field {key!r} must be a number, got {cfg[key]!r}")


def _as_int(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config field {key!r}")
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"field {key!r} must be an integer, got {cfg[key]!r}")


def _as_matrix(cfg, key):
    raw = _require(cfg, key)
    try:
        rows = [[float(x) for x in row.split()] for row in raw.split(";")]
        return np.array(rows)
    except ValueError:
        raise ConfigError(f"field {key!r} must be a matrix like '1 0; 0 1'")


def _as_vector(cfg, key):
    raw = _require(cfg, key)
    try:
        return np.array([float(x) for x in raw.split()])
    except ValueError:
        raise ConfigError(f"field {key!r} must be a vector like '1 0'")


def _gain_from(cfg, key):
    raw = cfg.get(key, "power 1 2")
    parts = raw.split()
    if parts == ["zero"]:
        return functionals.zero_gain()
    if len(parts) == 3 and parts[0] == "power":
        try:
            return functionals.PowerGain(float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ConfigError(f"field {key!r}: {exc}")
    raise ConfigError(f"field {key!r} must be 'power COEF EXP' or 'zero'")


# ---------------------------------------------------------------------------
# object builders

def _system_from(cfg) -> systems.DelaySystem:
    name = _require(cfg, "system.name")
    delay = _as_float(cfg, "system.delay")
    params = {}
    for short in ("a", "b", "epsilon", "uncertainty"):
        key = f"system.{short}"
        if key in cfg:
            params[short] = cfg[key]
    try:
        return systems.build_system(name, delay, params)
    except ValueError as exc:
        raise ConfigError(f"field 'system.name': {exc}")


def _lkf_from(cfg) -> functionals.Functional:
    indices = sorted({int(k.split(".")[2]) for k in cfg
                      if k.startswith("lkf.term.")})
    if not indices:
        raise ConfigError("missing config field 'lkf.term.1.kind'")
    total = None
    for i in indices:
        prefix = f"lkf.term.{i}"
        kind = _require(cfg, f"{prefix}.kind")
        known = {f"{prefix}.{s}" for s in
                 ("kind", "matrix", "weight", "weight_rate", "lag", "scale")}
        for key in cfg:
            if key.startswith(prefix + ".") and key not in known:
                raise ConfigError(f"unknown config field {key!r}")
        matrix = _as_matrix(cfg, f"{prefix}.matrix")
        try:
            if kind == "point_quadratic":
                term = functionals.PointQuadratic(matrix)
            elif kind == "delayed_quadratic":
                lag = _as_float(cfg, f"{prefix}.lag")
                term = functionals.DelayedQuadratic(matrix, -lag)
            elif kind == "integral_quadratic":
                c = _as_float(cfg, f"{prefix}.weight", 1.0)
                if f"{prefix}.weight_rate" in cfg:
                    weight = functionals.ExponentialWeight(
                        c, _as_float(cfg, f"{prefix}.weight_rate"))
                else:
                    weight = functionals.ConstantWeight(c)
                term = functionals.IntegralQuadratic(matrix, weight)
            elif kind == "max_exp":
                term = functionals.MaxExp(matrix)
            else:
                raise ConfigError(f"unknown LKF term kind {kind!r} "
                                  f"in field '{prefix}.kind'")
        except ValueError as exc:
            raise ConfigError(f"field '{prefix}': {exc}")
        scale = _as_float(cfg, f"{prefix}.scale", 1.0)
        if scale != 1.0:
            term = functionals.Scale(scale, term)
        total = term if total is None else functionals.Sum(total, term)
    return total


def _history_from(cfg, sys, seed) -> "systems.HistoryFunction":
    kind = cfg.get("history.kind", "random")
    if kind == "constant":
        from .histories import constant_history
        return constant_history(sys.delay, _as_vector(cfg, "history.value"))
    if kind == "random":
        from .histories import random_history
        return random_history((_as_int(cfg, "history.seed", seed), 0), sys.n,
                              sys.delay, _as_float(cfg, "history.bound", 1.0),
                              _as_int(cfg, "history.modes", 2))
    raise ConfigError(f"field 'history.kind': unknown kind {kind!r}")


def _input_from(cfg, sys) -> systems.InputSignal:
    kind = cfg.get("input.kind", "zero")
    if kind == "zero":
        return systems.zero_input(sys.m)
    if kind == "constant":
        return systems.constant_input(_as_vector(cfg, "input.value"))
    if kind == "step":
        return systems.step_input(_as_float(cfg, "input.t_switch"),
                                  _as_vector(cfg, "input.before"),
                                  _as_vector(cfg, "input.after"))
    if kind == "sinusoid":
        return systems.sinusoid_input(_as_float(cfg, "input.amplitude"),
                                      _as_float(cfg, "input.omega"),
                                      _as_float(cfg, "input.phase", 0.0))
    if kind == "noise":
        return systems.piecewise_noise_input(
            _as_int(cfg, "history.seed", _as_int(cfg, "seed")),
            _as_float(cfg, "input.amplitude"),
            _as_float(cfg, "input.switch_dt"), sys.m)
    raise ConfigError(f"field 'input.kind': unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# report writing

def _write_report(outdir: Path, name: str, rows) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / name, "w", newline="") as fh:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        writer = csv.writer(fh)
        writer.writerows(rows)


def _say(quiet, *parts):
    if not quiet:
        print(*parts)


# ---------------------------------------------------------------------------
# commands

def _validated_constants(cfg, gamma) -> None:
    # coherence checks (a_lower <= a_upper, positivity, spd P, gamma(0)=0)
    # shared with the library type
    if "constants.a_upper" not in cfg and "constants.a" not in cfg:
        return
    try:
        functionals.HypothesisConstants(
            a_upper=_as_float(cfg, "constants.a_upper", 1.0),
            a=_as_float(cfg, "constants.a", 1.0),
            rho=_as_float(cfg, "constants.rho", 2.0),
            a_lower=(_as_float(cfg, "constants.a_lower")
                     if "constants.a_lower" in cfg else None),
            c=_as_float(cfg, "constants.c", 0.0),
            P=_as_matrix(cfg, "constants.P") if "constants.P" in cfg else None,
            gamma=gamma)
    except ValueError as exc:
        raise ConfigError(f"constants.*: {exc}")


def _cmd_certify(cfg, sys_, seed, budget, outdir, quiet) -> int:
    sampler = certify.FalsificationSampler(seed, sys_.n, sys_.m, sys_.delay)
    tolerance = _as_float(cfg, "tolerance", 1e-9)
    rows = []
    reports = []
    needs_lkf = "constants.a_upper" in cfg or "constants.a" in cfg
    V = _lkf_from(cfg) if needs_lkf else None
    gamma = _gain_from(cfg, "constants.gamma")
    _validated_constants(cfg, gamma)
    if "constants.a_upper" in cfg:
        a_lower = (_as_float(cfg, "constants.a_lower")
                   if "constants.a_lower" in cfg else None)
        reports.append(certify.check_sandwich(
            V, a_lower, _as_float(cfg, "constants.a_upper"),
            _as_float(cfg, "constants.rho", 2.0), sampler, budget, tolerance))
    if "constants.a" in cfg:
        reports.append(certify.check_pointwise_dissipation(
            sys_, V, _as_float(cfg, "constants.a"),
            _as_float(cfg, "constants.c", 0.0), gamma, sampler, budget,
            tolerance))
    if "constants.sigma_right" in cfg:
        reports.append(certify.check_right_growth(
            sys_, _as_matrix(cfg, "constants.P"),
            _as_float(cfg, "constants.sigma_right"), gamma, sampler, budget,
            tolerance))
    if "constants.sigma_left" in cfg:
        reports.append(certify.check_left_growth(
            sys_, _as_matrix(cfg, "constants.P"),
            _as_float(cfg, "constants.sigma_left"), gamma, sampler, budget,
            tolerance))
    if not reports:
        raise ConfigError("no check is configured: provide constants.a_upper, "
                          "constants.a, constants.sigma_right or "
                          "constants.sigma_left")
    violated = False
    for rep in reports:
        rows.extend(rep.csv_rows())
        violated = violated or rep.violated
        _say(quiet, rep.text())
    _write_report(outdir, "report.csv", rows)
    return 1 if violated else 0


def _cmd_margin(cfg, seed, outdir, quiet) -> int:
    rows = []
    emitted = False

    def emit(report):
        nonlocal emitted
        emitted = True
        rows.extend(report.csv_rows())
        _say(quiet, report.text())

    have = lambda *keys: all(f"constants.{k}" in cfg for k in keys)
    if have("a_lower", "a"):
        delay = _as_float(cfg, "system.delay")
        c_bar = certify.margin_history_term(_as_float(cfg, "constants.a_lower"),
                                        _as_float(cfg, "constants.a"), delay)
        if have("a_upper") and _as_float(cfg, "constants.c", 0.0) < c_bar:
            emit(certify.history_term_constants(
                _as_float(cfg, "constants.a_lower"),
                _as_float(cfg, "constants.a_upper"),
                _as_float(cfg, "constants.a"),
                _as_float(cfg, "constants.rho", 2.0),
                _as_float(cfg, "constants.c", 0.0), delay))
        else:
            rows.append(["margin", "history-term", "out", "c_bar",
                         f"{c_bar:.17g}"])
            emitted = True
            _say(quiet, f"margin [history-term] c_bar = {c_bar:.17g}")
    if have("a", "sigma_right", "P"):
        emit(certify.margin_right(
            _as_float(cfg, "constants.a"),
            _as_float(cfg, "constants.sigma_right"),
            _as_matrix(cfg, "constants.P"), _as_float(cfg, "system.delay"),
            a_upper=(_as_float(cfg, "constants.a_upper")
                     if "constants.a_upper" in cfg else None),
            c=_as_float(cfg, "constants.c", 0.0)))
    if have("a_lower", "a_upper", "a", "sigma_left", "P"):
        emit(certify.margin_left(
            _as_float(cfg, "constants.a_lower"),
            _as_float(cfg, "constants.a_upper"),
            _as_float(cfg, "constants.a"),
            _as_float(cfg, "constants.sigma_left"),
            _as_matrix(cfg, "constants.P"), _as_float(cfg, "system.delay")))
    if not emitted:
        raise ConfigError("no margin is computable from the provided "
                          "constants.* fields")
    _write_report(outdir, "report.csv", rows)
    return 0


def _cmd_simulate(cfg, sys_, seed, outdir, quiet) -> int:
    x0 = _history_from(cfg, sys_, seed)
    u = _input_from(cfg, sys_)
    traj = solver.integrate(sys_, x0, u, _as_float(cfg, "horizon"),
                            _as_float(cfg, "step"))
    outdir.mkdir(parents=True, exist_ok=True)
    solver.export_csv(traj, outdir / "trajectories.csv")
    rows = [["simulate", traj.status,
             "" if traj.t_escape is None else f"{traj.t_escape:.17g}",
             f"{traj.t_end:.17g}"]]
    _write_report(outdir, "report.csv", rows)
    _say(quiet, f"simulate: {traj.status} (t_end={traj.t_end:g})")
    return 0


def _cmd_envelope(cfg, sys_, seed, outdir, quiet) -> int:
    count = _as_int(cfg, "ensemble.count", 50)
    horizon = _as_float(cfg, "horizon")
    dt = _as_float(cfg, "step")
    outdir.mkdir(parents=True, exist_ok=True)
    sampler = estimate.seeded_history_sampler(
        (_as_int(cfg, "history.seed", seed),), sys_.n, sys_.delay,
        _as_float(cfg, "history.bound", 1.0))
    trajs = estimate.run_ensemble(sys_, sampler, None, count, horizon, dt)
    rows = []
    code = 0
    try:
        fit = estimate.fit_envelope(trajs, _as_float(cfg, "envelope.k_cap", 1e3))
        rows += [["envelope", "k", f"{fit.k:.17g}"],
                 ["envelope", "eta", f"{fit.eta:.17g}"],
                 ["envelope", "slack", f"{fit.slack:.17g}"],
                 ["envelope", "trajectories", str(fit.trajectories)]]
        estimate.write_envelope_data(fit, trajs, outdir / "envelope.dat")
        _say(quiet, f"envelope: k={fit.k:.6g} eta={fit.eta:.6g} "
                    f"slack={fit.slack:.3g}")
    except estimate.FitFailure as exc:
        rows.append(["envelope", "failure", str(exc)])
        _say(quiet, f"envelope: {exc}")
        code = 1
    if "contraction.horizon" in cfg:
        fit2 = estimate.empirical_two_inequality(
            sys_, _as_float(cfg, "contraction.horizon"), min(count, 10), dt,
            seed=seed, mu0=0.0)
        rows += [["contraction", "ell", f"{fit2.ell:.17g}"],
                 ["contraction", "lam", f"{fit2.lam:.17g}"],
                 ["contraction", "holds", str(fit2.contraction)]]
        _say(quiet, f"contraction at T={fit2.horizon:g}: lam={fit2.lam:.6g}")
        if not fit2.contraction:
            code = 1
    _write_report(outdir, "report.csv", rows)
    return code


def _cmd_example2(cfg, deltas, outdir, quiet) -> int:
    rows = []
    for delta in deltas:
        m = certify.robustness_margin_example2(delta)
        rows.append(["example2", f"{delta:.17g}", f"{m.eps1:.17g}",
                     f"{m.eps2_closed_form:.17g}", f"{m.eps2_margin:.17g}",
                     f"{max(m.eps1, m.eps2_margin):.17g}", str(m.crossover)])
        _say(quiet, f"delta={delta:g}: eps1={m.eps1:.6g} "
                    f"eps2_closed_form={m.eps2_closed_form:.6g} "
                    f"eps2_margin={m.eps2_margin:.6g} crossover={m.crossover}")
    _write_report(outdir, "report.csv", rows)
    return 0


# ---------------------------------------------------------------------------
# entry point

def run(cfg: dict, command: str | None = None, seed: int | None = None,
        out: str | None = None, budget: int | None = None,
        quiet: bool = False) -> int:
    command = command or cfg.get("command")
    if not command:
        raise ConfigError("missing config field 'command' (and no subcommand)")
    if seed is None:
        seed = _as_int(cfg, "seed")
    outdir = Path(out if out is not None else cfg.get("out", "results"))
    if command in ("certify", "falsify"):
        sys_ = _system_from(cfg)
        if budget is None:
            budget = _as_int(cfg, "budget", 1000)
        return _cmd_certify(cfg, sys_, seed, budget, outdir, quiet)
    if command == "margin":
        return _cmd_margin(cfg, seed, outdir, quiet)
    if command == "simulate":
        return _cmd_simulate(cfg, _system_from(cfg), seed, outdir, quiet)
    if command == "envelope":
        return _cmd_envelope(cfg, _system_from(cfg), seed, outdir, quiet)
    if command == "example2-margins":
        raw = cfg.get("example2.deltas", "0 0.5 1 2 4.5")
        try:
            deltas = [float(x) for x in raw.replace(",", " ").split()]
        except ValueError:
            raise ConfigError("field 'example2.deltas' must be a list of numbers")
        if not deltas:
            raise ConfigError("field 'example2.deltas' must not be empty")
        return _cmd_example2(cfg, deltas, outdir, quiet)
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="krasovskii",
        description="Simulation, certification and envelope fitting for "
                    "time-delay systems.")
    sub = parser.add_subparsers(dest="subcommand")
    for name in ("simulate", "certify", "margin", "envelope", "falsify",
                 "example2-margins"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_help()
        return 2
    try:
        cfg = parse_config_file(args.config)
        return run(cfg, command=args.subcommand, seed=args.seed, out=args.out,
                   budget=args.budget, quiet=args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (certify.InfeasibilityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
