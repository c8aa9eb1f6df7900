"""Command-line entry point: configuration parsing, orchestration and report files.

Configuration files are YAML. Only ``domain.dimension`` and
``domain.side_lengths`` are required; see ``DEFAULTS`` for the rest. Unknown
keys are rejected. Every output file carries the fully resolved config and the
package version, and floats are written with 17 significant digits, so two
runs with the same config and seed produce identical bytes.

Exit codes: 0 all checks passed, 1 a bound or trend check failed,
2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import math
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (AnalysisConfig, check_lemma_6_1, check_lemma_6_2, gamma_tail_check,
                       heat_convolution_bound_check)
from .experiments import ExperimentConfig, frozen_phi, gamma_gap_check, run_sk_sweep
from .fields import Coefficients, make_map
from .noise import build_covariance
from .semigroup import (OP_NORM_BOUNDS, ModeParams, n_mu, op_norm_family, verify_lemma_f_bounds)
from .solver import PathAborted, SimConfig, run_paths
from .spectrum import build_domain

OUTPUT_ENV = "SKWAVE_OUTPUT_DIR"
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

DEFAULTS = {
    "domain": {"dimension": None, "side_lengths": None, "truncation": 32, "grid_res": None},
    "time": {"t_final": 1.0, "dt": None, "n_steps": None},
    "coefficients": {
        "drift": {"kind": "zero"},
        "diffusion": {"kind": "constant", "value": 1.0},
        "lipschitz_const": 1.0,
        "growth_const": 2.0,
    },
    "covariance": {"kind": "constant", "value": 1.0},
    "initial": {"u": [], "v": []},
    "mu": None,
    "seed": 0,
    "experiment": {
        "mu_grid": [0.1, 0.01, 0.001],
        "n_paths": 64,
        "p_moment": 2.0,
        "workers": 1,
        "chunk_size": 16,
        "separation_se": 1.0,
        "final_fraction": 0.1,
    },
    "analysis": None,
}
ANALYSIS_DEFAULTS = {"alpha": 0.1, "p_moment": 12.0, "t": None, "eps": 0.0,
                     "tail_modes": [4, 8, 16, 32], "n_paths": 64}
REQUIRED = (("domain", "dimension"), ("domain", "side_lengths"))
# sections whose contents are passed through to a sub-parser as free-form maps
_OPAQUE = {("coefficients", "drift"), ("coefficients", "diffusion"), ("covariance",)}


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent-only floats such as ``1e-3``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789"),
)


def load_yaml(text):
    return yaml.load(text, Loader=_Loader)


@dataclass
class ParsedConfig:
    resolved: dict
    sim: SimConfig
    experiment: ExperimentConfig
    analysis: AnalysisConfig | None


# ---------------------------------------------------------------- parsing


def _merge(defaults, given, path=()):
    if given is None:
        return copy.deepcopy(defaults)
    if defaults is None or path in _OPAQUE or not isinstance(defaults, dict):
        return copy.deepcopy(given)
    if not isinstance(given, dict):
        raise ConfigError(f"{'.'.join(path)} must be a mapping")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {'.'.join(path) or 'config'}: {sorted(unknown)}")
    return {k: _merge(defaults[k], given.get(k), path + (k,)) for k in defaults}


def resolve_config(raw) -> dict:
    """Apply defaults and reject unknown or missing keys; returns plain data."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    resolved = _merge(DEFAULTS, raw)
    for section, key in REQUIRED:
        if resolved[section][key] is None:
            raise ConfigError(f"missing required key {section}.{key}")
    time = resolved["time"]
    T = float(time["t_final"])
    if not T > 0:
        raise ConfigError("time.t_final must be positive")
    dt, n = time["dt"], time["n_steps"]
    if n is None:
        dt = 1.0 / 256 if dt is None else float(dt)
        if not dt > 0:
            raise ConfigError("time.dt must be positive")
        n = round(T / dt)
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise ConfigError(f"time.dt={dt} does not divide t_final={T}")
    elif dt is not None and abs(int(n) * float(dt) - T) > 1e-9 * T:
        raise ConfigError("time.dt and time.n_steps disagree")
    time["n_steps"] = int(n)
    time["dt"] = T / int(n)
    if resolved["analysis"] is not None:
        resolved["analysis"] = _merge(ANALYSIS_DEFAULTS, resolved["analysis"], ("analysis",))
    return resolved


def _pad(values, K, name):
    values = [float(x) for x in values]
    if len(values) > K:
        raise ConfigError(f"initial.{name} has more than {K} coefficients")
    return np.array(values + [0.0] * (K - len(values)))


def build_configs(resolved: dict) -> ParsedConfig:
    """Instantiate validated objects from a resolved config."""
    try:
        d = resolved["domain"]
        domain = build_domain(int(d["dimension"]), [float(x) for x in d["side_lengths"]],
                              int(d["truncation"]), d["grid_res"])
        covariance = build_covariance(domain, resolved["covariance"])
        c = resolved["coefficients"]
        coeffs = Coefficients(make_map(c["drift"]), make_map(c["diffusion"]),
                              float(c["lipschitz_const"]), float(c["growth_const"]))
        K = domain.truncation
        sim = SimConfig(domain, coeffs, covariance, float(resolved["time"]["t_final"]),
                        int(resolved["time"]["n_steps"]), resolved["mu"],
                        _pad(resolved["initial"]["u"], K, "u"), _pad(resolved["initial"]["v"], K, "v"),
                        int(resolved["seed"]))
        e = resolved["experiment"]
        experiment = ExperimentConfig(sim, tuple(e["mu_grid"]), int(e["n_paths"]), float(e["p_moment"]),
                                      int(e["workers"]), int(e["chunk_size"]), float(e["separation_se"]),
                                      float(e["final_fraction"]))
        analysis = None
        if resolved["analysis"] is not None:
            a = resolved["analysis"]
            analysis = AnalysisConfig(float(a["alpha"]), float(a["p_moment"]),
                                      covariance.q_exponent, domain.dimension)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return ParsedConfig(resolved, sim, experiment, analysis)


def parse_config(text: str) -> ParsedConfig:
    """Parse YAML text into validated simulation, experiment and analysis configs."""
    try:
        raw = load_yaml(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return build_configs(resolve_config(raw))


def dump_config(resolved: dict) -> str:
    """Serialize a resolved config so that ``parse_config`` reproduces it."""
    return to_json(resolved)


# ---------------------------------------------------------------- output


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json(obj) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{to_json(str(k))}: {to_json(v)}" for k, v in sorted(obj.items())) + "}"
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return _fmt_float(float(x))
    return str(x)


SWEEP_COLUMNS = ["mu", "estimate", "std_error", "J1", "J2", "J3", "J4", "J5", "n_paths", "n_aborted", "passed"]


def sweep_rows(report):
    return [[m.mu, m.estimate, m.std_error, *m.j_terms, m.n_paths, m.n_aborted, m.passed] for m in report.per_mu]


def emit_report(rows, columns, records, out_dir, stem, formats=("csv", "json-lines")):
    """Write ``stem.csv`` (header + rows) and/or ``stem.jsonl`` (one record per line).

    Returns the list of written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if "csv" in formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(x) for x in row])
        written.append(_write(out / f"{stem}.csv", buf.getvalue()))
    if "json-lines" in formats:
        text = "".join(to_json(r) + "\n" for r in records)
        written.append(_write(out / f"{stem}.jsonl", text))
    return written


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
    return path


def _header(command, resolved):
    # the worker count never changes results, so it is left out of the echo
    echo = copy.deepcopy(resolved)
    echo["experiment"].pop("workers", None)
    return {"record": "header", "command": command, "version": __version__, "config": echo}


# ---------------------------------------------------------------- commands


def cmd_verify_semigroup(args):
    mus = args.mu_grid or list(np.logspace(-4, 0, 20))
    ts = np.linspace(0.0, args.t_max, args.n_t)
    domain = build_domain(1, [math.pi], args.k_max)
    records = [{"record": "header", "command": "verify-semigroup", "version": __version__,
                "config": {"mu_grid": [float(m) for m in mus], "k_max": args.k_max,
                           "t_max": args.t_max, "n_t": args.n_t}}]
    rows, ok_all = [], True
    for mu in mus:
        worst = {}
        ok = True
        for alpha in domain.eigenvalues:
            rep = verify_lemma_f_bounds(ModeParams(float(mu), float(alpha)), 1.0, ts)
            ok &= rep.passed
            for c in rep.checks:
                if c.gating and c.applicable:
                    worst[c.name] = max(worst.get(c.name, -math.inf), c.max_excess)
        norms = {}
        for which, bound in OP_NORM_BOUNDS.items():
            values = [op_norm_family(domain, float(mu), float(t), which) for t in ts[1:]]
            limit = bound(float(mu))
            norms[which] = max(values) - limit
            ok &= norms[which] <= 1e-12
        count = n_mu(domain, float(mu))
        ok_all &= ok
        rows.append([float(mu), count, max(worst.values()), max(norms.values()), ok])
        records.append({"record": "mu", "mu": float(mu), "n_mu": count, "bound_excess": worst,
                        "norm_excess": norms, "passed": ok})
    emit_report(rows, ["mu", "n_mu", "max_bound_excess", "max_norm_excess", "passed"], records,
                args.out_dir, "verify_semigroup")
    return EXIT_OK if ok_all else EXIT_CHECK


def cmd_verify_bounds(args, parsed: ParsedConfig):
    if parsed.analysis is None:
        raise ConfigError("verify-bounds needs an 'analysis' section")
    a = parsed.resolved["analysis"]
    sim = parsed.sim
    phi = frozen_phi(sim)
    t = sim.t_final if a["t"] is None else float(a["t"])
    mus = parsed.experiment.mu_grid
    alpha = parsed.analysis.alpha
    reports = [
        check_lemma_6_1(sim.domain, sim.covariance, alpha, t, mus, phi),
        check_lemma_6_2(sim.domain, sim.covariance, alpha, t, mus, phi, eps=float(a["eps"])),
        gamma_tail_check(sim.domain, sim.covariance, alpha,
                         [n for n in a["tail_modes"] if n <= sim.domain.truncation], phi, t),
    ]
    heat = heat_convolution_bound_check(sim.domain, sim.covariance, phi, parsed.analysis.p_moment,
                                        int(a["n_paths"]), sim.seed)
    records = [_header("verify-bounds", parsed.resolved)]
    records += [r.as_dict() for r in reports]
    records.append({"name": "heat_convolution", **heat.as_dict()})
    rows = [[r.name, r.passed] for r in reports] + [["heat_convolution", heat.passed]]
    emit_report(rows, ["check", "passed"], records, args.out_dir, "verify_bounds")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_CHECK


def cmd_simulate(args, parsed: ParsedConfig):
    sim = parsed.sim
    if args.equation == "wave" and sim.mu is None:
        raise ConfigError("simulate --equation wave needs 'mu' in the config")
    n = args.paths or parsed.experiment.n_paths
    traj = run_paths(sim, args.equation, range(n), record="final")
    records = [_header("simulate", parsed.resolved)]
    rows = []
    for i in range(n):
        rec = {"record": "path", "path_id": i, "sup_norm": float(traj.sup_H_norm[i]),
               "final_u": traj.u[0, i].tolist()}
        if traj.v is not None:
            rec["final_v"] = traj.v[0, i].tolist()
        records.append(rec)
        rows.append([i, float(traj.sup_H_norm[i]), float(np.sqrt(np.sum(traj.u[0, i] ** 2)))])
    emit_report(rows, ["path_id", "sup_norm", "final_u_norm"], records, args.out_dir,
                f"simulate_{args.equation}")
    return EXIT_OK


def cmd_sk_sweep(args, parsed: ParsedConfig):
    report = run_sk_sweep(parsed.experiment)
    records = [_header("sk-sweep", parsed.resolved)]
    records += [{"record": "mu", **m.as_dict()} for m in report.per_mu]
    records.append({"record": "summary", "trend": report.trend, "passed": report.passed})
    emit_report(sweep_rows(report), SWEEP_COLUMNS, records, args.out_dir, "sk_sweep")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_gamma_gap(args, parsed: ParsedConfig):
    report = gamma_gap_check(parsed.experiment)
    records = [_header("gamma-gap", parsed.resolved), {"record": "result", **report.as_dict()}]
    rows = [[m, e, s, f, fs, i] for m, e, s, f, fs, i in zip(
        report.mu_grid, report.estimate, report.std_error, report.final_variance,
        report.final_variance_se, report.isometry)]
    emit_report(rows, ["mu", "estimate", "std_error", "final_variance", "final_variance_se", "isometry"],
                records, args.out_dir, "gamma_gap")
    return EXIT_OK if report.passed else EXIT_CHECK


# ---------------------------------------------------------------- main


def _apply_overrides(text, args):
    raw = load_yaml(text)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    exp = raw.setdefault("experiment", {}) or {}
    raw["experiment"] = exp
    if getattr(args, "paths", None) is not None:
        exp["n_paths"] = args.paths
    if getattr(args, "workers", None) is not None:
        exp["workers"] = args.workers
    if not exp:
        raw.pop("experiment")
    return build_configs(resolve_config(raw))


def build_parser():
    p = argparse.ArgumentParser(prog="skwave", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="YAML configuration file")
            sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", dest="out_dir", default=None,
                        help=f"output directory (default ${OUTPUT_ENV} or ./skwave-output)")

    sp = sub.add_parser("verify-semigroup", help="mode bounds, operator norms and N_mu over a mu grid")
    sp.add_argument("--mu-grid", type=float, nargs="+", default=None)
    sp.add_argument("--k-max", type=int, default=128)
    sp.add_argument("--t-max", type=float, default=10.0)
    sp.add_argument("--n-t", type=int, default=200)
    common(sp, config=False)

    sp = sub.add_parser("verify-bounds", help="quadratic-variation and convolution moment checks")
    common(sp)

    sp = sub.add_parser("simulate", help="simulate heat or wave paths")
    sp.add_argument("--equation", choices=["heat", "wave"], default="heat")
    sp.add_argument("--paths", type=int, default=None)
    common(sp)

    sp = sub.add_parser("sk-sweep", help="coupled small-mass convergence sweep")
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    common(sp)

    sp = sub.add_parser("gamma-gap", help="stochastic convolution gap across the mu grid")
    sp.add_argument("--paths", type=int, default=None)
    common(sp)
    return p


COMMANDS = {"verify-bounds": cmd_verify_bounds, "simulate": cmd_simulate,
            "sk-sweep": cmd_sk_sweep, "gamma-gap": cmd_gamma_gap}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.out_dir is None:
        args.out_dir = os.environ.get(OUTPUT_ENV, "skwave-output")
    try:
        if args.command == "verify-semigroup":
            if args.k_max < 1 or args.n_t < 2 or args.t_max <= 0:
                raise ConfigError("need k-max >= 1, n-t >= 2 and t-max > 0")
            if args.mu_grid and any(not m > 0 for m in args.mu_grid):
                raise ConfigError("mu values must be positive")
            return cmd_verify_semigroup(args)
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            parsed = _apply_overrides(text, args)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return COMMANDS[args.command](args, parsed)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PathAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (FloatingPointError, RuntimeError, MemoryError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
