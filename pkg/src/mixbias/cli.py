"""Command-line entry point: ``mixbias <command> [options]``.

Every result file carries the seed, the package version and the fully
resolved configuration, and contains no timestamps, so rerunning a command
with the echoed settings reproduces its files byte for byte.

Exit codes: 0 success, 2 usage error, 3 missing input file, 4 malformed
input, 5 model or numerical failure, 6 output could not be written.
Failures print a single JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import diagnose, permutation_test, nu_k, sim_bias, TargetSource
from .errors import MixBiasError, ParseError
from .experiments import (
    AdversarialConfig,
    PowerBase,
    PowerConfig,
    adversarial_league,
    adversarial_sim,
    hfa_table,
    power_study,
    scenario_grid,
)
from .lmm import blue, fit_fixed, fit_mixed, mixed_se
from .plots import emit_boxplot, emit_permutation_plot
from .schedules import build_design, parse_games
from .serialize import dumps, write_csv, write_json

EXIT_USAGE, EXIT_MISSING, EXIT_PARSE, EXIT_MODEL, EXIT_IO = 2, 3, 4, 5, 6

DESK = {"perms": 10_000, "sims": 200, "power_sims": 2000, "candidates": 1000}
FULL = {"perms": 1_000_000, "sims": 1000, "power_sims": 2000, "candidates": 5000}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, needs_input=True, perms=False, sims=False):
    if needs_input:
        p.add_argument("--input", required=True, help="games CSV")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--paper-scale", action="store_true",
                   help="use full-size permutation and simulation counts")
    if perms:
        p.add_argument("--perms", type=int, default=None)
    if sims:
        p.add_argument("--sims", type=int, default=None)


def _model_opts(p):
    p.add_argument("--theta", type=float, default=None,
                   help="fix the variance ratio instead of estimating it by REML")
    p.add_argument("--k-file", default=None,
                   help='JSON object of coefficient weights, e.g. {"intercept": 1}')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixbias", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fixed and mixed model fits (fit.json)")
    _common(p)
    _model_opts(p)

    p = sub.add_parser("diagnose", help="bias diagnostics (diagnostic.json, permdist.svg)")
    _common(p, perms=True)
    _model_opts(p)

    p = sub.add_parser("permute", help="permutation distribution only (permutation.json, permdist.svg)")
    _common(p, perms=True)
    _model_opts(p)

    p = sub.add_parser("simulate", help="simulation bias estimate (simulate.json)")
    _common(p, sims=True)
    _model_opts(p)
    p.add_argument("--target", choices=[t.value for t in TargetSource],
                   default=TargetSource.MIXED.value)

    p = sub.add_parser("adversarial", help="adversarial schedule simulation")
    _common(p, needs_input=False, sims=True)
    p.add_argument("--teams", type=int, default=50)
    p.add_argument("--games", type=int, default=12, help="games per team")
    p.add_argument("--candidates", type=int, default=None)
    p.add_argument("--sigma-g2", type=float, default=225.0)
    p.add_argument("--sigma2", type=float, default=529.0)
    p.add_argument("--theta", type=float, default=None,
                   help="variance ratio used to score candidates (default sigma_g2/sigma2)")
    p.add_argument("--balanced", action="store_true", help="draw balanced candidates only")
    p.add_argument("--format", choices=["csv", "json"], default="json")

    p = sub.add_parser("power", help="rejection rate of the permutation test")
    _common(p, needs_input=False, perms=True, sims=True)
    p.add_argument("--input", default=None,
                   help="games CSV whose mixed fit seeds the study "
                        "(default: a generated adversarial league)")
    p.add_argument("--p-s", type=float, action="append", default=None,
                   help="switch proportion; repeatable (default 0)")
    p.add_argument("--shuffle", action="store_true", help="shuffle team effects each season")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("table", help="home-advantage table over several leagues")
    _common(p, needs_input=False, perms=True, sims=True)
    p.add_argument("--input", action="append", required=True,
                   help="games CSV, optionally LABEL=PATH; repeatable")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


# --------------------------------------------------------------------------


def _scale(args, key):
    return (FULL if args.paper_scale else DESK)[key]


def _resolved(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if not k.startswith("_")}
    return dict(sorted(cfg.items()))


def _envelope(args, result) -> dict:
    return {"command": args.command, "config": _resolved(args), "seed": args.seed,
            "version": __version__, "result": result}


def _load(path):
    if not Path(path).is_file():
        raise FileNotFoundError(path)
    games = parse_games(Path(path))
    return build_design(games)


def _read_k(args):
    if args.k_file is None:
        return None
    path = Path(args.k_file)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"k-file is not valid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(data, dict) or not all(isinstance(v, (int, float)) for v in data.values()):
        raise ParseError("k-file must map coefficient names to numbers", 1)
    return {str(k): float(v) for k, v in data.items()}


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _perm_payload(pr):
    return {"observed": pr.observed, "percentile": pr.percentile, "flag": pr.flag,
            "n_perms": pr.n_perms, "dist_mean": pr.dist_mean, "dist_sd": pr.dist_sd,
            "q005": pr.lower_q, "q995": pr.upper_q, "seed": pr.seed,
            "hist_counts": pr.hist_counts, "hist_edges": pr.hist_edges}


def cmd_fit(args):
    sched, spec = _load(args.input)
    k = spec.contrast(_read_k(args))
    fixed = fit_fixed(spec, sched.margins)
    mixed = fit_mixed(spec, sched.margins, args.theta)
    fixed_k = blue(fixed, k)
    teams = list(sched.teams)
    result = {
        "n_games": spec.n, "n_teams": spec.m, "k": k,
        "fixed": {"estimate": fixed_k.estimate, "se": fixed_k.se,
                  "sigma2_hat": fixed.sigma2_hat, "rank": fixed.rank_xstar,
                  "beta": fixed.beta, "eta": dict(zip(teams, fixed.eta))},
        "mixed": {"estimate": float(k @ mixed.beta_hat), "se": mixed_se(mixed, k),
                  "theta_hat": mixed.theta_hat, "sigma2_hat": mixed.sigma2_hat,
                  "reml_value": mixed.reml_value, "converged": mixed.converged,
                  "beta": mixed.beta_hat, "eta": dict(zip(teams, mixed.eta_hat))},
    }
    path = _out(args) / "fit.json"
    write_json(path, _envelope(args, result))
    return {"fit": str(path), "fixed": fixed_k.estimate, "mixed": result["mixed"]["estimate"]}


def cmd_diagnose(args):
    sched, spec = _load(args.input)
    n_perms = args.perms or _scale(args, "perms")
    d = diagnose(spec, sched.margins, _read_k(args), n_perms, args.seed, args.theta, args.workers)
    result = {
        "k": d.k, "mixed_estimate": d.mixed_estimate, "mixed_se": d.mixed_se,
        "fixed_estimate": d.fixed_estimate, "hausman_diff": d.hausman_diff,
        "internal_bias": d.internal_bias, "percentile": d.permutation.percentile,
        "flag": d.permutation.flag, "theta_hat": d.theta_hat, "sigma2_hat": d.sigma2_hat,
        "nu": dict(zip(sched.teams, d.nu.nu)), "permutation": _perm_payload(d.permutation),
    }
    out = _out(args)
    write_json(out / "diagnostic.json", _envelope(args, result))
    emit_permutation_plot(d.permutation, out / "permdist.svg", title=Path(args.input).stem)
    return {"diagnostic": str(out / "diagnostic.json"), "internal_bias": d.internal_bias,
            "percentile": d.permutation.percentile, "flag": d.permutation.flag}


def cmd_permute(args):
    sched, spec = _load(args.input)
    n_perms = args.perms or _scale(args, "perms")
    mixed = fit_mixed(spec, sched.margins, args.theta)
    nu = nu_k(mixed, spec.contrast(_read_k(args)))
    pr = permutation_test(nu, mixed.eta_hat, None, n_perms, args.seed, spec.factor_codes(),
                          args.workers)
    out = _out(args)
    write_json(out / "permutation.json", _envelope(args, _perm_payload(pr)))
    emit_permutation_plot(pr, out / "permdist.svg", title=Path(args.input).stem)
    return {"permutation": str(out / "permutation.json"), "percentile": pr.percentile,
            "flag": pr.flag}


def cmd_simulate(args):
    sched, spec = _load(args.input)
    n_sims = args.sims or _scale(args, "sims")
    mixed = fit_mixed(spec, sched.margins, args.theta)
    fixed = fit_fixed(spec, sched.margins)
    res = sim_bias(mixed, spec.contrast(_read_k(args)), n_sims, args.seed, fixed=fixed,
                   target_source=TargetSource(args.target), workers=args.workers)
    path = _out(args) / "simulate.json"
    write_json(path, _envelope(args, res))
    return {"simulate": str(path), "bias": res.bias, "mc_se": res.mc_se}


def cmd_adversarial(args):
    cfg = AdversarialConfig(
        m=args.teams, games_per_team=args.games, sigma_g2=args.sigma_g2, sigma2=args.sigma2,
        n_candidates=args.candidates or _scale(args, "candidates"),
        n_sims=args.sims or _scale(args, "sims"), seed=args.seed, theta_select=args.theta,
        balanced_candidates=args.balanced, workers=args.workers,
    )
    res = adversarial_sim(cfg)
    out = _out(args)
    summary = {k: v for k, v in vars(res).items() if k not in ("per_sim", "config")}
    if args.format == "json":
        write_json(out / "adversarial.json", _envelope(args, {**summary, "per_sim": res.per_sim}))
    else:
        write_json(out / "adversarial.json", _envelope(args, summary))
        keys = list(res.per_sim)
        rows = [dict(zip(["sim"] + keys, [i] + [res.per_sim[k][i] for k in keys]))
                for i in range(res.n_sims)]
        write_csv(out / "adversarial.csv", rows)
    emit_boxplot({"mixed": res.per_sim["mixed"], "fixed": res.per_sim["fixed"]},
                 out / "adversarial.svg", title="intercept estimates",
                 reference={"mixed": res.selected_nu_eta, "fixed": 0.0})
    return {"adversarial": str(out / "adversarial.json"), "mixed_mean": res.mixed_mean,
            "fixed_mean": res.fixed_mean, "selected_nu_eta": res.selected_nu_eta}


def cmd_power(args):
    if args.input:
        sched, spec = _load(args.input)
        base = PowerBase.from_fit(fit_mixed(spec, sched.margins))
    else:
        league = adversarial_league(AdversarialConfig(
            n_candidates=_scale(args, "candidates"), seed=args.seed))
        base = PowerBase(league.schedule.Z, league.eta, AdversarialConfig.sigma2)
    p_s = args.p_s if args.p_s is not None else [0.0]
    cfg = PowerConfig(base, scenario_grid(p_s, [args.shuffle]),
                      n_sims=args.sims or _scale(args, "power_sims"),
                      n_perms=args.perms or _scale(args, "perms"),
                      alpha=args.alpha, seed=args.seed, workers=args.workers)
    rows = power_study(cfg)
    out = _out(args)
    if args.format == "csv":
        write_csv(out / "table.csv", rows)
        path = out / "table.csv"
    else:
        path = out / "power.json"
        write_json(path, _envelope(args, rows))
    return {"power": str(path), "rejection_rate": [r.rejection_rate for r in rows]}


def _dataset(item):
    label, sep, path = item.partition("=")
    if not sep:
        label, path = Path(item).stem, item
    if not Path(path).is_file():
        raise FileNotFoundError(path)
    return label, Path(path)


def cmd_table(args):
    datasets = [_dataset(item) for item in args.input]
    rows = hfa_table(datasets, args.perms or _scale(args, "perms"),
                     args.sims or _scale(args, "sims"), args.seed, args.workers)
    out = _out(args)
    if args.format == "csv":
        path = out / "table.csv"
        write_csv(path, rows)
    else:
        path = out / "table.json"
        write_json(path, _envelope(args, rows))
    return {"table": str(path), "rows": len(rows),
            "failed": [r.label for r in rows if r.error]}


COMMANDS = {
    "fit": cmd_fit, "diagnose": cmd_diagnose, "permute": cmd_permute,
    "simulate": cmd_simulate, "adversarial": cmd_adversarial, "power": cmd_power,
    "table": cmd_table,
}


def _fail(code, kind, message, **extra):
    payload = {"error": kind, "message": message, "exit_code": code, **extra}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    try:
        summary = COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, "missing_file", f"no such file: {exc.filename or exc}")
    except ParseError as exc:
        return _fail(EXIT_PARSE, "parse_error", str(exc), line=exc.line)
    except (MixBiasError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_MODEL, type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io_error", str(exc))
    sys.stdout.write(dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
