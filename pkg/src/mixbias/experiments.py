"""Experiment harnesses built on the fitting and diagnostic layers.

* :func:`hfa_table` runs the full per-league pipeline (both fits, point
  diagnostics, permutation test, simulation bias) and returns one row per
  league.
* :func:`adversarial_sim` picks the schedule that maximizes nu'eta for a
  drawn set of team effects and then simulates seasons on it.
* :func:`power_study` measures the rejection rate of the two-sided
  permutation test while home/away assignments are switched or team
  effects shuffled between simulated seasons.
* :func:`variance_decomposition_study` checks the known-theta variance
  decomposition against the Monte Carlo variance of k'beta_hat.

Every random draw comes from a stream keyed on ``(seed, ...)`` so results
are reproducible and independent of the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._parallel import derive_seed, parallel_map, stream
from .diagnostics import (
    diagnose,
    internal_bias,
    nu_k,
    permutation_test,
    sim_bias,
)
from .errors import InvalidInput, MixBiasError
from .lmm import (
    ModelSpec,
    fit_fixed,
    fit_mixed,
    fixed_estimate,
    mixed_estimate,
    var_mixed_decomposition,
)
from .plots import emit_boxplot, emit_permutation_plot  # noqa: F401  (re-export)
from .schedules import (
    Schedule,
    adversarial_select,
    build_design,
    gen_balanced_schedule,
    gen_random_schedule,
    intercept_spec,
    parse_games,
    shuffle_eta,
    switch_homes,
)

Z95 = 1.959963984540054
DESK_N_SIMS = 200
DESK_N_PERMS = 10_000


def _mean_ci(x):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("inf")
    return m, se, m - Z95 * se, m + Z95 * se


# --------------------------------------------------------------------------
# Table of home-advantage estimates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HfaRow:
    label: str
    fixed_est: float = float("nan")
    mixed_est: float = float("nan")
    mixed_se: float = float("nan")
    diff: float = float("nan")
    internal_bias: float = float("nan")
    percentile: float = float("nan")
    sim_mean: float = float("nan")
    sim_bias: float = float("nan")
    flag: str = ""
    n_games: int = 0
    n_teams: int = 0
    theta_hat: float = float("nan")
    sigma2_hat: float = float("nan")
    perm_mean: float = float("nan")
    error: str | None = None


def _load(source):
    """(ModelSpec, Y) from a CSV path/text, a list of games, or a (spec, Y) pair."""
    if isinstance(source, tuple) and len(source) == 2 and isinstance(source[0], ModelSpec):
        return source
    games = source if isinstance(source, list) else parse_games(source)
    sched, spec = build_design(games)
    return spec, sched.margins


def hfa_row(label, spec: ModelSpec, Y, n_perms=DESK_N_PERMS, n_sims=DESK_N_SIMS, seed=0,
            workers=1, keep=False):
    """One table row; with ``keep=True`` also return the BiasDiagnostic."""
    diag = diagnose(spec, Y, None, n_perms, seed, workers=workers)
    sim = sim_bias(diag.mixed_fit, None, n_sims, derive_seed(seed, 1), fixed=diag.fixed_fit,
                   workers=workers)
    row = HfaRow(
        label=label,
        fixed_est=diag.fixed_estimate,
        mixed_est=diag.mixed_estimate,
        mixed_se=diag.mixed_se,
        diff=diag.hausman_diff,
        internal_bias=diag.internal_bias,
        percentile=diag.permutation.percentile,
        sim_mean=sim.mean_estimate,
        sim_bias=sim.bias,
        flag=diag.permutation.flag.value,
        n_games=spec.n,
        n_teams=spec.m,
        theta_hat=float(diag.theta_hat),
        sigma2_hat=diag.sigma2_hat,
        perm_mean=diag.permutation.dist_mean,
    )
    return (row, diag, sim) if keep else row


def hfa_table(datasets: Sequence, n_perms: int = DESK_N_PERMS, n_sims: int = DESK_N_SIMS,
              seed: int = 0, workers: int = 1) -> list[HfaRow]:
    """Home-advantage summary for each ``(label, source)`` pair.

    ``source`` is a CSV path, CSV text, a list of GameRecord, or a
    ``(ModelSpec, Y)`` pair. A dataset that fails yields a row carrying
    the error message; the others still run.
    """
    rows = []
    for i, (label, source) in enumerate(datasets):
        try:
            spec, Y = _load(source)
            rows.append(hfa_row(label, spec, Y, n_perms, n_sims, derive_seed(seed, i), workers))
        except (MixBiasError, OSError, np.linalg.LinAlgError) as exc:
            rows.append(HfaRow(label=label, error=f"{type(exc).__name__}: {exc}"))
    return rows


# --------------------------------------------------------------------------
# Adversarial schedule selection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdversarialConfig:
    m: int = 50
    games_per_team: int = 12
    sigma_g2: float = 225.0
    sigma2: float = 529.0
    n_candidates: int = 5000
    n_sims: int = 1000
    seed: int = 0
    true_hfa: float = 0.0
    theta_select: float | None = None
    balanced_candidates: bool = False
    maximize: bool = True
    workers: int = 1

    @property
    def theta(self) -> float:
        return self.sigma_g2 / self.sigma2 if self.theta_select is None else self.theta_select


@dataclass(frozen=True)
class AdversarialLeague:
    schedule: Schedule
    eta: np.ndarray
    selected_index: int
    selected_nu_eta: float


def adversarial_league(cfg: AdversarialConfig) -> AdversarialLeague:
    """Draw team effects, then keep the candidate schedule with extreme nu'eta.

    With ``maximize=False`` the minimizing schedule is kept instead.
    """
    eta = stream(cfg.seed, 0).normal(0.0, np.sqrt(cfg.sigma_g2), cfg.m)
    gen = gen_balanced_schedule if cfg.balanced_candidates else gen_random_schedule
    rng = stream(cfg.seed, 1)
    sign = 1.0 if cfg.maximize else -1.0
    best, best_val, best_i = None, -np.inf, -1
    chunk = 250
    for start in range(0, cfg.n_candidates, chunk):
        cands = [gen(cfg.m, cfg.games_per_team, rng)
                 for _ in range(min(chunk, cfg.n_candidates - start))]
        sel = adversarial_select(cands, sign * eta, theta=cfg.theta, workers=cfg.workers)
        if sel.nu_eta_value > best_val:
            best, best_val, best_i = cands[sel.index], sel.nu_eta_value, start + sel.index
    return AdversarialLeague(best, eta, best_i, sign * best_val)


@dataclass(frozen=True)
class AdversarialSimResult:
    mixed_mean: float
    mixed_ci_lo: float
    mixed_ci_hi: float
    fixed_mean: float
    fixed_ci_lo: float
    fixed_ci_hi: float
    diff_mean: float
    selected_nu_eta: float
    corr_diff_vs_internal: float
    mixed_mc_se: float
    fixed_mc_se: float
    mean_internal_bias: float
    n_sims: int
    n_failed: int
    selected_index: int
    config: AdversarialConfig
    per_sim: dict = field(repr=False, default_factory=dict)


def adversarial_sim(cfg: AdversarialConfig = AdversarialConfig()) -> AdversarialSimResult:
    """Simulate seasons on an adversarially selected schedule.

    Team effects are drawn once, the schedule maximizing nu'eta (at the
    known variance ratio) is chosen, and each replicate draws
    Y = true_hfa + Z eta + e. Both models are fit to every replicate.
    """
    if cfg.n_sims < 2:
        raise InvalidInput("n_sims must be at least 2")
    league = adversarial_league(cfg)
    Z, eta = league.schedule.Z, league.eta
    spec = intercept_spec(Z)
    mean = cfg.true_hfa + Z @ eta
    sd = np.sqrt(cfg.sigma2)

    def one(i):
        y = mean + sd * stream(cfg.seed, 2, i).standard_normal(spec.n)
        try:
            mixed = fit_mixed(spec, y)
            fixed = fit_fixed(spec, y)
            nb = internal_bias(nu_k(mixed), mixed.eta_hat)
            return mixed_estimate(mixed, None), fixed_estimate(fixed, None), nb, mixed.theta_hat
        except (MixBiasError, np.linalg.LinAlgError):
            return (np.nan,) * 4

    res = np.array(parallel_map(one, range(cfg.n_sims), cfg.workers))
    ok = np.all(np.isfinite(res), axis=1)
    mixed, fixed, nb, th = res[ok].T
    diff = mixed - fixed
    mm, mse, mlo, mhi = _mean_ci(mixed)
    fm, fse, flo, fhi = _mean_ci(fixed)
    if ok.sum() > 2 and np.std(diff) > 0 and np.std(nb) > 0:
        corr = float(np.corrcoef(diff, nb)[0, 1])
    else:
        corr = float("nan")
    return AdversarialSimResult(
        mixed_mean=mm, mixed_ci_lo=mlo, mixed_ci_hi=mhi,
        fixed_mean=fm, fixed_ci_lo=flo, fixed_ci_hi=fhi,
        diff_mean=float(diff.mean()),
        selected_nu_eta=league.selected_nu_eta,
        corr_diff_vs_internal=corr,
        mixed_mc_se=mse, fixed_mc_se=fse,
        mean_internal_bias=float(nb.mean()),
        n_sims=int(ok.sum()), n_failed=int((~ok).sum()),
        selected_index=league.selected_index,
        config=cfg,
        per_sim={"mixed": mixed, "fixed": fixed, "diff": diff, "internal_bias": nb,
                 "theta_hat": th},
    )


# --------------------------------------------------------------------------
# Power of the permutation test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerBase:
    """Schedule and fitted effects that seed a power study."""

    Z: np.ndarray
    eta_hat: np.ndarray
    sigma2: float
    X: np.ndarray | None = None
    R_diag: np.ndarray | None = None

    @classmethod
    def from_fit(cls, fit):
        return cls(fit.spec.Z, fit.eta_hat, fit.sigma2_hat, fit.spec.X, fit.spec.R_diag)


@dataclass(frozen=True)
class PowerRow:
    p_s: float
    shuffle_schedule: bool
    rejection_rate: float
    mean_beta: float
    mean_internal_bias: float
    n_sims: int
    beta_mc_se: float = float("nan")
    internal_bias_mc_se: float = float("nan")
    n_failed: int = 0


@dataclass(frozen=True)
class PowerConfig:
    base: PowerBase
    scenarios: tuple = ((0.0, True), (0.0, False))
    n_sims: int = 2000
    n_perms: int = DESK_N_PERMS
    alpha: float = 0.05
    seed: int = 0
    true_beta: float = 0.0
    workers: int = 1


def scenario_grid(p_s_list, shuffle_flags) -> tuple:
    return tuple((float(p), bool(s)) for s in shuffle_flags for p in p_s_list)


def _power_cell(cfg: PowerConfig, j: int, p_s: float, shuffle: bool):
    base = cfg.base
    X = np.ones((base.Z.shape[0], 1)) if base.X is None else base.X
    r = np.ones(base.Z.shape[0]) if base.R_diag is None else base.R_diag
    sd = np.sqrt(base.sigma2 * r)
    beta = np.full(X.shape[1], cfg.true_beta)
    lo, hi = 100 * cfg.alpha / 2, 100 * (1 - cfg.alpha / 2)

    def one(i):
        rng = stream(cfg.seed, j, i)
        Z = switch_homes(base.Z, p_s, rng)
        eta = shuffle_eta(base.eta_hat, rng) if shuffle else base.eta_hat
        y = X @ beta + Z @ eta + sd * rng.standard_normal(Z.shape[0])
        spec = ModelSpec(X, Z, r)
        try:
            fit = fit_mixed(spec, y)
            nu = nu_k(fit)
            pr = permutation_test(nu, fit.eta_hat, None, cfg.n_perms, derive_seed(cfg.seed, j, i))
        except (MixBiasError, np.linalg.LinAlgError):
            return np.nan, np.nan, np.nan
        reject = pr.percentile < lo or pr.percentile > hi
        return float(reject), mixed_estimate(fit, None), pr.observed

    res = np.array(parallel_map(one, range(cfg.n_sims), cfg.workers))
    ok = np.all(np.isfinite(res), axis=1)
    rej, b, nb = res[ok].T
    root = np.sqrt(max(ok.sum(), 1))
    return PowerRow(
        p_s=p_s, shuffle_schedule=shuffle,
        rejection_rate=float(rej.mean()), mean_beta=float(b.mean()),
        mean_internal_bias=float(nb.mean()), n_sims=int(ok.sum()),
        beta_mc_se=float(b.std(ddof=1) / root), internal_bias_mc_se=float(nb.std(ddof=1) / root),
        n_failed=int((~ok).sum()),
    )


def power_study(cfg: PowerConfig) -> list[PowerRow]:
    """Rejection rate of the two-sided level-alpha permutation test per scenario.

    Each scenario is ``(p_s, shuffle)``. Before every simulated season a
    fraction p_s of games swap home and away, and with ``shuffle`` the
    fitted team effects are randomly permuted. Seasons are generated as
    X true_beta + Z eta + e with e ~ N(0, sigma2 R).
    """
    if not 0 < cfg.alpha < 1:
        raise InvalidInput("alpha must be in (0, 1)")
    return [_power_cell(cfg, j, p, s) for j, (p, s) in enumerate(cfg.scenarios)]


# --------------------------------------------------------------------------
# Known-theta variance decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceStudy:
    empirical_mean_bias: float
    empirical_mean_bias_se: float
    empirical_var: float
    empirical_var_se: float
    decomposition: object
    n_draws: int


def variance_decomposition_study(m=12, games_per_team=4, theta=1.0, sigma2=1.0, n_draws=2000,
                                 n_candidates=8, dependent=True, seed=0) -> VarianceStudy:
    """Monte Carlo check of bias E[nu'eta] and the variance decomposition.

    Each draw generates eta ~ N(0, sigma2 theta I); when ``dependent`` the
    schedule is the candidate maximizing nu'eta, otherwise the first
    candidate. Y = Z eta + e is fit with theta known.
    """
    k = np.ones(1)
    draws, est = [], []
    for i in range(n_draws):
        rng = stream(seed, i)
        eta = rng.normal(0.0, np.sqrt(sigma2 * theta), m)
        cands = [gen_random_schedule(m, games_per_team, rng).Z for _ in range(n_candidates)]
        Z = cands[adversarial_select(cands, eta, theta=theta).index] if dependent else cands[0]
        y = Z @ eta + np.sqrt(sigma2) * rng.standard_normal(Z.shape[0])
        spec = intercept_spec(Z)
        est.append(mixed_estimate(fit_mixed(spec, y, theta), k))
        draws.append((Z, eta))
    est = np.array(est)
    spec0 = intercept_spec(draws[0][0])
    dec = var_mixed_decomposition(spec0, k, theta, sigma2, draws)
    c = (est - est.mean()) ** 2 * n_draws / (n_draws - 1)
    return VarianceStudy(
        empirical_mean_bias=float(est.mean()),
        empirical_mean_bias_se=float(est.std(ddof=1) / np.sqrt(n_draws)),
        empirical_var=float(est.var(ddof=1)),
        empirical_var_se=float(c.std(ddof=1) / np.sqrt(n_draws)),
        decomposition=dec,
        n_draws=n_draws,
    )


__all__ = [
    "AdversarialConfig", "AdversarialLeague", "AdversarialSimResult", "HfaRow", "PowerBase",
    "PowerConfig", "PowerRow", "VarianceStudy", "adversarial_league", "adversarial_sim",
    "emit_boxplot", "emit_permutation_plot", "hfa_row", "hfa_table", "power_study",
    "scenario_grid", "variance_decomposition_study",
]
