"""Seeded Monte Carlo checks of distributional claims.

These are slower than the unit tests but every one is deterministic.
"""

import numpy as np

from mixbias._parallel import stream
from mixbias.diagnostics import internal_bias, nu_k
from mixbias.experiments import (
    AdversarialConfig,
    PowerBase,
    PowerConfig,
    adversarial_league,
    hfa_row,
    power_study,
    scenario_grid,
)
from mixbias.lmm import fit_mixed
from mixbias.schedules import gen_random_schedule, intercept_spec


def test_internal_bias_centered_for_fixed_schedule():
    sched = gen_random_schedule(20, 8, 11)
    spec = intercept_spec(sched.Z)
    vals = []
    for i in range(500):
        rng = stream(11, i)
        y = sched.Z @ rng.normal(0, 15, 20) + rng.normal(0, 23, sched.n_games)
        fit = fit_mixed(spec, y)
        vals.append(internal_bias(nu_k(fit), fit.eta_hat))
    vals = np.array(vals)
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean()) <= 3 * se


def test_internal_and_external_bias_agree():
    rows = []
    for seed in range(4):
        for maximize in (True, False):
            lg = adversarial_league(AdversarialConfig(m=20, games_per_team=8, n_candidates=200,
                                                      seed=seed, maximize=maximize))
            noise = stream(seed, 5, int(maximize)).standard_normal(lg.schedule.n_games)
            y = lg.schedule.Z @ lg.eta + 23 * noise
            rows.append(hfa_row("adv", intercept_spec(lg.schedule.Z), y, n_perms=200,
                                n_sims=200, seed=seed))
    for seed in range(4):
        sched = gen_random_schedule(20, 8, seed)
        y = sched.Z @ stream(seed, 6).normal(0, 15, 20)
        y = y + 23 * stream(seed, 7).standard_normal(sched.n_games)
        rows.append(hfa_row("rnd", intercept_spec(sched.Z), y, n_perms=200, n_sims=200,
                            seed=seed))
    ib = np.array([r.internal_bias for r in rows])
    assert np.corrcoef(ib, [r.diff for r in rows])[0, 1] >= 0.9
    assert np.corrcoef(ib, [r.sim_bias for r in rows])[0, 1] >= 0.9


def test_power_bias_shrinks_with_switching():
    lg = adversarial_league(AdversarialConfig(m=30, games_per_team=10, n_candidates=500,
                                              seed=4))
    base = PowerBase(lg.schedule.Z, lg.eta, 529.0)
    grid = [0.0, 0.25, 0.40, 0.50]
    rows = power_study(PowerConfig(base, scenario_grid(grid, [False]), n_sims=2000,
                                   n_perms=100, seed=4))
    bias = [abs(r.mean_beta) for r in rows]
    se = [r.beta_mc_se for r in rows]
    for j in range(len(grid) - 1):
        assert bias[j + 1] <= bias[j] + 3 * np.hypot(se[j], se[j + 1])
    assert bias[0] > 3 * se[0]
    assert bias[-1] < 3 * se[-1]
