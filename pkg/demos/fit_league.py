"""Fit a simulated season with both models.

A league of 30 teams plays 10 games each. Team strengths are drawn once,
margins get Gaussian noise, and the home advantage is fixed at 3 points.
"""

import numpy as np

from mixbias.lmm import fit_fixed, fit_mixed, fixed_estimate, mixed_estimate, mixed_se
from mixbias.schedules import gen_random_schedule, intercept_spec

rng = np.random.default_rng(2017)
sched = gen_random_schedule(30, 10, rng)
eta = rng.normal(0, 15, 30)
y = 3.0 + sched.Z @ eta + rng.normal(0, 23, sched.n_games)

spec = intercept_spec(sched.Z)
fixed = fit_fixed(spec, y)
mixed = fit_mixed(spec, y)

print(f"{sched.n_games} games, {sched.n_teams} teams")
print(f"fixed-effects HFA   {fixed_estimate(fixed, None):7.3f}")
print(f"mixed-model HFA     {mixed_estimate(mixed, None):7.3f}  (SE {mixed_se(mixed, None):.3f})")
print(f"REML variance ratio {mixed.theta_hat:7.3f}  (true {225 / 529:.3f})")

# EBLUPs shrink toward zero relative to the true strengths
slope = np.polyfit(eta, mixed.eta_hat, 1)[0]
print(f"slope of eta_hat on eta: {slope:.2f}")
