"""Bias diagnostics for mixed-model estimates of estimable functions.

For a contrast k the E-BLUE k'beta_hat carries bias E[nu_k' eta] when the
random-effects design depends on eta, where

    nu_k' = k' (X'V^-1 X)^- X'V^-1 Z.

This module evaluates nu_k from a fitted model, the plug-in bias estimate
nu_k' eta_hat, the mixed-minus-fixed difference, a randomized permutation
reference distribution for nu_k' pi(eta_hat), and a parametric-simulation
estimate of the bias.

Random streams are derived from ``(seed, block index)`` through
``numpy.random.SeedSequence`` so results never depend on the number of
worker threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map as _map
from ._parallel import stream
from .errors import (
    InvalidInput,
    MixBiasError,
    NotEstimable,
    SimulationUnstable,
    UnsupportedCovariance,
)
from .linalg import check_symmetric
from .lmm import (
    FixedFit,
    MixedFit,
    ModelSpec,
    _in_span,
    fit_fixed,
    fit_mixed,
    fixed_estimate,
    mixed_estimate,
    mixed_se,
)

DEFAULT_N_PERMS = 1_000_000
PERM_BLOCK = 5000
HIST_BINS = 200
LOW_PCT, HIGH_PCT = 0.5, 99.5
NU_ZERO_RTOL = 1e-11
MAX_FAILURE_FRACTION = 0.10


# --------------------------------------------------------------------------
# nu_k and the point diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NuVector:
    nu: np.ndarray
    k: np.ndarray
    theta_used: float | np.ndarray


def nu_k(fit: MixedFit, k=None) -> NuVector:
    """nu_k = Z'V^-1 X (X'V^-1 X)^- k evaluated at the fitted variance ratios."""
    spec = fit.spec
    k = spec.contrast(k)
    if not _in_span(k, fit.xtvix_ginv.basis):
        raise NotEstimable("k is not estimable under X")
    w = fit.vinv_x @ (fit.xtvix_ginv.ginv @ k)
    nu = spec.Z.T @ w
    # Entries that are pure cancellation (a team with balanced home/away
    # exposure) come out at rounding level; make them exactly zero so the
    # permutation distribution is degenerate when it should be.
    nu[np.abs(nu) <= NU_ZERO_RTOL * (np.abs(spec.Z.T) @ np.abs(w))] = 0.0
    return NuVector(nu, k, fit.theta_hat)


def internal_bias(nu: NuVector, eta_hat) -> float:
    """Plug-in bias estimate nu_k' eta_hat. ``nu`` may also be a plain vector."""
    eta_hat = np.asarray(eta_hat, dtype=float).ravel()
    nu_vec = nu.nu if isinstance(nu, NuVector) else np.asarray(nu, dtype=float).ravel()
    if eta_hat.shape != nu_vec.shape:
        raise InvalidInput("nu and eta_hat differ in length")
    return float(nu_vec @ eta_hat)


def hausman_diff(mixed: MixedFit, fixed: FixedFit, k=None) -> float:
    """k'beta_hat(mixed) - k'beta_tilde(fixed)."""
    k = mixed.spec.contrast(k)
    return mixed_estimate(mixed, k) - fixed_estimate(fixed, k)


# --------------------------------------------------------------------------
# Permutations of eta_hat
# --------------------------------------------------------------------------


class BiasFlag(str, enum.Enum):
    NEGATIVE = "negative_bias"
    POSITIVE = "positive_bias"
    NONE = "none"


def flag_for(percentile: float) -> BiasFlag:
    if percentile < LOW_PCT:
        return BiasFlag.NEGATIVE
    if percentile > HIGH_PCT:
        return BiasFlag.POSITIVE
    return BiasFlag.NONE


class _Permuter:
    """Within-factor shuffles of eta_hat under a factor-structured G.

    A diagonal G gives independent uniform shuffles within each factor.
    Any other G that is equicorrelated within factors uses rank matching:
    draw w0 ~ N(0, G) and hand out the sorted eta_hat values of each
    factor in the order of w0's ranks, ties going to the lower index.
    """

    def __init__(self, eta_hat, G_hat=None, factors=None):
        eta = np.asarray(eta_hat, dtype=float).ravel()
        m = eta.size
        if factors is None:
            factors = np.zeros(m, dtype=int)
        factors = np.asarray(factors)
        if factors.shape != (m,):
            raise InvalidInput("factors must label every element of eta_hat")
        self.groups = [np.flatnonzero(factors == f) for f in dict.fromkeys(factors.tolist())]
        self.eta = eta
        self.sorted_eta = [np.sort(eta[g]) for g in self.groups]
        self.root = None
        if G_hat is not None:
            G = check_symmetric(G_hat, "G_hat")
            if G.shape != (m, m):
                raise InvalidInput("G_hat must be m x m")
            self._check_equicorrelated(G)
            if np.any(G - np.diag(np.diag(G))):
                w, U = np.linalg.eigh(G)
                if w[0] < -1e-10 * max(w[-1], 1.0):
                    raise InvalidInput("G_hat is not positive semidefinite")
                self.root = U * np.sqrt(np.clip(w, 0, None))

    def _check_equicorrelated(self, G):
        for g in self.groups:
            block = G[np.ix_(g, g)]
            diag = np.diag(block)
            off = block[~np.eye(len(g), dtype=bool)]
            scale = max(np.max(np.abs(block)), 1e-300)
            if np.ptp(diag) > 1e-10 * scale or (off.size and np.ptp(off) > 1e-10 * scale):
                raise UnsupportedCovariance(
                    "G_hat is not equicorrelated within every factor")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` x m array of permuted copies of eta_hat."""
        out = np.empty((size, self.eta.size))
        if self.root is None:
            for g, se in zip(self.groups, self.sorted_eta):
                out[:, g] = rng.permuted(np.broadcast_to(se, (size, g.size)), axis=1)
            return out
        w0 = rng.standard_normal((size, self.eta.size)) @ self.root.T
        for g, se in zip(self.groups, self.sorted_eta):
            order = np.argsort(w0[:, g], axis=1, kind="stable")
            ranks = np.empty_like(order)
            np.put_along_axis(ranks, order, np.arange(g.size)[None, :], axis=1)
            out[:, g] = se[ranks]
        return out


def permute_eta(eta_hat, G_hat=None, rng=None, factors=None) -> np.ndarray:
    """One within-factor permutation pi(eta_hat).

    ``G_hat`` is the m x m random-effects covariance (``None`` means
    diagonal). It must be equicorrelated within each factor.
    """
    rng = np.random.default_rng(rng)
    return _Permuter(eta_hat, G_hat, factors).draw(rng, 1)[0]


@dataclass(frozen=True)
class PermutationResult:
    """Randomized permutation distribution of nu' pi(eta_hat)."""

    observed: float
    n_perms: int
    dist_mean: float
    dist_sd: float
    percentile: float
    flag: BiasFlag
    seed: int
    hist_counts: np.ndarray = field(repr=False)
    hist_edges: np.ndarray = field(repr=False)
    lower_q: float = 0.0
    upper_q: float = 0.0
    values: np.ndarray | None = field(default=None, repr=False)


def midrank_percentile(observed: float, values: np.ndarray) -> float:
    """100 (#below + #equal / 2 + 1/2) / (N + 1), counting the observed value once."""
    below = np.count_nonzero(values < observed)
    equal = np.count_nonzero(values == observed)
    return 100.0 * (below + 0.5 * equal + 0.5) / (values.size + 1)


def _histogram(values):
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([values.size]), np.array([lo, hi])
    return np.histogram(values, bins=HIST_BINS, range=(lo, hi))


def permutation_values(nu, eta_hat, G_hat=None, factors=None, n_perms=DEFAULT_N_PERMS,
                       seed=0, workers=1) -> np.ndarray:
    """Sample nu' pi(eta_hat) ``n_perms`` times, block by block."""
    nu_vec = nu.nu if isinstance(nu, NuVector) else np.asarray(nu, dtype=float).ravel()
    perm = _Permuter(eta_hat, G_hat, factors)
    if nu_vec.shape != perm.eta.shape:
        raise InvalidInput("nu and eta_hat differ in length")
    starts = list(range(0, n_perms, PERM_BLOCK))

    def block(b):
        size = min(PERM_BLOCK, n_perms - starts[b])
        return perm.draw(stream(seed, b), size) @ nu_vec

    return np.concatenate(_map(block, range(len(starts)), workers))


def permutation_test(nu: NuVector, eta_hat, G_hat=None, n_perms: int = DEFAULT_N_PERMS,
                     seed: int = 0, factors=None, workers: int = 1,
                     keep_values: bool = False) -> PermutationResult:
    """Compare nu' eta_hat with its randomized permutation distribution.

    The percentile uses the mid-rank convention, so a degenerate
    distribution (nu = 0) sits at exactly 50.
    """
    if n_perms < 100:
        raise InvalidInput("n_perms must be at least 100")
    observed = internal_bias(nu, eta_hat)
    vals = permutation_values(nu, eta_hat, G_hat, factors, n_perms, seed, workers)
    pct = midrank_percentile(observed, vals)
    counts, edges = _histogram(vals)
    lq, uq = np.percentile(vals, [LOW_PCT, HIGH_PCT])
    return PermutationResult(
        observed=observed,
        n_perms=int(n_perms),
        dist_mean=float(vals.mean()),
        dist_sd=float(vals.std(ddof=1)),
        percentile=float(pct),
        flag=flag_for(pct),
        seed=int(seed),
        hist_counts=counts,
        hist_edges=edges,
        lower_q=float(lq),
        upper_q=float(uq),
        values=vals if keep_values else None,
    )


def exact_percentile(nu, eta_hat) -> float:
    """Percentile of nu'eta_hat among all m! permutations (small m only)."""
    from itertools import permutations

    nu = np.asarray(nu, dtype=float)
    eta = np.asarray(eta_hat, dtype=float)
    if eta.size > 9:
        raise InvalidInput("exhaustive enumeration is limited to m <= 9")
    vals = np.array([nu @ eta[list(p)] for p in permutations(range(eta.size))])
    obs = float(nu @ eta)
    below = np.count_nonzero(vals < obs)
    equal = np.count_nonzero(vals == obs)
    return 100.0 * (below + 0.5 * equal) / vals.size


# --------------------------------------------------------------------------
# Simulation-based bias
# --------------------------------------------------------------------------


class TargetSource(str, enum.Enum):
    MIXED = "mixed_beta"
    FIXED = "fixed_beta"


@dataclass(frozen=True)
class SimBiasResult:
    n_sims: int
    mean_estimate: float
    bias: float
    mc_se: float
    target: float
    target_source: TargetSource
    seed: int
    n_failed: int = 0
    estimates: np.ndarray | None = field(default=None, repr=False)


def sim_bias(fit: MixedFit, k=None, n_sims: int = 1000, seed: int = 0,
             fixed: FixedFit | None = None, target_source=None,
             workers: int = 1) -> SimBiasResult:
    """Parametric-simulation estimate of the bias of k'beta_hat.

    Each replicate draws Y_s = X beta + Z eta_hat + e_s with
    e_s ~ N(0, sigma2_hat R), refits the mixed model (REML included) and
    records k'beta_hat_s. ``beta`` and the target are the mixed solution,
    or the fixed-model solution when ``target_source`` is ``fixed_beta``.
    """
    spec = fit.spec
    k = spec.contrast(k)
    if n_sims < 2:
        raise InvalidInput("n_sims must be at least 2")
    if target_source is None:
        target_source = TargetSource.FIXED if fixed is not None else TargetSource.MIXED
    target_source = TargetSource(target_source)
    if target_source is TargetSource.FIXED:
        if fixed is None:
            raise InvalidInput("fixed_beta target needs the fixed fit")
        beta, target = fixed.beta, fixed_estimate(fixed, k)
    else:
        beta, target = fit.beta_hat, mixed_estimate(fit, k)
    mean = spec.X @ beta + spec.Z @ fit.eta_hat
    sd = np.sqrt(fit.sigma2_hat * spec.R_diag)

    def one(i):
        y = mean + sd * stream(seed, i).standard_normal(spec.n)
        try:
            return mixed_estimate(fit_mixed(spec, y), k)
        except (MixBiasError, np.linalg.LinAlgError):
            return np.nan

    est = np.array(_map(one, range(n_sims), workers))
    ok = np.isfinite(est)
    n_failed = int(n_sims - ok.sum())
    if n_failed > MAX_FAILURE_FRACTION * n_sims or ok.sum() < 2:
        raise SimulationUnstable(f"{n_failed} of {n_sims} replicate fits failed")
    good = est[ok]
    mean_est = float(good.mean())
    return SimBiasResult(
        n_sims=int(ok.sum()),
        mean_estimate=mean_est,
        bias=mean_est - target,
        mc_se=float(good.std(ddof=1) / np.sqrt(good.size)),
        target=float(target),
        target_source=target_source,
        seed=int(seed),
        n_failed=n_failed,
        estimates=est,
    )


# --------------------------------------------------------------------------
# One-call summary
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasDiagnostic:
    """Everything printed next to a mixed-model estimate of k'beta."""

    k: np.ndarray
    mixed_estimate: float
    mixed_se: float
    fixed_estimate: float
    hausman_diff: float
    internal_bias: float
    nu: NuVector = field(repr=False)
    permutation: PermutationResult = field(repr=False)
    seed: int = 0
    n_perms: int = 0
    theta_hat: float | np.ndarray = float("nan")
    sigma2_hat: float = float("nan")
    mixed_fit: MixedFit | None = field(default=None, repr=False)
    fixed_fit: FixedFit | None = field(default=None, repr=False)


def diagnose(spec: ModelSpec, Y, k=None, n_perms: int = DEFAULT_N_PERMS, seed: int = 0,
             theta=None, workers: int = 1) -> BiasDiagnostic:
    """Fit both models and compute every point and permutation diagnostic."""
    mixed = fit_mixed(spec, Y, theta)
    fixed = fit_fixed(spec, Y)
    k = spec.contrast(k)
    nu = nu_k(mixed, k)
    perm = permutation_test(nu, mixed.eta_hat, None, n_perms, seed, spec.factor_codes(),
                            workers)
    return BiasDiagnostic(
        k=k,
        mixed_estimate=mixed_estimate(mixed, k),
        mixed_se=mixed_se(mixed, k),
        fixed_estimate=fixed_estimate(fixed, k),
        hausman_diff=hausman_diff(mixed, fixed, k),
        internal_bias=perm.observed,
        nu=nu,
        permutation=perm,
        seed=int(seed),
        n_perms=int(n_perms),
        theta_hat=mixed.theta_hat,
        sigma2_hat=mixed.sigma2_hat,
        mixed_fit=mixed,
        fixed_fit=fixed,
    )
