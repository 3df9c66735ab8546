"""Fixed- and mixed-effects fits for Y = X beta + Z eta + e.

The mixed model treats ``eta ~ N(0, sigma^2 G)`` with ``G`` diagonal and
one variance ratio per random factor, and ``e ~ N(0, sigma^2 R)`` with
``R`` diagonal. The fixed model moves ``eta`` into the mean and fits the
stacked design ``[X, Z]`` by minimum-norm generalized least squares.

Variance ratios are estimated by REML. For the single-factor case the
criterion is profiled through one eigendecomposition of ``Z'R^-1 Z`` so
each evaluation costs O(m p); the multi-factor case falls back on
coordinate-wise cycles over the generic Woodbury criterion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateModel, InvalidInput, NotEstimable, NumericalFailure
from .linalg import (
    GinvResult,
    LowRankV,
    default_rank_tol,
    pinv_psd,
    symmetrize,
    v_logdet,
    v_solve,
)

LOG_THETA_BOUNDS = (-20.0, 20.0)
REML_XATOL = 1e-10
REML_MAXITER = 200
REML_GRID_POINTS = 41
ESTIMABILITY_RTOL = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """Design for the mixed model and its all-fixed counterpart.

    Parameters
    ----------
    X : (n, p) array
        Fixed-effects design.
    Z : (n, m) array
        Random-effects design.
    R_diag : (n,) array, optional
        Diagonal of the residual covariance (in units of sigma^2).
    factors : sequence of length m, optional
        Factor label for every column of ``Z``. All columns share one
        factor when omitted.
    x_names : sequence of length p, optional
        Names of the fixed-effect columns, used to parse named contrasts.
    """

    X: np.ndarray
    Z: np.ndarray
    R_diag: np.ndarray | None = None
    factors: tuple | None = None
    x_names: tuple | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if X.shape[0] != Z.shape[0]:
            raise InvalidInput("X and Z must have the same number of rows")
        if X.shape[0] < 1:
            raise InvalidInput("design has no rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise InvalidInput("design matrices must be finite")
        n, m = Z.shape
        r = np.ones(n) if self.R_diag is None else np.asarray(self.R_diag, dtype=float)
        if r.shape != (n,) or np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise InvalidInput("R_diag must be a positive n-vector")
        factors = ("eta",) * m if self.factors is None else tuple(self.factors)
        if len(factors) != m:
            raise InvalidInput("every column of Z needs exactly one factor label")
        p = X.shape[1]
        names = self.x_names
        if names is None:
            names = ("intercept",) if p == 1 else tuple(f"x{j}" for j in range(p))
        if len(names) != p:
            raise InvalidInput("x_names must have one entry per column of X")
        for attr, val in (("X", X), ("Z", Z), ("R_diag", r), ("factors", factors),
                          ("x_names", tuple(names))):
            object.__setattr__(self, attr, val)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    @property
    def factor_labels(self) -> list:
        return list(dict.fromkeys(self.factors))

    @property
    def single_factor(self) -> bool:
        return len(self.factor_labels) <= 1

    def factor_codes(self) -> np.ndarray:
        lookup = {lab: i for i, lab in enumerate(self.factor_labels)}
        return np.array([lookup[f] for f in self.factors], dtype=int)

    def g_diag(self, theta) -> np.ndarray:
        """Diagonal of G for a scalar ratio or one ratio per factor."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size == 1:
            return np.full(self.m, float(theta[0]))
        if theta.size != len(self.factor_labels):
            raise InvalidInput("need one variance ratio per factor")
        return theta[self.factor_codes()]

    def low_rank_v(self, theta) -> LowRankV:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if np.any(theta < 0):
            raise InvalidInput("variance ratios must be nonnegative")
        if theta.size == 1:
            return LowRankV(self.Z, float(theta[0]), self.R_diag)
        return LowRankV(self.Z * np.sqrt(self.g_diag(theta)), 1.0, self.R_diag)

    def contrast(self, k=None) -> np.ndarray:
        """Turn ``None`` (intercept), a mapping of names, or a vector into k."""
        if k is None:
            if "intercept" not in self.x_names:
                raise InvalidInput("no intercept column; supply k explicitly")
            k = {"intercept": 1.0}
        if isinstance(k, dict):
            out = np.zeros(self.p)
            for name, val in k.items():
                if name not in self.x_names:
                    raise InvalidInput(f"unknown coefficient name {name!r}")
                out[self.x_names.index(name)] = float(val)
            return out
        k = np.asarray(k, dtype=float).ravel()
        if k.size != self.p:
            raise InvalidInput(f"k has length {k.size}, expected {self.p}")
        return k

    def rank_tol(self, cols: int | None = None) -> float:
        return default_rank_tol(self.n, self.p if cols is None else cols)


def _in_span(k, basis) -> bool:
    nk = np.linalg.norm(k)
    if nk == 0:
        raise InvalidInput("k must be nonzero")
    return bool(np.linalg.norm(k - basis @ (basis.T @ k)) <= ESTIMABILITY_RTOL * nk)


@dataclass(frozen=True)
class Estimate:
    estimate: float
    se: float


@dataclass(frozen=True)
class FixedFit:
    """All-fixed fit of Y on [X, Z]."""

    beta_star: np.ndarray
    sigma2_hat: float
    rank_xstar: int
    rss: float
    spec: ModelSpec = field(repr=False)
    gram_ginv: GinvResult = field(repr=False)

    @property
    def beta(self) -> np.ndarray:
        return self.beta_star[: self.spec.p]

    @property
    def eta(self) -> np.ndarray:
        return self.beta_star[self.spec.p:]

    @property
    def df(self) -> int:
        return self.spec.n - self.rank_xstar


def fit_fixed(spec: ModelSpec, Y) -> FixedFit:
    """Minimum-norm GLS solution of Y = [X, Z] beta* + e, e ~ N(0, sigma^2 R)."""
    Y = _check_response(spec, Y)
    Xs = np.hstack([spec.X, spec.Z])
    RiXs = Xs / spec.R_diag[:, None]
    gram = symmetrize(Xs.T @ RiXs)
    g = pinv_psd(gram, spec.rank_tol(Xs.shape[1]))
    beta_star = g.ginv @ (RiXs.T @ Y)
    df = spec.n - g.rank
    if df <= 0:
        raise DegenerateModel(f"n = {spec.n} does not exceed rank([X, Z]) = {g.rank}")
    resid = Y - Xs @ beta_star
    rss = float(resid @ (resid / spec.R_diag))
    return FixedFit(beta_star, rss / df, g.rank, rss, spec, g)


def blue(fit: FixedFit, k_star) -> Estimate:
    """Estimate and standard error of k*'beta* under the fixed model.

    ``k_star`` may be a length-p contrast on the X block only (the usual
    comparison with the mixed model) or a full length p+m vector. When the
    Z block is zero the variance uses the Schur complement
    ``X'R^-1 X - X'R^-1 Z (Z'R^-1 Z)^- Z'R^-1 X``.
    """
    spec = fit.spec
    k_star = np.asarray(k_star, dtype=float).ravel()
    if k_star.size == spec.p:
        k_star = np.concatenate([k_star, np.zeros(spec.m)])
    if k_star.size != spec.p + spec.m:
        raise InvalidInput("k_star must have length p or p + m")
    if not _in_span(k_star, fit.gram_ginv.basis):
        raise NotEstimable("k* is not estimable under [X, Z]")
    est = float(k_star @ fit.beta_star)
    k, k_eta = k_star[: spec.p], k_star[spec.p:]
    if np.any(k_eta != 0):
        q = float(k_star @ fit.gram_ginv.ginv @ k_star)
    else:
        RiX = spec.X / spec.R_diag[:, None]
        RiZ = spec.Z / spec.R_diag[:, None]
        XRZ = RiX.T @ spec.Z
        Wg = pinv_psd(symmetrize(spec.Z.T @ RiZ), spec.rank_tol(spec.m)).ginv
        schur = symmetrize(spec.X.T @ RiX - XRZ @ Wg @ XRZ.T)
        q = float(k @ pinv_psd(schur, spec.rank_tol()).ginv @ k)
    return Estimate(est, float(np.sqrt(max(q, 0.0) * fit.sigma2_hat)))


def _check_response(spec: ModelSpec, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float).ravel()
    if Y.size != spec.n:
        raise InvalidInput(f"Y has length {Y.size}, design has {spec.n} rows")
    if not np.all(np.isfinite(Y)):
        raise InvalidInput("Y must be finite")
    return Y


# --------------------------------------------------------------------------
# REML
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RemlResult:
    theta_hat: float | np.ndarray
    sigma2_hat: float
    reml_value: float
    converged: bool
    n_evals: int = 0


class _ProfiledReml:
    """Single-factor REML criterion on the eigenbasis of Z'R^-1 Z."""

    def __init__(self, spec: ModelSpec, Y: np.ndarray):
        s = 1.0 / np.sqrt(spec.R_diag)
        Xw, Zw, Yw = spec.X * s[:, None], spec.Z * s[:, None], Y * s
        d, U = np.linalg.eigh(symmetrize(Zw.T @ Zw))
        self.d = np.clip(d, 0.0, None)
        FtZ = Zw @ U
        self.aX = FtZ.T @ Xw
        self.aY = FtZ.T @ Yw
        self.XtX = symmetrize(Xw.T @ Xw)
        self.XtY = Xw.T @ Yw
        self.YtY = float(Yw @ Yw)
        self.logdet_R = float(np.sum(np.log(spec.R_diag)))
        self.rank_x = pinv_psd(self.XtX, spec.rank_tol()).rank
        if self.rank_x == 0:
            raise InvalidInput("X has rank zero")
        self.df = spec.n - self.rank_x
        if self.df <= 0:
            raise DegenerateModel("n must exceed rank(X) for REML")
        self.n_evals = 0

    def pieces(self, theta: float):
        w = theta / (1.0 + theta * self.d) if theta > 0 else np.zeros_like(self.d)
        XtVX = symmetrize(self.XtX - self.aX.T @ (w[:, None] * self.aX))
        XtVY = self.XtY - self.aX.T @ (w * self.aY)
        YtVY = self.YtY - float(np.sum(w * self.aY ** 2))
        lam, Q = np.linalg.eigh(XtVX)
        lam, Q = lam[-self.rank_x:], Q[:, -self.rank_x:]
        if lam[0] <= 0:
            raise NumericalFailure("X'V^-1 X lost rank")
        proj = Q.T @ XtVY
        yPy = YtVY - float(proj @ (proj / lam))
        logdet_v = float(np.sum(np.log1p(theta * self.d))) + self.logdet_R
        return yPy, logdet_v, float(np.sum(np.log(lam)))

    def value(self, theta: float) -> float:
        self.n_evals += 1
        yPy, logdet_v, logpdet = self.pieces(theta)
        if yPy <= 0:
            raise NumericalFailure(f"Y'PY = {yPy:g} is not positive")
        return logdet_v + logpdet + self.df * np.log(yPy)


def reml_criterion(spec: ModelSpec, Y, theta) -> float:
    """REML objective log|V| + log|X'V^-1 X|_+ + (n - rank X) log(Y'PY).

    Works for a scalar ratio or one ratio per factor, using only Woodbury
    solves. Smaller is better.
    """
    Y = _check_response(spec, Y)
    v = spec.low_rank_v(theta)
    ViX = v_solve(v, spec.X)
    ViY = v_solve(v, Y)
    g = pinv_psd(symmetrize(spec.X.T @ ViX), spec.rank_tol())
    rank_x = pinv_psd(symmetrize(spec.X.T @ (spec.X / spec.R_diag[:, None])),
                      spec.rank_tol()).rank
    b = spec.X.T @ ViY
    yPy = float(Y @ ViY - b @ g.ginv @ b)
    if yPy <= 0:
        raise NumericalFailure(f"Y'PY = {yPy:g} is not positive")
    return v_logdet(v) + g.logpdet() + (spec.n - rank_x) * np.log(yPy)


def _scalar_search(f, bounds=LOG_THETA_BOUNDS, xatol=REML_XATOL,
                   maxiter=REML_MAXITER, grid_points=REML_GRID_POINTS):
    """Minimize f(log theta): coarse grid to bracket, then bounded Brent.

    Returns (log_theta or None for the theta = 0 boundary, value, success).
    """
    lo, hi = bounds
    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    res = minimize_scalar(f, bounds=(a, b), method="bounded",
                          options={"xatol": xatol, "maxiter": maxiter})
    x, fx, ok = float(res.x), float(res.fun), bool(res.success)
    if vals[i] < fx:
        x, fx = float(grid[i]), float(vals[i])
    if x <= lo + 1e-6:
        return None, fx, True
    return x, fx, ok


def reml_theta(spec: ModelSpec, Y) -> RemlResult:
    """REML estimate of the variance ratio theta = sigma_g^2 / sigma^2.

    The search runs over log theta in [-20, 20]. A minimum at the lower
    end is reported as theta = 0. sigma^2 is profiled out as
    Y'PY / (n - rank X). Multi-factor designs get coordinate-wise cycles
    of the same scalar search.
    """
    Y = _check_response(spec, Y)
    if not spec.single_factor:
        return _reml_multi(spec, Y)
    prob = _ProfiledReml(spec, Y)
    x, val, ok = _scalar_search(lambda lt: prob.value(np.exp(lt)))
    theta = 0.0 if x is None else float(np.exp(x))
    yPy, *_ = prob.pieces(theta)
    if yPy <= 0:
        raise NumericalFailure(f"Y'PY = {yPy:g} is not positive")
    if x is None:
        val = prob.value(0.0)
    return RemlResult(theta, yPy / prob.df, float(val), ok, prob.n_evals)


def _reml_multi(spec, Y, max_cycles=50, tol=1e-6) -> RemlResult:
    nf = len(spec.factor_labels)
    log_theta = np.zeros(nf)
    zero = np.zeros(nf, dtype=bool)
    ok_all = False
    val = np.inf
    for _ in range(max_cycles):
        change = 0.0
        for j in range(nf):
            def f(lt, j=j):
                th = np.where(zero, 0.0, np.exp(log_theta))
                th[j] = np.exp(lt)
                return reml_criterion(spec, Y, th)
            x, val, _ = _scalar_search(f)
            new = LOG_THETA_BOUNDS[0] if x is None else x
            change = max(change, abs(new - log_theta[j]))
            log_theta[j], zero[j] = new, x is None
        if change < tol:
            ok_all = True
            break
    theta = np.where(zero, 0.0, np.exp(log_theta))
    v = spec.low_rank_v(theta)
    ViX, ViY = v_solve(v, spec.X), v_solve(v, Y)
    g = pinv_psd(symmetrize(spec.X.T @ ViX), spec.rank_tol())
    b = spec.X.T @ ViY
    yPy = float(Y @ ViY - b @ g.ginv @ b)
    if yPy <= 0:
        raise NumericalFailure(f"Y'PY = {yPy:g} is not positive")
    val = reml_criterion(spec, Y, theta)
    return RemlResult(theta, yPy / (spec.n - g.rank), float(val), ok_all)


# --------------------------------------------------------------------------
# Mixed fit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MixedFit:
    """Empirical GLS fit of the mixed model with plugged-in variance ratios."""

    theta_hat: float | np.ndarray
    sigma2_hat: float
    beta_hat: np.ndarray
    eta_hat: np.ndarray
    xtvix_ginv: GinvResult = field(repr=False)
    reml_value: float
    converged: bool
    spec: ModelSpec = field(repr=False)
    vinv_x: np.ndarray = field(repr=False)


def fit_mixed(spec: ModelSpec, Y, theta=None) -> MixedFit:
    """Fit the mixed model; REML-estimate theta unless it is supplied.

    beta_hat = (X'V^-1 X)^- X'V^-1 Y and eta_hat = G Z'V^-1 (Y - X beta_hat),
    with all V^-1 products done by Woodbury solves.
    """
    Y = _check_response(spec, Y)
    if theta is None:
        reml = reml_theta(spec, Y)
        theta, reml_value, converged = reml.theta_hat, reml.reml_value, reml.converged
    else:
        theta = float(theta) if np.ndim(theta) == 0 else np.asarray(theta, dtype=float)
        reml_value, converged = float("nan"), True
    v = spec.low_rank_v(theta)
    ViX = v_solve(v, spec.X)
    ViY = v_solve(v, Y)
    g = pinv_psd(symmetrize(spec.X.T @ ViX), spec.rank_tol())
    beta = g.ginv @ (ViX.T @ Y)
    Vir = ViY - ViX @ beta
    eta = spec.g_diag(theta) * (spec.Z.T @ Vir)
    df = spec.n - g.rank
    if df <= 0:
        raise DegenerateModel("n must exceed rank(X)")
    yPy = float((Y - spec.X @ beta) @ Vir)
    if yPy <= 0:
        raise NumericalFailure(f"Y'PY = {yPy:g} is not positive")
    return MixedFit(theta, yPy / df, beta, eta, g, reml_value, converged, spec, ViX)


def mixed_se(fit: MixedFit, k) -> float:
    """Plug-in fixed-Z standard error sqrt(sigma^2 k'(X'V^-1 X)^- k)."""
    k = fit.spec.contrast(k)
    if not _in_span(k, fit.xtvix_ginv.basis):
        raise NotEstimable("k is not estimable under X")
    q = float(k @ fit.xtvix_ginv.ginv @ k)
    return float(np.sqrt(fit.sigma2_hat * max(q, 0.0)))


def mixed_estimate(fit: MixedFit, k) -> float:
    k = fit.spec.contrast(k)
    if not _in_span(k, fit.xtvix_ginv.basis):
        raise NotEstimable("k is not estimable under X")
    return float(k @ fit.beta_hat)


def fixed_estimate(fit: FixedFit, k) -> float:
    return blue(fit, fit.spec.contrast(k)).estimate


# --------------------------------------------------------------------------
# Known-theta variance decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceDecomposition:
    """Monte Carlo estimates of the three known-theta variance terms.

    ``total = gls_term + var_nu_eta - correction``. The ``*_se`` fields are
    Monte Carlo standard errors of the respective means.
    """

    gls_term: float
    var_nu_eta: float
    correction: float
    mean_nu_eta: float
    n_draws: int
    gls_se: float
    var_nu_eta_se: float
    correction_se: float
    excess_se: float

    @property
    def total(self) -> float:
        return self.gls_term + self.var_nu_eta - self.correction


def nu_and_quad(X, Z, theta, k, R_diag=None):
    """nu = Z'V^-1 X (X'V^-1 X)^- k and k'(X'V^-1 X)^- k for a known theta."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    v = LowRankV(Z, float(theta), R_diag)
    ViX = v_solve(v, X)
    g = pinv_psd(symmetrize(X.T @ ViX), default_rank_tol(*X.shape))
    gk = g.ginv @ k
    return v.Z.T @ (ViX @ gk), float(k @ gk)


def var_mixed_decomposition(spec: ModelSpec, k, theta: float, sigma2: float,
                            draws: Iterable[tuple[np.ndarray, np.ndarray]]
                            ) -> VarianceDecomposition:
    """Decompose var(k'beta_hat) over a sampled distribution of (Z, eta).

    ``draws`` yields (Z, eta) pairs; ``spec`` supplies X and R. With G =
    theta * I the three terms are sigma^2 E[k'(X'V^-1 X)^- k],
    var(nu'eta) and sigma^2 E[nu'G nu].
    """
    k = spec.contrast(k)
    q, ne, ngn = [], [], []
    for Z, eta in draws:
        nu, quad = nu_and_quad(spec.X, Z, theta, k, spec.R_diag)
        q.append(quad)
        ne.append(float(nu @ np.asarray(eta, dtype=float)))
        ngn.append(theta * float(nu @ nu))
    nd = len(q)
    if nd < 2:
        raise InvalidInput("need at least 2 draws")
    q, ne, ngn = np.array(q), np.array(ne), np.array(ngn)
    sq = (ne - ne.mean()) ** 2 * nd / (nd - 1)
    excess = sq - sigma2 * ngn
    root = np.sqrt(nd)
    return VarianceDecomposition(
        gls_term=float(sigma2 * q.mean()),
        var_nu_eta=float(ne.var(ddof=1)),
        correction=float(sigma2 * ngn.mean()),
        mean_nu_eta=float(ne.mean()),
        n_draws=nd,
        gls_se=float(sigma2 * q.std(ddof=1) / root),
        var_nu_eta_se=float(sq.std(ddof=1) / root),
        correction_se=float(sigma2 * ngn.std(ddof=1) / root),
        excess_se=float(excess.std(ddof=1) / root),
    )
