"""Metropolis-within-Gibbs sampler for the latent-factor distributed-lag
model of multivariate ordinal panels.

One sweep updates, in fixed order: latent continuous responses, latent
factors, loadings, individual lag coefficients, global lag means and
pooling variances (or the constrained simplex weights), thresholds, and
the variance simplex.  Conjugate blocks are exact Gaussian / inverse-gamma
draws; thresholds and the variance simplex use adaptive random-walk
Metropolis steps whose scales are tuned during burn-in only.

Threshold moves marginalize the latent responses out of the acceptance
ratio (interval probabilities of the ordinal data) and, on acceptance,
redraw the affected metric's latent responses from their truncated
conditionals, making the pair a valid joint proposal.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtri

from .errors import InvariantViolationError, ValidationFailedError
from .panel import (ChainState, CovariatePanel, ModelSpec, OrdinalPanel,
                    PosteriorDraws, validate_panel)
from .preprocess import build_lag_design
from .truncnorm import log_interval_prob, sample_truncnorm

SIMPLEX_FLOOR = 1e-12
# float64 range guards for the heavy-tailed inverse-gamma pooling variances
PSI_MIN, PSI_MAX = 1e-300, 1e300
# exp(LOGPROB_FLOOR) is the smallest positive subnormal; flooring keeps
# Metropolis ratios finite when interval probabilities underflow
LOGPROB_FLOOR = -745.0


# ---------------------------------------------------------------------------
# conjugate-update moment helpers (shared by the sampler and the test oracles)

def conjugate_regression_moments(xtx, xty, noise_var, prior_mean, prior_prec):
    """Posterior (mean, precision) of a Gaussian linear regression with
    known noise variance and independent Gaussian priors per coefficient.

    xtx: (..., p, p), xty: (..., p), prior_mean/prior_prec: (..., p) or
    scalars.  Batched over leading axes.
    """
    xtx = np.asarray(xtx, float)
    p = xtx.shape[-1]
    prior_prec = np.broadcast_to(np.asarray(prior_prec, float), xtx.shape[:-2] + (p,))
    prior_mean = np.broadcast_to(np.asarray(prior_mean, float), xtx.shape[:-2] + (p,))
    prec = xtx / noise_var + np.eye(p) * prior_prec[..., None, :]
    rhs = np.asarray(xty, float) / noise_var + prior_prec * prior_mean
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
    return mean, prec


def factor_conditional_moments(prior_mean, prior_var, betas, resid, noise_var):
    """Gaussian full-conditional moments of one latent factor value.

    prior_mean/prior_var: distributed-lag prior; betas: loadings of the J
    metrics on this factor; resid: latent responses minus every other mean
    term (intercept and remaining factors).  Returns (mean, var).
    """
    betas = np.asarray(betas, float)
    resid = np.asarray(resid, float)
    prec = 1.0 / prior_var + float(betas @ betas) / noise_var
    num = prior_mean / prior_var + float(betas @ resid) / noise_var
    return num / prec, 1.0 / prec


def global_mean_moments(value_sum, count, like_var, prior_var):
    """Posterior (mean, var) of a Gaussian mean with `count` observations of
    variance like_var and a zero-mean prior of variance prior_var."""
    prec = count / like_var + 1.0 / prior_var
    return (value_sum / like_var) / prec, 1.0 / prec


def inverse_gamma_update(shape0, rate0, deviations):
    """Conjugate inverse-gamma posterior (shape, rate) given zero-mean
    Gaussian deviations with that variance."""
    dev = np.asarray(deviations, float)
    return shape0 + 0.5 * dev.shape[-1], rate0 + 0.5 * (dev * dev).sum(axis=-1)


def dirichlet_logpdf(x, alpha):
    x = np.asarray(x, float)
    alpha = np.asarray(alpha, float)
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum()
                 + ((alpha - 1.0) * np.log(x)).sum())


def draw_from_precision(rng, mean, prec):
    """Draw from N(mean, prec^{-1}); batched over leading axes."""
    chol = np.linalg.cholesky(prec)
    z = rng.standard_normal(mean.shape)
    return mean + np.linalg.solve(np.swapaxes(chol, -1, -2), z[..., None])[..., 0]


# ---------------------------------------------------------------------------
# sampler context

@dataclass
class FitContext:
    """Everything a sweep needs besides the mutable ChainState: data masks,
    the precomputed lag design cross-products, the random stream, and the
    Metropolis proposal scales with their acceptance counters."""

    spec: ModelSpec
    rng: np.random.Generator
    values: np.ndarray            # (n, J, Tmax) int
    observed: np.ndarray          # (n, J, Tmax) bool: non-missing & usable
    obs_f: np.ndarray             # observed as float 0/1
    missing: np.ndarray           # (n, J, Tmax) bool: missing & usable
    usable: np.ndarray            # (n, Tmax) bool
    X: np.ndarray                 # (Mx, n, Tmax, L+1), zero off-usable rows
    D: np.ndarray                 # (n, Tmax, Mx*(L+1)) stacked design
    G: np.ndarray                 # (n, P, P) usable-row D'D
    Gm: np.ndarray                # (Mx, n, L+1, L+1) per-covariate X'X
    obs_by_metric: list           # per j: (i_idx, t_idx, cats)
    n_obs: int
    n_usable: int
    # adaptive Metropolis bookkeeping
    thr_step: np.ndarray = None
    spx_conc: float = 0.0
    w_conc: np.ndarray = None
    counters: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def J(self):
        return self.values.shape[1]

    @property
    def Mx(self):
        return self.X.shape[0]

    @property
    def Mf(self):
        return self.spec.n_factors

    @property
    def L(self):
        return self.X.shape[3] - 1

    def count(self, name, accepted):
        att, acc = self.counters.setdefault(name, [0, 0])
        self.counters[name] = [att + 1, acc + (1 if accepted else 0)]


def build_context(panel: OrdinalPanel, covs: CovariatePanel, spec: ModelSpec,
                  rng, prior_only=False) -> FitContext:
    design = build_lag_design(covs, spec.lag_depth)
    usable = design.usable & panel.row_mask()
    X = np.where(usable[None, :, :, None], design.design, 0.0)
    observed = (panel.values > 0) & usable[:, None, :]
    if prior_only:
        observed = np.zeros_like(observed)
    missing = usable[:, None, :] & ~observed
    Mx, n, Tmax, Lp1 = X.shape
    D = np.concatenate([X[m] for m in range(Mx)], axis=2)
    G = np.einsum("ntp,ntq->npq", D, D)
    Gm = np.einsum("mntp,mntq->mnpq", X, X)
    obs_by_metric = []
    for j in range(panel.J):
        ii, tt = np.nonzero(observed[:, j, :])
        obs_by_metric.append((ii, tt, panel.values[ii, j, tt]))
    ctx = FitContext(
        spec=spec, rng=rng, values=panel.values, observed=observed,
        obs_f=observed.astype(float), missing=missing, usable=usable,
        X=X, D=D, G=G, Gm=Gm, obs_by_metric=obs_by_metric,
        n_obs=int(observed.sum()), n_usable=int(usable.sum()),
    )
    ctx.thr_step = np.full(panel.J, spec.threshold_step)
    ctx.spx_conc = spec.simplex_concentration
    ctx.w_conc = np.full((Mx, n), spec.weight_concentration)
    return ctx


def compute_mu(state: ChainState):
    """Latent-response means beta0 + sum_m beta_m * y_m, shape (n, J, Tmax)."""
    y0 = np.nan_to_num(state.y)
    return state.beta0[:, :, None] + np.einsum("mnj,mnt->njt", state.beta, y0)


def dlm_mean(state: ChainState, ctx: FitContext):
    """Distributed-lag prior means of the factors, shape (Mf, n, Tmax)."""
    contrib = np.einsum("mntl,mnl->mnt", ctx.X, state.alpha_ind)
    if ctx.Mf == 1:
        return contrib.sum(axis=0, keepdims=True)
    return contrib


# ---------------------------------------------------------------------------
# full-conditional updates

def sample_ztilde(state: ChainState, ctx: FitContext):
    """Latent continuous responses: truncated draws inside the observed
    category's threshold interval; missing cells imputed untruncated."""
    mu = compute_mu(state)
    sigma = math.sqrt(state.var_simplex[0])
    edges = state.threshold_edges()
    for j in range(ctx.J):
        ii, tt, cats = ctx.obs_by_metric[j]
        if ii.size:
            lo = edges[j, cats - 1]
            hi = edges[j, cats]
            state.ztilde[ii, j, tt] = sample_truncnorm(ctx.rng, mu[ii, j, tt], sigma, lo, hi)
    nmiss = int(ctx.missing.sum())
    if nmiss:
        state.ztilde[ctx.missing] = mu[ctx.missing] + sigma * ctx.rng.standard_normal(nmiss)


def sample_factors(state: ChainState, ctx: FitContext):
    """Latent factors from their Gaussian full conditionals: DLM prior plus
    the observed metrics' probit-regression contributions."""
    s2 = state.var_simplex[0]
    d = dlm_mean(state, ctx)
    zt0 = np.where(ctx.observed, state.ztilde, 0.0)
    for m in range(ctx.Mf):
        tau2 = state.var_simplex[1 + m]
        resid = zt0 - state.beta0[:, :, None]
        for mm in range(ctx.Mf):
            if mm != m:
                resid = resid - state.beta[mm][:, :, None] * np.nan_to_num(state.y[mm])[:, None, :]
        b = state.beta[m]
        prec = 1.0 / tau2 + np.einsum("nj,njt->nt", b * b, ctx.obs_f) / s2
        num = d[m] / tau2 + np.einsum("nj,njt->nt", b, ctx.obs_f * resid) / s2
        mean = num / prec
        draw = mean + np.sqrt(1.0 / prec) * ctx.rng.standard_normal(mean.shape)
        state.y[m][ctx.usable] = draw[ctx.usable]


def sample_loadings(state: ChainState, ctx: FitContext):
    """Intercepts and non-anchored loadings from the conjugate Gaussian
    regression of ztilde on (1, y); the anchored first metric keeps its
    loadings at 1 and only refreshes its intercept."""
    s2 = state.var_simplex[0]
    v0 = ctx.spec.coef_prior_variance
    Mf = ctx.Mf
    zt0 = np.where(ctx.observed, state.ztilde, 0.0)
    y0 = np.nan_to_num(state.y)
    cnt = ctx.obs_f.sum(axis=2)                                    # (n, J)
    sz = (ctx.obs_f * zt0).sum(axis=2)
    sy = np.einsum("njt,mnt->mnj", ctx.obs_f, y0)
    syy = np.einsum("njt,mnt,knt->mknj", ctx.obs_f, y0, y0)
    syz = np.einsum("njt,mnt->mnj", ctx.obs_f * zt0, y0)
    p = 1 + Mf
    xtx = np.empty((ctx.n, ctx.J, p, p))
    xty = np.empty((ctx.n, ctx.J, p))
    xtx[:, :, 0, 0] = cnt
    xty[:, :, 0] = sz
    for m in range(Mf):
        xtx[:, :, 0, 1 + m] = xtx[:, :, 1 + m, 0] = sy[m]
        xty[:, :, 1 + m] = syz[m]
        for k in range(Mf):
            xtx[:, :, 1 + m, 1 + k] = syy[m, k]
    mean, prec = conjugate_regression_moments(xtx, xty, s2, 0.0, 1.0 / v0)
    draw = draw_from_precision(ctx.rng, mean, prec)
    state.beta0[:, 1:] = draw[:, 1:, 0]
    for m in range(Mf):
        state.beta[m][:, 1:] = draw[:, 1:, 1 + m]
    # anchored metric: slopes pinned at 1, intercept-only conjugate update
    num = sz[:, 0] - sum(sy[m][:, 0] for m in range(Mf))
    prec0 = cnt[:, 0] / s2 + 1.0 / v0
    mean0 = (num / s2) / prec0
    state.beta0[:, 0] = mean0 + np.sqrt(1.0 / prec0) * ctx.rng.standard_normal(ctx.n)


def sample_lag_coefficients(state: ChainState, ctx: FitContext):
    """Individual lag coefficients from their conjugate Gaussian regression
    full conditional, pooled toward the global means.  In the univariate
    factor form the workload and recovery blocks form one stacked
    regression; in the bivariate form each factor regresses on its own
    covariate."""
    if ctx.Mf == 1:
        tau2 = state.var_simplex[1]
        y0 = np.where(ctx.usable, state.y[0], 0.0)
        xty = np.einsum("ntp,nt->np", ctx.D, y0)
        prior_mean = state.alpha_global.reshape(-1)
        prior_prec = 1.0 / state.psi.reshape(-1)
        mean, prec = conjugate_regression_moments(ctx.G, xty, tau2, prior_mean, prior_prec)
        draw = draw_from_precision(ctx.rng, mean, prec)
        state.alpha_ind[:] = draw.reshape(ctx.n, ctx.Mx, ctx.L + 1).swapaxes(0, 1)
    else:
        for m in range(ctx.Mx):
            tau2 = state.var_simplex[1 + m]
            y0 = np.where(ctx.usable, state.y[m], 0.0)
            xty = np.einsum("ntl,nt->nl", ctx.X[m], y0)
            mean, prec = conjugate_regression_moments(
                ctx.Gm[m], xty, tau2, state.alpha_global[m], 1.0 / state.psi[m])
            state.alpha_ind[m] = draw_from_precision(ctx.rng, mean, prec)


def sample_global_lag(state: ChainState, ctx: FitContext):
    """Global lag means (conjugate Gaussian across individuals) and pooling
    variances (conjugate inverse-gamma)."""
    spec = ctx.spec
    mean, var = global_mean_moments(
        state.alpha_ind.sum(axis=1), ctx.n, state.psi, spec.coef_prior_variance)
    state.alpha_global = mean + np.sqrt(var) * ctx.rng.standard_normal(mean.shape)
    dev = state.alpha_ind - state.alpha_global[:, None, :]
    ss = np.minimum((dev * dev).sum(axis=1), 1e300)
    g = ctx.rng.gamma(spec.ig_shape + 0.5 * ctx.n, 1.0 / (spec.ig_rate + 0.5 * ss))
    state.psi = 1.0 / np.clip(g, 1.0 / PSI_MAX, 1.0 / PSI_MIN)


def ordinal_loglik(theta_j, mu, sigma, cats):
    """Marginal ordinal log-likelihood of one metric's observed categories:
    sum of log interval probabilities of N(mu, sigma^2) between consecutive
    thresholds.  Per-cell values are floored at the subnormal limit so that
    Metropolis ratios stay finite under extreme underflow."""
    edges = np.concatenate(([-np.inf], theta_j, [np.inf]))
    a = (edges[cats - 1] - mu) / sigma
    b = (edges[cats] - mu) / sigma
    lp = np.maximum(log_interval_prob(a, b), LOGPROB_FLOOR)
    return float(lp.sum())


def threshold_log_accept(theta_j, prop_theta_j, mu, sigma, cats, inc_var):
    """Log acceptance ratio of a threshold random-walk move for one metric:
    ordinal likelihood ratio (latent responses marginalized out) plus the
    Gaussian prior ratio on the log increments."""
    tilde = np.log(np.diff(theta_j))
    prop_tilde = np.log(np.diff(prop_theta_j))
    ll = ordinal_loglik(prop_theta_j, mu, sigma, cats) - ordinal_loglik(theta_j, mu, sigma, cats)
    lp = -0.5 * (float(prop_tilde @ prop_tilde) - float(tilde @ tilde)) / inc_var
    return ll + lp


def sample_thresholds(state: ChainState, ctx: FitContext):
    """Per-metric joint random-walk Metropolis on the K-2 log increments.
    On acceptance the metric's latent responses are redrawn inside the new
    intervals, which keeps the move a valid joint proposal and preserves
    the interval invariant."""
    K = ctx.spec.K
    if K <= 2:
        return
    sigma = math.sqrt(state.var_simplex[0])
    mu = compute_mu(state)
    for j in range(ctx.J):
        tilde = np.log(np.diff(state.theta[j]))
        prop_tilde = tilde + ctx.thr_step[j] * ctx.rng.standard_normal(K - 2)
        prop_theta = np.concatenate(([0.0], np.cumsum(np.exp(prop_tilde))))
        ii, tt, cats = ctx.obs_by_metric[j]
        mu_j = mu[ii, j, tt]
        la = threshold_log_accept(state.theta[j], prop_theta, mu_j, sigma, cats,
                                  ctx.spec.threshold_increment_variance)
        accept = math.log(ctx.rng.uniform()) < la
        ctx.count(f"thresholds[{j}]", accept)
        if accept:
            state.theta[j] = prop_theta
            if ii.size:
                edges = np.concatenate(([-np.inf], prop_theta, [np.inf]))
                state.ztilde[ii, j, tt] = sample_truncnorm(
                    ctx.rng, mu_j, sigma, edges[cats - 1], edges[cats])


def sample_variance_simplex(state: ChainState, ctx: FitContext):
    """Metropolis move of (sigma^2, tau^2[, tau2^2]) on the simplex via a
    Dirichlet proposal centered at the current point."""
    s = state.var_simplex
    prop = ctx.rng.dirichlet(ctx.spx_conc * s)
    if np.any(prop <= SIMPLEX_FLOOR) or not np.all(np.isfinite(prop)):
        ctx.count("variance_simplex", False)
        return
    prop = prop / prop.sum()
    mu = compute_mu(state)
    d = dlm_mean(state, ctx)
    ssz = float(((state.ztilde - mu)[ctx.observed] ** 2).sum())
    ssy = [float(((state.y[m] - d[m])[ctx.usable] ** 2).sum()) for m in range(ctx.Mf)]

    def loglik(v):
        out = -0.5 * (ctx.n_obs * math.log(v[0]) + ssz / v[0])
        for m in range(ctx.Mf):
            out -= 0.5 * (ctx.n_usable * math.log(v[1 + m]) + ssy[m] / v[1 + m])
        return out

    prior = np.full(ctx.Mf + 1, ctx.spec.dirichlet_concentration)
    la = (loglik(prop) + dirichlet_logpdf(prop, prior)
          + dirichlet_logpdf(s, ctx.spx_conc * prop)) \
        - (loglik(s) + dirichlet_logpdf(s, prior)
           + dirichlet_logpdf(prop, ctx.spx_conc * s))
    accept = math.log(ctx.rng.uniform()) < la
    ctx.count("variance_simplex", accept)
    if accept:
        state.var_simplex = prop


def sample_constrained_lags(state: ChainState, ctx: FitContext):
    """Ecological-memory variant: per (covariate, individual) Metropolis
    update of nonnegative lag weights summing to 1, with a Dirichlet prior
    and the Gaussian factor likelihood.  Replaces the Gaussian pooling
    hierarchy entirely."""
    Lp1 = ctx.L + 1
    if Lp1 == 1:
        state.alpha_ind[:] = 1.0
        return
    prior = np.full(Lp1, ctx.spec.lag_weight_concentration)
    contrib = np.einsum("mntl,mnl->mnt", ctx.X, state.alpha_ind)
    for m in range(ctx.Mx):
        fm = 0 if ctx.Mf == 1 else m
        tau2 = state.var_simplex[1 + fm]
        for i in range(ctx.n):
            w = state.alpha_ind[m, i]
            conc = ctx.w_conc[m, i]
            prop = ctx.rng.dirichlet(conc * w)
            if np.any(prop <= SIMPLEX_FLOOR) or not np.all(np.isfinite(prop)):
                ctx.count("constrained_lags", False)
                continue
            prop = prop / prop.sum()
            u = ctx.usable[i]
            if ctx.Mf == 1:
                d_cur = contrib[:, i].sum(axis=0)
                d_prop = d_cur - contrib[m, i] + ctx.X[m, i] @ prop
            else:
                d_cur = contrib[m, i]
                d_prop = ctx.X[m, i] @ prop
            y_i = np.where(u, state.y[fm, i], 0.0)
            ss_cur = float(((y_i - d_cur)[u] ** 2).sum())
            ss_prop = float(((y_i - d_prop)[u] ** 2).sum())
            la = (-0.5 * (ss_prop - ss_cur) / tau2
                  + float(((prior - 1.0) * (np.log(prop) - np.log(w))).sum())
                  + dirichlet_logpdf(w, conc * prop)
                  - dirichlet_logpdf(prop, conc * w))
            accept = math.log(ctx.rng.uniform()) < la
            ctx.count("constrained_lags", accept)
            if accept:
                state.alpha_ind[m, i] = prop
                contrib[m, i] = ctx.X[m, i] @ prop


def sweep(state: ChainState, ctx: FitContext):
    sample_ztilde(state, ctx)
    sample_factors(state, ctx)
    sample_loadings(state, ctx)
    if ctx.spec.constrained_lags:
        sample_constrained_lags(state, ctx)
    else:
        sample_lag_coefficients(state, ctx)
        sample_global_lag(state, ctx)
    sample_thresholds(state, ctx)
    sample_variance_simplex(state, ctx)


# ---------------------------------------------------------------------------
# initialization, adaptation, chain driver

def initial_state(panel: OrdinalPanel, ctx: FitContext) -> ChainState:
    """Deterministic start in the typical set: thresholds at unit
    increments, intercepts from per-cell category-frequency probit
    quantiles, loadings at the anchor value, lag coefficients at zero
    (uniform weights when constrained), the variance simplex at its prior
    mean, and latent responses at interval midpoints."""
    spec = ctx.spec
    n, J, Tmax = panel.values.shape
    K, Mf, Mx, L = spec.K, ctx.Mf, ctx.Mx, ctx.L
    theta = np.tile(np.arange(K - 1, dtype=float), (J, 1))
    beta = np.ones((Mf, n, J))
    beta0 = np.zeros((n, J))
    for i in range(n):
        for j in range(J):
            cells = panel.values[i, j][ctx.observed[i, j]]
            if cells.size == 0:
                beta0[i, j] = 0.5 * (K - 2)
                continue
            cum = np.array([(cells <= k).mean() for k in range(1, K)])
            eps = 0.5 / cells.size
            cum = np.clip(cum, eps, 1.0 - eps)
            beta0[i, j] = float(np.mean(theta[j] - ndtri(cum)))
    if spec.constrained_lags:
        alpha_ind = np.full((Mx, n, L + 1), 1.0 / (L + 1))
        alpha_global = None
        psi = None
    else:
        alpha_ind = np.zeros((Mx, n, L + 1))
        alpha_global = np.zeros((Mx, L + 1))
        psi = np.ones((Mx, L + 1))
    var_simplex = np.full(Mf + 1, 1.0 / (Mf + 1))
    y = np.where(ctx.usable, 0.0, np.nan)[None, :, :].repeat(Mf, axis=0).copy()
    ztilde = np.full((n, J, Tmax), np.nan)
    miss = ctx.missing
    ztilde[miss] = np.broadcast_to(beta0[:, :, None], miss.shape)[miss]
    edges = np.concatenate([np.zeros((J, 1)) - np.inf,
                            theta, np.zeros((J, 1)) + np.inf], axis=1)
    for j in range(J):
        ii, tt, cats = ctx.obs_by_metric[j]
        lo = edges[j, cats - 1]
        hi = edges[j, cats]
        mid = np.where(np.isneginf(lo), hi - 0.5,
                       np.where(np.isposinf(hi), lo + 0.5, 0.5 * (lo + hi)))
        ztilde[ii, j, tt] = mid
    return ChainState(ztilde=ztilde, y=y, beta0=beta0, beta=beta,
                      alpha_ind=alpha_ind, alpha_global=alpha_global, psi=psi,
                      theta=theta, var_simplex=var_simplex)


def _adapt(ctx: FitContext, batch_no: int, batch_counts: dict):
    """Robbins-Monro style scale adaptation toward the target acceptance
    rate; called at batch boundaries during burn-in only."""
    target = ctx.spec.adapt_target
    delta = min(0.1, batch_no ** -0.5)
    for j in range(ctx.J):
        att, acc = batch_counts.get(f"thresholds[{j}]", (0, 0))
        if att:
            ctx.thr_step[j] *= math.exp(delta if acc / att > target else -delta)
    att, acc = batch_counts.get("variance_simplex", (0, 0))
    if att:
        # larger concentration = smaller steps, so the sign flips
        ctx.spx_conc *= math.exp(-delta if acc / att > target else delta)
        ctx.spx_conc = min(max(ctx.spx_conc, 1.0), 1e8)
    att, acc = batch_counts.get("constrained_lags", (0, 0))
    if att:
        ctx.w_conc *= math.exp(-delta if acc / att > target else delta)
        np.clip(ctx.w_conc, 1.0, 1e8, out=ctx.w_conc)


def run_chain(panel: OrdinalPanel, covs: CovariatePanel, spec: ModelSpec, *,
              chain_index: int = 0, prior_only: bool = False,
              progress=None) -> PosteriorDraws:
    """Run one chain and return thinned post-burn-in draws.

    Deterministic given (spec.seed, chain_index).  Every retained state is
    invariant-checked; a violation raises InvariantViolationError with the
    iteration index.  `prior_only` disables the ordinal likelihood (all
    cells treated as missing) so draws target the joint prior; it exists
    for sampler-correctness tests.
    """
    report = validate_panel(panel, covs, spec)
    if not report.ok:
        raise ValidationFailedError(report)
    seq = np.random.SeedSequence(spec.seed).spawn(max(spec.chains, chain_index + 1))
    rng = np.random.default_rng(seq[chain_index])
    ctx = build_context(panel, covs, spec, rng, prior_only=prior_only)
    state = initial_state(panel, ctx)

    keep = range(spec.burn_in, spec.iterations, spec.thinning)
    n_keep = len(keep)
    Mf, Mx, L = ctx.Mf, ctx.Mx, ctx.L
    out = {
        "ztilde": np.empty((n_keep,) + state.ztilde.shape),
        "y": np.empty((n_keep,) + state.y.shape),
        "beta0": np.empty((n_keep,) + state.beta0.shape),
        "beta": np.empty((n_keep,) + state.beta.shape),
        "alpha_ind": np.empty((n_keep,) + state.alpha_ind.shape),
        "theta": np.empty((n_keep,) + state.theta.shape),
        "var_simplex": np.empty((n_keep, Mf + 1)),
    }
    constrained = spec.constrained_lags
    if not constrained:
        out["alpha_global"] = np.empty((n_keep, Mx, L + 1))
        out["psi"] = np.empty((n_keep, Mx, L + 1))

    kept = 0
    batch_no = 0
    last_counts = {k: list(v) for k, v in ctx.counters.items()}
    for it in range(spec.iterations):
        sweep(state, ctx)
        in_burn = it < spec.burn_in
        if in_burn and (it + 1) % spec.adapt_batch == 0:
            batch_no += 1
            batch = {}
            for k, (att, acc) in ctx.counters.items():
                p_att, p_acc = last_counts.get(k, (0, 0))
                batch[k] = (att - p_att, acc - p_acc)
            _adapt(ctx, batch_no, batch)
            last_counts = {k: list(v) for k, v in ctx.counters.items()}
        if in_burn and it == spec.burn_in - 1:
            # report post-burn-in acceptance rates only
            ctx.counters.clear()
        if not in_burn and (it - spec.burn_in) % spec.thinning == 0:
            problems = state.problems(observed=ctx.observed, values=ctx.values)
            if problems:
                raise InvariantViolationError(it, problems)
            for k, arr in out.items():
                arr[kept] = getattr(state, k)
            kept += 1
        if progress is not None and (it + 1) % max(1, spec.iterations // 20) == 0:
            progress(chain_index, it + 1, spec.iterations)

    acceptance = {k: (acc / att if att else float("nan"))
                  for k, (att, acc) in sorted(ctx.counters.items())}
    return PosteriorDraws(
        spec=spec,
        ztilde=out["ztilde"], y=out["y"], beta0=out["beta0"], beta=out["beta"],
        alpha_ind=out["alpha_ind"],
        alpha_global=None if constrained else out["alpha_global"],
        psi=None if constrained else out["psi"],
        theta=out["theta"], var_simplex=out["var_simplex"],
        chain_id=np.full(n_keep, chain_index, dtype=np.int64),
        day_index=panel.day_index, T=panel.T, usable=ctx.usable,
        observed=ctx.observed, values=panel.values,
        metric_names=panel.metric_names, athlete_ids=panel.athlete_ids,
        acceptance=acceptance, seed=spec.seed, spec_hash=spec.spec_hash(),
    )


def _chain_worker(args):
    panel, covs, spec, chain_index, prior_only = args
    return run_chain(panel, covs, spec, chain_index=chain_index, prior_only=prior_only)


def fit_model(panel: OrdinalPanel, covs: CovariatePanel, spec: ModelSpec, *,
              threads: int = 1, prior_only: bool = False,
              progress=None) -> PosteriorDraws:
    """Run spec.chains independent chains (parallel across processes when
    threads > 1) and concatenate their retained draws in chain order."""
    if spec.chains == 1:
        return run_chain(panel, covs, spec, prior_only=prior_only, progress=progress)
    jobs = [(panel, covs, spec, c, prior_only) for c in range(spec.chains)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=min(threads, spec.chains)) as pool:
            results = list(pool.map(_chain_worker, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_chain_worker(job))
            if progress is not None:
                progress(job[3], spec.iterations, spec.iterations)
    first = results[0]
    cat = lambda name: np.concatenate([getattr(r, name) for r in results], axis=0)
    acceptance = {}
    for k in first.acceptance:
        acceptance[k] = float(np.mean([r.acceptance[k] for r in results]))
    return PosteriorDraws(
        spec=spec,
        ztilde=cat("ztilde"), y=cat("y"), beta0=cat("beta0"), beta=cat("beta"),
        alpha_ind=cat("alpha_ind"),
        alpha_global=None if spec.constrained_lags else cat("alpha_global"),
        psi=None if spec.constrained_lags else cat("psi"),
        theta=cat("theta"), var_simplex=cat("var_simplex"),
        chain_id=cat("chain_id"),
        day_index=first.day_index, T=first.T, usable=first.usable,
        observed=first.observed, values=first.values,
        metric_names=first.metric_names, athlete_ids=first.athlete_ids,
        acceptance=acceptance, seed=spec.seed, spec_hash=spec.spec_hash(),
    )
