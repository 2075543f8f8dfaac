"""Synthetic panel generation from the full generative model, plus
independent brute-force oracles used by the test suite: an exact dynamic
programming 1-D k-means solver and a Gauss-Hermite marginal likelihood
for tiny instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import log_ndtr

from .errors import DegenerateInputError
from .panel import CovariatePanel, OrdinalPanel
from .preprocess import build_lag_design
from .truncnorm import log_interval_prob


@dataclass(frozen=True)
class TruthConfig:
    """Complete generative parameter set for synthetic panels.

    Satisfies the sampler's identifiability constraints: first-metric
    loadings anchored at 1, thresholds starting at exactly 0 and strictly
    increasing, variance simplex summing to 1.  Workload covariates are
    zero-inflated gamma (rest days), recovery is standard normal.
    """

    n: int
    J: int
    K: int
    T: int
    L: int
    factor_form: str                 # "univariate" | "bivariate"
    alpha_global: np.ndarray         # (2, L+1)
    psi: np.ndarray                  # (2, L+1) across-individual variances
    beta0: np.ndarray                # (n, J)
    beta: np.ndarray                 # (Mf, n, J), anchors 1 at j=0
    theta: np.ndarray                # (J, K-1), first column 0
    var_simplex: np.ndarray          # (Mf + 1,)
    rest_prob: float = 0.4
    workload_gamma_shape: float = 2.0
    workload_gamma_scale: float = 1.0
    missing_rate: float = 0.0
    constrained_lags: bool = False   # alpha rows are simplex weights
    seed: int = 0
    metric_names: tuple = ()
    athlete_ids: tuple = ()

    def __post_init__(self):
        for name in ("alpha_global", "psi", "beta0", "beta", "theta", "var_simplex"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        if not self.metric_names:
            object.__setattr__(self, "metric_names",
                               tuple(f"metric_{j + 1}" for j in range(self.J)))
        if not self.athlete_ids:
            object.__setattr__(self, "athlete_ids",
                               tuple(f"A{i + 1:03d}" for i in range(self.n)))

    @property
    def n_factors(self):
        return 1 if self.factor_form == "univariate" else 2

    def problems(self):
        out = []
        if np.any(self.theta[:, 0] != 0.0):
            out.append("theta first column must be exactly 0")
        if self.theta.shape[1] > 1 and np.any(np.diff(self.theta, axis=1) <= 0):
            out.append("theta rows must be strictly increasing")
        if np.any(self.beta[:, :, 0] != 1.0):
            out.append("first-metric loadings must be anchored at 1")
        if abs(float(self.var_simplex.sum()) - 1.0) > 1e-12 or np.any(self.var_simplex <= 0):
            out.append("var_simplex must be positive and sum to 1")
        if np.any(self.psi < 0):
            out.append("psi must be nonnegative")
        if self.constrained_lags:
            if np.any(self.alpha_global < 0) or \
               np.any(np.abs(self.alpha_global.sum(axis=1) - 1.0) > 1e-12):
                out.append("constrained alpha rows must be nonnegative and sum to 1")
        return out

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TruthRecord:
    """Hidden generative quantities retained for recovery scoring."""

    alpha_ind: np.ndarray    # (2, n, L+1)
    y: np.ndarray            # (Mf, n, T)
    ztilde: np.ndarray       # (n, J, T)
    usable: np.ndarray       # (n, T)


def generate_panel(truth: TruthConfig):
    """Draw (OrdinalPanel, CovariatePanel, TruthRecord) from the generative
    model: covariates, individual lag coefficients from the pooling
    hierarchy, factors from the distributed lag model, latent responses,
    and finally ordinal categories by thresholding.

    The lag design applies the same per-individual standardization used at
    fit time, so fitted coefficients are directly comparable to the truth.
    Deterministic given truth.seed.
    """
    bad = truth.problems()
    if bad:
        raise DegenerateInputError("invalid TruthConfig: " + "; ".join(bad))
    rng = np.random.default_rng(truth.seed)
    n, J, K, T, L = truth.n, truth.J, truth.K, truth.T, truth.L
    Mf = truth.n_factors

    rest = rng.uniform(size=(n, T)) < truth.rest_prob
    workload = np.where(rest, 0.0, rng.gamma(truth.workload_gamma_shape,
                                             truth.workload_gamma_scale, size=(n, T)))
    recovery = rng.standard_normal((n, T))
    day_index = np.tile(np.arange(T, dtype=np.int64), (n, 1))
    Tarr = np.full(n, T, dtype=np.int64)
    covs = CovariatePanel(series=np.stack([workload, recovery]), L=L,
                          day_index=day_index, T=Tarr)
    design = build_lag_design(covs, L)
    usable = design.usable

    if truth.constrained_lags:
        alpha_ind = np.broadcast_to(truth.alpha_global[:, None, :], (2, n, L + 1)).copy()
    else:
        alpha_ind = truth.alpha_global[:, None, :] + \
            np.sqrt(truth.psi)[:, None, :] * rng.standard_normal((2, n, L + 1))

    X = np.where(usable[None, :, :, None], design.design, 0.0)
    contrib = np.einsum("mntl,mnl->mnt", X, alpha_ind)
    d = contrib.sum(axis=0, keepdims=True) if Mf == 1 else contrib
    tau = np.sqrt(truth.var_simplex[1:])
    y = d + tau[:, None, None] * rng.standard_normal((Mf, n, T))
    y[:, ~usable] = np.nan

    sigma = float(np.sqrt(truth.var_simplex[0]))
    mu = truth.beta0[:, :, None] + np.einsum("mnj,mnt->njt", truth.beta, np.nan_to_num(y))
    ztilde = mu + sigma * rng.standard_normal((n, J, T))
    ztilde[~usable[:, None, :].repeat(J, axis=1)] = np.nan

    values = np.zeros((n, J, T), dtype=np.int64)
    for j in range(J):
        cuts = truth.theta[j]
        values[:, j, :] = np.searchsorted(cuts, np.nan_to_num(ztilde[:, j, :]),
                                          side="left") + 1
    values[~usable[:, None, :].repeat(J, axis=1)] = 0
    if truth.missing_rate > 0:
        drop = rng.uniform(size=values.shape) < truth.missing_rate
        values[drop] = 0

    panel = OrdinalPanel(values=values, day_index=day_index, T=Tarr, K=K,
                         metric_names=truth.metric_names,
                         athlete_ids=truth.athlete_ids)
    record = TruthRecord(alpha_ind=alpha_ind, y=y, ztilde=ztilde, usable=usable)
    return panel, covs, record


# ---------------------------------------------------------------------------
# Gauss-Hermite marginal likelihood oracle (tiny instances only)

def oracle_marginal_likelihood(panel: OrdinalPanel, covs: CovariatePanel, *,
                               beta0, beta, alpha_ind, theta, var_simplex,
                               quadrature_nodes: int = 40) -> float:
    """Exact ordinal-data log-likelihood of a univariate-factor model with
    the daily factor integrated out by Gauss-Hermite quadrature.

    Factors are independent across days given the lag design, so the
    integral factorizes per (individual, usable day):

        p_it = Integral N(y; d_it, tau^2) * prod_j P(Z_ijt | y) dy,

    each evaluated with `quadrature_nodes` Hermite nodes.  Refuses
    instances beyond T <= 5 or J > 3 (this is a brute-force test oracle,
    not an inference path).
    """
    if panel.J > 3 or int(panel.T.max()) > 5:
        raise DegenerateInputError(
            f"oracle limited to T <= 5 and J <= 3, got T={int(panel.T.max())}, J={panel.J}")
    beta = np.asarray(beta, float)
    if beta.shape[0] != 1:
        raise DegenerateInputError("oracle supports the univariate factor form only")
    beta0 = np.asarray(beta0, float)
    theta = np.asarray(theta, float)
    var_simplex = np.asarray(var_simplex, float)
    alpha_ind = np.asarray(alpha_ind, float)

    design = build_lag_design(covs)
    X = np.where(design.usable[None, :, :, None], design.design, 0.0)
    d = np.einsum("mntl,mnl->nt", X, alpha_ind)
    sigma = float(np.sqrt(var_simplex[0]))
    tau = float(np.sqrt(var_simplex[1]))

    nodes, weights = np.polynomial.hermite.hermgauss(quadrature_nodes)
    logw = np.log(weights) - 0.5 * np.log(np.pi)

    edges = np.concatenate([np.full((panel.J, 1), -np.inf), theta,
                            np.full((panel.J, 1), np.inf)], axis=1)
    total = 0.0
    for i in range(panel.n):
        for t in range(int(panel.T[i])):
            if not design.usable[i, t]:
                continue
            yq = d[i, t] + np.sqrt(2.0) * tau * nodes       # (Q,)
            log_pz = np.zeros_like(yq)
            for j in range(panel.J):
                k = int(panel.values[i, j, t])
                if k == 0:
                    continue
                mu = beta0[i, j] + beta[0, i, j] * yq
                a = (edges[j, k - 1] - mu) / sigma
                b = (edges[j, k] - mu) / sigma
                log_pz += log_interval_prob(a, b)
            m = np.max(logw + log_pz)
            total += m + np.log(np.exp(logw + log_pz - m).sum())
    return float(total)


# ---------------------------------------------------------------------------
# exact 1-D k-means oracle

@dataclass(frozen=True)
class DPClustering:
    centers: np.ndarray
    objective: float
    assignment: np.ndarray   # cluster index per sorted input position


def kmeans_dp_oracle(values, k) -> DPClustering:
    """Globally optimal 1-D k-means via dynamic programming over sorted
    values (optimal clusters are contiguous in sorted order).  Quadratic in
    the input size, so capped at 200 points."""
    values = np.sort(np.asarray(values, float))
    N = len(values)
    if N > 200:
        raise DegenerateInputError(f"DP oracle capped at 200 points, got {N}")
    if k < 1 or k > N:
        raise DegenerateInputError(f"need 1 <= k <= {N}, got {k}")
    ps = np.concatenate([[0.0], np.cumsum(values)])
    ps2 = np.concatenate([[0.0], np.cumsum(values * values)])

    def seg_cost(a, b):
        # within-cluster SS of values[a:b]
        cnt = b - a
        s = ps[b] - ps[a]
        return (ps2[b] - ps2[a]) - s * s / cnt

    big = np.inf
    cost = np.full((k + 1, N + 1), big)
    split = np.zeros((k + 1, N + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for c in range(1, k + 1):
        for b in range(c, N + 1):
            best, arg = big, c - 1
            for a in range(c - 1, b):
                v = cost[c - 1, a] + seg_cost(a, b)
                if v < best:
                    best, arg = v, a
            cost[c, b] = best
            split[c, b] = arg
    bounds = [N]
    for c in range(k, 0, -1):
        bounds.append(int(split[c, bounds[-1]]))
    bounds = bounds[::-1]
    centers = np.array([values[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
    assignment = np.empty(N, dtype=np.int64)
    for c, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        assignment[a:b] = c
    return DPClustering(centers=centers, objective=float(cost[k, N]),
                        assignment=assignment)
