"""Core domain types: ordinal response panels, covariate panels, model
configuration, sampler state, and retained posterior draws.

All containers are value objects: arrays are coerced and frozen at
construction so instances can be shared read-only across threads.
Ordinal values use 0 as the missing marker; categories are 1..K.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, asdict

import numpy as np

MISSING = 0

SIMPLEX_TOL = 1e-12


def _frozen(a, dtype):
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class OrdinalPanel:
    """Observed ordinal responses for n individuals x J metrics x T_i days.

    values[i, j, t] is the category in 1..K, or 0 when the survey cell is
    missing.  Rows beyond T[i] are padding.  day_index holds the calendar
    day number of each row (-1 in the padded region); gaps between
    consecutive day numbers are real calendar gaps.
    """

    values: np.ndarray       # (n, J, Tmax) int
    day_index: np.ndarray    # (n, Tmax) int
    T: np.ndarray            # (n,) rows per individual
    K: int
    metric_names: tuple
    athlete_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.int64))
        object.__setattr__(self, "day_index", _frozen(self.day_index, np.int64))
        object.__setattr__(self, "T", _frozen(self.T, np.int64))
        object.__setattr__(self, "metric_names", tuple(self.metric_names))
        object.__setattr__(self, "athlete_ids", tuple(self.athlete_ids))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def J(self):
        return self.values.shape[1]

    @property
    def Tmax(self):
        return self.values.shape[2]

    def row_mask(self):
        """(n, Tmax) bool, True on real (non-padding) rows."""
        return np.arange(self.Tmax)[None, :] < self.T[:, None]


@dataclass
class RawPanel:
    """Parsed raw survey rows, padded per athlete: ordinal metrics on the
    original 1..10 scale plus the training/recovery source columns."""

    athlete_ids: tuple
    metric_names: tuple
    day_index: np.ndarray      # (n, Tmax)
    T: np.ndarray              # (n,)
    metrics: np.ndarray        # (n, J, Tmax) float, NaN = missing
    rpe: np.ndarray            # (n, Tmax)
    duration: np.ndarray
    sleep_hours: np.ndarray
    sleep_quality: np.ndarray

    @property
    def n(self):
        return len(self.athlete_ids)

    @property
    def J(self):
        return len(self.metric_names)


@dataclass(frozen=True)
class CovariatePanel:
    """Daily covariate series aligned row-for-row with an OrdinalPanel.

    series[m, i, t]: m=0 workload (effort x hours), m=1 recovery score.
    NaN marks a day with no covariate record.  A row is *usable* when the
    L+1 calendar days ending at that row all carry finite covariates;
    only usable rows enter the likelihood.
    """

    series: np.ndarray       # (M, n, Tmax) float
    L: int
    day_index: np.ndarray    # (n, Tmax) int, same layout as the panel
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "series", _frozen(self.series, np.float64))
        object.__setattr__(self, "day_index", _frozen(self.day_index, np.int64))
        object.__setattr__(self, "T", _frozen(self.T, np.int64))
        usable, valid_start = lag_usable_mask(self.series, self.day_index, self.T, self.L)
        usable.flags.writeable = False
        valid_start.flags.writeable = False
        object.__setattr__(self, "usable", usable)
        object.__setattr__(self, "valid_start", valid_start)

    @property
    def M(self):
        return self.series.shape[0]


def lag_usable_mask(series, day_index, T, L):
    """Rows with a full L-day covariate history.

    Row t of individual i is usable iff calendar days d_t, d_t-1, ..., d_t-L
    are all present as rows with finite covariates for every m.  A calendar
    gap therefore breaks the lag history of the following L days.

    Returns (usable (n, Tmax) bool, valid_start (n,) first usable row or -1).
    """
    M, n, Tmax = series.shape
    usable = np.zeros((n, Tmax), dtype=bool)
    valid_start = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        Ti = int(T[i])
        days = day_index[i, :Ti]
        finite = np.isfinite(series[:, i, :Ti]).all(axis=0)
        day_ok = {int(d): bool(f) for d, f in zip(days, finite)}
        for t in range(Ti):
            d = int(days[t])
            usable[i, t] = all(day_ok.get(d - l, False) for l in range(L + 1))
        hits = np.nonzero(usable[i, :Ti])[0]
        if hits.size:
            valid_start[i] = hits[0]
    return usable, valid_start


@dataclass(frozen=True)
class ModelSpec:
    """Model form, lag depth, prior hyperparameters and MCMC controls.

    Defaults follow the reference configuration: N(0, 10) coefficient
    priors, Inverse-Gamma(0.01, 0.01) pooling variances, Dirichlet(10, ...)
    variance simplex, N(0, 1) threshold increments, lag depth 10, and a
    100,000-iteration chain with 20,000 burn-in.
    """

    factor_form: str = "univariate"        # "univariate" | "bivariate"
    lag_depth: int = 10
    K: int = 5
    constrained_lags: bool = False
    coef_prior_variance: float = 10.0
    ig_shape: float = 0.01
    ig_rate: float = 0.01
    dirichlet_concentration: float = 10.0
    threshold_increment_variance: float = 1.0
    lag_weight_concentration: float = 1.0
    iterations: int = 100_000
    burn_in: int = 20_000
    thinning: int = 10
    threshold_step: float = 0.1
    simplex_concentration: float = 200.0
    weight_concentration: float = 100.0
    adapt_target: float = 0.3
    adapt_batch: int = 50
    seed: int = 0
    chains: int = 1

    @property
    def n_factors(self):
        return 1 if self.factor_form == "univariate" else 2

    def problems(self):
        """Invariant violations of the spec itself (empty list when valid)."""
        out = []
        if self.factor_form not in ("univariate", "bivariate"):
            out.append(f"factor_form must be univariate or bivariate, got {self.factor_form!r}")
        if self.lag_depth < 0:
            out.append("lag_depth must be >= 0")
        if self.K < 2:
            out.append("K must be >= 2")
        if not self.iterations > self.burn_in >= 0:
            out.append("need iterations > burn_in >= 0")
        if self.thinning < 1:
            out.append("thinning must be >= 1")
        for name in ("coef_prior_variance", "ig_shape", "ig_rate",
                     "dirichlet_concentration", "threshold_increment_variance",
                     "lag_weight_concentration", "threshold_step",
                     "simplex_concentration", "weight_concentration"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        if self.chains < 1:
            out.append("chains must be >= 1")
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ChainState:
    """One full parameter configuration of the sampler.

    Identifiability constraints carried by the state:
      theta[j, 0] == 0 and theta[j] strictly increasing, per metric j;
      beta[m, i, 0] == 1 (first metric anchors every factor);
      var_simplex > 0 and sums to 1 (sigma^2 first, then factor variances).
    ztilde / y are NaN on rows without full lag history (not modeled).
    """

    ztilde: np.ndarray        # (n, J, Tmax)
    y: np.ndarray             # (M_factors, n, Tmax)
    beta0: np.ndarray         # (n, J)
    beta: np.ndarray          # (M_factors, n, J)
    alpha_ind: np.ndarray     # (M_cov, n, L+1)
    alpha_global: np.ndarray | None   # (M_cov, L+1); None in constrained variant
    psi: np.ndarray | None            # (M_cov, L+1)
    theta: np.ndarray         # (J, K-1)
    var_simplex: np.ndarray   # (M_factors + 1,)

    def copy(self):
        return ChainState(
            ztilde=self.ztilde.copy(), y=self.y.copy(),
            beta0=self.beta0.copy(), beta=self.beta.copy(),
            alpha_ind=self.alpha_ind.copy(),
            alpha_global=None if self.alpha_global is None else self.alpha_global.copy(),
            psi=None if self.psi is None else self.psi.copy(),
            theta=self.theta.copy(), var_simplex=self.var_simplex.copy(),
        )

    def threshold_edges(self):
        """(J, K+1) category edges: -inf, theta row, +inf."""
        J, Km1 = self.theta.shape
        edges = np.empty((J, Km1 + 2))
        edges[:, 0] = -np.inf
        edges[:, 1:-1] = self.theta
        edges[:, -1] = np.inf
        return edges

    def problems(self, observed=None, values=None):
        """Invariant violations (empty list when the state is valid).

        observed/values: optional (n, J, Tmax) bool mask and category array;
        when given, every observed ztilde must lie inside its category's
        threshold interval.
        """
        out = []
        if np.any(self.theta[:, 0] != 0.0):
            out.append("theta first threshold not exactly 0")
        if self.theta.shape[1] > 1 and np.any(np.diff(self.theta, axis=1) <= 0):
            out.append("theta not strictly increasing")
        if np.any(self.beta[:, :, 0] != 1.0):
            out.append("anchored loadings (first metric) not exactly 1")
        if abs(float(self.var_simplex.sum()) - 1.0) > SIMPLEX_TOL:
            out.append(f"variance simplex sums to {self.var_simplex.sum()!r}")
        if np.any(self.var_simplex <= 0):
            out.append("variance simplex has a non-positive entry")
        if self.psi is not None and np.any(self.psi <= 0):
            out.append("psi has a non-positive entry")
        if observed is not None and np.any(observed):
            edges = self.threshold_edges()
            i_idx, j_idx, t_idx = np.nonzero(observed)
            k = values[i_idx, j_idx, t_idx]
            lo = edges[j_idx, k - 1]
            hi = edges[j_idx, k]
            zt = self.ztilde[i_idx, j_idx, t_idx]
            bad = ~((lo <= zt) & (zt <= hi))
            if np.any(bad):
                b = int(np.argmax(bad))
                out.append(
                    "ztilde outside category interval at "
                    f"(i={i_idx[b]}, j={j_idx[b]}, t={t_idx[b]}): "
                    f"{zt[b]!r} not in ({lo[b]!r}, {hi[b]!r}]"
                )
        return out


@dataclass
class PosteriorDraws:
    """Thinned retained chain states plus the panel context needed to
    compute posterior summaries, stacked along a leading draw axis."""

    spec: ModelSpec
    ztilde: np.ndarray        # (D, n, J, Tmax)
    y: np.ndarray             # (D, M_factors, n, Tmax)
    beta0: np.ndarray         # (D, n, J)
    beta: np.ndarray          # (D, M_factors, n, J)
    alpha_ind: np.ndarray     # (D, M_cov, n, L+1)
    alpha_global: np.ndarray | None
    psi: np.ndarray | None
    theta: np.ndarray         # (D, J, K-1)
    var_simplex: np.ndarray   # (D, M_factors + 1)
    chain_id: np.ndarray      # (D,)
    day_index: np.ndarray     # (n, Tmax)
    T: np.ndarray             # (n,)
    usable: np.ndarray        # (n, Tmax) bool
    observed: np.ndarray      # (n, J, Tmax) bool
    values: np.ndarray        # (n, J, Tmax) int
    metric_names: tuple
    athlete_ids: tuple
    acceptance: dict
    seed: int
    spec_hash: str

    @property
    def num_draws(self):
        return self.ztilde.shape[0]

    @property
    def n_factors(self):
        return self.y.shape[1]

    def state_at(self, d):
        """Reassemble draw d as a ChainState (for invariant re-checks)."""
        return ChainState(
            ztilde=self.ztilde[d], y=self.y[d], beta0=self.beta0[d],
            beta=self.beta[d], alpha_ind=self.alpha_ind[d],
            alpha_global=None if self.alpha_global is None else self.alpha_global[d],
            psi=None if self.psi is None else self.psi[d],
            theta=self.theta[d], var_simplex=self.var_simplex[d],
        )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    athlete: str | None = None
    metric: str | None = None
    day: int | None = None

    def format(self):
        where = ", ".join(
            f"{k}={v}"
            for k, v in (("athlete", self.athlete), ("metric", self.metric), ("day", self.day))
            if v is not None
        )
        return f"[{self.code}] {self.message}" + (f" ({where})" if where else "")


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, code, message, **loc):
        self.violations.append(Violation(code, message, **loc))

    def format_lines(self):
        if self.ok:
            return ["ok: no violations"]
        return [v.format() for v in self.violations]


def validate_panel(panel: OrdinalPanel, covs: CovariatePanel, spec: ModelSpec) -> ValidationReport:
    """Check every structural invariant required before model fitting.

    Report-only: all violations are collected with their (athlete, metric,
    day) locations; fitting may proceed iff the report is empty.
    """
    report = ValidationReport()
    for msg in spec.problems():
        report.add("model-spec", msg)

    if panel.n < 1:
        report.add("panel-shape", "need at least one individual")
    if panel.J < 1:
        report.add("panel-shape", "need at least one metric")
    if panel.K < 2:
        report.add("panel-shape", f"K must be >= 2, got {panel.K}")
    if spec.K != panel.K:
        report.add("panel-shape", f"spec.K={spec.K} does not match panel K={panel.K}")

    for i, aid in enumerate(panel.athlete_ids):
        Ti = int(panel.T[i])
        if Ti < 1:
            report.add("panel-shape", "individual has no rows", athlete=aid)
            continue
        days = panel.day_index[i, :Ti]
        if Ti > 1 and np.any(np.diff(days) <= 0):
            t_bad = int(np.nonzero(np.diff(days) <= 0)[0][0]) + 1
            report.add("day-order", "day_index not strictly increasing",
                       athlete=aid, day=int(days[t_bad]))

    # category range: every non-missing value in 1..K
    rows = panel.row_mask()[:, None, :]
    bad = rows & (panel.values != MISSING) & ((panel.values < 1) | (panel.values > panel.K))
    for i, j, t in zip(*np.nonzero(bad)):
        report.add(
            "category-range",
            f"value {int(panel.values[i, j, t])} outside 1..{panel.K}",
            athlete=panel.athlete_ids[i], metric=panel.metric_names[j],
            day=int(panel.day_index[i, t]),
        )

    # workload (m=0) nonnegative where present
    if covs.M >= 1:
        w = covs.series[0]
        neg = rows[:, 0, :] & np.isfinite(w) & (w < 0)
        for i, t in zip(*np.nonzero(neg)):
            report.add("workload-negative", f"workload {w[i, t]!r} < 0",
                       athlete=panel.athlete_ids[i], day=int(panel.day_index[i, t]))

    # lag trimming must leave at least one usable day per individual
    usable, _ = lag_usable_mask(covs.series, covs.day_index, covs.T, spec.lag_depth)
    for i, aid in enumerate(panel.athlete_ids):
        if int(panel.T[i]) >= 1 and not usable[i].any():
            report.add("no-usable-days", "no usable days after lag trimming", athlete=aid)

    return report
