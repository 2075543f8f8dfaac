"""Raw-panel construction: ordinal recoding via 1-D k-means, workload and
recovery derivation, per-individual standardization, and the lag design.

Recoding is individual-specific but shared across that individual's metrics:
all observed ordinal responses of one athlete are pooled, clustered into K
groups, and the midpoints between ordered cluster centers become the
cut-points applied to every metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .panel import CovariatePanel, OrdinalPanel, RawPanel, lag_usable_mask


@dataclass(frozen=True)
class RecodingMap:
    """K ascending cluster centers and the K-1 midpoint cut-points."""

    centers: np.ndarray
    cut_points: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, float)
        q = np.asarray(self.cut_points, float)
        if np.any(np.diff(c) <= 0) or np.any(np.diff(q) <= 0):
            raise DegenerateInputError("cluster centers / cut-points must be strictly ascending")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "cut_points", q)

    @property
    def k(self):
        return len(self.centers)


@dataclass(frozen=True)
class RecoveryLoading:
    """First principal component of standardized (sleep hours, sleep quality).

    Oriented so both loadings are nonnegative: a large score means long,
    good-quality sleep.
    """

    loadings: np.ndarray          # unit-norm 2-vector, both entries >= 0
    variance_explained: float     # top eigenvalue / trace, in [0, 1]
    mean: np.ndarray              # standardization constants, per column
    sd: np.ndarray
    sign_flipped: bool

    def __post_init__(self):
        v = np.asarray(self.loadings, float)
        if abs(float(v @ v) - 1.0) > 1e-9:
            raise DegenerateInputError("loading vector must have unit norm")
        if np.any(v < 0):
            raise DegenerateInputError("loadings must be nonnegative under the sign convention")
        object.__setattr__(self, "loadings", v)


def _lloyd(values, centers):
    """One Lloyd run from the given centers; returns (centers, wcss)."""
    values = np.asarray(values, float)
    for _ in range(200):
        d = np.abs(values[:, None] - centers[None, :])
        assign = np.argmin(d, axis=1)
        new = centers.copy()
        for c in range(len(centers)):
            pts = values[assign == c]
            if pts.size:
                new[c] = pts.mean()
        if np.array_equal(new, centers):
            break
        centers = new
    d = np.abs(values[:, None] - centers[None, :])
    assign = np.argmin(d, axis=1)
    wcss = float(((values - centers[assign]) ** 2).sum())
    return centers, wcss


def _polish_boundaries(svals, centers, k):
    """Exact coordinate descent on contiguous cluster boundaries.

    1-D optimal clusters are contiguous in sorted order, so each interior
    boundary can be minimized exactly given its neighbors; this rescues the
    local optima Lloyd is prone to on heavily tied data.  Returns
    (centers, wcss) for the refined partition.
    """
    N = len(svals)
    ps = np.concatenate([[0.0], np.cumsum(svals)])
    ps2 = np.concatenate([[0.0], np.cumsum(svals * svals)])

    def seg(a, b):
        cnt = b - a
        s = ps[b] - ps[a]
        return (ps2[b] - ps2[a]) - s * s / cnt

    mids = 0.5 * (centers[:-1] + centers[1:])
    bounds = [0] + list(np.searchsorted(svals, mids, side="right")) + [N]
    for c in range(1, k + 1):                       # enforce nonempty segments
        bounds[c] = max(bounds[c], bounds[c - 1] + 1)
    for c in range(k - 1, 0, -1):
        bounds[c] = min(bounds[c], bounds[c + 1] - 1)

    improved = True
    while improved:
        improved = False
        for c in range(1, k):
            lo, hi = bounds[c - 1] + 1, bounds[c + 1]
            cur = seg(bounds[c - 1], bounds[c]) + seg(bounds[c], bounds[c + 1])
            costs = [seg(bounds[c - 1], b) + seg(b, bounds[c + 1]) for b in range(lo, hi)]
            best = int(np.argmin(costs))
            if costs[best] < cur - 1e-12:
                bounds[c] = lo + best
                improved = True
    centers = np.array([svals[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
    wcss = float(sum(seg(a, b) for a, b in zip(bounds[:-1], bounds[1:])))
    return centers, wcss


def _kmeanspp_init(rng, values, k):
    """k-means++ seeding: first center uniform, then d^2-weighted."""
    centers = [values[rng.integers(len(values))]]
    for _ in range(k - 1):
        d2 = np.min((values[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        tot = d2.sum()
        if tot <= 0:
            # remaining mass already covered; pick any unused distinct value
            pool = np.setdiff1d(np.unique(values), np.array(centers))
            centers.append(pool[rng.integers(len(pool))])
        else:
            centers.append(values[rng.choice(len(values), p=d2 / tot)])
    return np.array(centers, float)


def kmeans_1d(values, k, restarts=25, seed=0) -> RecodingMap:
    """Best-of-restarts Lloyd clustering of a 1-D sample, each restart
    finished with an exact boundary-descent polish.

    Returns ascending centers and the adjacent-center midpoints as
    cut-points.  Raises DegenerateInputError with fewer than k distinct
    values.
    """
    values = np.asarray(values, float)
    if np.unique(values).size < k:
        raise DegenerateInputError(
            f"need at least {k} distinct values for {k}-means, got {np.unique(values).size}")
    svals = np.sort(values)
    rng = np.random.default_rng(seed)
    best = None
    best_wcss = np.inf
    for _ in range(max(1, restarts)):
        centers, _ = _lloyd(values, _kmeanspp_init(rng, values, k))
        centers, wcss = _polish_boundaries(svals, np.sort(centers), k)
        if best is None or wcss < best_wcss - 1e-12:
            best, best_wcss = centers, wcss
    centers = np.sort(best)
    cuts = 0.5 * (centers[:-1] + centers[1:])
    return RecodingMap(centers=centers, cut_points=cuts)


def recode_ordinal(raw, rec: RecodingMap):
    """Map raw scores to 1..K: one plus the number of cut-points strictly
    below the raw value (ties at a cut-point go to the lower category).
    Accepts scalars or arrays."""
    raw = np.asarray(raw, float)
    codes = np.searchsorted(rec.cut_points, raw, side="left") + 1
    return codes if codes.ndim else int(codes)


def compute_workload(rpe, duration):
    """Session workload: rate of perceived effort times duration in hours."""
    if rpe < 0 or duration < 0:
        raise DegenerateInputError(f"rpe and duration must be >= 0, got ({rpe}, {duration})")
    return float(rpe) * float(duration)


def compute_recovery(sleep_hours, sleep_quality):
    """Per-individual recovery scores: projection onto the first principal
    component of the standardized (hours, quality) matrix.

    Returns (scores, RecoveryLoading).  Scores have sample mean 0 and
    sample variance equal to the top eigenvalue of the 2x2 sample
    correlation matrix.
    """
    h = np.asarray(sleep_hours, float)
    q = np.asarray(sleep_quality, float)
    if h.shape != q.shape or h.ndim != 1:
        raise DegenerateInputError("sleep series must be equal-length 1-D arrays")
    if h.size < 2:
        raise DegenerateInputError("need at least 2 nights of sleep data")
    X = np.column_stack([h, q])
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise DegenerateInputError("zero-variance sleep series; recovery PCA undefined")
    W = (X - mean) / sd
    corr = W.T @ W / (len(W) - 1)
    evals, evecs = np.linalg.eigh(corr)
    top = evecs[:, -1]
    flipped = False
    if top.sum() < 0:
        top = -top
        flipped = True
    if np.any(top < -1e-12):
        raise DegenerateInputError(
            "sleep hours and quality are negatively correlated; "
            "no orientation of the first PC gives nonnegative loadings")
    top = np.clip(top, 0.0, None)
    top = top / np.linalg.norm(top)
    loading = RecoveryLoading(
        loadings=top,
        variance_explained=float(evals[-1] / evals.sum()),
        mean=mean, sd=sd, sign_flipped=flipped,
    )
    return W @ top, loading


@dataclass(frozen=True)
class LagDesign:
    """Per-individual standardized lag design.

    design[m, i, t, l] = standardized X_{m,i,day(t)-l} for usable rows t
    (zero elsewhere; consult `usable`).  center/scale store the
    standardization transform for back-mapping.
    """

    design: np.ndarray        # (M, n, Tmax, L+1)
    usable: np.ndarray        # (n, Tmax) bool
    valid_start: np.ndarray   # (n,)
    center: np.ndarray        # (M, n)
    scale: np.ndarray         # (M, n)
    L: int
    excluded: np.ndarray      # (n,) rows dropped for missing lag history
    standardized: np.ndarray  # (M, n, Tmax) standardized series, NaN where missing


def build_lag_design(covs: CovariatePanel, L=None) -> LagDesign:
    """Standardize covariates per individual and assemble the lagged design.

    Row t of individual i gets (X_{t}, X_{t-1}, ..., X_{t-L}) in calendar
    days; rows without the full history are excluded (counted per
    individual).  Standardization is per (covariate, individual) over all
    finite entries, mean 0 / sd 1 (ddof=1).
    """
    if L is None:
        L = covs.L
    M, n, Tmax = covs.series.shape
    center = np.empty((M, n))
    scale = np.empty((M, n))
    std = np.full((M, n, Tmax), np.nan)
    for m in range(M):
        for i in range(n):
            x = covs.series[m, i, : int(covs.T[i])]
            fin = np.isfinite(x)
            if fin.sum() < 2:
                raise DegenerateInputError(
                    f"covariate m={m}, individual {i}: fewer than 2 finite values")
            mu = x[fin].mean()
            sd = x[fin].std(ddof=1)
            if sd <= 0:
                raise DegenerateInputError(
                    f"covariate m={m}, individual {i}: constant series, "
                    "standardization degenerate")
            center[m, i] = mu
            scale[m, i] = sd
            std[m, i, : int(covs.T[i])] = (x - mu) / sd

    usable, valid_start = lag_usable_mask(covs.series, covs.day_index, covs.T, L)
    design = np.zeros((M, n, Tmax, L + 1))
    excluded = np.zeros(n, dtype=np.int64)
    for i in range(n):
        Ti = int(covs.T[i])
        days = covs.day_index[i, :Ti]
        row_of = {int(d): t for t, d in enumerate(days)}
        excluded[i] = int(Ti - usable[i, :Ti].sum())
        for t in np.nonzero(usable[i, :Ti])[0]:
            d = int(days[t])
            for l in range(L + 1):
                design[:, i, t, l] = std[:, i, row_of[d - l]]
    return LagDesign(design=design, usable=usable, valid_start=valid_start,
                     center=center, scale=scale, L=L, excluded=excluded,
                     standardized=std)


def derive_workload(rpe, duration):
    """Vectorized daily workload.  A recorded RPE of 0 is a rest day and
    yields workload 0 even without a duration; days with no RPE record (or
    a nonzero RPE but no duration) stay missing."""
    rpe = np.asarray(rpe, float)
    duration = np.asarray(duration, float)
    if np.any(rpe[np.isfinite(rpe)] < 0) or np.any(duration[np.isfinite(duration)] < 0):
        raise DegenerateInputError("rpe and duration must be >= 0")
    out = rpe * duration
    out[np.isfinite(rpe) & (rpe == 0)] = 0.0
    return out


def build_recoded_panel(raw: RawPanel, k: int = 5, restarts: int = 25, seed: int = 0,
                        lag_depth: int = 10):
    """Full raw-to-model preprocessing: per-athlete ordinal recoding
    (pooled k-means cut-points shared across that athlete's metrics),
    workload = rpe x duration, recovery = first-PC sleep score.

    Returns (OrdinalPanel, CovariatePanel, artifacts) where artifacts is a
    JSON-safe record of cut-points, PC loadings, and standardization
    constants sufficient to recode future data identically.
    """
    n, J, Tmax = raw.metrics.shape
    values = np.zeros((n, J, Tmax), dtype=np.int64)
    series = np.full((2, n, Tmax), np.nan)
    per_athlete = {}
    for i, aid in enumerate(raw.athlete_ids):
        Ti = int(raw.T[i])
        pooled = raw.metrics[i, :, :Ti]
        pooled = pooled[np.isfinite(pooled)]
        rec = kmeans_1d(pooled, k, restarts=restarts, seed=seed + i)
        for j in range(J):
            col = raw.metrics[i, j, :Ti]
            ok = np.isfinite(col)
            values[i, j, :Ti][ok] = recode_ordinal(col[ok], rec)

        series[0, i, :Ti] = derive_workload(raw.rpe[i, :Ti], raw.duration[i, :Ti])
        both = np.isfinite(raw.sleep_hours[i, :Ti]) & np.isfinite(raw.sleep_quality[i, :Ti])
        if both.sum() < 2:
            raise DegenerateInputError(
                f"athlete {aid}: fewer than 2 days with both sleep variables")
        scores, loading = compute_recovery(raw.sleep_hours[i, :Ti][both],
                                           raw.sleep_quality[i, :Ti][both])
        rec_col = np.full(Ti, np.nan)
        rec_col[both] = scores
        series[1, i, :Ti] = rec_col

        per_athlete[aid] = {
            "centers": rec.centers.tolist(),
            "cut_points": rec.cut_points.tolist(),
            "pc_loadings": loading.loadings.tolist(),
            "variance_explained": loading.variance_explained,
            "sleep_mean": loading.mean.tolist(),
            "sleep_sd": loading.sd.tolist(),
            "sign_flipped": loading.sign_flipped,
        }
    panel = OrdinalPanel(values=values, day_index=raw.day_index, T=raw.T, K=k,
                         metric_names=raw.metric_names, athlete_ids=raw.athlete_ids)
    covs = CovariatePanel(series=series, L=lag_depth, day_index=raw.day_index, T=raw.T)
    artifacts = {
        "k_categories": k,
        "metric_names": list(raw.metric_names),
        "athletes": per_athlete,
    }
    return panel, covs, artifacts
