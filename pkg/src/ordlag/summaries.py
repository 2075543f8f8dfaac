"""Posterior summaries: metric-factor correlations, relative importance
weights, lag-effect credible intervals, and match-day centered factor
profiles.  All statistics are computed per retained draw and summarized
afterwards, so the tables carry full posterior uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .panel import PosteriorDraws

VAR_FLOOR = 1e-30


def _factor_labels(draws: PosteriorDraws):
    return ("wellness",) if draws.n_factors == 1 else ("workload", "recovery")


def metric_factor_correlation(draws: PosteriorDraws):
    """Per-draw Pearson correlation between each metric's latent response
    vector and each latent factor over that individual's usable days.

    Returns (c, undefined): c has shape (D, Mf, n, J) with NaN where a
    zero-variance vector made the correlation undefined; undefined counts
    those exclusions per (Mf, n, J).
    """
    u = draws.usable.astype(float)                      # (n, T)
    n_days = u.sum(axis=1)                              # (n,)
    if np.any(n_days < 2):
        raise DegenerateInputError("every individual needs >= 2 usable days for correlations")
    zt = np.where(draws.usable[None, :, None, :], draws.ztilde, 0.0)   # (D,n,J,T)
    y = np.where(draws.usable[None, None, :, :], draws.y, 0.0)         # (D,Mf,n,T)

    zmean = zt.sum(axis=3) / n_days[None, :, None]
    ymean = y.sum(axis=3) / n_days[None, None, :]
    ztc = (zt - zmean[..., None]) * u[None, :, None, :]
    yc = (y - ymean[..., None]) * u[None, None, :, :]
    cov = np.einsum("dnjt,dmnt->dmnj", ztc, yc)
    vz = np.einsum("dnjt->dnj", ztc * ztc)
    vy = np.einsum("dmnt->dmn", yc * yc)
    denom2 = vz[:, None, :, :] * vy[..., None]
    ok = denom2 > VAR_FLOOR
    c = np.full(cov.shape, np.nan)
    np.divide(cov, np.sqrt(denom2, where=ok, out=np.ones_like(denom2)), out=c, where=ok)
    undefined = (~ok).sum(axis=0)
    return c, undefined


def relative_importance(c):
    """Per-draw relative importance: |C_j| normalized across metrics for
    each (factor, individual).  Draws where any correlation is undefined or
    all correlations are zero are excluded (NaN row) and counted.

    Returns (r, excluded) with r shaped like c and excluded (Mf, n)."""
    absc = np.abs(c)
    bad = np.isnan(absc).any(axis=3) | (np.nansum(absc, axis=3) <= 0.0)
    denom = absc.sum(axis=3)
    r = np.full(c.shape, np.nan)
    np.divide(absc, denom[..., None], out=r, where=~bad[..., None])
    excluded = bad.sum(axis=0)
    return r, excluded


@dataclass
class ImportanceSummary:
    """Correlation and relative-importance draws with their posterior means
    and central credible intervals, per (factor, individual, metric)."""

    factor_labels: tuple
    athlete_ids: tuple
    metric_names: tuple
    level: float
    c_draws: np.ndarray          # (D, Mf, n, J), NaN = excluded
    r_draws: np.ndarray
    c_mean: np.ndarray           # (Mf, n, J)
    r_mean: np.ndarray
    c_interval: np.ndarray       # (2, Mf, n, J)
    r_interval: np.ndarray
    c_undefined: np.ndarray      # (Mf, n, J)
    r_excluded: np.ndarray       # (Mf, n)


def summarize_importance(draws: PosteriorDraws, level: float = 0.95) -> ImportanceSummary:
    c, undefined = metric_factor_correlation(draws)
    r, excluded = relative_importance(c)
    qs = [0.5 - level / 2, 0.5 + level / 2]
    with np.errstate(all="ignore"):
        c_mean = np.nanmean(c, axis=0)
        r_mean = np.nanmean(r, axis=0)
        c_iv = np.nanquantile(c, qs, axis=0)
        r_iv = np.nanquantile(r, qs, axis=0)
    return ImportanceSummary(
        factor_labels=_factor_labels(draws), athlete_ids=draws.athlete_ids,
        metric_names=draws.metric_names, level=level,
        c_draws=c, r_draws=r, c_mean=c_mean, r_mean=r_mean,
        c_interval=c_iv, r_interval=r_iv,
        c_undefined=undefined, r_excluded=excluded,
    )


def lag_effect_summary(draws: PosteriorDraws, level: float = 0.95):
    """Posterior mean, median, central interval, and a significance flag
    (interval excludes 0) for the lag coefficients.

    Returns (global_rows, individual_rows); global_rows is empty in the
    constrained variant, which has no pooled coefficients.  Quantiles use
    linear interpolation between order statistics.
    """
    qs = [0.5 - level / 2, 0.5, 0.5 + level / 2]
    cov_labels = ("workload", "recovery")

    def rows_from(arr, keys):
        lo, med, hi = np.quantile(arr, qs, axis=0)
        mean = arr.mean(axis=0)
        out = []
        for idx in np.ndindex(mean.shape):
            row = dict(zip(keys, idx))
            out.append({
                **{k: v for k, v in row.items()},
                "mean": float(mean[idx]), "median": float(med[idx]),
                "lower": float(lo[idx]), "upper": float(hi[idx]),
                "significant": bool(lo[idx] > 0 or hi[idx] < 0),
            })
        return out

    individual = []
    for row in rows_from(draws.alpha_ind, ("m", "i", "lag")):
        individual.append({
            "covariate": cov_labels[row.pop("m")],
            "athlete": draws.athlete_ids[row.pop("i")],
            **row,
        })
    global_rows = []
    if draws.alpha_global is not None:
        for row in rows_from(draws.alpha_global, ("m", "lag")):
            global_rows.append({"covariate": cov_labels[row.pop("m")], **row})
    return global_rows, individual


def matchday_profile(draws: PosteriorDraws, match_days: dict, window: int = 3):
    """Mean-centered posterior-mean factor values around match days.

    match_days maps athlete_id -> list of calendar day numbers.  For each
    match, the posterior-mean factor at offsets -window..window is centered
    by subtracting the (2*window+1)-day average, then averaged across that
    athlete's matches per offset.  Matches whose window falls outside the
    usable series are skipped and counted.

    Returns a list of rows (athlete, factor, offset, centered_mean,
    n_matches, n_skipped).
    """
    ymean = draws.y.mean(axis=0)          # (Mf, n, T)
    labels = _factor_labels(draws)
    offsets = np.arange(-window, window + 1)
    rows = []
    for i, aid in enumerate(draws.athlete_ids):
        days = draws.day_index[i, : int(draws.T[i])]
        row_of = {int(d): t for t, d in enumerate(days)}
        centered = [[] for _ in range(draws.n_factors)]
        skipped = 0
        for md in match_days.get(aid, ()):
            ts = [row_of.get(int(md) + int(o)) for o in offsets]
            if any(t is None or not draws.usable[i, t] for t in ts):
                skipped += 1
                continue
            for m in range(draws.n_factors):
                vals = ymean[m, i, ts]
                centered[m].append(vals - vals.mean())
        for m in range(draws.n_factors):
            n_matches = len(centered[m])
            agg = (np.mean(centered[m], axis=0) if n_matches
                   else np.full(offsets.shape, np.nan))
            for o, v in zip(offsets, agg):
                rows.append({
                    "athlete": aid, "factor": labels[m], "offset": int(o),
                    "centered_mean": float(v), "n_matches": n_matches,
                    "n_skipped": skipped,
                })
    return rows


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell(row[h]) for h in header) + "\n")


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary_csvs(draws: PosteriorDraws, out_dir, *, match_days=None,
                       window: int = 3, level: float = 0.95):
    """Write the five summary tables into out_dir and return their paths.

    matchday_profile.csv is header-only when no match days are supplied;
    global_lags.csv is header-only for constrained-lag fits (no pooled
    coefficients exist there).
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    global_rows, individual_rows = lag_effect_summary(draws, level=level)
    imp = summarize_importance(draws, level=level)

    paths = {}
    paths["global_lags"] = out_dir / "global_lags.csv"
    _write_rows(paths["global_lags"],
                ["covariate", "lag", "mean", "median", "lower", "upper", "significant"],
                global_rows)
    paths["individual_lags"] = out_dir / "individual_lags.csv"
    _write_rows(paths["individual_lags"],
                ["covariate", "athlete", "lag", "mean", "median", "lower", "upper",
                 "significant"],
                individual_rows)

    c_rows, r_rows = [], []
    Mf = len(imp.factor_labels)
    for m in range(Mf):
        for i, aid in enumerate(imp.athlete_ids):
            for j, name in enumerate(imp.metric_names):
                c_rows.append({
                    "athlete": aid, "metric": name, "factor": imp.factor_labels[m],
                    "mean": float(imp.c_mean[m, i, j]),
                    "lower": float(imp.c_interval[0, m, i, j]),
                    "upper": float(imp.c_interval[1, m, i, j]),
                    "undefined_draws": int(imp.c_undefined[m, i, j]),
                })
                r_rows.append({
                    "athlete": aid, "metric": name, "factor": imp.factor_labels[m],
                    "mean": float(imp.r_mean[m, i, j]),
                    "lower": float(imp.r_interval[0, m, i, j]),
                    "upper": float(imp.r_interval[1, m, i, j]),
                    "equal_weight": 1.0 / len(imp.metric_names),
                    "excluded_draws": int(imp.r_excluded[m, i]),
                })
    paths["correlations"] = out_dir / "correlations.csv"
    _write_rows(paths["correlations"],
                ["athlete", "metric", "factor", "mean", "lower", "upper",
                 "undefined_draws"], c_rows)
    paths["relative_importance"] = out_dir / "relative_importance.csv"
    _write_rows(paths["relative_importance"],
                ["athlete", "metric", "factor", "mean", "lower", "upper",
                 "equal_weight", "excluded_draws"], r_rows)

    md_rows = matchday_profile(draws, match_days, window=window) if match_days else []
    paths["matchday_profile"] = out_dir / "matchday_profile.csv"
    _write_rows(paths["matchday_profile"],
                ["athlete", "factor", "offset", "centered_mean", "n_matches",
                 "n_skipped"], md_rows)
    return paths
