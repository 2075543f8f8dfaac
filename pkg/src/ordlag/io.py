"""File formats: raw and recoded panel CSVs, match-day lists, the
single-file model archive, and run manifests.

The archive is a zip with fixed entry timestamps and sorted entry order,
so identical fits produce byte-identical files.  Floats are written with
repr() everywhere (shortest round-trip form), which keeps CSV round-trips
exact and outputs reproducible.
"""

from __future__ import annotations

import hashlib
import io as _io
import json
import zipfile
from datetime import date
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import ArchiveFormatError, CsvFormatError
from .panel import CovariatePanel, ModelSpec, OrdinalPanel, PosteriorDraws, RawPanel

RAW_COLUMNS = ("rpe", "duration_hours", "sleep_hours", "sleep_quality")
COV_COLUMNS = ("workload", "recovery")
K_HEADER = "# k_categories ="


def _parse_float(cell, path, lineno, col):
    if cell == "":
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise CsvFormatError(path, f"column {col!r}: {cell!r} is not a number", lineno)


def _parse_date(cell, path, lineno):
    try:
        return date.fromisoformat(cell).toordinal()
    except ValueError:
        raise CsvFormatError(path, f"{cell!r} is not an ISO date", lineno)


def _read_csv_rows(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    header = None
    k_categories = None
    rows = []
    with open(path, newline="") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith(K_HEADER):
                    k_categories = int(line[len(K_HEADER):].strip())
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise CsvFormatError(path, f"expected {len(header)} cells, got {len(cells)}",
                                     lineno)
            rows.append((lineno, cells))
    if header is None:
        raise CsvFormatError(path, "no header row")
    return header, rows, k_categories


def _group_by_athlete(header, rows, path):
    if header[:2] != ["athlete_id", "date"]:
        raise CsvFormatError(path, "first two columns must be athlete_id,date")
    order = []
    grouped = {}
    for lineno, cells in rows:
        aid = cells[0]
        if aid not in grouped:
            grouped[aid] = []
            order.append(aid)
        grouped[aid].append((lineno, cells))
    return order, grouped


def read_raw_csv(path) -> RawPanel:
    """Raw survey CSV: athlete_id, date, <metric columns>, rpe,
    duration_hours, sleep_hours, sleep_quality.  Missing cells are empty."""
    header, rows, _ = _read_csv_rows(path)
    for col in RAW_COLUMNS:
        if col not in header:
            raise CsvFormatError(path, f"missing required column {col!r}")
    metric_names = tuple(c for c in header[2:] if c not in RAW_COLUMNS + COV_COLUMNS)
    if not metric_names:
        raise CsvFormatError(path, "no wellness metric columns found")
    order, grouped = _group_by_athlete(header, rows, path)
    col_of = {c: k for k, c in enumerate(header)}
    n = len(order)
    Tmax = max(len(g) for g in grouped.values())
    J = len(metric_names)
    out = RawPanel(
        athlete_ids=tuple(order), metric_names=metric_names,
        day_index=np.full((n, Tmax), -1, dtype=np.int64),
        T=np.array([len(grouped[a]) for a in order], dtype=np.int64),
        metrics=np.full((n, J, Tmax), np.nan),
        rpe=np.full((n, Tmax), np.nan), duration=np.full((n, Tmax), np.nan),
        sleep_hours=np.full((n, Tmax), np.nan), sleep_quality=np.full((n, Tmax), np.nan),
    )
    for i, aid in enumerate(order):
        for t, (lineno, cells) in enumerate(grouped[aid]):
            out.day_index[i, t] = _parse_date(cells[1], path, lineno)
            for j, name in enumerate(metric_names):
                out.metrics[i, j, t] = _parse_float(cells[col_of[name]], path, lineno, name)
            out.rpe[i, t] = _parse_float(cells[col_of["rpe"]], path, lineno, "rpe")
            out.duration[i, t] = _parse_float(cells[col_of["duration_hours"]], path,
                                              lineno, "duration_hours")
            out.sleep_hours[i, t] = _parse_float(cells[col_of["sleep_hours"]], path,
                                                 lineno, "sleep_hours")
            out.sleep_quality[i, t] = _parse_float(cells[col_of["sleep_quality"]], path,
                                                   lineno, "sleep_quality")
    return out


def read_panel_csv(path, lag_depth, k_categories=None):
    """Recoded panel CSV: athlete_id, date, <metric columns in 1..K>,
    workload, recovery.  The category count travels in a '# k_categories ='
    comment; an explicit k_categories argument overrides it."""
    header, rows, k_file = _read_csv_rows(path)
    K = k_categories if k_categories is not None else k_file
    for col in COV_COLUMNS:
        if col not in header:
            raise CsvFormatError(path, f"missing required column {col!r}")
    metric_names = tuple(c for c in header[2:] if c not in RAW_COLUMNS + COV_COLUMNS)
    if not metric_names:
        raise CsvFormatError(path, "no wellness metric columns found")
    order, grouped = _group_by_athlete(header, rows, path)
    col_of = {c: k for k, c in enumerate(header)}
    n = len(order)
    Tmax = max(len(g) for g in grouped.values())
    J = len(metric_names)
    values = np.zeros((n, J, Tmax), dtype=np.int64)
    day_index = np.full((n, Tmax), -1, dtype=np.int64)
    T = np.array([len(grouped[a]) for a in order], dtype=np.int64)
    series = np.full((2, n, Tmax), np.nan)
    for i, aid in enumerate(order):
        for t, (lineno, cells) in enumerate(grouped[aid]):
            day_index[i, t] = _parse_date(cells[1], path, lineno)
            for j, name in enumerate(metric_names):
                cell = cells[col_of[name]]
                if cell == "":
                    continue
                try:
                    values[i, j, t] = int(cell)
                except ValueError:
                    raise CsvFormatError(path, f"column {name!r}: {cell!r} is not an integer",
                                         lineno)
            for m, name in enumerate(COV_COLUMNS):
                series[m, i, t] = _parse_float(cells[col_of[name]], path, lineno, name)
    if K is None:
        K = int(values.max()) if values.size else 2
    panel = OrdinalPanel(values=values, day_index=day_index, T=T, K=int(K),
                         metric_names=metric_names, athlete_ids=tuple(order))
    covs = CovariatePanel(series=series, L=lag_depth, day_index=day_index, T=T)
    return panel, covs


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_panel_csv(path, panel: OrdinalPanel, covs: CovariatePanel):
    with open(path, "w", newline="") as f:
        f.write(f"{K_HEADER} {panel.K}\n")
        f.write(",".join(("athlete_id", "date") + panel.metric_names + COV_COLUMNS) + "\n")
        for i, aid in enumerate(panel.athlete_ids):
            for t in range(int(panel.T[i])):
                cells = [aid, date.fromordinal(int(panel.day_index[i, t])).isoformat()]
                for j in range(panel.J):
                    v = int(panel.values[i, j, t])
                    cells.append("" if v == 0 else str(v))
                for m in range(2):
                    x = float(covs.series[m, i, t])
                    cells.append("" if np.isnan(x) else repr(x))
                f.write(",".join(cells) + "\n")


def read_matchdays_csv(path):
    """athlete_id,date rows -> {athlete_id: [calendar day numbers]}."""
    header, rows, _ = _read_csv_rows(path)
    if header[:2] != ["athlete_id", "date"]:
        raise CsvFormatError(path, "match-day file needs athlete_id,date columns")
    out = {}
    for lineno, cells in rows:
        out.setdefault(cells[0], []).append(_parse_date(cells[1], path, lineno))
    return out


# ---------------------------------------------------------------------------
# model archive

ARCHIVE_FORMAT = "ordlag-archive"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf, name, payload):
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy_bytes(arr):
    buf = _io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr))
    return buf.getvalue()


_ARRAY_FIELDS = ("ztilde", "y", "beta0", "beta", "alpha_ind", "alpha_global",
                 "psi", "theta", "var_simplex", "chain_id", "day_index", "T",
                 "usable", "observed", "values")


def write_archive(path, draws: PosteriorDraws, preprocess_artifacts=None):
    """Persist a fitted model as one self-describing file: the model spec,
    provenance, retained draws, panel context, and (optionally) the
    preprocessing artifacts needed to recode future data identically."""
    entries = {}
    array_names = []
    for name in _ARRAY_FIELDS:
        arr = getattr(draws, name)
        if arr is None:
            continue
        entries[f"arrays/{name}.npy"] = _npy_bytes(arr)
        array_names.append(name)
    manifest = {
        "format": ARCHIVE_FORMAT,
        "format_version": 1,
        "spec": draws.spec.to_dict(),
        "provenance": {
            "seed": draws.seed,
            "spec_hash": draws.spec_hash,
            "version": __version__,
            "draws": draws.num_draws,
            "chains": draws.spec.chains,
        },
        "metric_names": list(draws.metric_names),
        "athlete_ids": list(draws.athlete_ids),
        "acceptance": draws.acceptance,
        "arrays": array_names,
        "has_preprocess": preprocess_artifacts is not None,
    }
    entries["manifest.json"] = json.dumps(manifest, sort_keys=True, indent=1).encode()
    if preprocess_artifacts is not None:
        entries["preprocess.json"] = json.dumps(preprocess_artifacts, sort_keys=True,
                                                indent=1).encode()
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(entries):
            _zip_write(zf, name, entries[name])


def read_archive(path):
    """Load (PosteriorDraws, preprocess_artifacts | None) from an archive."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"archive not found: {path}")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as e:
        raise ArchiveFormatError(f"{path}: not an archive ({e})")
    with zf:
        names = set(zf.namelist())
        if "manifest.json" not in names:
            raise ArchiveFormatError(f"{path}: missing manifest.json")
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != ARCHIVE_FORMAT:
            raise ArchiveFormatError(f"{path}: unexpected format {manifest.get('format')!r}")
        arrays = {}
        for name in manifest["arrays"]:
            entry = f"arrays/{name}.npy"
            if entry not in names:
                raise ArchiveFormatError(f"{path}: missing array entry {entry}")
            arrays[name] = np.load(_io.BytesIO(zf.read(entry)))
        artifacts = None
        if manifest.get("has_preprocess") and "preprocess.json" in names:
            artifacts = json.loads(zf.read("preprocess.json"))
    spec = ModelSpec.from_dict(manifest["spec"])
    draws = PosteriorDraws(
        spec=spec,
        ztilde=arrays["ztilde"], y=arrays["y"], beta0=arrays["beta0"],
        beta=arrays["beta"], alpha_ind=arrays["alpha_ind"],
        alpha_global=arrays.get("alpha_global"), psi=arrays.get("psi"),
        theta=arrays["theta"], var_simplex=arrays["var_simplex"],
        chain_id=arrays["chain_id"], day_index=arrays["day_index"], T=arrays["T"],
        usable=arrays["usable"].astype(bool), observed=arrays["observed"].astype(bool),
        values=arrays["values"],
        metric_names=tuple(manifest["metric_names"]),
        athlete_ids=tuple(manifest["athlete_ids"]),
        acceptance=manifest["acceptance"],
        seed=manifest["provenance"]["seed"],
        spec_hash=manifest["provenance"]["spec_hash"],
    )
    return draws, artifacts


def write_manifest(out_path, command, config: dict):
    """Run manifest next to an output: resolved configuration, its hash,
    the seed, and the package version (no timestamps, so identical runs
    write identical manifests)."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": config.get("seed"),
        "version": __version__,
    }
    p = Path(str(out_path) + ".manifest.json")
    p.write_text(json.dumps(manifest, sort_keys=True, indent=1, default=str) + "\n")
    return p
