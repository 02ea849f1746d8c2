"""CSV emission, manifests and linear fits of protection time."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractError, OutputError
from .runner import RunRecord

SERIES_COLUMNS = ("t", "f_total_sq", "f_system_sq", "p_codespace")
FLOAT_FORMAT = ".17g"


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), FLOAT_FORMAT)


def _write(path: Path, rows: list[list[str]]):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerows(rows)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _check_homogeneous(records: Sequence[RunRecord]):
    if not records:
        raise ContractError("no records to emit")
    hashes = {r.plan_hash for r in records}
    if len(hashes) != 1:
        raise ContractError(f"records come from {len(hashes)} different plans")


def write_series_csv(record: RunRecord, path: str | Path) -> Path:
    """Header plus one row per time point."""
    path = Path(path)
    rows = [list(SERIES_COLUMNS)]
    for row in zip(record.times, record.f_total_sq, record.f_system_sq, record.p_codespace):
        rows.append([_fmt(v) for v in row])
    _write(path, rows)
    return path


def summary_columns(records: Sequence[RunRecord]) -> list[str]:
    cols = ["e_penalty", "lambda", "seed"]
    keys = set().union(*(r.scalars for r in records))
    if "t_prot" in keys:
        cols += ["t_prot", "e_over_lambda_sq"]
    if "longterm_fs2" in keys:
        cols += ["alpha_sq", "longterm_fs2", "longterm_prediction"]
    return cols


def write_summary_csv(records: Sequence[RunRecord], path: str | Path) -> Path:
    """One row per record; failed points carry ``nan`` scalars."""
    _check_homogeneous(records)
    cols = summary_columns(records)
    rows = [cols]
    for r in records:
        base = {"e_penalty": r.e_penalty, "lambda": r.lam, "seed": r.seed}
        rows.append([_fmt(base[c] if c in base else r.scalars.get(c, math.nan)) for c in cols])
    _write(Path(path), rows)
    return Path(path)


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)


def emit_csv(records: Sequence[RunRecord], out_dir: str | Path, plan=None) -> list[Path]:
    """Series files for records with time series, a summary file and a JSON manifest.

    Every file name carries the first 12 hex digits of the plan hash; the
    manifest records the full hash, the plan and per-record provenance.
    """
    _check_homogeneous(records)
    out = Path(out_dir)
    name, h = records[0].plan_name, records[0].plan_hash
    stem = f"{name}_{h[:12]}"
    written = []
    entries = []
    for r in records:
        entry = {k: v for k, v in r.to_dict().items()
                 if k not in ("times", "f_total_sq", "f_system_sq", "p_codespace")}
        if r.ok and r.times:
            p = write_series_csv(r, out / f"{stem}_series_{r.index:04d}.csv")
            entry["series_file"] = p.name
            written.append(p)
        entries.append(entry)
    written.append(write_summary_csv(records, out / f"{stem}_summary.csv"))
    manifest = {"plan_name": name, "plan_hash": h, "records": entries}
    if plan is not None:
        manifest["plan"] = plan.to_dict()
    mpath = out / f"{stem}_manifest.json"
    try:
        mpath.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {mpath}: {exc}") from exc
    written.append(mpath)
    return written


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serialisable: {type(x)}")


# --- fits -----------------------------------------------------------------

FIT_MODELS = ("linear_through_origin", "affine")


@dataclass(frozen=True)
class FitReport:
    model: str
    slope: float
    intercept: float
    r2: float
    residuals: np.ndarray
    x: np.ndarray
    y: np.ndarray
    n_excluded: int
    non_scaling: bool

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "n_points": int(self.x.size),
            "n_excluded": self.n_excluded,
            "non_scaling": self.non_scaling,
            "residuals": [float(v) for v in self.residuals],
        }


def linear_fit(x: Sequence[float], y: Sequence[float], model: str = "linear_through_origin",
               n_excluded: int = 0) -> FitReport:
    """Least squares ``y = slope x`` (or ``+ intercept``); ``R^2`` about the mean of ``y``.

    ``non_scaling`` is set when the affine slope is negligible across the
    range of ``x``, i.e. ``y`` does not depend on ``x``.
    """
    if model not in FIT_MODELS:
        raise ContractError(f"unknown fit model {model!r}")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 3:
        raise ContractError(f"need at least 3 points to fit, got {x.size}")
    a_slope, a_icpt = np.polyfit(x, y, 1)
    if model == "affine":
        slope, icpt = float(a_slope), float(a_icpt)
    else:
        slope, icpt = float(np.dot(x, y) / np.dot(x, x)), 0.0
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)
    scale = max(float(np.max(np.abs(y))), 1e-300)
    non_scaling = abs(a_slope) * float(np.ptp(x)) <= 1e-6 * scale
    return FitReport(model, slope, icpt, r2, resid, x, y, n_excluded, bool(non_scaling))


def fit_report(records: Sequence[RunRecord], model: str = "linear_through_origin") -> FitReport:
    """Fit ``t_prot`` against ``E_P / lambda^2`` over records with a finite crossing."""
    xs, ys, excluded = [], [], 0
    for r in records:
        if "t_prot" not in r.scalars:
            raise ContractError(f"record {r.index} has no t_prot")
        t = r.scalars["t_prot"]
        if not r.ok or not math.isfinite(t) or r.lam == 0:
            excluded += 1
            continue
        xs.append(r.e_penalty / r.lam**2)
        ys.append(t)
    return linear_fit(xs, ys, model, excluded)
