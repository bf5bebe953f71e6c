"""Dataset CSV and result JSON/CSV formats.

Floats are written with 17 significant digits so every file reads back to
the same doubles.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .data import SubjectData
from .errors import ConfigurationError, InputFileError, ParseError, ValidationError

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    return FLOAT_FMT % float(x)


def _open_for_read(path):
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"no such file: {path}")
    try:
        return path.open(newline="")
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc}") from exc


def write_dataset(path, population) -> Path:
    """Write ``subject,time,y1..`` rows, sorted by subject then time."""
    path = Path(path)
    d_obs = population[0].d_obs
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "time"] + [f"y{j + 1}" for j in range(d_obs)])
        for s in population:
            if s.d_obs != d_obs:
                raise ValidationError("subjects disagree on the observation dimension")
            for t, y in zip(s.times, s.observations):
                w.writerow([s.subject_id, fmt(t)] + [fmt(v) for v in y])
    return path


def _subject_sort_key(sid: str):
    # numeric ids sort numerically, the rest lexically after them
    try:
        return (0, float(sid), sid)
    except ValueError:
        return (1, 0.0, sid)


def load_dataset(path, d_obs: int | None = None) -> list[SubjectData]:
    """Read a ``subject,time,y1[,y2,...]`` CSV into subjects.

    Rows may come in any order. Duplicate ``(subject, time)`` pairs and
    non-numeric cells are rejected; ``d_obs`` (when given) must match the
    number of ``y`` columns.
    """
    with _open_for_read(path) as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        ycols = header[2:]
        if header[:2] != ["subject", "time"] or not ycols or ycols != [f"y{j + 1}" for j in range(len(ycols))]:
            raise ParseError(f"header must be subject,time,y1[,y2,...]; got {','.join(header)}", row=1)
        if d_obs is not None and len(ycols) != d_obs:
            raise ConfigurationError(f"dataset has {len(ycols)} observed outputs, model observes {d_obs}")
        rows = defaultdict(list)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=lineno)
            sid = row[0].strip()
            if not sid:
                raise ParseError("empty subject id", row=lineno)
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise ParseError(f"non-numeric cell in {row[1:]}", row=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", row=lineno)
            rows[sid].append((lineno, vals))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    population = []
    for sid in sorted(rows, key=_subject_sort_key):
        recs = sorted(rows[sid], key=lambda r: r[1][0])
        times = np.array([r[1][0] for r in recs])
        dup = np.flatnonzero(np.diff(times) == 0)
        if dup.size:
            raise ValidationError(f"subject {sid}: duplicate time {times[dup[0]]!r} (row {recs[dup[0] + 1][0]})")
        obs = np.array([r[1][1:] for r in recs])
        population.append(SubjectData(sid, times, obs))
    return population


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    # json writes floats with repr, which round-trips exactly
    path.write_text(json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n")
    return path


def read_json(path) -> dict:
    with _open_for_read(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc.msg})", row=exc.lineno) from None


def truth_to_dict(spec, truths) -> dict:
    return {
        "model": spec.model,
        "theta": list(spec.theta),
        "psi": list(spec.psi),
        "sigma": spec.sigma,
        "delta": spec.delta_true,
        "seed": spec.seed,
        "subjects": [{"subject": t.subject_id, "b": t.b, "x0": t.x0} for t in truths],
    }


def fit_to_dict(fit, variance: dict | None = None) -> dict:
    out = {
        "model": fit.model_name,
        "theta": fit.theta_hat,
        "delta": fit.delta_hat,
        "sigma2": fit.sigma2_hat,
        "psi_sd": fit.psi_sd,
        "psi": fit.psi_hat,
        "G": fit.G_value,
        "U": fit.U,
        "diagnostics": fit.diagnostics,
        "subjects": [
            {"subject": sid, "b": s.b_hat, "x0u": s.lq.x0u_hat, "g": s.g_min,
             "residual": s.residual, "penalty": s.penalty, "converged": s.converged}
            for sid, s in zip(fit.subject_ids, fit.subjects)
        ],
    }
    if fit.covariance is not None:
        out["covariance"] = fit.covariance
    if variance is not None:
        out["variance"] = {k: v for k, v in variance.items()}
    return out


def start_point(payload: dict, model) -> tuple[np.ndarray, np.ndarray]:
    """``(theta, delta)`` from a truth or fit JSON document."""
    try:
        theta = np.asarray(payload["theta"], dtype=float).reshape(-1)
        if "delta" in payload and payload["delta"] is not None:
            delta = np.asarray(payload["delta"], dtype=float).reshape(-1)
        else:
            sigma = max(float(payload["sigma"]), 1e-3)
            delta = np.log(sigma / np.maximum(np.asarray(payload["psi"], dtype=float), 1e-3))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"start point needs theta and delta (or psi and sigma): {exc}") from None
    if theta.size != model.p or delta.size != model.q:
        raise ConfigurationError(f"start point has {theta.size}+{delta.size} entries, model needs {model.p}+{model.q}")
    return theta, np.broadcast_to(delta, (model.q,)).copy()


def write_table(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return path


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with _open_for_read(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", row=1)
    return rows[0], rows[1:]


def write_controls(out_dir, report) -> tuple[Path, Path]:
    """Per-subject controls and the pointwise summary band."""
    out_dir = Path(out_dir)
    d_u = report.mean.shape[1]
    rows = []
    for sid, t, u in report.per_subject:
        for tk, uk in zip(t, u):
            rows.append([sid, tk, *uk])
    p1 = write_table(out_dir / "controls.csv", ["subject_id", "t"] + [f"u_{j + 1}" for j in range(d_u)], rows)
    header = ["t"]
    for j in range(d_u):
        sfx = "" if d_u == 1 else f"_{j + 1}"
        header += [f"mean_u{sfx}", f"lo{sfx}", f"hi{sfx}"]
    summary = []
    for k, t in enumerate(report.times):
        row = [t]
        for j in range(d_u):
            row += [report.mean[k, j], report.lo[k, j], report.hi[k, j]]
        summary.append(row)
    p2 = write_table(out_dir / "controls_summary.csv", header, summary)
    return p1, p2


def write_mc_summary(path, summary) -> Path:
    rows = [[n, summary.mse[i], summary.bias[i], summary.emp_var[i], summary.est_var[i], summary.coverage[i]]
            for i, n in enumerate(summary.names)]
    return write_table(path, ["param", "mse", "bias", "emp_var", "est_var", "coverage"], rows)


def write_cv_table(path, table) -> Path:
    rows = []
    for U, ep in table:
        U = np.asarray(U)
        label = fmt(U[0, 0]) if np.allclose(U, U[0, 0] * np.eye(U.shape[0])) else json.dumps(U.tolist())
        rows.append([label, ep])
    return write_table(path, ["U", "EP"], rows)
