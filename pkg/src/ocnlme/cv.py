"""Forward cross-validation of the control penalty U."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .config import EstimationConfig
from .errors import NumericalError, OcnlmeError, ValidationError
from .integrate import rk4
from .lq import PenaltyU
from .population import FitResult, LogPrior, fit_population


def window_bounds(points, obs_times, H: int = 2) -> np.ndarray:
    """Indices into ``points`` of the ``H + 1`` window boundaries.

    Interior boundaries are the mesh points closest to equally spaced times
    over the observation span; the first is the mesh start, the last the
    final observation.
    """
    if H < 2:
        raise ValidationError("forward cross-validation needs H >= 2 windows")
    points = np.asarray(points, dtype=float)
    t0, T = float(obs_times[0]), float(obs_times[-1])
    idx = [0]
    for h in range(1, H):
        target = t0 + h * (T - t0) / H
        idx.append(int(np.argmin(np.abs(points - target))))
    idx.append(int(np.searchsorted(points, T)))
    idx = np.asarray(idx)
    if np.any(np.diff(idx) < 0):
        raise ValidationError("window boundaries are not ordered")
    return idx


def subject_prediction_error(model, subject, theta, b_hat, times, trajectory, H: int = 2) -> float:
    """``EP(i, U)``: restart the unperturbed ODE at each window start.

    Observations at a boundary belong to the window that starts there; the
    final observation belongs to the last window.
    """
    times = np.asarray(times, dtype=float)
    bounds = window_bounds(times, subject.times, H)
    obs_idx = np.searchsorted(times, subject.times)
    f_raw = model.f_raw

    def f(t, x):
        return f_raw(t, x, subject.covariate, theta, b_hat)

    total = 0.0
    for h in range(H):
        lo, hi = bounds[h], bounds[h + 1]
        last = h == H - 1
        sel = (obs_idx >= lo) & ((obs_idx <= hi) if last else (obs_idx < hi))
        if not np.any(sel):
            continue
        X = rk4(f, times[lo:hi + 1], trajectory[lo])
        pred = X[obs_idx[sel] - lo] @ model.C.T
        total += float(np.sum((subject.observations[sel] - pred) ** 2))
    return total


def forward_cv_score(fit: FitResult, population, model, H: int = 2) -> float:
    """Population prediction error ``EP(U)`` of a fitted model.

    A subject whose restart integration fails contributes ``+inf``.
    """
    total = 0.0
    for subject, sol in zip(population, fit.subjects):
        try:
            ep = subject_prediction_error(model, subject, fit.theta_hat, sol.b_hat,
                                          sol.lq.times, sol.lq.trajectory, H)
        except (NumericalError, FloatingPointError) as exc:
            warnings.warn(f"subject {subject.subject_id}: forward prediction failed ({exc})",
                          RuntimeWarning, stacklevel=2)
            ep = np.inf
        total += ep
    return total


@dataclass(frozen=True, eq=False)
class CvResult:
    U_best: np.ndarray
    table: list[tuple[np.ndarray, float]]
    fit: FitResult
    errors: dict


def _u_key(U) -> float:
    # candidates are ordered by their largest eigenvalue for the tie rule
    return float(np.linalg.eigvalsh(U).max())


def select_U(population, model, U_grid, start, prior: LogPrior | None = None,
             cfg: EstimationConfig | None = None, H: int = 2) -> CvResult:
    """Fit at every candidate and keep the smallest ``EP``.

    Ties go to the larger penalty. Candidates whose fit fails are reported
    in ``errors`` and scored ``+inf``.
    """
    cfg = cfg or EstimationConfig()
    cands = [PenaltyU.coerce(U, model.d_u).matrix for U in U_grid]
    if not cands:
        raise ValidationError("empty U grid")
    table, fits, errors = [], [], {}
    for k, U in enumerate(cands):
        try:
            fit = fit_population(population, model, U, start, prior, cfg)
            ep = forward_cv_score(fit, population, model, H)
        except OcnlmeError as exc:
            errors[k] = f"{type(exc).__name__}: {exc}"
            fit, ep = None, np.inf
        table.append((U, ep))
        fits.append(fit)
    finite = [k for k, (_, ep) in enumerate(table) if np.isfinite(ep)]
    if not finite:
        raise NumericalError(f"every U candidate failed: {errors}")
    best = min(finite, key=lambda k: (table[k][1], -_u_key(table[k][0])))
    return CvResult(U_best=table[best][0], table=table, fit=fits[best], errors=errors)
