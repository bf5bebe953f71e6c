"""Per-subject random-effect estimation by minimising the inner cost over b."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import lq
from .config import EstimationConfig
from .errors import NumericalError
from .grid import build_mesh
from .sdre import random_effect_penalty, solve_tracking


@dataclass(frozen=True, eq=False)
class InnerSolution:
    b_hat: np.ndarray
    lq: lq.LqSolution
    g_min: float
    penalty: float
    nfev: int
    nit: int
    converged: bool
    sdre_iterations: int

    @property
    def residual(self) -> float:
        return self.lq.residual

    @property
    def h_value(self) -> float:
        """Residual sum plus ``|Delta b|^2``; the per-subject sigma^2 numerator."""
        return self.lq.residual + self.penalty


def subject_mesh(model, subject, cfg: EstimationConfig):
    return build_mesh(subject.times, cfg.refine_for(model))


def tracking_data(model, subject, mesh, U, scheme=lq.DEFAULT_SCHEME):
    return lq.TrackingData.build(mesh, subject.observations, model.B, model.C, U, model.known_ic_mask, scheme)


def inner_cost(model, subject, mesh, theta, Delta, U, b, cfg: EstimationConfig, td=None):
    """``g(b)`` with the random-effect penalty; returns the tracking result too."""
    res = solve_tracking(
        model, mesh, theta, b, Delta, subject.covariate, U,
        subject.observations, subject.known_ic_values, cfg.sdre, td=td,
    )
    return res.g, res


def estimate_subject(model, subject, theta, Delta, U, cfg: EstimationConfig | None = None,
                     b_start=None, tight: bool = False, mesh=None) -> InnerSolution:
    """Minimise ``b -> g(b | theta, Delta, U)`` with Nelder-Mead.

    ``tight`` tightens the simplex tolerances; used when the result feeds a
    finite-difference derivative.
    """
    cfg = cfg or EstimationConfig()
    mesh = mesh if mesh is not None else subject_mesh(model, subject, cfg)
    theta = np.asarray(theta, dtype=float)
    U = lq.PenaltyU.coerce(U, model.d_u)
    td = tracking_data(model, subject, mesh, U, cfg.scheme)
    q = model.q
    warm = b_start is not None
    b0 = np.zeros(q) if not warm else np.asarray(b_start, dtype=float).reshape(q)

    best = {"g": np.inf, "b": None, "res": None}

    def fun(b):
        try:
            g, res = inner_cost(model, subject, mesh, theta, Delta, U, b, cfg, td)
        except NumericalError:
            return np.inf
        if not np.isfinite(g):
            return np.inf
        if g < best["g"]:
            best.update(g=g, b=np.array(b, dtype=float), res=res)
        return g

    g0 = fun(b0)
    if tight:
        xatol, fatol, step = 1e-10, 1e-15 * (1.0 + abs(g0)), 1e-3
    else:
        xatol, fatol = cfg.inner_xatol, cfg.inner_fatol
        step = cfg.inner_step * (0.1 if warm else 1.0)
    simplex = np.vstack([b0, b0 + step * np.eye(q)])
    out = minimize(
        fun, b0, method="Nelder-Mead",
        options=dict(xatol=xatol, fatol=fatol, maxfev=cfg.inner_maxfev_per_q * q,
                     initial_simplex=simplex),
    )
    if best["res"] is None:
        raise NumericalError(f"subject {subject.subject_id}: inner cost is not finite anywhere visited")
    res = best["res"]
    b_hat = best["b"]
    return InnerSolution(
        b_hat=b_hat, lq=res.solution, g_min=float(best["g"]),
        penalty=random_effect_penalty(b_hat, Delta),
        nfev=int(out.nfev) + 1, nit=int(out.nit), converged=bool(out.success),
        sdre_iterations=res.iterations,
    )
