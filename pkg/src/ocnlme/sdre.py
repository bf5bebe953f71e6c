"""Fixed-point iteration for nonlinear (state-dependent) pseudo-linear models.

Each iteration freezes ``A(t, x)`` along the previous optimal trajectory,
solves the resulting linear tracking problem, and stops once both the
trajectory and the cost settle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lq
from .errors import ConfigurationError, NonConvergence


@dataclass(frozen=True)
class SdreConfig:
    """Stopping rule and start of the fixed-point iteration.

    ``x0u_init`` is ``"zeros"``, ``"data"`` (least-squares back-projection of
    the first observation through ``C``), or an explicit vector over the
    unknown initial entries.
    """

    eps_traj: float = 1e-6
    eps_cost: float = 1e-8
    max_iters: int = 100
    x0u_init: object = "zeros"
    relaxation: float = 1.0

    def __post_init__(self):
        if not (self.eps_traj > 0 and self.eps_cost > 0):
            raise ConfigurationError("SDRE tolerances must be positive")
        if int(self.max_iters) < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ConfigurationError("relaxation must lie in (0, 1]")
        if isinstance(self.x0u_init, str) and self.x0u_init not in ("zeros", "data"):
            raise ConfigurationError(f"unknown x0u_init {self.x0u_init!r}")


@dataclass(frozen=True, eq=False)
class TrackingResult:
    solution: lq.LqSolution
    g: float
    iterations: int
    deltas: tuple[float, float]


def initial_state_guess(model, observations, x0_known, cfg: SdreConfig):
    x0 = np.zeros(model.d)
    x0[model.known_idx] = np.asarray(x0_known, dtype=float).reshape(-1)
    init = cfg.x0u_init
    if isinstance(init, str):
        if init == "data":
            guess = np.linalg.pinv(model.C) @ np.asarray(observations, dtype=float)[0]
            x0[model.unknown_idx] = guess[model.unknown_idx]
    else:
        init = np.asarray(init, dtype=float).reshape(-1)
        if init.size != model.unknown_idx.size:
            raise ConfigurationError("x0u_init has the wrong length")
        x0[model.unknown_idx] = init
    return x0


def random_effect_penalty(b, Delta):
    b = np.asarray(b, dtype=float)
    Db = lq._as_delta_matrix(Delta, b.size) @ b
    return float(Db @ Db)


def solve_tracking(model, mesh, theta, b, Delta, z, U, observations, x0_known=(),
                   cfg: SdreConfig | None = None, td: lq.TrackingData | None = None) -> TrackingResult:
    """Iterate linear tracking solves to a fixed point of the trajectory.

    Iteration 0 is the constant trajectory at the initial guess. Models
    flagged ``state_dependent=False`` stop after the first solve since ``A``
    does not depend on the trace. ``td`` carries prepared subject arrays.
    """
    cfg = cfg or SdreConfig()
    if td is None:
        td = lq.TrackingData.build(mesh, observations, model.B, model.C, U, model.known_ic_mask)
    penalty = random_effect_penalty(b, Delta)
    K, d = mesh.K, model.d
    x_init = initial_state_guess(model, observations, x0_known, cfg)
    if not model.state_dependent:
        rp = lq.riccati_backward(model, mesh, theta, b, z, None, observations, None, td=td)
        sol = lq.solve_lq(rp, x0_known)
        X = sol.trajectory
        d_traj = float(((X - x_init) ** 2).sum()) / (K * d * (1.0 + float((X * X).sum(axis=1).mean())))
        return TrackingResult(sol, sol.g_value + penalty, 1, (d_traj, np.inf))
    trace = np.tile(x_init, (K + 1, 1))
    g_prev = None
    d_traj = d_cost = np.inf
    for it in range(1, int(cfg.max_iters) + 1):
        rp = lq.riccati_backward(model, mesh, theta, b, z, None, observations, trace, td=td)
        sol = lq.solve_lq(rp, x0_known)
        X = sol.trajectory
        d_traj = float(((X - trace) ** 2).sum()) / (K * d * (1.0 + float((X * X).sum(axis=1).mean())))
        if g_prev is not None:
            d_cost = abs(sol.g_value - g_prev)
            if d_traj < cfg.eps_traj and d_cost < cfg.eps_cost * (1.0 + abs(sol.g_value)):
                return TrackingResult(sol, sol.g_value + penalty, it, (d_traj, d_cost))
        g_prev = sol.g_value
        w = cfg.relaxation
        trace = X if w == 1.0 else w * X + (1.0 - w) * trace
    raise NonConvergence(
        f"SDRE iteration did not converge in {cfg.max_iters} iterations",
        last_deltas=(d_traj, d_cost), iterations=int(cfg.max_iters),
    )
