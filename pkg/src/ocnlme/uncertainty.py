"""Sandwich covariance of (theta, delta), delta method for Psi, and the
residual-control diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EstimationConfig
from .errors import NumericalError, ValidationError
from .inner import estimate_subject, subject_mesh
from .lq import PenaltyU
from .population import FitResult, _map, criterion_size

Z975 = 1.959964


@dataclass(frozen=True, eq=False)
class SandwichParts:
    J: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    V_hat: np.ndarray
    ill_conditioned: bool = False

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.V_hat), 0.0, None))


class _SubjectH:
    """Memoised ``h`` of one subject at offsets from a base point.

    Offsets are integer multiples of the per-coordinate steps, so repeated
    probes (including the base point itself) are solved once.
    """

    def __init__(self, model, subject, U, cfg, x, steps, b_start, mesh):
        self.model, self.subject, self.U, self.cfg = model, subject, U, cfg
        self.x, self.steps, self.b_start, self.mesh = x, steps, b_start, mesh
        self.cache = {}

    def __call__(self, offset: tuple[int, ...]) -> float:
        if offset not in self.cache:
            x = self.x + np.asarray(offset) * self.steps
            p = self.model.p
            sol = estimate_subject(
                self.model, self.subject, x[:p], np.exp(x[p:]), self.U, self.cfg,
                b_start=self.b_start, tight=True, mesh=self.mesh,
            )
            self.cache[offset] = sol.h_value
        return self.cache[offset]


def _score_at(H: _SubjectH, base: tuple[int, ...], ratio: float, p: int) -> np.ndarray:
    P = len(base)
    J = np.empty(P)
    for k in range(P):
        up = list(base)
        dn = list(base)
        up[k] += 1
        dn[k] -= 1
        J[k] = (H(tuple(up)) - H(tuple(dn))) / (2.0 * H.steps[k])
    J[p:] -= ratio * H(base)
    return J


def fd_steps(x, fd_step: float) -> np.ndarray:
    return fd_step * (1.0 + np.abs(np.asarray(x, dtype=float)))


def subject_score(theta, delta, subject, model, U, ratio: float, cfg: EstimationConfig | None = None,
                  b_start=None, fd_step: float | None = None, with_jacobian: bool = False):
    """Finite-difference score ``J_i`` at ``(theta, delta)``.

    ``ratio`` is ``2n / (d_obs sum n_i + q n)``. With ``with_jacobian`` also
    returns the forward-difference Jacobian ``dJ_i/d(theta, delta)``.
    """
    cfg = cfg or EstimationConfig()
    U = PenaltyU.coerce(U, model.d_u)
    x = np.concatenate([np.asarray(theta, float).reshape(-1), np.asarray(delta, float).reshape(-1)])
    P, p = x.size, model.p
    mesh = subject_mesh(model, subject, cfg)
    step = cfg.fd_step if fd_step is None else fd_step
    for attempt in range(2):
        steps = fd_steps(x, step * (2.0 ** attempt))
        H = _SubjectH(model, subject, U, cfg, x, steps, b_start, mesh)
        try:
            base = (0,) * P
            J = _score_at(H, base, ratio, p)
            if not with_jacobian:
                if np.all(np.isfinite(J)):
                    return J
                continue
            dJ = np.empty((P, P))
            for j in range(P):
                shifted = [0] * P
                shifted[j] = 1
                dJ[:, j] = (_score_at(H, tuple(shifted), ratio, p) - J) / steps[j]
            if np.all(np.isfinite(J)) and np.all(np.isfinite(dJ)):
                return J, dJ
        except NumericalError:
            continue
    raise NumericalError(f"subject {subject.subject_id}: inner solve failed at score probes")


def sandwich_from_scores(J, dJ) -> SandwichParts:
    """Assemble ``A^{-1} B A^{-T} / n`` from per-subject scores and Jacobians."""
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    B_hat = J.T @ J / n
    A_hat = -np.mean(np.asarray(dJ, dtype=float), axis=0)
    ill = False
    cond = np.linalg.cond(A_hat)
    if not np.isfinite(cond) or cond > 1e12:
        ill = True
        A_inv = np.linalg.pinv(A_hat)
    else:
        A_inv = np.linalg.inv(A_hat)
    V = A_inv @ B_hat @ A_inv.T / n
    V = 0.5 * (V + V.T)
    return SandwichParts(J=J, A_hat=A_hat, B_hat=0.5 * (B_hat + B_hat.T), V_hat=V, ill_conditioned=ill)


def sandwich_covariance(fit: FitResult, population, model, cfg: EstimationConfig | None = None,
                        fd_step: float | None = None) -> SandwichParts:
    """Sandwich covariance of ``(theta_hat, delta_hat)``."""
    cfg = cfg or EstimationConfig()
    n = len(population)
    ratio = 2.0 * n / criterion_size(population, model.d_obs, model.q)

    def one(i):
        return subject_score(fit.theta_hat, fit.delta_hat, population[i], model, fit.U, ratio, cfg,
                             b_start=fit.subjects[i].b_hat, fd_step=fd_step, with_jacobian=True)

    parts = _map(one, list(range(n)), cfg.jobs)
    return sandwich_from_scores([p[0] for p in parts], [p[1] for p in parts])


def psi_delta_method(V, delta, sigma2) -> np.ndarray:
    """Variances of the random-effect standard deviations ``sigma * exp(-delta_k)``.

    ``V`` may be the full ``(theta, delta)`` covariance; its trailing
    ``q x q`` block is used.
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    q = delta.size
    V = np.asarray(V, dtype=float)
    Vdd = V[-q:, -q:]
    return float(sigma2) * np.exp(-2.0 * delta) * np.diag(Vdd)


def confidence_interval(estimate, variance, level: float = 0.95):
    """Normal-approximation interval ``estimate +- z * sqrt(variance)``."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise ValidationError("variance must be non-negative")
    if level == 0.95:
        z = Z975
    else:
        from scipy.stats import norm

        z = float(norm.ppf(0.5 + level / 2.0))
    half = z * np.sqrt(variance)
    est = np.asarray(estimate, dtype=float)
    return est - half, est + half


def attach_variance(fit: FitResult, parts: SandwichParts) -> dict:
    """Store ``V`` on the fit and return standard errors and 95% intervals."""
    fit.covariance = parts.V_hat
    se = parts.std_errors
    lo, hi = confidence_interval(fit.estimate, se ** 2)
    psi_var = psi_delta_method(parts.V_hat, fit.delta_hat, fit.sigma2_hat)
    plo, phi = confidence_interval(fit.psi_sd, psi_var)
    return {
        "se": se, "ci_lo": lo, "ci_hi": hi,
        "psi_var": psi_var, "psi_ci_lo": plo, "psi_ci_hi": phi,
        "ill_conditioned": parts.ill_conditioned,
    }


@dataclass(frozen=True, eq=False)
class ControlReport:
    times: np.ndarray
    per_subject: list[tuple[str, np.ndarray, np.ndarray]]
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def flagged(self) -> np.ndarray:
        """Grid points where the band excludes zero, per control component."""
        return (self.lo > 0) | (self.hi < 0)


def residual_control_report(fit: FitResult, population, model=None, n_grid: int | None = None) -> ControlReport:
    """Per-subject optimal controls plus their pointwise mean and 1.96-sd band.

    Controls are piecewise constant on each subject mesh. When all subjects
    share one mesh it is used as the common grid; otherwise controls are read
    off on a uniform grid over the shortest common span.
    """
    per = []
    for sid, sol in zip(fit.subject_ids, fit.subjects):
        per.append((sid, sol.lq.times[:-1], sol.lq.control))
    same = all(t.shape == per[0][1].shape and np.array_equal(t, per[0][1]) for _, t, _ in per)
    if same and n_grid is None:
        grid = per[0][1]
        U = np.stack([u for _, _, u in per])
    else:
        t_end = min(sol.lq.times[-1] for sol in fit.subjects)
        m = n_grid or max(u.shape[0] for _, _, u in per)
        grid = np.linspace(0.0, t_end, m, endpoint=False)
        U = np.stack([u[np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 1)] for _, t, u in per])
    mean = U.mean(axis=0)
    sd = U.std(axis=0, ddof=1) if U.shape[0] > 1 else np.zeros_like(mean)
    return ControlReport(times=grid, per_subject=per, mean=mean, lo=mean - Z975 * sd, hi=mean + Z975 * sd)
