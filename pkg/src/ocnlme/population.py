"""Population criterion with the measurement variance profiled out.

Random-effect precision is parametrised as ``Delta = diag(exp(delta))`` so
that ``Psi = sigma^2 (Delta^T Delta)^{-1}``; the standard deviation of random
effect ``k`` is ``sigma * exp(-delta_k)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .config import EstimationConfig
from .errors import NumericalError, ValidationError
from .inner import InnerSolution, estimate_subject, subject_mesh
from .lq import PenaltyU


class LogPrior:
    """Log prior density on ``(theta, delta)``; the default is flat (zero)."""

    def __call__(self, theta, delta) -> float:
        return 0.0


@dataclass(frozen=True)
class GaussianLogPrior(LogPrior):
    """Independent Gaussian prior on the stacked vector ``(theta, delta)``."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        var = np.broadcast_to(np.asarray(self.variance, dtype=float), mean.shape).copy()
        if np.any(var <= 0):
            raise ValidationError("prior variances must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    def __call__(self, theta, delta) -> float:
        x = np.concatenate([np.asarray(theta, float).reshape(-1), np.asarray(delta, float).reshape(-1)])
        if x.shape != self.mean.shape:
            raise ValidationError("prior dimension does not match (theta, delta)")
        return float(-0.5 * np.sum((x - self.mean) ** 2 / self.variance + np.log(2 * np.pi * self.variance)))


@dataclass(eq=False)
class FitResult:
    model_name: str
    theta_hat: np.ndarray
    delta_hat: np.ndarray
    sigma2_hat: float
    psi_hat: np.ndarray
    subjects: list[InnerSolution]
    subject_ids: list[str]
    G_value: float
    U: np.ndarray
    covariance: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def psi_sd(self) -> np.ndarray:
        """Random-effect standard deviations ``sigma * exp(-delta)``."""
        return np.sqrt(self.sigma2_hat) * np.exp(-self.delta_hat)

    @property
    def estimate(self) -> np.ndarray:
        return np.concatenate([self.theta_hat, self.delta_hat])


def criterion_size(population, d_obs: int, q: int) -> int:
    """``d_obs * sum(n_i) + q * n``."""
    return int(d_obs * sum(s.n_obs for s in population) + q * len(population))


def profiled_sigma2(subject_solutions, n_obs, d_obs: int, q: int) -> float:
    """Closed-form maximiser of the criterion in sigma^2."""
    if len(subject_solutions) == 0:
        raise ValidationError("empty population")
    N = d_obs * int(np.sum(n_obs)) + q * len(subject_solutions)
    return float(sum(s.h_value for s in subject_solutions) / N)


def criterion_from_sigma2(sigma2, delta, N, n, log_prior=0.0, floor=1e-12) -> float:
    return float(-0.5 * N * np.log(max(sigma2, floor)) + n * np.sum(delta) + log_prior)


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def outer_criterion(theta, delta, population, model, U, prior: LogPrior | None = None,
                    cfg: EstimationConfig | None = None, b_starts=None, meshes=None, tight=False):
    """Return ``(G, subject_solutions)``; ``G = -inf`` if any subject fails."""
    cfg = cfg or EstimationConfig()
    prior = prior or LogPrior()
    theta = np.asarray(theta, dtype=float).reshape(model.p)
    delta = np.asarray(delta, dtype=float).reshape(model.q)
    Delta = np.exp(delta)
    U = PenaltyU.coerce(U, model.d_u)
    meshes = meshes or [subject_mesh(model, s, cfg) for s in population]
    starts = b_starts if b_starts is not None else [None] * len(population)

    def one(i):
        try:
            return estimate_subject(model, population[i], theta, Delta, U, cfg,
                                    b_start=starts[i], tight=tight, mesh=meshes[i])
        except NumericalError:
            return None

    sols = _map(one, list(range(len(population))), cfg.jobs)
    if any(s is None for s in sols):
        return -np.inf, sols
    N = criterion_size(population, model.d_obs, model.q)
    s2 = profiled_sigma2(sols, [s.n_obs for s in population], model.d_obs, model.q)
    G = criterion_from_sigma2(s2, delta, N, len(population), prior(theta, delta), cfg.sigma2_floor)
    return G, sols


def fit_population(population, model, U, start, prior: LogPrior | None = None,
                   cfg: EstimationConfig | None = None) -> FitResult:
    """Maximise the outer criterion over ``(theta, delta)`` with Nelder-Mead.

    ``start`` is ``(theta0, delta0)``. Inner solves are warm-started from
    the random effects at the best point found so far.
    """
    cfg = cfg or EstimationConfig()
    prior = prior or LogPrior()
    if len(population) == 0:
        raise ValidationError("empty population")
    for s in population:
        if s.d_obs != model.d_obs:
            raise ValidationError(f"subject {s.subject_id} has {s.d_obs} outputs, model observes {model.d_obs}")
    U = PenaltyU.coerce(U, model.d_u)
    theta0, delta0 = (np.asarray(v, dtype=float).reshape(-1) for v in start)
    if theta0.size != model.p or delta0.size != model.q:
        raise ValidationError("start point has the wrong dimension")
    x0 = np.concatenate([theta0, delta0])
    if not np.all(np.isfinite(x0)):
        raise ValidationError("start point must be finite")
    p = model.p
    meshes = [subject_mesh(model, s, cfg) for s in population]
    state = {"best": -np.inf, "x": x0, "sols": None, "nfev": 0}

    def neg_G(x):
        starts = None if state["sols"] is None else [s.b_hat for s in state["sols"]]
        G, sols = outer_criterion(x[:p], x[p:], population, model, U, prior, cfg, starts, meshes)
        state["nfev"] += 1
        if G > state["best"]:
            state.update(best=G, x=np.array(x), sols=sols)
        return -G if np.isfinite(G) else np.inf

    neg_G(x0)
    if state["sols"] is None:
        raise NumericalError("outer criterion is not finite at the start point")
    simplex = np.vstack([x0, x0 + cfg.outer_step * np.eye(x0.size)])
    out = minimize(
        neg_G, x0, method="Nelder-Mead",
        options=dict(maxfev=cfg.outer_maxfev, xatol=cfg.outer_xatol, fatol=cfg.outer_fatol,
                     initial_simplex=simplex),
    )
    return _result(model, population, U, state["x"], state["sols"], state["best"],
                   {"nfev": state["nfev"], "nit": int(out.nit), "converged": bool(out.success),
                    "message": str(out.message)})


def _result(model, population, U, x_hat, sols, G, diagnostics) -> FitResult:
    p = model.p
    theta_hat, delta_hat = x_hat[:p].copy(), x_hat[p:].copy()
    s2 = profiled_sigma2(sols, [s.n_obs for s in population], model.d_obs, model.q)
    psi = s2 * np.diag(np.exp(-2.0 * delta_hat))
    return FitResult(
        model_name=model.name, theta_hat=theta_hat, delta_hat=delta_hat, sigma2_hat=s2, psi_hat=psi,
        subjects=list(sols), subject_ids=[s.subject_id for s in population], G_value=float(G),
        U=U.matrix.copy(), diagnostics=diagnostics,
    )


def evaluate_at(population, model, U, theta, delta, prior: LogPrior | None = None,
                cfg: EstimationConfig | None = None) -> FitResult:
    """Inner estimates at fixed ``(theta, delta)``, packaged like a fit."""
    U = PenaltyU.coerce(U, model.d_u)
    x = np.concatenate([np.asarray(theta, float).reshape(model.p), np.asarray(delta, float).reshape(model.q)])
    G, sols = outer_criterion(x[:model.p], x[model.p:], population, model, U, prior, cfg)
    if not np.isfinite(G):
        raise NumericalError("an inner solve failed at the given parameters")
    return _result(model, population, U, x, sols, G, {"nfev": 1, "fixed": True})
