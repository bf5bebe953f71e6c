"""Discrete linear-quadratic tracking for one subject.

The discretised problem is

    x_{k+1} = Phi_k x_k + s_k + dt_k B u_k
    cost    = |C x_K - y_final|^2
              + sum_k dt_k (w_k |C x_k - y_k|^2 + u_k^T U u_k)

with ``A_k`` frozen along a supplied state trace. Two transition schemes
are available: explicit Euler, ``Phi_k = I + dt_k A_k`` and ``s_k = dt_k r_k``,
and the exponential (zero-order hold) scheme, which integrates the frozen
affine field ``A_k x + r_k`` exactly over each step. The value function is
``x^T R_k x + 2 h_k^T x + c_k``; only ``c_0`` is kept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _lqcore_py, kernels
from .errors import IllConditioned, NumericalError, ValidationError
from .grid import Mesh

COND_LIMIT = 1e12
SCHEMES = ("exponential", "euler")
DEFAULT_SCHEME = "exponential"


@dataclass(frozen=True)
class PenaltyU:
    """Symmetric positive-definite control penalty."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValidationError("U must be square")
        if not np.allclose(M, M.T, rtol=1e-12, atol=1e-14):
            raise ValidationError("U must be symmetric")
        M = 0.5 * (M + M.T)
        if not np.all(np.isfinite(M)) or np.linalg.eigvalsh(M).min() <= 0:
            raise ValidationError("U must be positive definite")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def coerce(cls, value, d_u: int) -> "PenaltyU":
        """Accept a PenaltyU, a scalar (times identity) or a matrix."""
        if isinstance(value, cls):
            out = value
        elif np.ndim(value) == 0:
            out = cls(float(value) * np.eye(d_u))
        else:
            out = cls(value)
        if out.matrix.shape != (d_u, d_u):
            raise ValidationError(f"U must be {d_u}x{d_u}, got {out.matrix.shape}")
        return out


@dataclass(frozen=True, eq=False)
class RiccatiPass:
    """Backward pass arrays plus everything the forward synthesis needs."""

    R: np.ndarray
    h: np.ndarray
    gains: np.ndarray
    c0: float
    Phi: np.ndarray
    s: np.ndarray
    B: np.ndarray
    C: np.ndarray
    mesh: Mesh
    observations: np.ndarray
    U: np.ndarray
    unknown_idx: np.ndarray
    known_idx: np.ndarray


@dataclass(frozen=True, eq=False)
class LqSolution:
    """Optimal control and trajectory of one tracking problem.

    ``g_value`` excludes the random-effect penalty ``|Delta b|^2``.
    """

    g_value: float
    x0u_hat: np.ndarray
    control: np.ndarray
    trajectory: np.ndarray
    residual: float
    energy: float
    times: np.ndarray

    @property
    def cost_split(self) -> tuple[float, float]:
        return self.residual, self.energy


def _as_delta_matrix(Delta, q):
    D = np.asarray(Delta, dtype=float)
    if D.ndim <= 1:
        D = np.diag(np.broadcast_to(D, (q,)))
    return D


def check_scheme(scheme: str) -> str:
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown discretisation scheme {scheme!r}; expected one of {SCHEMES}")
    return scheme


def discretize(model, mesh: Mesh, theta, b, z=None, trace=None, scheme: str = DEFAULT_SCHEME):
    """Transition matrices ``Phi_k`` and forcing ``s_k`` on the mesh.

    ``trace`` gives the state at mesh points ``0..K`` (or at least ``0..K-1``)
    where ``A`` is frozen; it may be omitted for state-independent models.
    """
    t = mesh.points[:-1]
    if trace is None:
        x = np.zeros((t.size, model.d))
    else:
        x = np.asarray(trace, dtype=float)[: t.size]
    A, r = model.A_r(t, x, z, theta, b)
    dt = mesh.steps
    d = model.d
    if scheme == "euler":
        Phi = np.eye(d) + dt[:, None, None] * A
        s = dt[:, None] * r
    elif scheme == "exponential":
        Phi, s = kernels.exp_transition(
            np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(r, dtype=float),
            np.ascontiguousarray(dt, dtype=float),
        )
    else:
        check_scheme(scheme)
    return np.ascontiguousarray(Phi), np.ascontiguousarray(s)


@dataclass(frozen=True, eq=False)
class TrackingData:
    """Mesh-aligned arrays of one subject, prepared once and reused per solve."""

    mesh: Mesh
    observations: np.ndarray
    B: np.ndarray
    C: np.ndarray
    U: np.ndarray
    omega: np.ndarray
    yd_head: np.ndarray
    y_final: np.ndarray
    dt: np.ndarray
    unknown_idx: np.ndarray
    known_idx: np.ndarray
    scheme: str = DEFAULT_SCHEME

    @classmethod
    def build(cls, mesh: Mesh, observations, B, C, U, known_mask=None,
              scheme: str = DEFAULT_SCHEME) -> "TrackingData":
        observations = np.asarray(observations, dtype=float)
        C = np.ascontiguousarray(np.atleast_2d(C), dtype=float)
        B = np.ascontiguousarray(np.atleast_2d(B), dtype=float)
        if observations.ndim == 1:
            observations = observations[:, None]
        if observations.shape != (mesh.obs_index.size, C.shape[0]):
            raise ValidationError("observations do not match the mesh / observation dimension")
        Umat = np.ascontiguousarray(PenaltyU.coerce(U, B.shape[1]).matrix)
        yd = mesh.extended_obs(observations)
        d = C.shape[1]
        mask = np.zeros(d, dtype=bool) if known_mask is None else np.asarray(known_mask, dtype=bool)
        return cls(
            mesh=mesh, observations=observations, B=B, C=C, U=Umat,
            omega=np.ascontiguousarray(mesh.obs_mask), yd_head=np.ascontiguousarray(yd[:-1]),
            y_final=np.ascontiguousarray(yd[-1]), dt=np.ascontiguousarray(mesh.steps, dtype=float),
            unknown_idx=np.flatnonzero(~mask), known_idx=np.flatnonzero(mask),
            scheme=check_scheme(scheme),
        )


def riccati_pass(td: TrackingData, Phi, s) -> RiccatiPass:
    """Backward Riccati pass for explicit transition arrays on prepared data."""
    args = (Phi, s, td.B, td.U, td.C, td.omega, td.yd_head, td.y_final, td.dt)
    R, h, G, c0 = kernels.riccati_backward(*args)
    if G is None:
        warnings.warn("gain factorisation failed; falling back to pseudo-inverse", RuntimeWarning, stacklevel=2)
        R, h, G, c0 = _lqcore_py.riccati_backward(*args, pinv_fallback=True)
    if not (np.isfinite(c0) and np.isfinite(R).all() and np.isfinite(h).all()):
        raise NumericalError("non-finite values in the Riccati recursion")
    return RiccatiPass(
        R=R, h=h, gains=G, c0=float(c0), Phi=Phi, s=s, B=td.B, C=td.C, mesh=td.mesh,
        observations=td.observations, U=td.U, unknown_idx=td.unknown_idx, known_idx=td.known_idx,
    )


def riccati_from_arrays(Phi, s, B, U, C, mesh: Mesh, observations, known_mask=None) -> RiccatiPass:
    """Backward Riccati pass for explicit transition arrays."""
    td = TrackingData.build(mesh, observations, B, C, U, known_mask)
    return riccati_pass(td, np.ascontiguousarray(Phi, dtype=float), np.ascontiguousarray(s, dtype=float))


def riccati_backward(model, mesh: Mesh, theta, b, z, U, observations, trace=None, td=None,
                     scheme: str = DEFAULT_SCHEME) -> RiccatiPass:
    """Backward pass for ``model`` with ``A`` frozen along ``trace``.

    ``td`` may carry the prepared subject arrays to skip re-validation; its
    scheme then takes precedence over ``scheme``.
    """
    if td is None:
        td = TrackingData.build(mesh, observations, model.B, model.C, U, model.known_ic_mask, scheme)
    Phi, s = discretize(model, mesh, theta, b, z, trace, td.scheme)
    return riccati_pass(td, Phi, s)


def profile_initial_condition(rp: RiccatiPass, x0_known, b=None, Delta=None):
    """Closed-form cost minimised over the unknown initial entries.

    Returns ``(g, x0u_hat)`` where ``g`` includes ``|Delta b|^2`` when ``b``
    and ``Delta`` are supplied.
    """
    u_idx, k_idx = rp.unknown_idx, rp.known_idx
    xk = np.asarray(x0_known, dtype=float).reshape(-1)
    if xk.size != k_idx.size:
        raise ValidationError(f"expected {k_idx.size} known initial values, got {xk.size}")
    R0, h0 = rp.R[0], rp.h[0]
    g = rp.c0
    if k_idx.size:
        g += float(xk @ R0[np.ix_(k_idx, k_idx)] @ xk) + 2.0 * float(h0[k_idx] @ xk)
    if u_idx.size:
        if k_idx.size:
            Ruu = R0[np.ix_(u_idx, u_idx)]
            lin = R0[np.ix_(u_idx, k_idx)] @ xk + h0[u_idx]
        else:
            Ruu, lin = R0, h0
        # R_0 is symmetric PSD: one eigendecomposition gives both the
        # condition number and the solve
        w, Q = np.linalg.eigh(Ruu)
        cond = w[-1] / w[0] if w[0] > 0 else np.inf
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise IllConditioned(f"unknown-state block of R_0 has condition number {cond:.3g}", cond)
        x0u = -(Q @ ((Q.T @ lin) / w))
        g += float(lin @ x0u)
    else:
        x0u = np.empty(0)
    if b is not None and Delta is not None:
        b = np.asarray(b, dtype=float)
        Db = _as_delta_matrix(Delta, b.size) @ b
        g += float(Db @ Db)
    return g, x0u


def full_initial_state(rp: RiccatiPass, x0u, x0_known):
    x0 = np.empty(rp.Phi.shape[1])
    x0[rp.unknown_idx] = x0u
    x0[rp.known_idx] = np.asarray(x0_known, dtype=float).reshape(-1)
    return x0


def synthesize(rp: RiccatiPass, x0, g_value=None, x0u_hat=None) -> LqSolution:
    """Forward recursion from the full initial state ``x0``.

    ``g_value`` defaults to the cost recomputed from the samples.
    """
    x0 = np.ascontiguousarray(x0, dtype=float)
    X, u = kernels.forward_pass(rp.Phi, rp.s, rp.B, rp.R, rp.h, rp.gains, rp.mesh.steps, x0)
    if not (np.isfinite(X).all() and np.isfinite(u).all()):
        raise NumericalError("non-finite values in the forward pass")
    resid = X[rp.mesh.obs_index] @ rp.C.T - rp.observations
    residual = float((resid * resid).sum())
    energy = float(rp.mesh.steps @ ((u @ rp.U) * u).sum(axis=1))
    if g_value is None:
        g_value = residual + energy
    if x0u_hat is None:
        x0u_hat = x0[rp.unknown_idx]
    return LqSolution(
        g_value=float(g_value), x0u_hat=np.asarray(x0u_hat), control=u, trajectory=X,
        residual=residual, energy=energy, times=rp.mesh.points,
    )


def solve_lq(rp: RiccatiPass, x0_known) -> LqSolution:
    """Profile the unknown initial state and synthesise the optimal path."""
    g, x0u = profile_initial_condition(rp, x0_known)
    return synthesize(rp, full_initial_state(rp, x0u, x0_known), g_value=g, x0u_hat=x0u)
