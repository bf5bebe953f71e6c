"""Pseudo-linear ODE models and the built-in benchmark fixtures.

A model describes the vector field of one subject as

    f(t, x, z) = A(t, x, z) x + r(t, z)

where ``A`` and ``r`` depend on the population parameters ``theta`` and the
subject random effect ``b``. All callables are vectorised over time: ``t`` has
shape ``(K,)``, ``x`` shape ``(K, d)``, and ``A`` returns ``(K, d, d)``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

LN10 = np.log(10.0)
X_CLAMP = 1e-8


@dataclass(frozen=True)
class LogLink:
    """Log link between (theta, b) and natural individual parameters.

    Individual log-parameter k is ``theta[k]`` plus the random effects mapped
    onto it by ``re_index`` (random effect j shifts log-parameter
    ``re_index[j]``). Natural parameters are the exponentials.
    """

    p: int
    re_index: tuple[int, ...]

    @property
    def q(self) -> int:
        return len(self.re_index)

    def individual(self, theta, b):
        phi = np.array(theta, dtype=float, copy=True)
        np.add.at(phi, list(self.re_index), np.asarray(b, dtype=float))
        return phi

    def natural(self, theta, b):
        return np.exp(self.individual(theta, b))

    def to_log(self, natural):
        natural = np.asarray(natural, dtype=float)
        if np.any(natural <= 0):
            raise ConfigurationError("natural parameters must be positive under a log link")
        return np.log(natural)

    def split(self, log_params, theta):
        """Recover ``b`` from individual log-parameters given ``theta``."""
        log_params = np.asarray(log_params, dtype=float)
        theta = np.asarray(theta, dtype=float)
        idx = list(self.re_index)
        return log_params[idx] - theta[idx]


@dataclass(frozen=True, eq=False)
class PseudoLinearModel:
    name: str
    d: int
    d_obs: int
    d_u: int
    p: int
    q: int
    A: Callable
    r: Callable
    B: np.ndarray
    C: np.ndarray
    known_ic_mask: np.ndarray
    link: LogLink
    param_names: tuple[str, ...] = ()
    state_dependent: bool = True
    f_raw: Callable | None = None
    exact_solution: Callable | None = None
    constants: dict = field(default_factory=dict)
    builtin: bool = False

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        mask = np.asarray(self.known_ic_mask, dtype=bool)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "known_ic_mask", mask)
        for arr in (B, C, mask):
            arr.setflags(write=False)
        if B.shape != (self.d, self.d_u) or self.d_u < 1:
            raise ConfigurationError(f"B must be {self.d}x{self.d_u} with d_u >= 1, got {B.shape}")
        if C.shape != (self.d_obs, self.d) or self.d_obs > self.d:
            raise ConfigurationError(f"C must be {self.d_obs}x{self.d} with d_obs <= d, got {C.shape}")
        if np.linalg.matrix_rank(C) != self.d_obs:
            raise ConfigurationError("C must have full row rank")
        if mask.shape != (self.d,):
            raise ConfigurationError("known_ic_mask must have one entry per state")
        if self.link.p != self.p or self.link.q != self.q:
            raise ConfigurationError("link dimensions disagree with (p, q)")

    def __reduce__(self):
        if self.builtin:
            return (builtin_model, (self.name,))
        return super().__reduce__()

    @property
    def unknown_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.known_ic_mask)

    @property
    def known_idx(self) -> np.ndarray:
        return np.flatnonzero(self.known_ic_mask)

    def natural_params(self, theta, b):
        return self.link.natural(theta, b)

    def A_r(self, t, x, z, theta, b):
        """Evaluate ``A`` and ``r`` along a trace; shapes (K, d, d), (K, d)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.asarray(x, dtype=float).reshape(t.size, self.d)
        return self.A(t, x, z, theta, b), self.r(t, z, theta, b)


def vector_field(model: PseudoLinearModel, t, x, z, theta, b):
    """Return ``A(t, x) x + r(t)`` at a single time or along a trace."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    if x.shape[-1] != model.d:
        raise ConfigurationError(f"state has {x.shape[-1]} entries, model expects {model.d}")
    if np.asarray(theta).shape != (model.p,) or np.asarray(b).shape != (model.q,):
        raise ConfigurationError("theta/b dimensions do not match the model")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    x2 = x.reshape(-1, model.d)
    if t_arr.size == 1 and x2.shape[0] > 1:
        t_arr = np.full(x2.shape[0], t_arr[0])
    A, r = model.A_r(t_arr, x2, z, theta, b)
    out = np.einsum("kij,kj->ki", A, x2) + r
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# linear2d: partially observed two-compartment linear model
# ---------------------------------------------------------------------------


def _lin2d_A(t, x, z, theta, b):
    phi1, phi2 = np.exp([theta[0] + b[0], theta[1]])
    A = np.zeros((t.size, 2, 2))
    A[:, 0, 0] = -phi1
    A[:, 0, 1] = phi2
    A[:, 1, 1] = -phi2
    return A


def _lin2d_r(t, z, theta, b):
    return np.zeros((np.size(t), 2))


def _lin2d_f(t, x, z, theta, b):
    phi1, phi2 = np.exp([theta[0] + b[0], theta[1]])
    return np.array([phi2 * x[1] - phi1 * x[0], -phi2 * x[1]])


def lin2d_first_state(t, x0, phi1, phi2):
    """Closed-form X1(t) of the linear model, with the equal-rate limit."""
    t = np.asarray(t, dtype=float)
    x10, x20 = x0
    gap = phi1 - phi2
    if abs(gap) < 1e-10:
        return np.exp(-phi1 * t) * (x10 + x20 * phi2 * t)
    return np.exp(-phi1 * t) * (x10 + x20 * phi2 / gap * np.expm1(gap * t))


def _lin2d_exact(t, x0, theta, b):
    phi1, phi2 = np.exp([theta[0] + b[0], theta[1]])
    t = np.asarray(t, dtype=float)
    x1 = lin2d_first_state(t, x0, phi1, phi2)
    x2 = x0[1] * np.exp(-phi2 * t)
    return np.column_stack([x1, x2])


# ---------------------------------------------------------------------------
# insulin: glucose / insulin / remote-insulin minimal model
# ---------------------------------------------------------------------------

# p2, gamma and h are fixed on the log scale; G_B, I_B on the natural scale.
INSULIN_CONSTANTS = {
    "p2": float(np.exp(-4.93)),
    "gamma": float(np.exp(-6.85)),
    "h": float(np.exp(4.14)),
    "G_B": 100.0,
    "I_B": 100.0,
}


def _insulin_params(theta, b):
    SG, SI, n = np.exp([theta[0], theta[1], theta[2] + b[0]])
    return SG, SI, n


def _insulin_A(t, x, z, theta, b):
    c = INSULIN_CONSTANTS
    SG, SI, n = _insulin_params(theta, b)
    A = np.zeros((t.size, 3, 3))
    A[:, 0, 0] = -SG
    A[:, 0, 2] = -x[:, 0]
    A[:, 1, 0] = c["gamma"] * t
    A[:, 1, 1] = -n
    A[:, 2, 1] = -c["p2"] * SI
    A[:, 2, 2] = -c["p2"]
    return A


def _insulin_r(t, z, theta, b):
    c = INSULIN_CONSTANTS
    SG, SI, n = _insulin_params(theta, b)
    t = np.atleast_1d(t)
    r = np.empty((t.size, 3))
    r[:, 0] = SG * c["G_B"]
    r[:, 1] = -c["gamma"] * t * c["h"] + n * c["I_B"]
    r[:, 2] = c["p2"] * SI * c["I_B"]
    return r


def _insulin_f(t, x, z, theta, b):
    c = INSULIN_CONSTANTS
    SG, SI, n = _insulin_params(theta, b)
    G, I, X = x
    return np.array(
        [
            SG * (c["G_B"] - G) - X * G,
            c["gamma"] * t * (G - c["h"]) - n * (I - c["I_B"]),
            -c["p2"] * (X + SI * (I - c["I_B"])),
        ]
    )


# ---------------------------------------------------------------------------
# antibody: antibody concentration fed by two decaying cell populations
# ---------------------------------------------------------------------------

DELTA_L = float(np.log(2.0) / (364 * 6))


def _ab_params(theta, b):
    dS, phiS, phiL, dAb = np.exp([theta[0], theta[1] + b[0], theta[2] + b[1], theta[3] + b[2]])
    return dS, phiS, phiL, dAb


def _ab_influx(t, theta, b):
    dS, phiS, phiL, _ = _ab_params(theta, b)
    return phiS * np.exp(-dS * t) + phiL * np.exp(-DELTA_L * t)


def _ab_A(t, x, z, theta, b):
    dAb = _ab_params(theta, b)[3]
    return np.full((t.size, 1, 1), -dAb)


def _ab_r(t, z, theta, b):
    return _ab_influx(np.atleast_1d(t), theta, b)[:, None]


def _ab_f(t, x, z, theta, b):
    dAb = _ab_params(theta, b)[3]
    return np.array([_ab_influx(t, theta, b) - dAb * x[0]])


def _ab_exact(t, x0, theta, b):
    dS, phiS, phiL, dAb = _ab_params(theta, b)
    t = np.asarray(t, dtype=float)

    def decay_pair(rate):
        # (e^{-rate t} - e^{-dAb t}) / (dAb - rate), stable when rates are close
        gap = dAb - rate
        if abs(gap) < 1e-12:
            return t * np.exp(-dAb * t)
        return np.exp(-rate * t) * -np.expm1(-gap * t) / gap

    ab = x0[0] * np.exp(-dAb * t) + phiS * decay_pair(dS) + phiL * decay_pair(DELTA_L)
    return ab[:, None]


def _ablog_A(t, x, z, theta, b):
    xs = x[:, 0]
    xs = np.where(np.abs(xs) < X_CLAMP, np.where(xs < 0, -X_CLAMP, X_CLAMP), xs)
    coef = _ab_influx(t, theta, b) / LN10 * 10.0 ** (-xs) / xs
    return coef[:, None, None]


def _ablog_r(t, z, theta, b):
    dAb = _ab_params(theta, b)[3]
    return np.full((np.size(t), 1), -dAb / LN10)


def _ablog_f(t, x, z, theta, b):
    dAb = _ab_params(theta, b)[3]
    return np.array([_ab_influx(t, theta, b) / LN10 * 10.0 ** (-x[0]) - dAb / LN10])


def _ablog_exact(t, x0, theta, b):
    return np.log10(_ab_exact(t, [10.0 ** x0[0]], theta, b))


# ---------------------------------------------------------------------------


def _build(name: str) -> PseudoLinearModel:
    if name == "linear2d":
        return PseudoLinearModel(
            name="linear2d", d=2, d_obs=1, d_u=2, p=2, q=1,
            A=_lin2d_A, r=_lin2d_r,
            B=np.eye(2), C=[[1.0, 0.0]],
            known_ic_mask=[False, False],
            link=LogLink(p=2, re_index=(0,)),
            param_names=("theta_1", "theta_2"),
            state_dependent=False, f_raw=_lin2d_f, exact_solution=_lin2d_exact, builtin=True,
        )
    if name == "insulin":
        return PseudoLinearModel(
            name="insulin", d=3, d_obs=2, d_u=3, p=3, q=1,
            A=_insulin_A, r=_insulin_r,
            B=np.eye(3), C=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            known_ic_mask=[False, False, False],
            link=LogLink(p=3, re_index=(2,)),
            param_names=("theta_SG", "theta_SI", "theta_n"),
            f_raw=_insulin_f, constants=dict(INSULIN_CONSTANTS), builtin=True,
        )
    if name == "antibody":
        return PseudoLinearModel(
            name="antibody", d=1, d_obs=1, d_u=1, p=4, q=3,
            A=_ab_A, r=_ab_r, B=[[1.0]], C=[[1.0]],
            known_ic_mask=[False],
            link=LogLink(p=4, re_index=(1, 2, 3)),
            param_names=("psi_delta_S", "psi_phi_S", "psi_phi_L", "psi_delta_Ab"),
            state_dependent=False, f_raw=_ab_f, exact_solution=_ab_exact,
            constants={"delta_L": DELTA_L}, builtin=True,
        )
    if name == "antibody_log10":
        return PseudoLinearModel(
            name="antibody_log10", d=1, d_obs=1, d_u=1, p=4, q=3,
            A=_ablog_A, r=_ablog_r, B=[[1.0]], C=[[1.0]],
            known_ic_mask=[False],
            link=LogLink(p=4, re_index=(1, 2, 3)),
            param_names=("psi_delta_S", "psi_phi_S", "psi_phi_L", "psi_delta_Ab"),
            f_raw=_ablog_f, exact_solution=_ablog_exact,
            constants={"delta_L": DELTA_L}, builtin=True,
        )
    raise LookupError(f"unknown model {name!r}; available: {', '.join(BUILTIN_NAMES)}")


BUILTIN_NAMES = ("linear2d", "insulin", "antibody", "antibody_log10")
_CACHE: dict[str, PseudoLinearModel] = {}


def builtin_model(name: str) -> PseudoLinearModel:
    """Return one of the shipped benchmark models by name."""
    if name not in _CACHE:
        _CACHE[name] = _build(name)
    return _CACHE[name]


def check_factorization(model: PseudoLinearModel, theta, b, points, z=None, tol=1e-10):
    """Largest scaled gap between ``A x + r`` and ``f_raw`` over ``(t, x)`` points."""
    if model.f_raw is None:
        raise ConfigurationError(f"model {model.name} has no reference vector field")
    worst = 0.0
    for t, x in points:
        fa = vector_field(model, t, x, z, theta, b)
        fr = model.f_raw(t, np.asarray(x, dtype=float), z, theta, b)
        worst = max(worst, float(np.max(np.abs(fa - fr) / (1.0 + np.abs(fr)))))
    return worst
