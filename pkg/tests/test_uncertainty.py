import numpy as np
import pytest
from hypothesis import given, strategies as st

from ocnlme.errors import ValidationError
from ocnlme.population import criterion_size
from ocnlme.uncertainty import (
    Z975,
    attach_variance,
    confidence_interval,
    psi_delta_method,
    residual_control_report,
    sandwich_from_scores,
    subject_score,
)


def test_sandwich_matches_hc0_regression(rng):
    # least squares is an M-estimator with score x_i e_i and Jacobian -x_i x_i^T;
    # its sandwich is the HC0 covariance
    n = 200
    X = np.column_stack([np.ones(n), rng.standard_normal(n), rng.uniform(-1, 1, n)])
    y = X @ [1.0, -2.0, 0.5] + rng.standard_normal(n) * (1 + np.abs(X[:, 1]))
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    e = y - X @ beta
    J = X * e[:, None]
    dJ = -X[:, :, None] * X[:, None, :]
    parts = sandwich_from_scores(J, dJ)
    bread = np.linalg.inv(X.T @ X)
    hc0 = bread @ (X.T * e ** 2) @ X @ bread
    assert np.allclose(parts.V_hat, hc0, rtol=1e-10)
    assert not parts.ill_conditioned


def test_sandwich_singular_bread_flagged():
    J = np.array([[1.0, 0.0], [-1.0, 0.0]])
    dJ = np.array([[[-1.0, 0.0], [0.0, 0.0]]] * 2)
    parts = sandwich_from_scores(J, dJ)
    assert parts.ill_conditioned
    assert np.all(np.isfinite(parts.V_hat))


@given(st.floats(-2, 2), st.floats(1e-3, 10), st.floats(1e-4, 1.0))
def test_psi_delta_method_matches_numeric_gradient(delta, sigma2, vdd):
    def psi(d):
        return np.sqrt(sigma2) * np.exp(-d)

    h = 1e-6
    grad = (psi(delta + h) - psi(delta - h)) / (2 * h)
    V = np.array([[0.3, 0.01], [0.01, vdd]])
    got = psi_delta_method(V, [delta], sigma2)
    assert got[0] == pytest.approx(grad ** 2 * vdd, rel=1e-6)


def test_confidence_interval():
    lo, hi = confidence_interval([1.0, 2.0], [0.25, 0.0])
    assert np.allclose(lo, [1.0 - 0.5 * Z975, 2.0])
    assert np.allclose(hi, [1.0 + 0.5 * Z975, 2.0])
    lo90, hi90 = confidence_interval(0.0, 1.0, level=0.9)
    assert hi90 == pytest.approx(1.6448536, abs=1e-6)
    with pytest.raises(ValidationError):
        confidence_interval(0.0, -1.0)


def test_fd_score_converges_with_step(lin2d, lin2d_cohort, lin2d_fit):
    _, pop, _ = lin2d_cohort
    fit = lin2d_fit
    ratio = 2.0 * len(pop) / criterion_size(pop, 1, 1)
    args = (fit.theta_hat, fit.delta_hat, pop[0], lin2d, fit.U, ratio)
    kw = dict(b_start=fit.subjects[0].b_hat)
    J = [subject_score(*args, fd_step=s, **kw) for s in (4e-3, 2e-3, 1e-3)]
    d1 = np.abs(J[0] - J[1]).max()
    d2 = np.abs(J[1] - J[2]).max()
    assert d2 < d1


def test_attach_variance_and_controls(lin2d, lin2d_cohort, lin2d_fit):
    _, pop, _ = lin2d_cohort
    fit = lin2d_fit
    P = lin2d.p + lin2d.q
    rng = np.random.default_rng(3)
    J = rng.standard_normal((len(pop), P))
    dJ = np.broadcast_to(-np.eye(P), (len(pop), P, P))
    info = attach_variance(fit, sandwich_from_scores(J, dJ))
    try:
        assert fit.covariance.shape == (P, P)
        assert np.all(info["ci_lo"] <= fit.estimate) and np.all(fit.estimate <= info["ci_hi"])
        assert np.all(info["psi_ci_lo"] <= fit.psi_sd)
    finally:
        fit.covariance = None

    rep = residual_control_report(fit, pop, lin2d)
    assert rep.mean.shape == (rep.times.size, lin2d.d_u)
    assert len(rep.per_subject) == len(pop)
    assert np.all(rep.lo <= rep.mean) and np.all(rep.mean <= rep.hi)
    stacked = np.stack([u for _, _, u in rep.per_subject])
    assert np.allclose(rep.mean, stacked.mean(axis=0))
    assert rep.flagged.shape == rep.mean.shape
