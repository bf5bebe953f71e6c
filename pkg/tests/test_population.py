import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ocnlme.config import EstimationConfig
from ocnlme.errors import ValidationError
from ocnlme.population import (
    GaussianLogPrior,
    LogPrior,
    criterion_size,
    fit_population,
    outer_criterion,
    profiled_sigma2,
)


def g3(log_s2, S, N, n, delta):
    """Criterion before profiling, as a function of log sigma^2."""
    s2 = np.exp(log_s2)
    return -0.5 * S / s2 - 0.5 * N * log_s2 + n * np.sum(delta)


def test_profiled_sigma2_maximises_unprofiled_criterion(lin2d, lin2d_cohort):
    spec, pop, _ = lin2d_cohort
    theta, delta = np.asarray(spec.theta) + 0.05, spec.delta_true - 0.3
    G, sols = outer_criterion(theta, delta, pop, lin2d, spec.U)
    S = sum(s.h_value for s in sols)
    N = criterion_size(pop, 1, 1)
    res = minimize_scalar(lambda v: -g3(v, S, N, len(pop), delta), bracket=(-10, 0), tol=1e-12)
    s2 = profiled_sigma2(sols, [s.n_obs for s in pop], 1, 1)
    assert np.exp(res.x) == pytest.approx(s2, rel=1e-6)
    # G is the maximised criterion up to the constant -N/2
    assert G == pytest.approx(-res.fun + 0.5 * N, rel=1e-9)


def test_criterion_size(lin2d_cohort):
    _, pop, _ = lin2d_cohort
    assert criterion_size(pop, 1, 1) == 11 * len(pop) + len(pop)


def test_prior_shifts_criterion(lin2d, lin2d_cohort):
    spec, pop, _ = lin2d_cohort
    prior = GaussianLogPrior(np.zeros(3), 4.0)
    G0, _ = outer_criterion(spec.theta, spec.delta_true, pop, lin2d, spec.U)
    G1, _ = outer_criterion(spec.theta, spec.delta_true, pop, lin2d, spec.U, prior=prior)
    assert G1 - G0 == pytest.approx(prior(spec.theta, spec.delta_true))
    assert LogPrior()(spec.theta, spec.delta_true) == 0.0
    with pytest.raises(ValidationError):
        GaussianLogPrior([0.0], [0.0])


def test_fit_improves_on_start(lin2d, lin2d_cohort, lin2d_fit):
    spec, pop, _ = lin2d_cohort
    G0, _ = outer_criterion(spec.theta, spec.delta_true, pop, lin2d, spec.U)
    assert lin2d_fit.G_value >= G0
    assert np.allclose(lin2d_fit.psi_hat, np.diag(lin2d_fit.psi_sd ** 2))
    assert lin2d_fit.diagnostics["nfev"] > 0


def test_fit_rejects_bad_start(lin2d, lin2d_cohort):
    spec, pop, _ = lin2d_cohort
    with pytest.raises(ValidationError):
        fit_population(pop, lin2d, 1.0, ([0.0], [0.0]))
    with pytest.raises(ValidationError):
        fit_population([], lin2d, 1.0, (spec.theta, spec.delta_true))


def test_threads_give_same_criterion(lin2d, lin2d_cohort):
    spec, pop, _ = lin2d_cohort
    a, _ = outer_criterion(spec.theta, spec.delta_true, pop, lin2d, spec.U, cfg=EstimationConfig(jobs=1))
    b, _ = outer_criterion(spec.theta, spec.delta_true, pop, lin2d, spec.U, cfg=EstimationConfig(jobs=3))
    assert a == b
