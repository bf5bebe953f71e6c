import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def lin2d():
    from ocnlme.models import builtin_model

    return builtin_model("linear2d")


@pytest.fixture(scope="session")
def lin2d_cohort():
    """Small noisy linear2d cohort and its truths."""
    from ocnlme.simulation import builtin_scenario, simulate_population

    spec = builtin_scenario("linear2d", n=6, seed=11)
    population, truths = simulate_population(spec)
    return spec, population, truths


@pytest.fixture(scope="session")
def lin2d_fit(lin2d, lin2d_cohort):
    from ocnlme.config import EstimationConfig
    from ocnlme.population import fit_population

    spec, population, _ = lin2d_cohort
    cfg = EstimationConfig(outer_maxfev=150)
    return fit_population(population, lin2d, spec.U, (spec.theta, spec.delta_true), cfg=cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
