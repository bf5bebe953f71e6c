import pickle

import numpy as np
import pytest

from ocnlme.errors import ConfigurationError
from ocnlme.integrate import refined_grid, rk4
from ocnlme.models import BUILTIN_NAMES, LogLink, builtin_model, check_factorization
from ocnlme.simulation import SCENARIOS


def _theta(name):
    base = "antibody" if name.startswith("antibody") else name
    return np.asarray(SCENARIOS[base].theta)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_factorisation_matches_raw_field(name):
    m = builtin_model(name)
    rng = np.random.default_rng(0)
    pts = [(float(t), np.abs(rng.normal(2.0, 1.0, m.d)) + 0.1) for t in rng.uniform(0, 50, 20)]
    assert check_factorization(m, _theta(name), 0.1 * np.ones(m.q), pts) < 1e-10


# the log-scale antibody field is stiff right after t=0; RK4 at this step
# size is only good to ~1e-6 there
@pytest.mark.parametrize("name,tol", [("linear2d", 1e-8), ("antibody", 1e-8), ("antibody_log10", 1e-6)])
def test_exact_solution_against_rk4(name, tol):
    m = builtin_model(name)
    theta, b = _theta(name), 0.2 * np.ones(m.q)
    x0 = np.array([2.0, 3.0]) if m.d == 2 else np.array([2.5 if name.endswith("log10") else 400.0])
    T = 10.0 if name == "linear2d" else 364.0
    times = np.linspace(0, T, 11)
    grid, idx = refined_grid(times, 10 ** 4)
    X = rk4(lambda t, x: m.f_raw(t, x, None, theta, b), grid, x0)[idx]
    ref = m.exact_solution(times, x0, theta, b)
    assert np.abs(X - ref).max() <= tol * max(1.0, np.abs(ref).max())


def test_linear2d_equal_rates_limit(lin2d):
    x0 = np.array([1.0, 2.0])
    t = np.linspace(0, 3, 7)
    th = np.log([0.7, 0.7])
    near = lin2d.exact_solution(t, x0, th + np.array([1e-12, 0.0]), [0.0])
    at = lin2d.exact_solution(t, x0, th, [0.0])
    assert np.all(np.isfinite(at))
    assert np.allclose(near, at, atol=1e-7)


def test_builtins_pickle_by_name():
    for name in BUILTIN_NAMES:
        m = builtin_model(name)
        assert pickle.loads(pickle.dumps(m)) is m


def test_unknown_model():
    with pytest.raises(LookupError):
        builtin_model("nope")


def test_log_link_roundtrip():
    link = LogLink(p=4, re_index=(1, 2, 3))
    theta = np.array([0.1, 0.2, 0.3, 0.4])
    b = np.array([1.0, -1.0, 0.5])
    phi = link.individual(theta, b)
    assert np.allclose(link.split(phi, theta), b)
    assert np.allclose(link.natural(theta, b), np.exp(phi))
    with pytest.raises(ConfigurationError):
        link.to_log([1.0, -1.0])


def test_dimensions(lin2d):
    assert (lin2d.d, lin2d.d_obs, lin2d.p, lin2d.q) == (2, 1, 2, 1)
    assert not lin2d.state_dependent
    assert builtin_model("insulin").state_dependent
