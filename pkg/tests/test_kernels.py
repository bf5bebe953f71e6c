import numpy as np
import pytest

from ocnlme import _lqcore_py, kernels
from oracles import exact_affine_step, random_lq_problem

compiled = pytest.importorskip("ocnlme._lqcore")


def _args(p):
    mesh = p["mesh"]
    yd = mesh.extended_obs(p["y"])
    return (p["Phi"], p["s"], np.ascontiguousarray(p["B"]), np.ascontiguousarray(p["U"]),
            np.ascontiguousarray(p["C"]), np.ascontiguousarray(mesh.obs_mask), np.ascontiguousarray(yd[:-1]),
            np.ascontiguousarray(yd[-1]), np.ascontiguousarray(mesh.steps))


@pytest.mark.parametrize("seed", range(10))
def test_backends_agree(seed):
    p = random_lq_problem(np.random.default_rng(seed))
    a = _args(p)
    Rc, hc, Gc, cc = compiled.riccati_backward(*a)
    Rp, hp, Gp, cp = _lqcore_py.riccati_backward(*a)
    assert np.allclose(Rc, Rp, rtol=1e-12, atol=1e-12)
    assert np.allclose(hc, hp, rtol=1e-12, atol=1e-12)
    assert np.allclose(Gc, Gp, rtol=1e-12, atol=1e-12)
    assert cc == pytest.approx(cp, rel=1e-12, abs=1e-12)
    x0 = np.random.default_rng(seed).standard_normal(p["Phi"].shape[1])
    Xc, uc = compiled.forward_pass(p["Phi"], p["s"], a[2], Rc, hc, Gc, a[8], x0)
    Xp, up = _lqcore_py.forward_pass(p["Phi"], p["s"], a[2], Rp, hp, Gp, a[8], x0)
    assert np.allclose(Xc, Xp, rtol=1e-12, atol=1e-12) and np.allclose(uc, up, rtol=1e-12, atol=1e-12)


def test_read_only_inputs_accepted():
    p = random_lq_problem(np.random.default_rng(3))
    a = _args(p)
    for arr in a:
        arr.setflags(write=False)
    compiled.riccati_backward(*a)


def test_indefinite_gain_reported():
    p = random_lq_problem(np.random.default_rng(4))
    a = list(_args(p))
    a[3] = -np.eye(a[3].shape[0]) * 1e3
    assert compiled.riccati_backward(*a)[2] is None


@pytest.mark.parametrize("mod", [compiled, _lqcore_py], ids=["compiled", "python"])
@pytest.mark.parametrize("scale", [1e-3, 0.3, 2.0, 15.0])
def test_exp_transition_matches_scipy(mod, scale):
    rng = np.random.default_rng(int(scale * 1000))
    K, d = 7, 3
    A = rng.standard_normal((K, d, d)) * scale
    r = rng.standard_normal((K, d))
    dt = rng.uniform(0.05, 1.0, K)
    Phi, s = mod.exp_transition(A, r, dt)
    for k in range(K):
        P, v = exact_affine_step(A[k], r[k], dt[k])
        tol = 1e-12 * max(1.0, np.abs(P).max())
        assert np.abs(Phi[k] - P).max() <= tol * 100
        assert np.abs(s[k] - v).max() <= tol * 100 * max(1.0, np.abs(v).max())


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")
