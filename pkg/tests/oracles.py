"""Independent reference computations used by the tests."""

import numpy as np
from scipy.linalg import expm

from ocnlme.grid import Mesh


def lq_bruteforce(Phi, s, B, U, C, points, obs_times, observations, known_mask, x0_known):
    """Minimise the discrete tracking cost by stacked linear least squares.

    Decision vector is ``(u_0, ..., u_{K-1}, x0_unknown)``; every state is an
    affine function of it, so the cost is an ordinary least-squares problem.
    Observation indices and weights are recomputed here from the raw times.
    """
    K, d, _ = Phi.shape
    m = B.shape[1]
    points = np.asarray(points, dtype=float)
    dt = np.diff(points)
    obs_k = [int(np.argmin(np.abs(points - t))) for t in obs_times]
    assert obs_k[-1] == K
    y_at = {k: np.asarray(y, dtype=float) for k, y in zip(obs_k, observations)}
    known_mask = np.asarray(known_mask, dtype=bool)
    u_idx = np.flatnonzero(~known_mask)
    k_idx = np.flatnonzero(known_mask)
    nv = K * m + u_idx.size
    # x_k = M_k z + a_k
    M = np.zeros((d, nv))
    a = np.zeros(d)
    for j, i in enumerate(u_idx):
        M[i, K * m + j] = 1.0
    a[k_idx] = x0_known
    L = np.linalg.cholesky(U)
    rows, rhs = [], []
    for k in range(K):
        if k in y_at:
            rows.append(C @ M)
            rhs.append(y_at[k] - C @ a)
        Mu = np.zeros((m, nv))
        Mu[:, k * m:(k + 1) * m] = np.eye(m)
        rows.append(np.sqrt(dt[k]) * L.T @ Mu)
        rhs.append(np.zeros(m))
        M = Phi[k] @ M + dt[k] * B @ Mu
        a = Phi[k] @ a + s[k]
    rows.append(C @ M)
    rhs.append(y_at[K] - C @ a)
    Amat = np.vstack(rows)
    bvec = np.concatenate(rhs)
    z, *_ = np.linalg.lstsq(Amat, bvec, rcond=None)
    res = Amat @ z - bvec
    return float(res @ res), z[: K * m].reshape(K, m), z[K * m:]


def random_lq_problem(rng, max_d=3, max_K=20):
    """Random well-posed tracking problem with more observed values than states."""
    from ocnlme.grid import build_mesh

    while True:
        d = int(rng.integers(1, max_d + 1))
        m = int(rng.integers(1, d + 1))
        o = int(rng.integers(1, d + 1))
        n = int(rng.integers(2, 6))
        if n * o <= d:
            continue
        times = np.sort(rng.choice(np.arange(0, 30), n, replace=False)) * 0.2
        refine = int(rng.integers(1, 5))
        mesh = build_mesh(times, refine)
        while mesh.K > max_K and refine > 1:
            refine -= 1
            mesh = build_mesh(times, refine)
        if mesh.K > max_K:
            continue
        K = mesh.K
        A = rng.normal(size=(K, d, d)) * 0.5
        Phi = np.ascontiguousarray(np.eye(d) + mesh.steps[:, None, None] * A)
        s = np.ascontiguousarray(rng.normal(size=(K, d)) * mesh.steps[:, None])
        B = rng.normal(size=(d, m))
        C = rng.normal(size=(o, d))
        Q = rng.normal(size=(m, m))
        U = Q @ Q.T + 0.1 * np.eye(m)
        y = rng.normal(size=(n, o))
        mask = rng.random(d) < 0.4
        xk = rng.normal(size=int(mask.sum()))
        return dict(Phi=Phi, s=s, B=B, U=U, C=C, mesh=mesh, times=times, y=y, mask=mask, xk=xk)


def exact_affine_step(A, r, dt):
    """``exp(dt [[A, r], [0, 0]])`` blocks via scipy."""
    d = A.shape[0]
    M = np.zeros((d + 1, d + 1))
    M[:d, :d] = A * dt
    M[:d, d] = r * dt
    E = expm(M)
    return E[:d, :d], E[:d, d]


def tail_mesh(mesh: Mesh, k: int) -> Mesh:
    """The mesh restricted to ``points[k:]`` (observation indices shifted)."""
    keep = mesh.obs_index >= k
    return Mesh(points=mesh.points[k:] - mesh.points[k], steps=mesh.steps[k:],
                weights=mesh.weights[k:], obs_index=mesh.obs_index[keep] - k)


def ou_variance(alpha, phi, t):
    """Variance of ``dX = -phi X dt + alpha dW`` started from a point."""
    return alpha ** 2 * (1.0 - np.exp(-2.0 * phi * t)) / (2.0 * phi)
