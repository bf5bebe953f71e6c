"""NumPy implementation of the backward Riccati and forward synthesis passes.

Same signatures and return conventions as the compiled ``_lqcore`` module.
"""

import numpy as np


def riccati_backward(Phi, s, B, U, C, omega, yd, y_final, dt, pinv_fallback=False):
    K, d, _ = Phi.shape
    m = B.shape[1]
    R = np.empty((K + 1, d, d))
    h = np.empty((K + 1, d))
    G = np.empty((K, m, m))
    CtC = C.T @ C
    R[K] = CtC
    h[K] = -C.T @ y_final
    c0 = float(y_final @ y_final)
    for k in range(K - 1, -1, -1):
        Rn, hn, dk = R[k + 1], h[k + 1], dt[k]
        RB = Rn @ B
        M = U + dk * (B.T @ RB)
        M = 0.5 * (M + M.T)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            if not pinv_fallback:
                return R, h, None, c0
            Gk = np.linalg.pinv(M, hermitian=True)
        else:
            Linv = np.linalg.inv(L)
            Gk = Linv.T @ Linv
        G[k] = Gk
        P = Rn - dk * (RB @ Gk @ RB.T)
        P = 0.5 * (P + P.T)
        v = hn + Rn @ s[k]
        GBtv = Gk @ (B.T @ v)
        c0 += float(s[k] @ (hn + v)) - dk * float((B.T @ v) @ GBtv) + omega[k] * float(yd[k] @ yd[k])
        Rk = omega[k] * CtC + Phi[k].T @ P @ Phi[k]
        R[k] = 0.5 * (Rk + Rk.T)
        h[k] = -omega[k] * (C.T @ yd[k]) + Phi[k].T @ (v - dk * (RB @ GBtv))
    return R, h, G, c0


def forward_pass(Phi, s, B, R, h, G, dt, x0):
    K, d, _ = Phi.shape
    X = np.empty((K + 1, d))
    u = np.empty((K, B.shape[1]))
    X[0] = x0
    for k in range(K):
        z = Phi[k] @ X[k] + s[k]
        u[k] = -G[k] @ (B.T @ (R[k + 1] @ z + h[k + 1]))
        X[k + 1] = z + dt[k] * (B @ u[k])
    return X, u


def expm_stack(M, order: int = 12):
    """Matrix exponential of a stack ``(K, n, n)``.

    Scaling and squaring around a truncated Taylor series; the scaling brings
    every 1-norm below 1/2, which keeps the truncation error near 1e-14.
    Much cheaper than a Pade solve per matrix for the tiny blocks used here.
    """
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=-2).max(axis=-1).max() if M.size else 0.0
    sq = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    A = M / (2.0 ** sq)
    eye = np.eye(M.shape[-1])
    # Horner form of sum_{j<=order} A^j / j!
    E = eye + A / order
    for j in range(order - 1, 0, -1):
        E = eye + (A @ E) / j
    for _ in range(sq):
        E = E @ E
    return E


def exp_transition(A, r, dt):
    """Exact transition of ``x' = A_k x + r_k`` over each step ``dt_k``."""
    K, d, _ = A.shape
    M = np.zeros((K, d + 1, d + 1))
    M[:, :d, :d] = dt[:, None, None] * A
    M[:, :d, d] = dt[:, None] * r
    E = expm_stack(M)
    return np.ascontiguousarray(E[:, :d, :d]), np.ascontiguousarray(E[:, :d, d])
