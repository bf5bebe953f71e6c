# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backward Riccati and forward synthesis passes.

Dimensions are small (d, d_u <= a handful) and K is a few hundred, so the
passes are written as plain C loops over contiguous buffers.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef int _chol_inverse(double* M, double* out, double* L, Py_ssize_t m) noexcept nogil:
    # out = M^{-1} via Cholesky; returns 0 on success, 1 if M is not PD.
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(m):
        for j in range(i + 1):
            acc = M[i * m + j]
            for k in range(j):
                acc -= L[i * m + k] * L[j * m + k]
            if i == j:
                if acc <= 0.0:
                    return 1
                L[i * m + i] = sqrt(acc)
            else:
                L[i * m + j] = acc / L[j * m + j]
    # invert L in place of the upper triangle scratch: Linv stored in out (lower)
    for i in range(m):
        for j in range(m):
            out[i * m + j] = 0.0
    for j in range(m):
        out[j * m + j] = 1.0 / L[j * m + j]
        for i in range(j + 1, m):
            acc = 0.0
            for k in range(j, i):
                acc -= L[i * m + k] * out[k * m + j]
            out[i * m + j] = acc / L[i * m + i]
    # M^{-1} = Linv^T Linv, computed into L (lower part of out is Linv)
    for i in range(m):
        for j in range(i + 1):
            acc = 0.0
            for k in range(i, m):
                acc += out[k * m + i] * out[k * m + j]
            L[i * m + j] = acc
            L[j * m + i] = acc
    for i in range(m * m):
        out[i] = L[i]
    return 0


def riccati_backward(const double[:, :, ::1] Phi, const double[:, ::1] s, const double[:, ::1] B,
                     const double[:, ::1] U, const double[:, ::1] C, const double[::1] omega,
                     const double[:, ::1] yd, const double[::1] y_final, const double[::1] dt):
    """Return ``(R, h, G, c0)``; ``G`` is None if a gain matrix is not PD."""
    cdef Py_ssize_t K = Phi.shape[0], d = Phi.shape[1], m = B.shape[1], o = C.shape[0]
    cdef Py_ssize_t k, i, j, l
    cdef double acc, dk, wk, c0 = 0.0
    cdef int fail = 0

    R_arr = np.empty((K + 1, d, d))
    h_arr = np.empty((K + 1, d))
    G_arr = np.empty((K, m, m))
    cdef double[:, :, ::1] R = R_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, :, ::1] G = G_arr

    cdef double* CtC = <double*> malloc(d * d * sizeof(double))
    cdef double* RB = <double*> malloc(d * m * sizeof(double))
    cdef double* M = <double*> malloc(m * m * sizeof(double))
    cdef double* L = <double*> malloc(m * m * sizeof(double))
    cdef double* RBG = <double*> malloc(d * m * sizeof(double))
    cdef double* P = <double*> malloc(d * d * sizeof(double))
    cdef double* PPhi = <double*> malloc(d * d * sizeof(double))
    cdef double* v = <double*> malloc(d * sizeof(double))
    cdef double* Btv = <double*> malloc(m * sizeof(double))
    cdef double* GBtv = <double*> malloc(m * sizeof(double))
    cdef double* w = <double*> malloc(d * sizeof(double))
    if (CtC == NULL or RB == NULL or M == NULL or L == NULL or RBG == NULL or P == NULL
            or PPhi == NULL or v == NULL or Btv == NULL or GBtv == NULL or w == NULL):
        free(CtC); free(RB); free(M); free(L); free(RBG); free(P); free(PPhi)
        free(v); free(Btv); free(GBtv); free(w)
        raise MemoryError()

    with nogil:
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for l in range(o):
                    acc += C[l, i] * C[l, j]
                CtC[i * d + j] = acc
        # terminal condition
        for i in range(d):
            for j in range(d):
                R[K, i, j] = CtC[i * d + j]
            acc = 0.0
            for l in range(o):
                acc -= C[l, i] * y_final[l]
            h[K, i] = acc
        for l in range(o):
            c0 += y_final[l] * y_final[l]

        for k in range(K - 1, -1, -1):
            dk = dt[k]
            wk = omega[k]
            # RB = R_{k+1} B
            for i in range(d):
                for j in range(m):
                    acc = 0.0
                    for l in range(d):
                        acc += R[k + 1, i, l] * B[l, j]
                    RB[i * m + j] = acc
            # M = U + dk B^T R B
            for i in range(m):
                for j in range(m):
                    acc = 0.0
                    for l in range(d):
                        acc += B[l, i] * RB[l * m + j]
                    M[i * m + j] = U[i, j] + dk * acc
            for i in range(m):
                for j in range(i):
                    acc = 0.5 * (M[i * m + j] + M[j * m + i])
                    M[i * m + j] = acc
                    M[j * m + i] = acc
            if _chol_inverse(M, &G[k, 0, 0], L, m):
                fail = 1
                break
            # RBG = RB G
            for i in range(d):
                for j in range(m):
                    acc = 0.0
                    for l in range(m):
                        acc += RB[i * m + l] * G[k, l, j]
                    RBG[i * m + j] = acc
            # P = R_{k+1} - dk RBG RB^T
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(m):
                        acc += RBG[i * m + l] * RB[j * m + l]
                    P[i * d + j] = R[k + 1, i, j] - dk * acc
            for i in range(d):
                for j in range(i):
                    acc = 0.5 * (P[i * d + j] + P[j * d + i])
                    P[i * d + j] = acc
                    P[j * d + i] = acc
            # v = h_{k+1} + R_{k+1} s_k
            for i in range(d):
                acc = h[k + 1, i]
                for l in range(d):
                    acc += R[k + 1, i, l] * s[k, l]
                v[i] = acc
            for j in range(m):
                acc = 0.0
                for l in range(d):
                    acc += B[l, j] * v[l]
                Btv[j] = acc
            for j in range(m):
                acc = 0.0
                for l in range(m):
                    acc += G[k, j, l] * Btv[l]
                GBtv[j] = acc
            # constant term: s^T (2 h_{k+1} + R_{k+1} s) = s^T (h_{k+1} + v)
            acc = 0.0
            for i in range(d):
                acc += s[k, i] * (h[k + 1, i] + v[i])
            c0 += acc
            acc = 0.0
            for j in range(m):
                acc += Btv[j] * GBtv[j]
            c0 -= dk * acc
            for l in range(o):
                c0 += wk * yd[k, l] * yd[k, l]
            # w = v - dk RB G B^T v
            for i in range(d):
                acc = 0.0
                for l in range(m):
                    acc += RB[i * m + l] * GBtv[l]
                w[i] = v[i] - dk * acc
            # PPhi = P Phi_k
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += P[i * d + l] * Phi[k, l, j]
                    PPhi[i * d + j] = acc
            # R_k = wk CtC + Phi^T P Phi
            for i in range(d):
                for j in range(i + 1):
                    acc = 0.0
                    for l in range(d):
                        acc += Phi[k, l, i] * PPhi[l * d + j]
                    acc += wk * CtC[i * d + j]
                    R[k, i, j] = acc
                    R[k, j, i] = acc
            # h_k = -wk C^T y_k + Phi^T w
            for i in range(d):
                acc = 0.0
                for l in range(d):
                    acc += Phi[k, l, i] * w[l]
                for l in range(o):
                    acc -= wk * C[l, i] * yd[k, l]
                h[k, i] = acc

    free(CtC); free(RB); free(M); free(L); free(RBG); free(P); free(PPhi)
    free(v); free(Btv); free(GBtv); free(w)
    if fail:
        return R_arr, h_arr, None, c0
    return R_arr, h_arr, G_arr, c0


def forward_pass(const double[:, :, ::1] Phi, const double[:, ::1] s, const double[:, ::1] B,
                 const double[:, :, ::1] R, const double[:, ::1] h, const double[:, :, ::1] G,
                 const double[::1] dt, const double[::1] x0):
    """Closed-loop trajectory ``X`` (K+1, d) and control ``u`` (K, d_u)."""
    cdef Py_ssize_t K = Phi.shape[0], d = Phi.shape[1], m = B.shape[1]
    cdef Py_ssize_t k, i, j, l
    cdef double acc

    X_arr = np.empty((K + 1, d))
    u_arr = np.empty((K, m))
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] u = u_arr
    cdef double* z = <double*> malloc(d * sizeof(double))
    cdef double* q = <double*> malloc(d * sizeof(double))
    cdef double* Btq = <double*> malloc(m * sizeof(double))
    if z == NULL or q == NULL or Btq == NULL:
        free(z); free(q); free(Btq)
        raise MemoryError()

    with nogil:
        for i in range(d):
            X[0, i] = x0[i]
        for k in range(K):
            for i in range(d):
                acc = s[k, i]
                for l in range(d):
                    acc += Phi[k, i, l] * X[k, l]
                z[i] = acc
            for i in range(d):
                acc = h[k + 1, i]
                for l in range(d):
                    acc += R[k + 1, i, l] * z[l]
                q[i] = acc
            for j in range(m):
                acc = 0.0
                for l in range(d):
                    acc += B[l, j] * q[l]
                Btq[j] = acc
            for j in range(m):
                acc = 0.0
                for l in range(m):
                    acc -= G[k, j, l] * Btq[l]
                u[k, j] = acc
            for i in range(d):
                acc = 0.0
                for j in range(m):
                    acc += B[i, j] * u[k, j]
                X[k + 1, i] = z[i] + dt[k] * acc

    free(z); free(q); free(Btq)
    return X_arr, u_arr


cdef void _expm_taylor(double* M, double* E, double* T, double* W, Py_ssize_t n) noexcept nogil:
    # E = exp(M) by scaling and squaring around a degree-12 Taylor polynomial;
    # M is overwritten by the scaled matrix.
    cdef Py_ssize_t i, j, k, sq = 0
    cdef int order = 12, p
    cdef double norm = 0.0, col, scale = 1.0, acc
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += fabs(M[i * n + j])
        if col > norm:
            norm = col
    while norm * scale > 0.5:
        scale *= 0.5
        sq += 1
    for i in range(n * n):
        M[i] *= scale
    # Horner: E = I + M/order, then E = I + M E / p
    for i in range(n):
        for j in range(n):
            E[i * n + j] = M[i * n + j] / order + (1.0 if i == j else 0.0)
    for p in range(order - 1, 0, -1):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += M[i * n + k] * E[k * n + j]
                T[i * n + j] = acc / p + (1.0 if i == j else 0.0)
        for i in range(n * n):
            E[i] = T[i]
    for p in range(sq):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += E[i * n + k] * E[k * n + j]
                W[i * n + j] = acc
        for i in range(n * n):
            E[i] = W[i]


def exp_transition(const double[:, :, ::1] A, const double[:, ::1] r, const double[::1] dt):
    """Exact transition of ``x' = A_k x + r_k`` over each step ``dt_k``.

    Returns ``(Phi, s)`` read off ``exp(dt_k [[A_k, r_k], [0, 0]])``.
    """
    cdef Py_ssize_t K = A.shape[0], d = A.shape[1], n = d + 1, k, i, j
    Phi_arr = np.empty((K, d, d))
    s_arr = np.empty((K, d))
    cdef double[:, :, ::1] Phi = Phi_arr
    cdef double[:, ::1] s = s_arr
    cdef double* M = <double*> malloc(4 * n * n * sizeof(double))
    if M == NULL:
        raise MemoryError()
    cdef double* E = M + n * n
    cdef double* T = E + n * n
    cdef double* W = T + n * n
    with nogil:
        for k in range(K):
            for i in range(n * n):
                M[i] = 0.0
            for i in range(d):
                for j in range(d):
                    M[i * n + j] = dt[k] * A[k, i, j]
                M[i * n + d] = dt[k] * r[k, i]
            _expm_taylor(M, E, T, W, n)
            for i in range(d):
                for j in range(d):
                    Phi[k, i, j] = E[i * n + j]
                s[k, i] = E[i * n + d]
    free(M)
    return Phi_arr, s_arr
