# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 rollouts for polynomial-library and quadrotor-structured models.

Model kinds
-----------
0  ``dx = Theta(x, u) @ Wa`` with monomial exponents ``ea`` over ``z = (x, u)``.
1  quadrotor state ``(p, v, b, w)`` / input ``(F, M)``: ``dp = v``,
   ``dv = Theta_tr(R[:, 2] F, v) @ Wa``, ``db = 0.5 Omega(w) b``, ``dw = Theta_ro(M, w) @ Wb``.
"""
from libc.math cimport sqrt, fabs, NAN
from libc.stdlib cimport malloc, free
import numpy as np

cdef double BLOWUP = 1e12


cdef struct Model:
    int kind
    int D
    int V
    int Ja
    int nza
    int Jb
    int nzb
    const int* ea
    const double* Wa
    const int* eb
    const double* Wb
    bint renorm


cdef inline void _poly(const int* E, const double* W, int J, int nz, int nout,
                       const double* z, double* out) noexcept nogil:
    cdef int j, v, k, d
    cdef double t
    for d in range(nout):
        out[d] = 0.0
    for j in range(J):
        t = 1.0
        for v in range(nz):
            for k in range(E[j * nz + v]):
                t *= z[v]
        if t != 0.0:
            for d in range(nout):
                out[d] += t * W[j * nout + d]


cdef void _rhs(const Model* m, const double* x, const double* u, double* z,
               double* dx) noexcept nogil:
    cdef int i
    cdef double b0, b1, b2, b3, F, p, q, r
    if m.kind == 0:
        for i in range(m.D):
            z[i] = x[i]
        for i in range(m.V):
            z[m.D + i] = u[i]
        _poly(m.ea, m.Wa, m.Ja, m.nza, m.D, z, dx)
        return
    b0 = x[6]; b1 = x[7]; b2 = x[8]; b3 = x[9]
    F = u[0]
    z[0] = 2.0 * (b1 * b3 + b0 * b2) * F
    z[1] = 2.0 * (b2 * b3 - b0 * b1) * F
    z[2] = (1.0 - 2.0 * (b1 * b1 + b2 * b2)) * F
    z[3] = x[3]; z[4] = x[4]; z[5] = x[5]
    _poly(m.ea, m.Wa, m.Ja, 6, 3, z, dx + 3)
    z[0] = u[1]; z[1] = u[2]; z[2] = u[3]
    z[3] = x[10]; z[4] = x[11]; z[5] = x[12]
    _poly(m.eb, m.Wb, m.Jb, 6, 3, z, dx + 10)
    dx[0] = x[3]; dx[1] = x[4]; dx[2] = x[5]
    p = x[10]; q = x[11]; r = x[12]
    dx[6] = 0.5 * (-p * b1 - q * b2 - r * b3)
    dx[7] = 0.5 * (p * b0 + r * b2 - q * b3)
    dx[8] = 0.5 * (q * b0 - r * b1 + p * b3)
    dx[9] = 0.5 * (r * b0 + q * b1 - p * b2)


cdef int _rk4(const Model* m, double* x, const double* u1, const double* u2,
              const double* u3, double h, double* work) noexcept nogil:
    """One classical RK4 step in place; returns 1 when the state blows up."""
    cdef int D = m.D
    cdef int i
    cdef double* k1 = work
    cdef double* k2 = work + D
    cdef double* k3 = work + 2 * D
    cdef double* k4 = work + 3 * D
    cdef double* xt = work + 4 * D
    cdef double* z = work + 5 * D
    cdef double nrm, a
    _rhs(m, x, u1, z, k1)
    for i in range(D):
        xt[i] = x[i] + 0.5 * h * k1[i]
    _rhs(m, xt, u2, z, k2)
    for i in range(D):
        xt[i] = x[i] + 0.5 * h * k2[i]
    _rhs(m, xt, u2, z, k3)
    for i in range(D):
        xt[i] = x[i] + h * k3[i]
    _rhs(m, xt, u3, z, k4)
    for i in range(D):
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    if m.renorm and m.kind == 1:
        nrm = sqrt(x[6] * x[6] + x[7] * x[7] + x[8] * x[8] + x[9] * x[9])
        if nrm > 0.0:
            for i in range(6, 10):
                x[i] /= nrm
    for i in range(D):
        a = fabs(x[i])
        if not (a <= BLOWUP):  # also catches NaN
            return 1
    return 0


cdef Model _make(int kind, const int[:, ::1] ea, const double[:, ::1] Wa,
                 const int[:, ::1] eb, const double[:, ::1] Wb, bint renorm):
    cdef Model m
    m.kind = kind
    m.ea = &ea[0, 0]
    m.Wa = &Wa[0, 0]
    m.Ja = ea.shape[0]
    m.nza = ea.shape[1]
    m.renorm = renorm
    if kind == 0:
        m.D = Wa.shape[1]
        m.V = ea.shape[1] - Wa.shape[1]
        m.eb = NULL
        m.Wb = NULL
        m.Jb = 0
        m.nzb = 0
    else:
        m.D = 13
        m.V = 4
        m.eb = &eb[0, 0]
        m.Wb = &Wb[0, 0]
        m.Jb = eb.shape[0]
        m.nzb = eb.shape[1]
    return m


def rollout_zoh(int kind, const int[:, ::1] ea, const double[:, ::1] Wa,
                const int[:, ::1] eb, const double[:, ::1] Wb, bint renorm,
                const double[::1] x0, const double[:, :, ::1] U, double h, int nsub):
    """Batch of piecewise-constant-input rollouts.

    ``U`` has shape ``(B, K, V)``; each input is held for ``nsub`` RK4 steps of size ``h``.
    Returns ``X`` of shape ``(B, K, D)`` (state after each held input) and ``status``
    (``-1`` when the rollout finished, else the step index where it blew up).
    """
    cdef Model m = _make(kind, ea, Wa, eb, Wb, renorm)
    cdef int B = U.shape[0]
    cdef int K = U.shape[1]
    cdef int D = m.D
    cdef int b, k, s, i, failed
    X = np.empty((B, K, D))
    status = np.full(B, -1, dtype=np.intp)
    cdef double[:, :, ::1] Xv = X
    cdef Py_ssize_t[::1] st = status
    cdef double* work = <double*> malloc((6 * D + 32) * sizeof(double))
    cdef double* x = <double*> malloc(D * sizeof(double))
    with nogil:
        for b in range(B):
            for i in range(D):
                x[i] = x0[i]
            for k in range(K):
                failed = 0
                for s in range(nsub):
                    if _rk4(&m, x, &U[b, k, 0], &U[b, k, 0], &U[b, k, 0], h, work):
                        failed = 1
                        break
                if failed:
                    st[b] = k
                    for s in range(k, K):
                        for i in range(D):
                            Xv[b, s, i] = NAN
                    break
                for i in range(D):
                    Xv[b, k, i] = x[i]
    free(work)
    free(x)
    return X, status


def integrate_stages(int kind, const int[:, ::1] ea, const double[:, ::1] Wa,
                     const int[:, ::1] eb, const double[:, ::1] Wb, bint renorm,
                     const double[::1] x0, const double[:, :, ::1] ustage, double h,
                     int stride):
    """RK4 with inputs given at stage times.

    ``ustage[s]`` holds the input at ``t_s``, ``t_s + h/2`` and ``t_s + h``. The state is
    recorded every ``stride`` steps, starting with ``x0``. Returns ``(X, n_ok)``; rows
    after a blow-up are NaN and ``n_ok`` counts the valid rows.
    """
    cdef Model m = _make(kind, ea, Wa, eb, Wb, renorm)
    cdef int S = ustage.shape[0]
    cdef int D = m.D
    cdef int nrec = S // stride + 1
    cdef int s, i, r, n_ok
    X = np.full((nrec, D), np.nan)
    cdef double[:, ::1] Xv = X
    cdef double* work = <double*> malloc((6 * D + 32) * sizeof(double))
    cdef double* x = <double*> malloc(D * sizeof(double))
    n_ok = 1
    with nogil:
        for i in range(D):
            x[i] = x0[i]
            Xv[0, i] = x0[i]
        for s in range(S):
            if _rk4(&m, x, &ustage[s, 0, 0], &ustage[s, 1, 0], &ustage[s, 2, 0], h, work):
                break
            if (s + 1) % stride == 0:
                r = (s + 1) // stride
                for i in range(D):
                    Xv[r, i] = x[i]
                n_ok = r + 1
    free(work)
    free(x)
    return X, n_ok
