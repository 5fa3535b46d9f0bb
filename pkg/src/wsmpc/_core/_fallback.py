"""Pure-numpy implementation of the rollout kernels (same signatures as ``_kernels``).

Batches are vectorized across rollouts; arithmetic order follows the compiled kernel so
both backends agree to rounding.
"""
import numpy as np

BLOWUP = 1e12


def _poly(E, W, Z):
    """``Theta(Z) @ W`` for monomial exponents ``E`` (J, nz) over rows of ``Z`` (B, nz)."""
    theta = np.ones((Z.shape[0], E.shape[0]))
    for v in range(E.shape[1]):
        col = E[:, v]
        if np.any(col):
            theta *= Z[:, v:v + 1] ** col[None, :]
    return theta @ W


def _rhs(kind, ea, Wa, eb, Wb, X, U):
    if kind == 0:
        return _poly(ea, Wa, np.hstack([X, U]))
    b0, b1, b2, b3 = X[:, 6], X[:, 7], X[:, 8], X[:, 9]
    F = U[:, 0]
    ztr = np.column_stack([2.0 * (b1 * b3 + b0 * b2) * F,
                           2.0 * (b2 * b3 - b0 * b1) * F,
                           (1.0 - 2.0 * (b1 * b1 + b2 * b2)) * F,
                           X[:, 3:6]])
    zro = np.column_stack([U[:, 1:4], X[:, 10:13]])
    p, q, r = X[:, 10], X[:, 11], X[:, 12]
    dx = np.empty_like(X)
    dx[:, 0:3] = X[:, 3:6]
    dx[:, 3:6] = _poly(ea, Wa, ztr)
    dx[:, 6] = 0.5 * (-p * b1 - q * b2 - r * b3)
    dx[:, 7] = 0.5 * (p * b0 + r * b2 - q * b3)
    dx[:, 8] = 0.5 * (q * b0 - r * b1 + p * b3)
    dx[:, 9] = 0.5 * (r * b0 + q * b1 - p * b2)
    dx[:, 10:13] = _poly(eb, Wb, zro)
    return dx


def _rk4(kind, ea, Wa, eb, Wb, renorm, X, U1, U2, U3, h):
    k1 = _rhs(kind, ea, Wa, eb, Wb, X, U1)
    k2 = _rhs(kind, ea, Wa, eb, Wb, X + 0.5 * h * k1, U2)
    k3 = _rhs(kind, ea, Wa, eb, Wb, X + 0.5 * h * k2, U2)
    k4 = _rhs(kind, ea, Wa, eb, Wb, X + h * k3, U3)
    X = X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if renorm and kind == 1:
        nrm = np.sqrt(np.sum(X[:, 6:10] ** 2, axis=1, keepdims=True))
        X[:, 6:10] = np.where(nrm > 0, X[:, 6:10] / np.where(nrm > 0, nrm, 1.0), X[:, 6:10])
    bad = ~np.all(np.abs(X) <= BLOWUP, axis=1)
    return X, bad


def _state_dim(kind, Wa):
    return Wa.shape[1] if kind == 0 else 13


def rollout_zoh(kind, ea, Wa, eb, Wb, renorm, x0, U, h, nsub):
    U = np.asarray(U, dtype=float)
    B, K, _ = U.shape
    D = _state_dim(kind, Wa)
    out = np.full((B, K, D), np.nan)
    status = np.full(B, -1, dtype=np.intp)
    X = np.tile(np.asarray(x0, dtype=float), (B, 1))
    alive = np.ones(B, dtype=bool)
    with np.errstate(all="ignore"):
        for k in range(K):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            Xa = X[idx]
            Uk = U[idx, k]
            failed = np.zeros(idx.size, dtype=bool)
            for _ in range(nsub):
                Xa, bad = _rk4(kind, ea, Wa, eb, Wb, renorm, Xa, Uk, Uk, Uk, h)
                failed |= bad
            X[idx] = Xa
            ok = idx[~failed]
            out[ok, k] = Xa[~failed]
            dead = idx[failed]
            status[dead] = k
            alive[dead] = False
    return out, status


def integrate_stages(kind, ea, Wa, eb, Wb, renorm, x0, ustage, h, stride):
    ustage = np.asarray(ustage, dtype=float)
    S = ustage.shape[0]
    D = _state_dim(kind, Wa)
    nrec = S // stride + 1
    out = np.full((nrec, D), np.nan)
    x = np.asarray(x0, dtype=float).reshape(1, D).copy()
    out[0] = x[0]
    n_ok = 1
    with np.errstate(all="ignore"):
        for s in range(S):
            u = ustage[s]
            x, bad = _rk4(kind, ea, Wa, eb, Wb, renorm, x, u[0:1], u[1:2], u[2:3], h)
            if bad[0]:
                break
            if (s + 1) % stride == 0:
                r = (s + 1) // stride
                out[r] = x[0]
                n_ok = r + 1
    return out, n_ok
