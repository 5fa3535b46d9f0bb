"""Dynamic mode decomposition with control (DMDc)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NonFiniteOutput, RankDeficient

SVD_RTOL = 1e-10


@dataclass(frozen=True)
class LinearModel:
    """Discrete map ``z+ = A z + Bm u`` on shifted coordinates ``z = x - shift``."""

    A: np.ndarray
    Bm: np.ndarray
    dt: float
    shift: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        Bm = np.asarray(self.Bm, dtype=float).reshape(A.shape[0], -1)
        shift = np.asarray(self.shift, dtype=float).reshape(-1)
        if A.shape[0] != A.shape[1] or shift.shape[0] != A.shape[0]:
            raise DimensionMismatch("A must be square and match the shift length")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Bm))):
            raise NonFiniteOutput("linear model has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Bm", Bm)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.Bm.shape[1]

    def step(self, x, u):
        """One application of the map in original coordinates; works on batches ``(..., D)``."""
        z = np.asarray(x, dtype=float) - self.shift
        return z @ self.A.T + np.asarray(u, dtype=float) @ self.Bm.T + self.shift

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "Bm": self.Bm.tolist(), "dt": self.dt,
                "shift": self.shift.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.array(d["A"]), np.array(d["Bm"]), d["dt"], np.array(d["shift"]))


def dmdc_fit(ts, shift=None, rank: Optional[int] = None, rtol: float = SVD_RTOL) -> LinearModel:
    """Least-squares ``[A Bm] = X2 pinv([X1; U1])`` via a (truncated) SVD.

    Singular values below ``rtol * s_max`` are discarded, which gives the minimum-norm
    solution on rank-deficient data; an all-zero data matrix raises :class:`RankDeficient`.
    """
    X = np.asarray(ts.states, dtype=float)
    U = np.asarray(ts.inputs, dtype=float)
    N, D = X.shape
    V = U.shape[1]
    if N < D + V + 1:
        raise DimensionMismatch(f"DMDc needs N >= D + V + 1 = {D + V + 1} samples, got {N}")
    shift = np.zeros(D) if shift is None else np.asarray(shift, dtype=float).reshape(D)
    Z = X - shift
    omega = np.vstack([Z[:-1].T, U[:-1].T])
    X2 = Z[1:].T
    Uo, s, Vt = np.linalg.svd(omega, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise RankDeficient("state/input data matrix is zero")
    r = int(np.sum(s > rtol * s[0]))
    if rank is not None:
        if rank < 1:
            raise ValueError("rank must be >= 1")
        r = min(r, int(rank))
    G = X2 @ Vt[:r].T @ np.diag(1.0 / s[:r]) @ Uo[:, :r].T
    return LinearModel(G[:, :D], G[:, D:], ts.dt, shift)


def dmdc_residual(m: LinearModel, ts) -> float:
    """Frobenius norm of the one-step training residual."""
    X = np.asarray(ts.states, dtype=float)
    pred = m.step(X[:-1], np.asarray(ts.inputs, dtype=float)[:-1])
    return float(np.linalg.norm(X[1:] - pred))


def dmdc_rollout(m: LinearModel, x0, inputs) -> np.ndarray:
    """Iterate the map from ``x0`` over ``inputs`` (K, V); returns (K+1, D) including ``x0``."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.shape[1] != m.input_dim:
        raise DimensionMismatch(f"model takes {m.input_dim} inputs, got {inputs.shape[1]}")
    out = np.empty((inputs.shape[0] + 1, m.state_dim))
    z = np.asarray(x0, dtype=float) - m.shift
    out[0] = z
    for k, u in enumerate(inputs):
        z = m.A @ z + m.Bm @ u
        out[k + 1] = z
    return out + m.shift
