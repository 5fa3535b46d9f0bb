"""Identified models, RK4 integration and the substepped forward operator used by MPC."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import _core
from ._core import KernelModel, _fallback
from .baselines import LinearModel
from .data import TimeSeries
from .errors import DimensionMismatch, Diverged, NonFiniteOutput
from .funclib import (FunctionLibrary, build_drone_rotational_library,
                      build_drone_translational_library)

BLOWUP = 1e12
QUAT_BLOCK = slice(6, 10)


def _blown_up(x) -> bool:
    return not np.all(np.abs(x) <= BLOWUP)


class IdentifiedModel:
    """Continuous-time model ``dx/dt = Theta(x, u) @ W``."""

    def __init__(self, library: FunctionLibrary, W):
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        if W.shape[0] != len(library):
            raise DimensionMismatch(f"W has {W.shape[0]} rows, library has {len(library)} terms")
        if library.feature == "identity" and W.shape[1] != library.state_dim:
            raise DimensionMismatch(f"W has {W.shape[1]} columns, library has "
                                    f"{library.state_dim} states")
        self.library = library
        self.W = W
        self._kernel = None
        if library.is_polynomial and library.feature == "identity":
            self._kernel = KernelModel(0, library.exponent_matrix(), W)

    @property
    def state_dim(self) -> int:
        return self.W.shape[1]

    @property
    def input_dim(self) -> int:
        return self.library.input_dim

    def kernel_model(self) -> Optional[KernelModel]:
        return self._kernel

    def rhs(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        U = u.reshape(X.shape[0], -1)
        if self._kernel is not None:
            with np.errstate(all="ignore"):
                out = _fallback._rhs(0, self._kernel.ea, self.W, None, None, X, U)
        else:
            out = self.library.evaluate(X, U) @ self.W
        if not np.all(np.isfinite(out)):
            raise NonFiniteOutput("model derivative is not finite")
        return out[0] if single else out

    __call__ = rhs

    def to_dict(self) -> dict:
        return {"type": "identified", "library": self.library.to_dict(), "W": self.W.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "IdentifiedModel":
        return cls(FunctionLibrary.from_dict(d["library"]), np.array(d["W"]))


def eval_model(m: IdentifiedModel, x, u) -> np.ndarray:
    """``Theta(x, u) @ W`` at one point (or a batch of points)."""
    return m.rhs(x, u)


class QuadrotorModel:
    """Quadrotor with known kinematics and identified translational / rotational dynamics.

    State ``(p, v, q, w)`` of length 13 with a scalar-first quaternion ``q``; input
    ``(F, Mx, My, Mz)``. ``dv/dt = Theta_tr @ W_tr`` and ``dw/dt = Theta_ro @ W_ro`` over the
    fixed drone libraries; the quaternion is renormalized after every integration step.
    """

    quaternion_block = QUAT_BLOCK

    def __init__(self, W_tr, W_ro):
        self.lib_tr = build_drone_translational_library()
        self.lib_ro = build_drone_rotational_library()
        self.W_tr = np.asarray(W_tr, dtype=float).reshape(len(self.lib_tr), 3)
        self.W_ro = np.asarray(W_ro, dtype=float).reshape(len(self.lib_ro), 3)
        self._kernel = KernelModel(1, self.lib_tr.exponent_matrix(), self.W_tr,
                                   self.lib_ro.exponent_matrix(), self.W_ro, renorm=True)

    state_dim = 13
    input_dim = 4

    @classmethod
    def exact(cls, mass: float, inertia, g: float) -> "QuadrotorModel":
        """Coefficients that reproduce rigid-body dynamics exactly."""
        Ixx, Iyy, Izz = inertia
        tr = {n: i for i, n in enumerate(build_drone_translational_library().names)}
        ro = {n: i for i, n in enumerate(build_drone_rotational_library().names)}
        W_tr = np.zeros((13, 3))
        W_tr[tr["R13*F"], 0] = W_tr[tr["R23*F"], 1] = W_tr[tr["R33*F"], 2] = 1.0 / mass
        W_tr[tr["1"], 2] = -g
        W_ro = np.zeros((13, 3))
        W_ro[ro["Mx"], 0] = 1.0 / Ixx
        W_ro[ro["My"], 1] = 1.0 / Iyy
        W_ro[ro["Mz"], 2] = 1.0 / Izz
        W_ro[ro["q*r"], 0] = (Iyy - Izz) / Ixx
        W_ro[ro["p*r"], 1] = (Izz - Ixx) / Iyy
        W_ro[ro["p*q"], 2] = (Ixx - Iyy) / Izz
        return cls(W_tr, W_ro)

    def kernel_model(self) -> KernelModel:
        return self._kernel

    def rhs(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        U = np.asarray(u, dtype=float).reshape(X.shape[0], 4)
        k = self._kernel
        with np.errstate(all="ignore"):
            out = _fallback._rhs(1, k.ea, k.Wa, k.eb, k.Wb, X, U)
        if not np.all(np.isfinite(out)):
            raise NonFiniteOutput("model derivative is not finite")
        return out[0] if single else out

    __call__ = rhs

    def to_dict(self) -> dict:
        return {"type": "quadrotor", "W_tr": self.W_tr.tolist(), "W_ro": self.W_ro.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadrotorModel":
        return cls(np.array(d["W_tr"]), np.array(d["W_ro"]))


def model_from_dict(d: dict):
    kind = d.get("type")
    if kind == "identified":
        return IdentifiedModel.from_dict(d)
    if kind == "quadrotor":
        return QuadrotorModel.from_dict(d)
    if kind == "linear":
        return LinearModel.from_dict(d)
    raise ValueError(f"unknown model type {kind!r}")


def rk4_step(rhs: Callable, x, u, h: float) -> np.ndarray:
    """Classical RK4 step with ``u`` held constant; raises :class:`Diverged` on blow-up."""
    if not h > 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        k1 = np.asarray(rhs(x, u), dtype=float)
        k2 = np.asarray(rhs(x + 0.5 * h * k1, u), dtype=float)
        k3 = np.asarray(rhs(x + 0.5 * h * k2, u), dtype=float)
        k4 = np.asarray(rhs(x + h * k3, u), dtype=float)
        out = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if _blown_up(out):
        raise Diverged("RK4 state exceeded the blow-up threshold")
    return out


def _renormalize(x, block):
    if block is None:
        return x
    q = x[..., block]
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    x = x.copy()
    x[..., block] = q / np.where(n > 0, n, 1.0)
    return x


Rhs = Union[IdentifiedModel, QuadrotorModel, LinearModel, Callable]


@dataclass
class ForwardOperator:
    """Discrete map: ``n_substeps`` RK4 steps of size ``dt_model`` with the input held.

    ``rhs`` may be an :class:`IdentifiedModel`, a :class:`QuadrotorModel`, a plain callable
    ``rhs(x, u)`` or a discrete :class:`LinearModel` (applied ``n_substeps`` times; its own
    ``dt`` is the step). ``quaternion_block`` marks state entries renormalized after each
    substep.
    """

    rhs: Rhs
    dt_model: float
    n_substeps: int = 1
    quaternion_block: Optional[slice] = None
    backend: Optional[str] = None

    def __post_init__(self):
        if self.n_substeps < 1:
            raise ValueError("n_substeps must be >= 1")
        if not self.dt_model > 0:
            raise ValueError("dt_model must be positive")
        if self.quaternion_block is None:
            self.quaternion_block = getattr(self.rhs, "quaternion_block", None)

    @classmethod
    def from_interval(cls, rhs: Rhs, Ts: float, dt_model: float, **kw) -> "ForwardOperator":
        """Operator spanning one update interval, ``n_substeps = round(Ts / dt_model)``."""
        n = max(1, int(round(Ts / dt_model)))
        return cls(rhs, dt_model, n, **kw)

    @property
    def interval(self) -> float:
        return self.dt_model * self.n_substeps

    def _kernel(self):
        km = getattr(self.rhs, "kernel_model", None)
        return km() if callable(km) else None

    def step(self, x, u) -> np.ndarray:
        """One update interval from ``x`` under constant ``u``; raises :class:`Diverged`."""
        X, status = self.rollout(x, np.asarray(u, dtype=float).reshape(1, 1, -1))
        if status[0] >= 0:
            raise Diverged("forward map blew up")
        return X[0, 0]

    def rollout(self, x0, U):
        """Apply the map along every input sequence of ``U`` (B, K, V).

        Returns ``(X, status)``: ``X[b, k]`` is the state after ``U[b, k]`` (NaN after a
        blow-up) and ``status[b]`` is -1 or the index of the interval that blew up.
        """
        U = np.asarray(U, dtype=float)
        if U.ndim == 2:
            U = U[None]
        x0 = np.asarray(x0, dtype=float)
        km = self._kernel()
        if km is not None:
            return _core.rollout_zoh(km, x0, U, self.dt_model, self.n_substeps, self.backend)
        B, K, _ = U.shape
        out = np.full((B, K, x0.size), np.nan)
        status = np.full(B, -1, dtype=np.intp)
        for b in range(B):
            x = x0.copy()
            for k in range(K):
                try:
                    for _ in range(self.n_substeps):
                        x = self._substep(x, U[b, k])
                except (Diverged, NonFiniteOutput):
                    status[b] = k
                    break
                out[b, k] = x
        return out, status

    def _substep(self, x, u):
        if isinstance(self.rhs, LinearModel):
            x = self.rhs.step(x, u)
            if _blown_up(x):
                raise Diverged("linear map blew up")
            return x
        return _renormalize(rk4_step(self.rhs, x, u, self.dt_model), self.quaternion_block)


def forward_step(F: ForwardOperator, x, u) -> np.ndarray:
    return F.step(x, u)


def _input_samples(input_signal, times, V):
    """Evaluate a callable input at ``times``; returns (len(times), V)."""
    try:
        vals = np.asarray(input_signal(times), dtype=float)
        if vals.shape in ((times.size,), (times.size, V)) and (V == 1 or vals.ndim == 2):
            return vals.reshape(times.size, V)
    except Exception:
        pass
    return np.array([np.asarray(input_signal(t), dtype=float).reshape(V) for t in times])


def _infer_input_dim(rhs, input_signal):
    V = getattr(rhs, "input_dim", None)
    if V is not None:
        return int(V)
    if input_signal is None:
        return 0
    if callable(input_signal):
        return int(np.asarray(input_signal(0.0)).size)
    arr = np.asarray(input_signal, dtype=float)
    return 1 if arr.ndim <= 1 else arr.shape[1]


def simulate(rhs: Rhs, x0, input_signal, T: float, dt: float, n_substeps: int = 1,
             quaternion_block: Optional[slice] = None, on_diverge: str = "raise",
             backend: Optional[str] = None) -> TimeSeries:
    """Open-loop RK4 trajectory sampled every ``dt`` over ``[0, T]``.

    ``input_signal`` is a callable ``u(t)`` (evaluated at the RK4 stage times), an array of
    per-sample inputs (held over each sample interval), a constant, or None for autonomous
    systems. On blow-up :class:`Diverged` is raised with the NaN-padded trajectory attached
    as ``partial``; ``on_diverge="truncate"`` returns that trajectory instead.
    """
    ratio = T / dt
    N = int(round(ratio)) + 1
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"T/dt = {ratio} is not an integer")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    V = _infer_input_dim(rhs, input_signal)
    h = dt / n_substeps
    S = (N - 1) * n_substeps
    times = dt * np.arange(N)

    if input_signal is None:
        stage_u = np.zeros((S, 3, V))
        sample_u = np.zeros((N, V))
    elif callable(input_signal):
        ts = (np.arange(S)[:, None] + np.array([0.0, 0.5, 1.0])[None, :]) * h
        stage_u = _input_samples(input_signal, ts.reshape(-1), V).reshape(S, 3, V)
        sample_u = _input_samples(input_signal, times, V)
    else:
        arr = np.asarray(input_signal, dtype=float)
        if arr.ndim == 0 or (arr.ndim == 1 and arr.size == V):
            sample_u = np.tile(arr.reshape(1, V), (N, 1))
        else:
            sample_u = arr.reshape(N, V)
        stage_u = np.repeat(np.repeat(sample_u[:-1, None, :], 3, axis=1), n_substeps, axis=0)

    if quaternion_block is None:
        quaternion_block = getattr(rhs, "quaternion_block", None)
    km = getattr(rhs, "kernel_model", None)
    km = km() if callable(km) else None
    if km is not None:
        X, n_ok = _core.integrate_stages(km, x0, stage_u, h, n_substeps, backend)
    else:
        X = np.full((N, x0.size), np.nan)
        X[0] = x0
        x = x0.copy()
        n_ok = 1
        step = (rhs.step if isinstance(rhs, LinearModel) else None)
        try:
            for s in range(S):
                u = stage_u[s]
                if step is not None:
                    x = step(x, u[0])
                    if _blown_up(x):
                        raise Diverged("linear map blew up")
                else:
                    x = _rk4_stage(rhs, x, u, h)
                    x = _renormalize(x, quaternion_block)
                if (s + 1) % n_substeps == 0:
                    X[(s + 1) // n_substeps] = x
                    n_ok = (s + 1) // n_substeps + 1
        except (Diverged, NonFiniteOutput):
            pass
    out = TimeSeries(times, X, sample_u, dt)
    if n_ok < N and on_diverge == "raise":
        raise Diverged(f"trajectory blew up at t = {times[n_ok - 1]:.6g}", partial=out)
    return out


def _rk4_stage(rhs, x, u3, h):
    with np.errstate(all="ignore"):
        k1 = np.asarray(rhs(x, u3[0]), dtype=float)
        k2 = np.asarray(rhs(x + 0.5 * h * k1, u3[1]), dtype=float)
        k3 = np.asarray(rhs(x + 0.5 * h * k2, u3[1]), dtype=float)
        k4 = np.asarray(rhs(x + h * k3, u3[2]), dtype=float)
        out = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if _blown_up(out):
        raise Diverged("RK4 state exceeded the blow-up threshold")
    return out
