"""Benchmark plants, their exact library representations, and input generators.

Every plant right-hand side is written out directly from its equations. The ``*_model``
builders express the same dynamics as coefficient matrices over the standard libraries so
the compiled kernels can integrate them; tests check the two forms against each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import TimeSeries
from .dynamics import IdentifiedModel, QuadrotorModel, rk4_step
from .funclib import build_poly_library
from .rotations import quat_normalize, quat_to_euler_zyx, quat_to_rotmat  # noqa: F401

# --- Lorenz 63 with additive forcing on the first state ---------------------------------

LORENZ_SIGMA = 10.0
LORENZ_RHO = 28.0
LORENZ_BETA = 8.0 / 3.0
LORENZ_TARGET = np.array([-np.sqrt(72.0), -np.sqrt(72.0), 27.0])
LORENZ_TRAIN_X0 = np.array([-8.0, 8.0, 27.0])


def lorenz_rhs(x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(x.shape[:-1] + (-1,))[..., 0]
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([LORENZ_SIGMA * (x2 - x1) + u,
                     x1 * (LORENZ_RHO - x3) - x2,
                     x1 * x2 - LORENZ_BETA * x3], axis=-1)


def _model_from_terms(lib, coefs) -> IdentifiedModel:
    """``coefs[d]`` maps exponent tuples over ``(x, u)`` to coefficients of state ``d``."""
    index = {t.tag.exponents: j for j, t in enumerate(lib.terms)}
    W = np.zeros((len(lib), len(coefs)))
    for d, terms in enumerate(coefs):
        for exps, c in terms.items():
            W[index[exps], d] = c
    return IdentifiedModel(lib, W)


def lorenz_model(degree: int = 2) -> IdentifiedModel:
    """Lorenz dynamics as a polynomial model over ``(x1, x2, x3, u1)``."""
    lib = build_poly_library(3, 1, degree)
    s, r, b = LORENZ_SIGMA, LORENZ_RHO, LORENZ_BETA
    return _model_from_terms(lib, [
        {(1, 0, 0, 0): -s, (0, 1, 0, 0): s, (0, 0, 0, 1): 1.0},
        {(1, 0, 0, 0): r, (0, 1, 0, 0): -1.0, (1, 0, 1, 0): -1.0},
        {(0, 0, 1, 0): -b, (1, 1, 0, 0): 1.0},
    ])


def lorenz_validation_input(t):
    """``(5 sin 30t)^3`` forcing used for open-loop validation."""
    return (5.0 * np.sin(30.0 * np.asarray(t, dtype=float))) ** 3


# --- F-8 Crusader longitudinal dynamics --------------------------------------------------

_F8_TERMS = [
    {(1, 0, 0, 0): -0.877, (0, 0, 1, 0): 1.0, (1, 0, 1, 0): -0.088, (2, 0, 0, 0): 0.47,
     (0, 2, 0, 0): -0.019, (2, 0, 1, 0): -1.0, (3, 0, 0, 0): 3.846, (0, 0, 0, 1): -0.215,
     (2, 0, 0, 1): 0.28, (1, 0, 0, 2): 0.47, (0, 0, 0, 3): 0.63},
    {(0, 0, 1, 0): 1.0},
    {(1, 0, 0, 0): -4.208, (0, 0, 1, 0): -0.396, (2, 0, 0, 0): -0.47, (3, 0, 0, 0): -3.564,
     (0, 0, 0, 1): -20.967, (2, 0, 0, 1): 6.265, (1, 0, 0, 2): 46.0, (0, 0, 0, 3): 61.4},
]


def f8_rhs(x, u) -> np.ndarray:
    """Angle of attack, pitch angle and pitch rate under tail deflection ``u``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(x.shape[:-1] + (-1,))[..., 0]
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    dx1 = (-0.877 * x1 + x3 - 0.088 * x1 * x3 + 0.47 * x1 ** 2 - 0.019 * x2 ** 2
           - x1 ** 2 * x3 + 3.846 * x1 ** 3 - 0.215 * u + 0.28 * x1 ** 2 * u
           + 0.47 * x1 * u ** 2 + 0.63 * u ** 3)
    dx3 = (-4.208 * x1 - 0.396 * x3 - 0.47 * x1 ** 2 - 3.564 * x1 ** 3 - 20.967 * u
           + 6.265 * x1 ** 2 * u + 46.0 * x1 * u ** 2 + 61.4 * u ** 3)
    return np.stack([dx1, x3, dx3], axis=-1)


def f8_model(degree: int = 3) -> IdentifiedModel:
    return _model_from_terms(build_poly_library(3, 1, degree), _F8_TERMS)


def f8_reference(t) -> np.ndarray:
    """Angle-of-attack reference: two smoothed steps settling at -0.16 rad."""
    t = np.asarray(t, dtype=float)
    return 0.4 * (-0.5 * expit(0.8 - t / 0.1) + expit(3.0 - t / 0.1) - 0.4)


# --- Quadrotor ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadrotorParams:
    mass: float = 1.3
    g: float = 9.81
    inertia: tuple = (0.0281, 0.0286, 0.0551)
    arm: float = 0.165

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.g


QUAD = QuadrotorParams()


def quadrotor_rhs(s, inp, params: QuadrotorParams = QUAD) -> np.ndarray:
    """Rigid-body derivative of ``(p, v, q, w)`` under thrust ``F`` and body moments ``M``."""
    s = np.asarray(s, dtype=float)
    inp = np.asarray(inp, dtype=float)
    v, q, w = s[3:6], s[6:10], s[10:13]
    F, M = inp[0], inp[1:4]
    Ixx, Iyy, Izz = params.inertia
    acc = quat_to_rotmat(q) @ np.array([0.0, 0.0, F]) / params.mass
    acc[2] -= params.g
    b0, b1, b2, b3 = q
    p, qq, r = w
    dq = 0.5 * np.array([-p * b1 - qq * b2 - r * b3,
                         p * b0 + r * b2 - qq * b3,
                         qq * b0 - r * b1 + p * b3,
                         r * b0 + qq * b1 - p * b2])
    dw = np.array([(M[0] + (Iyy - Izz) * qq * r) / Ixx,
                   (M[1] + (Izz - Ixx) * p * r) / Iyy,
                   (M[2] + (Ixx - Iyy) * p * qq) / Izz])
    return np.concatenate([v, acc, dq, dw])


def quadrotor_model(params: QuadrotorParams = QUAD) -> QuadrotorModel:
    return QuadrotorModel.exact(params.mass, params.inertia, params.g)


def hover_state(position=(0.0, 0.0, 0.0)) -> np.ndarray:
    s = np.zeros(13)
    s[0:3] = position
    s[6] = 1.0
    return s


@dataclass(frozen=True)
class PDGains:
    kp: tuple = (15.0, 15.0, 15.0)
    kd: tuple = (12.0, 12.0, 12.0)
    kp_att: tuple = (160.0, 160.0, 160.0)
    kd_att: tuple = (25.0, 25.0, 25.0)


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def pd_controller(s, ref_pos, ref_vel, ref_acc, psi_des: float, gains: PDGains = PDGains(),
                  psi_rate_des: float = 0.0, params: QuadrotorParams = QUAD) -> np.ndarray:
    """Cascaded PD law returning ``(F, Mx, My, Mz)``.

    The commanded acceleration sets the thrust and, through small-angle inversion, the
    desired roll and pitch; attitude errors in ZYX Euler angles drive the moments.
    """
    s = np.asarray(s, dtype=float)
    a = (np.asarray(ref_acc, dtype=float)
         + np.asarray(gains.kd) * (np.asarray(ref_vel, dtype=float) - s[3:6])
         + np.asarray(gains.kp) * (np.asarray(ref_pos, dtype=float) - s[0:3]))
    F = params.mass * (params.g + a[2])
    sp, cp = np.sin(psi_des), np.cos(psi_des)
    phi_des = (a[0] * sp - a[1] * cp) / params.g
    theta_des = (a[0] * cp + a[1] * sp) / params.g
    eta = quat_to_euler_zyx(s[6:10])
    err = _wrap(np.array([phi_des, theta_des, psi_des]) - eta)
    w_des = np.array([0.0, 0.0, psi_rate_des])
    M = np.asarray(params.inertia) * (np.asarray(gains.kd_att) * (w_des - s[10:13])
                                      + np.asarray(gains.kp_att) * err)
    return np.concatenate([[F], M])


def drone_training_reference(t):
    """Position, velocity, acceleration, yaw and yaw rate of the training flight at time ``t``."""
    t = float(t)
    s5, c5 = np.sin(0.5 * t), np.cos(0.5 * t)
    s15, c15 = np.sin(1.5 * t), np.cos(1.5 * t)
    s3, c3 = np.sin(3.0 * t), np.cos(3.0 * t)
    pos = np.array([1.5 * s5 + 0.8 * s15 + 0.3 * s3,
                    1.5 * c5 + 0.8 * c15 + 0.3 * s3,
                    1.5 + 0.5 * s5 + 0.3 * s15])
    vel = np.array([0.75 * c5 + 1.2 * c15 + 0.9 * c3,
                    -0.75 * s5 - 1.2 * s15 + 0.9 * c3,
                    0.25 * c5 + 0.45 * c15])
    acc = np.array([-0.375 * s5 - 1.8 * s15 - 2.7 * s3,
                    -0.375 * c5 - 1.8 * c15 - 2.7 * s3,
                    -0.125 * s5 - 0.675 * s15])
    psi = np.pi / 6.0 * np.sin(t)
    psi_rate = np.pi / 6.0 * np.cos(t)
    return pos, vel, acc, psi, psi_rate


def generate_drone_training(T: float = 30.0, dt: float = 0.01, n_substeps: int = 2,
                            gains: PDGains = PDGains(), params: QuadrotorParams = QUAD) -> TimeSeries:
    """PD-tracked training flight; each PD output is held over one sample interval."""
    N = int(round(T / dt)) + 1
    pos, vel, _, psi, _ = drone_training_reference(0.0)
    x = hover_state(pos)
    x[3:6] = vel
    x[6:10] = quat_normalize(np.array([np.cos(psi / 2), 0.0, 0.0, np.sin(psi / 2)]))
    X = np.empty((N, 13))
    U = np.empty((N, 4))
    h = dt / n_substeps
    rhs = lambda s, u: quadrotor_rhs(s, u, params)  # noqa: E731
    for k in range(N):
        ref = drone_training_reference(k * dt)
        u = pd_controller(x, ref[0], ref[1], ref[2], ref[3], gains, ref[4], params)
        X[k], U[k] = x, u
        if k == N - 1:
            break
        for _ in range(n_substeps):
            x = rk4_step(rhs, x, u, h)
            x[6:10] = quat_normalize(x[6:10])
    return TimeSeries(dt * np.arange(N), X, U, dt)


@dataclass(frozen=True)
class CircleReference:
    """Horizontal circle of the given radius and period at constant height, yaw fixed to zero."""

    radius: float = 1.2
    height: float = 1.5
    period: float = 10.0
    center: tuple = (0.0, 0.0)

    def position(self, t):
        w = 2.0 * np.pi / self.period
        return np.array([self.center[0] + self.radius * np.cos(w * t),
                         self.center[1] + self.radius * np.sin(w * t), self.height])

    def velocity(self, t):
        w = 2.0 * np.pi / self.period
        return np.array([-self.radius * w * np.sin(w * t), self.radius * w * np.cos(w * t), 0.0])

    def __call__(self, t) -> np.ndarray:
        """Full 13-dim state reference: position, velocity, identity quaternion, zero rates."""
        r = np.zeros(13)
        r[0:3] = self.position(t)
        r[3:6] = self.velocity(t)
        r[6] = 1.0
        return r

    def obstacle_near(self, t: float, radial_offset: float) -> np.ndarray:
        """Point displaced radially (outward for positive offsets) from the path at ``t``."""
        p = self.position(t)
        c = np.array([self.center[0], self.center[1], self.height])
        d = (p - c) / self.radius
        return p + radial_offset * d


# --- Plasma boundary surrogate ----------------------------------------------------------
# Two-state relaxation model in normalized units: x1 (density) relaxes toward a baseline
# plus gas-puff drive, x2 (inverse temperature) follows x1 quadratically.

PLASMA_TAU1 = 0.02
PLASMA_TAU2 = 0.03
PLASMA_BASE = 1500.0
PLASMA_GAIN = 10.0
PLASMA_COUPLING = 2e-4


def plasma_rhs(x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(x.shape[:-1] + (-1,))[..., 0]
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([-(x1 - PLASMA_BASE) / PLASMA_TAU1 + PLASMA_GAIN * u,
                     (PLASMA_COUPLING * x1 ** 2 - x2) / PLASMA_TAU2], axis=-1)


def plasma_model() -> IdentifiedModel:
    lib = build_poly_library(2, 1, 2)
    return _model_from_terms(lib, [
        {(0, 0, 0): PLASMA_BASE / PLASMA_TAU1, (1, 0, 0): -1.0 / PLASMA_TAU1,
         (0, 0, 1): PLASMA_GAIN},
        {(2, 0, 0): PLASMA_COUPLING / PLASMA_TAU2, (0, 1, 0): -1.0 / PLASMA_TAU2},
    ])


def plasma_equilibrium(u: float) -> np.ndarray:
    x1 = PLASMA_BASE + PLASMA_TAU1 * PLASMA_GAIN * u
    return np.array([x1, PLASMA_COUPLING * x1 ** 2])


# --- Input signals -----------------------------------------------------------------------

def schroeder_sweep(t, amplitude: float, n_harmonics: int, period: float) -> np.ndarray:
    """Multisine ``sum_k (A/sqrt(K)) cos(2 pi k t / P + theta_k)``, ``theta_k = -pi k (k-1) / K``."""
    if n_harmonics < 1:
        raise ValueError("n_harmonics must be >= 1")
    t = np.asarray(t, dtype=float)
    k = np.arange(1, n_harmonics + 1)
    phase = -np.pi * k * (k - 1) / n_harmonics
    arg = 2.0 * np.pi * np.multiply.outer(t, k) / period + phase
    return amplitude / np.sqrt(n_harmonics) * np.sum(np.cos(arg), axis=-1)


def crest_factor(u) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.max(np.abs(u)) / np.sqrt(np.mean(u ** 2)))
