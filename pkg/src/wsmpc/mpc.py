"""Receding-horizon control on a forward operator.

Input sequences of length ``mc`` are held at their last value up to the prediction length
``mp``. The optimizer is a projected BFGS method over the input box with forward
finite-difference gradients; every gradient costs one batched rollout. Rate limits after
the first move and output limits enter through a quadratic penalty that is doubled while
violated, and the returned sequence is clipped so every bound holds exactly.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .data import NoiseSpec
from .dynamics import ForwardOperator
from .errors import DimensionMismatch, Diverged, InfeasibleBounds

FD_REL_STEP = 1e-6
ARMIJO_C = 1e-4
VIOLATION_TOL = 1e-6
MAX_PENALTY_DOUBLINGS = 8


@dataclass(frozen=True)
class Obstacle:
    """Spherical keep-out region penalized by ``weight * max(0, d_min - |p - center|)^2``."""

    center: Sequence[float]
    d_min: float
    weight: float
    position_index: tuple = (0, 1, 2)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if self.d_min < 0 or self.weight < 0:
            raise ValueError("obstacle radius and weight must be non-negative")


def _vec(v, n, name):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise DimensionMismatch(f"{name} needs {n} entries, got shape {a.shape}")
    return a


@dataclass
class MpcConfig:
    """Horizon lengths, diagonal weights, and constraints.

    ``Q`` has one weight per state; ``Ru``, ``Rdu``, ``u_min``, ``u_max``, ``du_min`` and
    ``du_max`` one per input (scalars broadcast). ``y_index`` selects the state entries
    bounded by ``y_min``/``y_max``.
    """

    mp: int
    mc: int
    Ts: float
    Q: Sequence[float]
    Ru: Union[float, Sequence[float]]
    Rdu: Union[float, Sequence[float]]
    u_min: Union[float, Sequence[float]]
    u_max: Union[float, Sequence[float]]
    du_min: Union[float, Sequence[float], None] = None
    du_max: Union[float, Sequence[float], None] = None
    y_index: tuple = ()
    y_min: Optional[Sequence[float]] = None
    y_max: Optional[Sequence[float]] = None
    obstacle: Optional[Obstacle] = None
    max_opt_iters: int = 100
    penalty: float = 1e4
    quaternion_block: Optional[slice] = None
    xtol: float = 1e-8
    gtol: float = 1e-6

    def __post_init__(self):
        if self.mc < 1 or self.mp < self.mc:
            raise ValueError("need 1 <= mc <= mp")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1)
        V = max(np.size(v) for v in (self.Ru, self.Rdu, self.u_min, self.u_max))
        self.Ru = _vec(self.Ru, V, "Ru")
        self.Rdu = _vec(self.Rdu, V, "Rdu")
        self.u_min = _vec(self.u_min, V, "u_min")
        self.u_max = _vec(self.u_max, V, "u_max")
        self.du_min = _vec(-np.inf if self.du_min is None else self.du_min, V, "du_min")
        self.du_max = _vec(np.inf if self.du_max is None else self.du_max, V, "du_max")
        if np.any(self.Q < 0) or np.any(self.Ru < 0) or np.any(self.Rdu < 0):
            raise ValueError("weights must be non-negative")
        if np.any(self.u_min > self.u_max):
            raise InfeasibleBounds("u_min exceeds u_max")
        if np.any(self.du_min > 0) or np.any(self.du_max < 0) or np.any(self.du_min > self.du_max):
            raise InfeasibleBounds("rate bounds must satisfy du_min <= 0 <= du_max")
        self.y_index = tuple(int(i) for i in self.y_index)
        ny = len(self.y_index)
        self.y_min = _vec(-np.inf if self.y_min is None else self.y_min, ny, "y_min")
        self.y_max = _vec(np.inf if self.y_max is None else self.y_max, ny, "y_max")
        if np.any(self.y_min > self.y_max):
            raise InfeasibleBounds("y_min exceeds y_max")

    @property
    def input_dim(self) -> int:
        return self.Ru.size

    @property
    def has_rate_bounds(self) -> bool:
        return bool(np.any(np.isfinite(self.du_min)) or np.any(np.isfinite(self.du_max)))


def _hold(U, mp):
    """Extend (B, mc, V) sequences to length ``mp`` by repeating the last input."""
    mc = U.shape[1]
    if mc == mp:
        return U
    tail = np.repeat(U[:, -1:, :], mp - mc, axis=1)
    return np.concatenate([U, tail], axis=1)


def _batch_cost(X, U, R, u_prev, cfg: MpcConfig):
    """Cost of predicted states ``X`` (B, mp, D) under inputs ``U`` (B, mc, V)."""
    err = X - R[None]
    J = np.einsum("bkd,d,bkd->b", err, cfg.Q, err)
    if cfg.obstacle is not None and cfg.obstacle.weight > 0:
        ob = cfg.obstacle
        dist = np.linalg.norm(X[:, :, list(ob.position_index)] - ob.center, axis=2)
        J = J + ob.weight * np.sum(np.maximum(0.0, ob.d_min - dist) ** 2, axis=1)
    dU = np.diff(np.concatenate([np.broadcast_to(u_prev, (U.shape[0], 1, U.shape[2])), U],
                                axis=1), axis=1)
    J = J + np.einsum("bkv,v,bkv->b", U, cfg.Ru, U) + np.einsum("bkv,v,bkv->b", dU, cfg.Rdu, dU)
    return J


def horizon_cost(xhat_seq, u_seq, r_seq, cfg: MpcConfig, u_prev=None) -> float:
    """Tracking, obstacle and input cost of one candidate plan.

    ``xhat_seq`` (mp, D) are the predicted states after each applied input, ``u_seq``
    (mc, V) the planned inputs and ``r_seq`` (mp, D) the references. The input cost sums
    ``|u_k|^2_Ru + |u_k - u_{k-1}|^2_Rdu`` over the ``mc`` planned inputs with ``u_0 = u_prev``
    (zero when omitted).
    """
    X = np.atleast_2d(np.asarray(xhat_seq, dtype=float))
    U = np.asarray(u_seq, dtype=float).reshape(-1, cfg.input_dim)
    R = np.atleast_2d(np.asarray(r_seq, dtype=float))
    if X.shape != R.shape or X.shape[0] != cfg.mp or X.shape[1] != cfg.Q.size:
        raise DimensionMismatch(f"expected ({cfg.mp}, {cfg.Q.size}) states and references, "
                                f"got {X.shape} and {R.shape}")
    if U.shape[0] != cfg.mc:
        raise DimensionMismatch(f"expected {cfg.mc} inputs, got {U.shape[0]}")
    u_prev = np.zeros(cfg.input_dim) if u_prev is None else np.asarray(u_prev, dtype=float)
    return float(_batch_cost(X[None], U[None], R, u_prev, cfg)[0])


def _violation(X, U, u_prev, cfg: MpcConfig):
    """Squared-violation sums (B,) of later rate moves and of output bounds, plus max violation."""
    B = U.shape[0]
    sq = np.zeros(B)
    worst = np.zeros(B)
    if cfg.has_rate_bounds and U.shape[1] > 1:
        dU = np.diff(U, axis=1)
        v = np.maximum(0.0, dU - cfg.du_max) + np.maximum(0.0, cfg.du_min - dU)
        sq += np.sum(v ** 2, axis=(1, 2))
        worst = np.maximum(worst, v.max(axis=(1, 2)))
    if cfg.y_index:
        Y = X[:, :, list(cfg.y_index)]
        v = np.maximum(0.0, Y - cfg.y_max) + np.maximum(0.0, cfg.y_min - Y)
        sq += np.sum(v ** 2, axis=(1, 2))
        worst = np.maximum(worst, v.max(axis=(1, 2)))
    return sq, worst


def first_move_box(u_prev, cfg: MpcConfig):
    """Box for the first input: input bounds intersected with the rate limits around ``u_prev``."""
    lo = np.maximum(cfg.u_min, u_prev + cfg.du_min)
    hi = np.minimum(cfg.u_max, u_prev + cfg.du_max)
    bad = lo > hi  # previous input outside the box: move toward it as far as allowed
    if np.any(bad):
        near = np.clip(u_prev, cfg.u_min, cfg.u_max)
        lo = np.where(bad, near, lo)
        hi = np.where(bad, near, hi)
    return lo, hi


def _step_within(prev, u, dmin, dmax):
    """Nudge ``u`` by ulps until ``u - prev`` lies in ``[dmin, dmax]`` in floating point."""
    u = u.copy()
    for i in range(u.size):
        while u[i] - prev[i] > dmax[i]:
            u[i] = np.nextafter(u[i], -np.inf)
        while u[i] - prev[i] < dmin[i]:
            u[i] = np.nextafter(u[i], np.inf)
    return u


def enforce_constraints(U, u_prev, cfg: MpcConfig) -> np.ndarray:
    """Sequentially clip a plan (mc, V) into the input box and the rate limits."""
    U = np.array(U, dtype=float).reshape(cfg.mc, cfg.input_dim)
    prev = np.asarray(u_prev, dtype=float)
    for k in range(cfg.mc):
        lo = np.maximum(cfg.u_min, prev + cfg.du_min)
        hi = np.minimum(cfg.u_max, prev + cfg.du_max)
        hi = np.maximum(hi, lo)
        u = np.clip(U[k], lo, hi)
        if cfg.has_rate_bounds and np.all(prev >= cfg.u_min) and np.all(prev <= cfg.u_max):
            u = _step_within(prev, u, cfg.du_min, cfg.du_max)
        U[k] = np.clip(u, cfg.u_min, cfg.u_max)
        prev = U[k]
    return U


@dataclass
class OptResult:
    z: np.ndarray
    f: float
    iters: int
    converged: bool


def projected_bfgs(fbatch: Callable, z0, lb, ub, max_iter: int = 100, xtol: float = 1e-8,
                   gtol: float = 1e-6) -> OptResult:
    """Minimize over the box ``[lb, ub]`` with BFGS directions and projected Armijo search.

    ``fbatch`` maps a (B, n) array of points to (B,) objective values. Gradients use forward
    differences with step ``1e-6 * max(1, |z_i|)`` (backward at an upper bound).
    """
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    z = np.clip(np.asarray(z0, dtype=float), lb, ub)
    n = z.size

    def value_and_grad(z):
        h = FD_REL_STEP * np.maximum(1.0, np.abs(z))
        h = np.where(z + h > ub, -h, h)
        pts = np.vstack([z[None], z[None] + np.diag(h)])
        vals = fbatch(pts)
        with np.errstate(invalid="ignore"):
            g = (vals[1:] - vals[0]) / h
        g[~np.isfinite(g)] = 0.0
        return vals[0], g

    f, g = value_and_grad(z)
    if not np.isfinite(f):
        return OptResult(z, f, 0, False)
    H = np.eye(n)
    scaled = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = z - np.clip(z - g, lb, ub)
        if np.max(np.abs(pg)) <= gtol:
            converged = True
            it -= 1
            break
        active = ((z <= lb) & (g > 0)) | ((z >= ub) & (g < 0))
        free = ~active
        d = np.zeros(n)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        if g @ d >= 0:
            H = np.eye(n)
            d = np.where(free, -g, 0.0)
        t = 1.0
        accepted = False
        tiny = False
        for _ in range(60):
            zn = np.clip(z + t * d, lb, ub)
            s = zn - z
            if np.max(np.abs(s)) <= xtol * max(1.0, np.max(np.abs(z))):
                tiny = True
                break
            fn = fbatch(zn[None])[0]
            if np.isfinite(fn) and fn <= f + ARMIJO_C * (g @ s):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = tiny
            break
        fn, gn = value_and_grad(zn)
        y = gn - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = (sy / (y @ y)) * np.eye(n)
                scaled = True
            rho = 1.0 / sy
            Vm = np.eye(n) - rho * np.outer(s, y)
            H = Vm @ H @ Vm.T + rho * np.outer(s, s)
        z, f, g = zn, fn, gn
        if np.max(np.abs(s)) <= xtol * max(1.0, np.max(np.abs(z))):
            converged = True
            break
    return OptResult(z, f, it, converged)


@dataclass
class MpcSolution:
    u: np.ndarray  # (mc, V)
    cost: float  # horizon cost of the returned plan (no penalty)
    iters: int
    diverged: bool = False
    max_violation: float = 0.0


def _references(r_seq, mp, D):
    R = np.asarray(r_seq, dtype=float)
    if R.ndim == 1:
        R = np.tile(R, (mp, 1))
    if R.shape != (mp, D):
        raise DimensionMismatch(f"reference sequence must be ({mp}, {D}), got {R.shape}")
    return R


def solve_mpc_step(F: ForwardOperator, y, u_prev, r_seq, cfg: MpcConfig,
                   u_init=None) -> MpcSolution:
    """Plan ``mc`` inputs from the measured state ``y``.

    ``u_init`` warm-starts the plan (defaults to holding ``u_prev``). If the model blows up
    from the start the plan holds ``u_prev`` (clipped into bounds) and ``diverged`` is set.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    u_prev = np.asarray(u_prev, dtype=float).reshape(cfg.input_dim)
    if cfg.quaternion_block is not None:
        q = y[cfg.quaternion_block]
        y = y.copy()
        y[cfg.quaternion_block] = q / np.linalg.norm(q)
    R = _references(r_seq, cfg.mp, y.size)
    V, mc = cfg.input_dim, cfg.mc
    lo1, hi1 = first_move_box(u_prev, cfg)
    lb = np.concatenate([lo1] + [cfg.u_min] * (mc - 1))
    ub = np.concatenate([hi1] + [cfg.u_max] * (mc - 1))
    z0 = np.tile(u_prev, mc) if u_init is None else np.asarray(u_init, dtype=float).reshape(-1)
    z0 = np.clip(z0, lb, ub)

    def rollout(Z):
        U = Z.reshape(-1, mc, V)
        X, status = F.rollout(y, _hold(U, cfg.mp))
        return U, X, status

    def make_objective(weight):
        def fbatch(Z):
            U, X, status = rollout(Z)
            with np.errstate(all="ignore"):
                J = _batch_cost(X, U, R, u_prev, cfg)
                if weight > 0:
                    J = J + weight * _violation(X, U, u_prev, cfg)[0]
            J[(status >= 0) | ~np.isfinite(J)] = np.inf
            return J
        return fbatch

    needs_penalty = cfg.y_index or (cfg.has_rate_bounds and mc > 1)
    weight = cfg.penalty if needs_penalty else 0.0
    z = z0
    total_iters = 0
    for _ in range(MAX_PENALTY_DOUBLINGS + 1):
        res = projected_bfgs(make_objective(weight), z, lb, ub, cfg.max_opt_iters,
                             cfg.xtol, cfg.gtol)
        total_iters += res.iters
        if not np.isfinite(res.f):
            hold = enforce_constraints(np.tile(u_prev, (mc, 1)), u_prev, cfg)
            return MpcSolution(hold, np.inf, total_iters, True, np.inf)
        z = res.z
        if not needs_penalty:
            break
        U, X, _ = rollout(z[None])
        worst = float(_violation(X, U, u_prev, cfg)[1][0])
        if worst <= VIOLATION_TOL:
            break
        weight *= 2.0
    U = enforce_constraints(z.reshape(mc, V), u_prev, cfg)
    _, X, status = rollout(U.reshape(1, -1))
    if status[0] >= 0:
        return MpcSolution(U, np.inf, total_iters, True, np.inf)
    cost = float(_batch_cost(X, U[None], R, u_prev, cfg)[0])
    worst = float(_violation(X, U[None], u_prev, cfg)[1][0])
    return MpcSolution(U, cost, total_iters, False, worst)


@dataclass
class ControlLog:
    """Closed-loop record; row ``j`` holds the input applied at step ``j`` and its outcome."""

    t: np.ndarray
    u: np.ndarray
    x: np.ndarray
    y: np.ndarray
    stage_cost: np.ndarray
    iters: np.ndarray
    wall_ms: np.ndarray
    model_diverged: np.ndarray
    failed: bool = False
    x0: Optional[np.ndarray] = None

    @property
    def cum_cost(self) -> np.ndarray:
        return np.cumsum(self.stage_cost)

    @property
    def terminal_cost(self) -> float:
        return float(self.cum_cost[-1]) if len(self.stage_cost) else 0.0

    def __len__(self):
        return len(self.t)

    def columns(self) -> list:
        V, D = self.u.shape[1], self.x.shape[1]
        return (["t"] + [f"u_{i + 1}" for i in range(V)] + [f"x_{i + 1}" for i in range(D)]
                + [f"y_{i + 1}" for i in range(D)] + ["stage_cost", "cum_cost", "iters", "wall_ms"])

    def to_csv(self, path, timing: bool = True) -> None:
        """Write the log; ``timing=False`` zeroes ``wall_ms`` for byte-reproducible files."""
        cum = self.cum_cost
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for j in range(len(self)):
                row = [self.t[j], *self.u[j], *self.x[j], *self.y[j], self.stage_cost[j], cum[j]]
                w.writerow([repr(float(v)) for v in row]
                           + [int(self.iters[j]), repr(float(self.wall_ms[j]) if timing else 0.0)])


def _stage_cost(x, r, u, u_prev, cfg: MpcConfig) -> float:
    e = x - r
    c = float(e @ (cfg.Q * e) + u @ (cfg.Ru * u) + (u - u_prev) @ (cfg.Rdu * (u - u_prev)))
    if cfg.obstacle is not None and cfg.obstacle.weight > 0:
        ob = cfg.obstacle
        dist = np.linalg.norm(x[list(ob.position_index)] - ob.center)
        c += ob.weight * max(0.0, ob.d_min - dist) ** 2
    return c


def receding_horizon_run(plant: ForwardOperator, model: ForwardOperator, x0, cfg: MpcConfig,
                         reference, T_total: float, noise: Optional[NoiseSpec] = None,
                         noise_sigma=None, u0=None) -> ControlLog:
    """Closed loop: plan on ``model``, apply the first input to ``plant`` for one interval.

    ``plant`` and ``model`` are forward operators spanning one update interval ``Ts``.
    ``reference`` is a callable ``r(t)`` or a constant state. Measurements are the plant
    state plus Gaussian noise with per-state standard deviation ``noise_sigma`` drawn from
    ``noise.seed``. The run stops early, marked failed, if the plant blows up.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    D, V = x.size, cfg.input_dim
    n_steps = int(np.floor(T_total / cfg.Ts + 1e-9))
    ref = reference if callable(reference) else (lambda t, _r=np.asarray(reference, float): _r)
    rng = np.random.default_rng(noise.seed if noise is not None else 0)
    sigma = np.zeros(D) if noise_sigma is None else np.broadcast_to(
        np.asarray(noise_sigma, dtype=float), (D,))

    def measure(state):
        return state + sigma * rng.standard_normal(D) if np.any(sigma > 0) else state.copy()

    u_prev = np.zeros(V) if u0 is None else np.asarray(u0, dtype=float).reshape(V)
    y = measure(x)
    rows = {k: [] for k in ("t", "u", "x", "y", "stage", "iters", "wall", "div")}
    warm = None
    failed = False
    for j in range(n_steps):
        tj = j * cfg.Ts
        r_seq = np.array([ref(tj + (k + 1) * cfg.Ts) for k in range(cfg.mp)])
        t0 = time.perf_counter()
        sol = solve_mpc_step(model, y, u_prev, r_seq, cfg, warm)
        wall = 1e3 * (time.perf_counter() - t0)
        u = sol.u[0]
        try:
            x = plant.step(x, u)
        except Diverged:
            failed = True
            break
        y = measure(x)
        rows["t"].append(tj + cfg.Ts)
        rows["u"].append(u)
        rows["x"].append(x)
        rows["y"].append(y)
        rows["stage"].append(_stage_cost(x, ref(tj + cfg.Ts), u, u_prev, cfg))
        rows["iters"].append(sol.iters)
        rows["wall"].append(wall)
        rows["div"].append(sol.diverged)
        warm = np.concatenate([sol.u[1:], sol.u[-1:]], axis=0)
        u_prev = u
    n = len(rows["t"])
    return ControlLog(np.array(rows["t"]), np.array(rows["u"]).reshape(n, V),
                      np.array(rows["x"]).reshape(n, D), np.array(rows["y"]).reshape(n, D),
                      np.array(rows["stage"]), np.array(rows["iters"], dtype=int),
                      np.array(rows["wall"]), np.array(rows["div"], dtype=bool), failed,
                      np.asarray(x0, dtype=float).copy())
