"""Time-series containers, synthetic measurement noise, CSV I/O and scaling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConstantChannel, DimensionMismatch, NonUniformGrid, ParseError

GRID_RTOL = 1e-12
CSV_GRID_RTOL = 1e-6


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled states ``(N, D)`` and inputs ``(N, V)``.

    Arrays are copied and made read-only on construction.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    dt: float

    def __post_init__(self):
        times = _frozen(self.times).reshape(-1)
        states = _frozen(self.states)
        if states.ndim == 1:
            states = _frozen(states.reshape(-1, 1))
        inputs = _frozen(self.inputs)
        if inputs.ndim == 1:
            inputs = _frozen(inputs.reshape(-1, 1) if inputs.size else np.zeros((len(times), 0)))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "dt", float(self.dt))

        n = len(times)
        if n < 2:
            raise ValueError("a TimeSeries needs at least 2 samples")
        if states.shape[0] != n or inputs.shape[0] != n:
            raise DimensionMismatch(
                f"times ({n}), states ({states.shape[0]}) and inputs ({inputs.shape[0]}) "
                "must share the sample count")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        steps = np.diff(times)
        # rounding of t0 + k*dt alone can exceed 1e-12*dt when |t| >> dt
        tol = max(GRID_RTOL * self.dt, 8 * np.finfo(float).eps * np.max(np.abs(times)))
        if np.any(np.abs(steps - self.dt) > tol):
            raise NonUniformGrid("times are not uniformly spaced by dt")

    @classmethod
    def from_arrays(cls, states, inputs=None, dt: float = 1.0, t0: float = 0.0) -> "TimeSeries":
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        n = states.shape[0]
        if inputs is None:
            inputs = np.zeros((n, 0))
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        return cls(t0 + dt * np.arange(n), states, inputs, dt)

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def head(self, n: int) -> "TimeSeries":
        """First ``n`` samples."""
        return TimeSeries(self.times[:n], self.states[:n], self.inputs[:n], self.dt)

    def with_states(self, states) -> "TimeSeries":
        return TimeSeries(self.times, states, self.inputs, self.dt)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian measurement noise with magnitude ``eta`` relative to each channel's std.

    ``eta`` may be a scalar shared by all state dimensions or a per-dimension sequence.
    """

    eta: Union[float, Sequence[float]] = 0.0
    seed: int = 0
    distribution: str = "gaussian"

    def __post_init__(self):
        if np.any(np.asarray(self.eta, dtype=float) < 0):
            raise ValueError("eta must be non-negative")
        if self.distribution != "gaussian":
            raise ValueError("only Gaussian noise is supported")

    def eta_vector(self, dim: int) -> np.ndarray:
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim == 0:
            return np.full(dim, float(eta))
        if eta.shape != (dim,):
            raise DimensionMismatch(f"eta has {eta.size} entries, state has {dim}")
        return eta


@dataclass(frozen=True)
class NormalizationScales:
    state_scales: np.ndarray = field(default_factory=lambda: np.ones(0))
    input_scales: np.ndarray = field(default_factory=lambda: np.ones(0))

    def __post_init__(self):
        s = _frozen(np.atleast_1d(self.state_scales))
        u = _frozen(np.atleast_1d(self.input_scales))
        if np.any(s <= 0) or np.any(u <= 0):
            raise ValueError("normalization scales must be positive")
        object.__setattr__(self, "state_scales", s)
        object.__setattr__(self, "input_scales", u)


# scales used for the tokamak boundary data: x1 = n_e,sep, x2 = 1/T_e,sep, u = gas puff
PLASMA_SCALES = NormalizationScales(state_scales=[1e16, 1e-4], input_scales=[1e18])


def std_per_dim(ts: TimeSeries) -> np.ndarray:
    """Unbiased sample standard deviation of every state channel."""
    std = np.std(ts.states, axis=0, ddof=1)
    bad = np.flatnonzero(std == 0)
    if bad.size:
        raise ConstantChannel(f"state channel(s) {bad.tolist()} have zero variance")
    return std


def noise_sigma(ts: TimeSeries, spec: NoiseSpec) -> np.ndarray:
    """Per-dimension noise standard deviation ``eta_i * std(x_i)``."""
    return spec.eta_vector(ts.state_dim) * std_per_dim(ts)


def add_noise(ts: TimeSeries, spec: NoiseSpec, sigma: Optional[np.ndarray] = None) -> TimeSeries:
    """Return ``Y = X + E`` with ``E[:, i] ~ N(0, (eta_i std_i)^2)``; inputs are left untouched."""
    if sigma is None:
        sigma = noise_sigma(ts, spec)
    rng = np.random.default_rng(spec.seed)
    eps = rng.standard_normal(ts.states.shape) * sigma
    return ts.with_states(ts.states + eps)


def _check_scales(ts: TimeSeries, scales: NormalizationScales):
    if scales.state_scales.shape != (ts.state_dim,) or scales.input_scales.shape != (ts.input_dim,):
        raise DimensionMismatch(
            f"scales ({scales.state_scales.size}, {scales.input_scales.size}) do not match "
            f"series dims ({ts.state_dim}, {ts.input_dim})")


def normalize(ts: TimeSeries, scales: NormalizationScales) -> TimeSeries:
    _check_scales(ts, scales)
    return TimeSeries(ts.times, ts.states / scales.state_scales,
                      ts.inputs / scales.input_scales, ts.dt)


def denormalize(ts: TimeSeries, scales: NormalizationScales) -> TimeSeries:
    _check_scales(ts, scales)
    return TimeSeries(ts.times, ts.states * scales.state_scales,
                      ts.inputs * scales.input_scales, ts.dt)


def csv_header(state_dim: int, input_dim: int) -> list:
    return (["t"] + [f"x{i + 1}" for i in range(state_dim)]
            + [f"u{i + 1}" for i in range(input_dim)])


def save_csv(ts: TimeSeries, path) -> None:
    """Write ``t,x1..xD,u1..uV`` with round-trip exact float formatting."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(ts.state_dim, ts.input_dim))
        for k in range(ts.n_samples):
            row = [ts.times[k], *ts.states[k], *ts.inputs[k]]
            w.writerow([repr(float(v)) for v in row])


def load_csv(path) -> TimeSeries:
    """Parse a ``t,x1..xD,u1..uV`` file into a :class:`TimeSeries`.

    The step is taken from the first two rows; any later step deviating by more than
    1e-6 relative raises :class:`NonUniformGrid`. Times are snapped to ``t0 + k*dt``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise ParseError(f"{path}: first column must be 't'")
    xcols = [h for h in header[1:] if h.startswith("x")]
    ucols = [h for h in header[1:] if h.startswith("u")]
    if header[1:] != xcols + ucols:
        raise ParseError(f"{path}: header must read t,x1..xD,u1..uV")
    for prefix, cols in (("x", xcols), ("u", ucols)):
        if cols != [f"{prefix}{i + 1}" for i in range(len(cols))]:
            raise ParseError(f"{path}: columns {cols} are not numbered consecutively")
    if not xcols:
        raise ParseError(f"{path}: no state columns")

    body = [r for r in rows[1:] if r]
    values = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ParseError(f"{path}: row {i + 2} has {len(r)} fields, expected {len(header)}")
        try:
            values[i] = [float(v) for v in r]
        except ValueError as exc:
            raise ParseError(f"{path}: row {i + 2}: {exc}") from None
    if len(body) < 2:
        raise ParseError(f"{path}: need at least two data rows")

    t = values[:, 0]
    dt = t[1] - t[0]
    if not dt > 0:
        raise NonUniformGrid(f"{path}: times must be increasing")
    if np.any(np.abs(np.diff(t) - dt) > CSV_GRID_RTOL * dt):
        raise NonUniformGrid(f"{path}: sample spacing is not uniform")
    d = len(xcols)
    times = t[0] + dt * np.arange(len(t))
    return TimeSeries(times, values[:, 1:1 + d], values[:, 1 + d:], dt)
