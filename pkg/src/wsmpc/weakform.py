"""Test functions and convolution assembly of the weak regression system ``B ~ G W``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import DimensionMismatch, InvalidSupport, NonFiniteOutput, TooFewSamples

DEFAULT_DEGREE = 16


@dataclass(frozen=True)
class TestFunction:
    """Samples of the bump ``phi(t) ~ (1 - (t/(m dt))^2)^p`` and its analytic derivative.

    ``phi`` and ``dphi`` have length ``2m + 1`` and cover offsets ``-m..m``; ``phi`` is
    scaled so that its trapezoid integral is one.
    """

    __test__ = False  # not a pytest class

    m: int
    p: int
    dt: float
    phi: np.ndarray
    dphi: np.ndarray

    @property
    def width(self) -> int:
        return 2 * self.m + 1

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.m, self.m + 1) * self.dt


@dataclass(frozen=True)
class WeakSystem:
    G: np.ndarray  # (N - 2m, J)
    B: np.ndarray  # (N - 2m, 1)
    dim_index: int


def make_test_function(m: int, p: int = DEFAULT_DEGREE, dt: float = 1.0) -> TestFunction:
    if m < 2:
        raise InvalidSupport(f"half support m={m} must be >= 2")
    if p < 2:
        raise InvalidSupport(f"degree p={p} must be >= 2")
    s = np.arange(-m, m + 1) / m
    base = 1.0 - s * s
    base[0] = base[-1] = 0.0
    raw = base ** p
    scale = 1.0 / (raw.sum() * dt)  # endpoints vanish, so the trapezoid sum is plain
    phi = scale * raw
    dphi = scale * (-2.0 * p * s / (m * dt)) * base ** (p - 1)
    dphi[m] = 0.0
    phi.setflags(write=False)
    dphi.setflags(write=False)
    return TestFunction(int(m), int(p), float(dt), phi, dphi)


def default_support(N: int, dt: float | None = None) -> int:
    """Half support ``clamp(round(N/20), 5, (N-3)//2)``; needs ``N >= 50``."""
    if N < 50:
        raise TooFewSamples(f"need at least 50 samples for the default support, got {N}")
    m = int(np.floor(N / 20 + 0.5))
    return int(min(max(m, 5), (N - 3) // 2))


def _correlate_valid(A: np.ndarray, kernel: np.ndarray, method: str) -> np.ndarray:
    """``out[r] = sum_i kernel[i] * A[r + i]`` over full-overlap rows, applied columnwise."""
    w = kernel.size
    if method == "fft":
        return fftconvolve(A, kernel[::-1, None], mode="valid", axes=0)
    if method == "direct":
        n = A.shape[0] - w + 1
        out = np.zeros((n, A.shape[1]))
        for i in range(w):
            if kernel[i] != 0.0:
                out += kernel[i] * A[i:i + n]
        return out
    raise ValueError(f"unknown convolution method {method!r}")


def _check(theta, X, tf):
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if theta.ndim != 2 or theta.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"theta {theta.shape} and X {X.shape} must share the row count")
    N = X.shape[0]
    if N <= 2 * tf.m:
        raise InvalidSupport(f"support 2m+1={tf.width} does not fit in N={N} samples")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(X))):
        raise NonFiniteOutput("theta and X must be finite")
    return theta, X


def assemble_all(theta, X, tf: TestFunction, method: str = "fft"):
    """Shared-test-function assembly for every state column.

    Returns ``(G, B)`` with ``G`` of shape ``(N - 2m, J)`` and ``B`` of shape ``(N - 2m, D)``.
    Row ``r`` corresponds to the test function centred on sample ``r + m``.
    """
    theta, X = _check(theta, X, tf)
    G = _correlate_valid(theta, tf.phi * tf.dt, method)
    B = -_correlate_valid(X, tf.dphi * tf.dt, method)
    if G.shape[0] <= theta.shape[1]:
        warnings.warn(f"weak system has {G.shape[0]} rows for {theta.shape[1]} terms",
                      RuntimeWarning, stacklevel=2)
    return G, B


def assemble_weak_system(theta, X, tf: TestFunction, d: int = 0,
                         method: str = "fft") -> WeakSystem:
    """Weak system for state dimension ``d``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not 0 <= d < X.shape[1]:
        raise DimensionMismatch(f"dimension {d} out of range for {X.shape[1]} states")
    G, B = assemble_all(theta, X[:, d:d + 1], tf, method)
    return WeakSystem(G, B, d)


def query_centers(N: int, m: int) -> np.ndarray:
    """Sample index at the centre of each weak-system row."""
    return np.arange(m, N - m)
