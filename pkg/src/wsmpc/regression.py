"""Sparse regression: finite differences, STLS, MSTLS with a lambda grid, and bagged ensembles.

Least-squares solves on column subsets run on a compressed problem: with a thin QR
``A = Q R`` computed once, ``min ||A[:, S] w - b||`` equals ``min ||R[:, S] w - Q^T b||``
up to a constant, so every sweep and every grid point works on a ``J x |S|`` system.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (AllEmptyWarning, DimensionMismatch, EmptyReducedLibrary, NonFiniteOutput,
                     RankDeficient, TooFewSamples)

N_LAMBDAS = 100
LAMBDA_GRID = 10.0 ** (-4.0 + 4.0 * np.arange(N_LAMBDAS) / (N_LAMBDAS - 1))
RIDGE_SCALE = 1e-10
RANK_RTOL = 1e-12
BOUND_RTOL = 1e-12
TIE_ATOL = 1e-12


def fd_derivative(X, dt: float):
    """Fourth-order finite-difference derivative of each column of ``X``.

    Returns ``(Xdot, interior)`` where ``interior`` flags rows computed with the centred
    stencil; the two rows at each end use one-sided fourth-order stencils.
    """
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    N = X.shape[0]
    if N < 5:
        raise TooFewSamples(f"fourth-order differences need N >= 5, got {N}")
    d = np.empty_like(X)
    c = 12.0 * dt
    d[2:-2] = (-X[4:] + 8.0 * X[3:-1] - 8.0 * X[1:-3] + X[:-4]) / c
    d[0] = (-25 * X[0] + 48 * X[1] - 36 * X[2] + 16 * X[3] - 3 * X[4]) / c
    d[1] = (-3 * X[0] - 10 * X[1] + 18 * X[2] - 6 * X[3] + X[4]) / c
    d[-2] = (3 * X[-1] + 10 * X[-2] - 18 * X[-3] + 6 * X[-4] - X[-5]) / c
    d[-1] = (25 * X[-1] - 48 * X[-2] + 36 * X[-3] - 16 * X[-4] + 3 * X[-5]) / c
    interior = np.zeros(N, dtype=bool)
    interior[2:-2] = True
    return (d[:, 0] if squeeze else d), interior


@dataclass
class _Compressed:
    """Thin-QR summary of ``(A, b)``: ``R`` (k, J), ``qtb`` (k, D), norms of ``b`` and of ``A_j``."""

    R: np.ndarray
    qtb: np.ndarray
    bnorm: np.ndarray
    colnorm: np.ndarray

    @classmethod
    def from_problem(cls, A, b):
        Q, R = np.linalg.qr(A, mode="reduced")
        return cls(R, Q.T @ b, np.linalg.norm(b, axis=0), np.linalg.norm(A, axis=0))

    @property
    def ridge(self) -> float:
        J = self.R.shape[1]
        return RIDGE_SCALE * float(np.sum(self.colnorm ** 2)) / max(J, 1)


def _lstsq(R, rhs, ridge):
    """Least squares on the compressed system, with a ridge fallback when rank deficient."""
    if R.shape[1] == 0:
        return np.zeros(0)
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    if s.size == R.shape[1] and s[-1] > RANK_RTOL * s[0]:
        return Vt.T @ ((U.T @ rhs) / s)
    if ridge <= 0:
        raise RankDeficient("singular design with zero ridge penalty")
    w = Vt.T @ (s * (U.T @ rhs) / (s * s + ridge))
    if not np.all(np.isfinite(w)):
        raise RankDeficient("ridge fallback produced non-finite coefficients")
    return w


def _bounds(lam, bnorm, colnorm, rule="mstls"):
    if rule == "plain":
        return np.full(colnorm.shape, lam), np.full(colnorm.shape, np.inf)
    if rule != "mstls":
        raise ValueError(f"unknown threshold rule {rule!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(colnorm > 0, bnorm / colnorm, np.inf)
    scale = np.maximum(1.0, ratio)
    # relative slack so that |w_j| == s_j at lam = 1 is not decided by rounding
    lo = lam * scale * (1.0 - BOUND_RTOL)
    hi = scale / lam * (1.0 + BOUND_RTOL) if lam > 0 else np.full_like(scale, np.inf)
    return lo, hi


def _stls_column(cp: _Compressed, d: int, lam: float, max_sweeps: int, w_full=None,
                 rule: str = "mstls"):
    R, rhs = cp.R, cp.qtb[:, d]
    J = R.shape[1]
    lo, hi = _bounds(lam, cp.bnorm[d], cp.colnorm, rule)
    w = _lstsq(R, rhs, cp.ridge) if w_full is None else w_full.copy()
    active = np.ones(J, dtype=bool)
    for _ in range(max_sweeps):
        keep = active & (np.abs(w) >= lo) & (np.abs(w) <= hi)
        if np.array_equal(keep, active):
            break
        active = keep
        w = np.zeros(J)
        if active.any():
            w[active] = _lstsq(R[:, active], rhs, cp.ridge)
    return w


def stls(A, b, lam: float, max_sweeps: int = 10, rule: str = "mstls") -> np.ndarray:
    """Sequential thresholded least squares for one target column.

    With ``rule="mstls"`` term ``j`` survives a sweep when ``lam*s_j <= |w_j| <= s_j/lam``
    with ``s_j = max(1, ||b|| / ||A_j||)``; ``rule="plain"`` keeps ``|w_j| >= lam``.
    ``lam = 0`` returns the least-squares solution.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"A {A.shape} and b {b.shape} disagree")
    cp = _Compressed.from_problem(A, b[:, None])
    return _stls_column(cp, 0, float(lam), max_sweeps, rule=rule)


@dataclass
class RegressionProblem:
    """Design ``A`` (R, J) and targets ``b`` (R, D); ``names`` label the columns of ``A``."""

    A: np.ndarray
    b: np.ndarray
    names: Optional[tuple] = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        self.b = b[:, None] if b.ndim == 1 else b
        if self.A.ndim != 2 or self.A.shape[0] != self.b.shape[0] or self.A.shape[0] < 1:
            raise DimensionMismatch(f"A {self.A.shape} and b {self.b.shape} disagree")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise NonFiniteOutput("regression problem has non-finite entries")
        if self.names is not None:
            self.names = tuple(self.names)
            if len(self.names) != self.A.shape[1]:
                raise DimensionMismatch("names must label every column of A")

    @property
    def n_terms(self) -> int:
        return self.A.shape[1]


@dataclass
class SparseFit:
    W: np.ndarray  # (J, D)
    lambda_star: np.ndarray  # (D,)
    loss_curve: np.ndarray  # (D, n_lambda)
    lambdas: np.ndarray = field(default_factory=lambda: LAMBDA_GRID.copy())
    all_empty: np.ndarray = None  # (D,) bool

    def __post_init__(self):
        if self.all_empty is None:
            self.all_empty = np.zeros(self.W.shape[1], dtype=bool)

    @property
    def support(self) -> list:
        """Indices of the nonzero terms, one array per state dimension."""
        return [np.flatnonzero(self.W[:, d]) for d in range(self.W.shape[1])]

    def report(self, names=None) -> dict:
        names = names if names is not None else [f"f{j}" for j in range(self.W.shape[0])]
        return {
            "lambda_star": [float(v) for v in self.lambda_star],
            "support": [[names[j] for j in s] for s in self.support],
            "coefficients": [[float(v) for v in col] for col in self.W.T],
            "loss_curve": [[float(v) for v in row] for row in self.loss_curve],
            "all_empty": [bool(v) for v in self.all_empty],
        }

    def report_json(self, names=None) -> str:
        return json.dumps(self.report(names), indent=2, sort_keys=True)


def _loss(R, w, w0, norm_aw0, J):
    fit = float(np.linalg.norm(R @ (w - w0))) / norm_aw0 if norm_aw0 > 0 else 0.0
    return fit + np.count_nonzero(w) / J


def _mstls_column(cp: _Compressed, d: int, lambdas, max_sweeps: int, rule: str = "mstls"):
    R = cp.R
    J = R.shape[1]
    w0 = _lstsq(R, cp.qtb[:, d], cp.ridge)
    norm_aw0 = float(np.linalg.norm(R @ w0))
    losses = np.empty(len(lambdas))
    fits = []
    for i, lam in enumerate(lambdas):
        w = _stls_column(cp, d, lam, max_sweeps, w_full=w0, rule=rule)
        fits.append(w)
        losses[i] = _loss(R, w, w0, norm_aw0, J)
    # An empty fit scores exactly 1, as does a fit that keeps every term, so prefer
    # nonempty fits on exact ties; remaining ties go to the larger threshold.
    nonempty = np.array([np.any(w) for w in fits])
    pool = losses
    if nonempty.any() and losses[nonempty].min() <= losses.min() + TIE_ATOL:
        pool = np.where(nonempty, losses, np.inf)
    best = len(lambdas) - 1 - int(np.argmin(pool[::-1]))
    return fits[best], best, losses, not any(np.any(w) for w in fits)


def mstls(problem: RegressionProblem, lambdas=None, max_sweeps: int = 10,
          rule: str = "mstls") -> SparseFit:
    """Threshold selection over the lambda grid by the loss
    ``||A (W_lam - W_0)|| / ||A W_0|| + nnz(W_lam) / J``, run per target column.

    The minimizer is taken over nonempty fits when one ties the empty fit; other ties go to
    the larger ``lambda``. Passing a single-element ``lambdas`` turns this into a
    fixed-threshold fit.
    """
    lambdas = LAMBDA_GRID if lambdas is None else np.asarray(lambdas, dtype=float)
    A, b = problem.A, problem.b
    cp = _Compressed.from_problem(A, b)
    J, D = A.shape[1], b.shape[1]
    W = np.zeros((J, D))
    lam_star = np.empty(D)
    curves = np.empty((D, len(lambdas)))
    empty = np.zeros(D, dtype=bool)
    for d in range(D):
        w, best, losses, all_empty = _mstls_column(cp, d, lambdas, max_sweeps, rule)
        W[:, d] = w
        lam_star[d] = lambdas[best]
        curves[d] = losses
        empty[d] = all_empty
        if all_empty and np.any(b[:, d]):
            warnings.warn(f"every threshold removed all terms for target {d}",
                          AllEmptyWarning, stacklevel=2)
    return SparseFit(W, lam_star, curves, np.array(lambdas, dtype=float), empty)


@dataclass(frozen=True)
class EnsembleConfig:
    n_library_bags: int = 100
    library_sample_frac: float = 0.90
    term_inclusion_threshold: float = 0.4
    n_data_bags: int = 100
    coef_inclusion_threshold: float = 0.6
    aggregation: str = "median"

    def __post_init__(self):
        if self.n_library_bags < 1 or self.n_data_bags < 0:
            raise ValueError("bag counts must be positive")
        if not 0 < self.library_sample_frac <= 1:
            raise ValueError("library_sample_frac must lie in (0, 1]")
        for name in ("term_inclusion_threshold", "coef_inclusion_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.aggregation not in ("median", "mean"):
            raise ValueError("aggregation must be 'median' or 'mean'")


@dataclass
class EnsembleFit(SparseFit):
    term_frequency: np.ndarray = None  # (J, D) stage-1 inclusion frequency
    coef_frequency: np.ndarray = None  # (J, D) stage-2 inclusion frequency


def _aggregate(samples, how):
    return np.median(samples, axis=0) if how == "median" else np.mean(samples, axis=0)


def ensemble_fit(problem: RegressionProblem, cfg: EnsembleConfig = EnsembleConfig(),
                 rng=None, lambdas=None, rule: str = "mstls") -> EnsembleFit:
    """Library bagging followed by row bootstrapping of the reduced problem.

    Stage 1 fits MSTLS on ``n_library_bags`` random sub-libraries of ``ceil(frac*J)`` terms
    and keeps terms whose inclusion frequency is positive and at least
    ``term_inclusion_threshold``. Stage 2 refits each target on ``n_data_bags`` row
    bootstraps over its reduced library, zeroes coefficients selected in fewer than
    ``coef_inclusion_threshold`` of the bags, and aggregates the rest across all bags.
    With ``n_data_bags = 0`` the stage-1 coefficients are aggregated instead. ``lambdas``
    and ``rule`` configure the base fits as in :func:`mstls`.
    """
    rng = np.random.default_rng(rng)
    lambdas = LAMBDA_GRID if lambdas is None else np.asarray(lambdas, dtype=float)
    A, b = problem.A, problem.b
    nrows, J = A.shape
    D = b.shape[1]
    if J < 2 or nrows < 10:
        raise TooFewSamples(f"ensembles need J >= 2 and at least 10 rows, got J={J}, R={nrows}")

    cp = _Compressed.from_problem(A, b)
    n_keep = int(np.ceil(cfg.library_sample_frac * J))
    lib_coefs = np.zeros((cfg.n_library_bags, J, D))
    for k in range(cfg.n_library_bags):
        idx = np.sort(rng.choice(J, size=n_keep, replace=False)) if n_keep < J else np.arange(J)
        sub = _Compressed(cp.R[:, idx], cp.qtb, cp.bnorm, cp.colnorm[idx])
        for d in range(D):
            w, _, _, _ = _mstls_column(sub, d, lambdas, 10, rule)
            lib_coefs[k, idx, d] = w
    term_freq = np.mean(lib_coefs != 0, axis=0)
    keep = (term_freq > 0) & (term_freq >= cfg.term_inclusion_threshold)
    if not keep.any():
        raise EmptyReducedLibrary("library bagging retained no terms")

    W = np.zeros((J, D))
    coef_freq = np.zeros((J, D))
    lam_star = np.full(D, np.nan)
    curves = np.full((D, len(lambdas)), np.nan)
    if cfg.n_data_bags == 0:
        W = _aggregate(lib_coefs, cfg.aggregation) * keep
        coef_freq = term_freq
    else:
        boot = np.zeros((cfg.n_data_bags, J, D))
        for k in range(cfg.n_data_bags):
            rows = rng.integers(0, nrows, size=nrows)
            Ak, bk = A[rows], b[rows]
            for d in range(D):
                cols = np.flatnonzero(keep[:, d])
                if cols.size == 0:
                    continue
                sub = _Compressed.from_problem(Ak[:, cols], bk[:, d:d + 1])
                w, _, _, _ = _mstls_column(sub, 0, lambdas, 10, rule)
                boot[k, cols, d] = w
        coef_freq = np.mean(boot != 0, axis=0)
        W = _aggregate(boot, cfg.aggregation)
        W[coef_freq < cfg.coef_inclusion_threshold] = 0.0
        W[~keep] = 0.0
    for d in range(D):
        # loss curve of the base fit on the final support, for reporting
        cols = np.flatnonzero(keep[:, d])
        if cols.size:
            sub = _Compressed(cp.R[:, cols], cp.qtb, cp.bnorm, cp.colnorm[cols])
            _, best, losses, _ = _mstls_column(sub, d, lambdas, 10, rule)
            lam_star[d] = lambdas[best]
            curves[d] = losses
    empty = ~np.any(W != 0, axis=0)
    return EnsembleFit(W, lam_star, curves, np.array(lambdas), empty, term_freq, coef_freq)
