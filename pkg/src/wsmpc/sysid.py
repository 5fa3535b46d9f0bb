"""Method dispatch: build the strong- or weak-form regression problem and fit it."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ConfigError
from .funclib import FunctionLibrary
from .regression import EnsembleConfig, RegressionProblem, SparseFit, ensemble_fit, fd_derivative, mstls
from .weakform import DEFAULT_DEGREE, assemble_all, default_support, make_test_function

SPARSE_METHODS = ("sindyc", "wsindyc", "e-sindyc", "e-wsindyc")
STRONG_THRESHOLD = 0.1
METHODS = SPARSE_METHODS + ("dmdc",)


def check_method(method: str) -> str:
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    return method


def build_problem(method: str, theta, X, dt: float, support: Optional[int] = None,
                  degree: int = DEFAULT_DEGREE, names=None) -> RegressionProblem:
    """Regression pair for ``theta @ W ~ dX/dt``.

    Strong-form methods regress finite-difference derivatives on the rows where the centred
    stencil applies; weak-form methods regress the test-function projections.
    """
    check_method(method)
    X = np.asarray(X, dtype=float)
    if method in ("sindyc", "e-sindyc"):
        Xdot, interior = fd_derivative(X, dt)
        return RegressionProblem(np.asarray(theta)[interior], Xdot[interior], names)
    if method in ("wsindyc", "e-wsindyc"):
        m = default_support(X.shape[0], dt) if support is None else support
        G, B = assemble_all(theta, X, make_test_function(m, degree, dt))
        return RegressionProblem(G, B, names)
    raise ConfigError(f"{method!r} is not a sparse-regression method")


def fit_sparse(method: str, lib: FunctionLibrary, X, U, dt: float, *,
               support: Optional[int] = None, degree: int = DEFAULT_DEGREE,
               ensemble: EnsembleConfig = EnsembleConfig(), rng=None,
               strong_threshold: Optional[float] = STRONG_THRESHOLD) -> SparseFit:
    """Identify ``dX/dt = Theta(X, U) W`` with one of the sparse methods.

    Weak-form methods select the threshold on the MSTLS grid. Strong-form methods use
    classic thresholding ``|w_j| >= strong_threshold``; pass ``strong_threshold=None`` to
    run the MSTLS grid selection on the strong form too.
    """
    theta = lib.evaluate(X, U)
    problem = build_problem(method, theta, X, dt, support, degree, lib.names)
    kw = {}
    if method in ("sindyc", "e-sindyc") and strong_threshold is not None:
        kw = {"lambdas": [float(strong_threshold)], "rule": "plain"}
    if method.startswith("e-"):
        return ensemble_fit(problem, ensemble, rng, **kw)
    return mstls(problem, **kw)
