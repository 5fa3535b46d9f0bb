"""Candidate-function libraries Theta(x, u).

A library is an ordered list of terms over a *feature vector* ``z`` derived from the
state ``x`` and input ``u``. For ordinary polynomial libraries ``z = (x, u)``; the
quadrotor libraries use physically motivated features (thrust direction times thrust,
body rates, moments). Monomial terms are stored as integer exponent rows over ``z``
so they can be evaluated by the compiled rollout kernels.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, NonFiniteOutput
from .rotations import thrust_direction

FEATURES = ("identity", "quad_translational", "quad_rotational")


@dataclass(frozen=True)
class TermTag:
    kind: str  # constant, monomial, input-monomial, cross, custom
    exponents: Tuple[int, ...] = ()

    def __post_init__(self):
        if any(e < 0 for e in self.exponents):
            raise ValueError("exponents must be non-negative")


@dataclass(frozen=True)
class Term:
    name: str
    tag: TermTag
    func: Optional[Callable] = None  # custom terms only: func(X, U) -> (N,)


def _monomial_name(exps, names) -> str:
    parts = []
    for e, n in zip(exps, names):
        if e == 1:
            parts.append(n)
        elif e > 1:
            parts.append(f"{n}^{e}")
    return "*".join(parts) if parts else "1"


def _graded_exponents(nvars: int, degree: int, min_degree: int = 0):
    """Exponent tuples by total degree, then descending lexicographic order."""
    out = []
    for d in range(min_degree, degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


class FunctionLibrary:
    """Ordered candidate terms over ``state_dim`` states and ``input_dim`` inputs."""

    def __init__(self, terms: Sequence[Term], state_dim: int, input_dim: int,
                 feature: str = "identity", feature_names: Optional[Sequence[str]] = None):
        if feature not in FEATURES:
            raise ValueError(f"unknown feature map {feature!r}")
        terms = tuple(terms)
        if not terms:
            raise ValueError("a library needs at least one term")
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate term names: {dup}")
        self.terms = terms
        self.state_dim = int(state_dim)
        self.input_dim = int(input_dim)
        self.feature = feature
        if feature_names is None:
            feature_names = ([f"x{i + 1}" for i in range(state_dim)]
                             + [f"u{i + 1}" for i in range(input_dim)])
        self.feature_names = tuple(feature_names)
        nz = len(self.feature_names)
        for t in terms:
            if t.func is None and len(t.tag.exponents) != nz:
                raise ValueError(f"term {t.name!r} has {len(t.tag.exponents)} exponents, "
                                 f"feature vector has {nz}")

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"FunctionLibrary(J={len(self)}, feature={self.feature!r}, names={list(self.names)})"

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(t.name for t in self.terms)

    @property
    def is_polynomial(self) -> bool:
        return all(t.func is None for t in self.terms)

    def exponent_matrix(self) -> Optional[np.ndarray]:
        """``(J, nz)`` int32 exponents, or None when the library has custom terms."""
        if not self.is_polynomial:
            return None
        return np.array([t.tag.exponents for t in self.terms], dtype=np.int32)

    def with_custom(self, name: str, func: Callable) -> "FunctionLibrary":
        """Append a custom term ``func(X, U) -> (N,)``."""
        term = Term(name, TermTag("custom"), func)
        return FunctionLibrary(self.terms + (term,), self.state_dim, self.input_dim,
                               self.feature, self.feature_names)

    def subset(self, idx) -> "FunctionLibrary":
        return FunctionLibrary([self.terms[i] for i in idx], self.state_dim, self.input_dim,
                               self.feature, self.feature_names)

    def features(self, X, U) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.asarray(U, dtype=float)
        if U.ndim == 1:
            U = U.reshape(X.shape[0], -1) if U.size else np.zeros((X.shape[0], 0))
        if X.shape[1] != self.state_dim or U.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"library expects {self.state_dim} states / {self.input_dim} inputs, "
                f"got {X.shape[1]} / {U.shape[1]}")
        if self.feature == "identity":
            return np.hstack([X, U])
        if self.feature == "quad_translational":
            # X = velocity (3), U = (quaternion (4), thrust)
            return np.hstack([thrust_direction(U[:, :4]) * U[:, 4:5], X])
        # quad_rotational: X = body rates (3), U = moments (3)
        return np.hstack([U, X])

    def evaluate(self, X, U) -> np.ndarray:
        """``Theta[k, j] = f_j(x_k, u_k)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = self.features(X, U)
        U = np.asarray(U, dtype=float).reshape(X.shape[0], -1)
        out = np.empty((Z.shape[0], len(self.terms)))
        for j, t in enumerate(self.terms):
            if t.func is not None:
                out[:, j] = t.func(X, U)
            else:
                col = np.ones(Z.shape[0])
                for v, e in enumerate(t.tag.exponents):
                    if e:
                        col = col * Z[:, v] ** e
                out[:, j] = col
        if not np.all(np.isfinite(out)):
            bad = sorted({self.terms[j].name for j in np.flatnonzero(~np.isfinite(out).all(axis=0))})
            raise NonFiniteOutput(f"non-finite library values in terms {bad}")
        return out

    def to_dict(self) -> dict:
        if not self.is_polynomial:
            raise ValueError("libraries with custom terms cannot be serialized")
        return {"feature": self.feature, "state_dim": self.state_dim,
                "input_dim": self.input_dim, "feature_names": list(self.feature_names),
                "terms": [{"name": t.name, "kind": t.tag.kind, "exponents": list(t.tag.exponents)}
                          for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionLibrary":
        terms = [Term(t["name"], TermTag(t["kind"], tuple(t["exponents"]))) for t in d["terms"]]
        return cls(terms, d["state_dim"], d["input_dim"], d["feature"], d["feature_names"])


def evaluate(lib: FunctionLibrary, ts) -> np.ndarray:
    """Evaluate ``lib`` on every sample of a :class:`~wsmpc.data.TimeSeries`."""
    return lib.evaluate(ts.states, ts.inputs)


def _kind(exps, state_dim) -> str:
    if sum(exps) == 0:
        return "constant"
    on_state = any(exps[:state_dim])
    on_input = any(exps[state_dim:])
    if on_state and on_input:
        return "cross"
    return "input-monomial" if on_input else "monomial"


def build_poly_library(D: int, V: int, degree: int,
                       names: Optional[Sequence[str]] = None) -> FunctionLibrary:
    """All monomials in ``(x1..xD, u1..uV)`` of total degree <= ``degree``, constant included.

    ``J = C(D + V + degree, degree)``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if names is None:
        names = [f"x{i + 1}" for i in range(D)] + [f"u{i + 1}" for i in range(V)]
    terms = [Term(_monomial_name(e, names), TermTag(_kind(e, D), e))
             for e in _graded_exponents(D + V, degree)]
    return FunctionLibrary(terms, D, V, "identity", names)


def _single(i, n):
    e = [0] * n
    e[i] = 1
    return tuple(e)


def build_drone_translational_library() -> FunctionLibrary:
    """``[R13*F, R23*F, R33*F, 1, vx, vy, vz, vx^2, vx*vy, ..., vz^2]``, J = 13.

    State slot: velocity ``(vx, vy, vz)``. Input slot: quaternion ``(b0..b3)`` and thrust ``F``.
    """
    fnames = ["R13*F", "R23*F", "R33*F", "vx", "vy", "vz"]
    terms = [Term(fnames[i], TermTag("cross", _single(i, 6))) for i in range(3)]
    for e in _graded_exponents(3, 2):
        full = (0, 0, 0) + e
        terms.append(Term(_monomial_name(full, fnames), TermTag(_kind(full, 6), full)))
    return FunctionLibrary(terms, 3, 5, "quad_translational", fnames)


def build_drone_rotational_library() -> FunctionLibrary:
    """``[Mx, My, Mz, p*q, p*r, q*r, 1, p, q, r, p^2, q^2, r^2]``, J = 13.

    State slot: body rates ``(p, q, r)``. Input slot: moments ``(Mx, My, Mz)``.
    Degree-2 rate monomials already listed as products are not repeated.
    """
    fnames = ["Mx", "My", "Mz", "p", "q", "r"]
    terms = [Term(fnames[i], TermTag("input-monomial", _single(i, 6))) for i in range(3)]
    lead = [(0, 0, 0, 1, 1, 0), (0, 0, 0, 1, 0, 1), (0, 0, 0, 0, 1, 1)]
    for e in lead:
        terms.append(Term(_monomial_name(e, fnames), TermTag("monomial", e)))
    seen = set(lead)
    for e in _graded_exponents(3, 2):
        full = (0, 0, 0) + e
        if full in seen:
            continue
        kind = "constant" if sum(e) == 0 else "monomial"
        terms.append(Term(_monomial_name(full, fnames), TermTag(kind, full)))
    return FunctionLibrary(terms, 3, 3, "quad_rotational", fnames)


def format_model(lib: FunctionLibrary, W, state_names: Optional[Sequence[str]] = None) -> str:
    """Symbolic printout, one ``dx_i/dt = c1*name1 + ...`` line per column of ``W``."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if state_names is None:
        state_names = [f"x{i + 1}" for i in range(W.shape[1])]
    lines = []
    for d, sname in enumerate(state_names):
        parts = [f"{W[j, d]:.6g}*{lib.terms[j].name}" for j in np.flatnonzero(W[:, d])]
        rhs = " + ".join(parts) if parts else "0"
        lines.append(f"d{sname}/dt = {rhs}")
    return "\n".join(lines)
