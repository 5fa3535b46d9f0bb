"""Rollout kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``WSMPC_PURE_PYTHON=1`` to force the
fallback. Both expose ``rollout_zoh`` and ``integrate_stages`` with identical signatures.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("WSMPC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_EMPTY_E = np.zeros((1, 1), dtype=np.int32)
_EMPTY_W = np.zeros((1, 1))


def available_backends() -> list:
    return (["cython"] if _compiled is not None else []) + ["python"]


def get_backend(name: str | None = None):
    """Module implementing the kernels; ``None`` selects the active backend."""
    name = BACKEND if name is None else name
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    if name == "python":
        return _fallback
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class KernelModel:
    """Coefficient payload understood by the kernels.

    kind 0: polynomial ``dx = Theta(x, u) @ Wa``; kind 1: quadrotor with translational
    coefficients ``Wa`` and rotational coefficients ``Wb`` over the quadrotor feature maps.
    """

    kind: int
    ea: np.ndarray
    Wa: np.ndarray
    eb: np.ndarray = _EMPTY_E
    Wb: np.ndarray = _EMPTY_W
    renorm: bool = False

    def __post_init__(self):
        for name, dtype in (("ea", np.int32), ("Wa", float), ("eb", np.int32), ("Wb", float)):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=dtype))

    @property
    def state_dim(self) -> int:
        return self.Wa.shape[1] if self.kind == 0 else 13

    @property
    def input_dim(self) -> int:
        return self.ea.shape[1] - self.Wa.shape[1] if self.kind == 0 else 4

    def _args(self):
        return (self.kind, self.ea, self.Wa, self.eb, self.Wb, self.renorm)


def rollout_zoh(model: KernelModel, x0, U, h: float, nsub: int, backend: str | None = None):
    """States after each held input for a batch of input sequences ``U`` (B, K, V)."""
    impl = get_backend(backend)
    x0 = np.ascontiguousarray(x0, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    return impl.rollout_zoh(*model._args(), x0, U, float(h), int(nsub))


def integrate_stages(model: KernelModel, x0, ustage, h: float, stride: int,
                     backend: str | None = None):
    """RK4 with stage-time inputs ``ustage`` (S, 3, V); records every ``stride`` steps."""
    impl = get_backend(backend)
    x0 = np.ascontiguousarray(x0, dtype=float)
    ustage = np.ascontiguousarray(ustage, dtype=float)
    return impl.integrate_stages(*model._args(), x0, ustage, float(h), int(stride))
