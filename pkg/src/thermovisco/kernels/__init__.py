"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; setting the environment
variable ``THERMOVISCO_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

from . import _fallback

_core = None
if os.environ.get("THERMOVISCO_BACKEND", "").lower() != "python":
    try:
        _core = importlib.import_module(f"{__name__}._core")
    except ImportError:  # extension not built
        _core = None

BACKEND = "compiled" if _core is not None else "python"


def cell_mech(F, F0, beta, acoef, inv_tau, mu, gamma, q, alpha, backend: str | None = None):
    impl = _select(backend)
    if impl is _fallback:
        return _fallback.cell_mech(F, F0, beta, acoef, inv_tau, mu, gamma, q, alpha)
    return impl.cell_mech(np.ascontiguousarray(F, dtype=float), np.ascontiguousarray(F0, dtype=float),
                          np.ascontiguousarray(beta, dtype=float), np.ascontiguousarray(acoef, dtype=float),
                          float(inv_tau), float(mu), float(gamma), float(q), float(alpha))


def node_strain_gradient(L, p, crossover, backend: str | None = None):
    impl = _select(backend)
    if impl is _fallback:
        return _fallback.node_strain_gradient(L, p, crossover)
    return impl.node_strain_gradient(np.ascontiguousarray(L, dtype=float), float(p), float(crossover))


def _select(backend):
    if backend is None:
        return _core if _core is not None else _fallback
    if backend == "python":
        return _fallback
    if backend == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernels are not available")
        return _core
    raise ValueError(f"unknown backend {backend!r}")


def compiled_available() -> bool:
    return _core is not None
