"""Selects the kernel implementation at import time.

Prefers the compiled ridkit._ckernels extension and falls back to the numpy
twins in ridkit._pykernels when the extension is unavailable. Set
RIDKIT_BACKEND=python to force the fallback (useful for benchmarking and
for debugging suspected kernel issues).
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

if os.environ.get("RIDKIT_BACKEND", "").lower() in ("python", "py", "numpy"):
    _impl = _pykernels
else:
    _impl = _ckernels if _ckernels is not None else _pykernels

_KERNELS = ("adam_update", "softclamp", "coupling_fwd", "coupling_inv", "row_sumsq_diff")


def _bind(impl) -> None:
    global adam_update, softclamp, coupling_fwd, coupling_inv, row_sumsq_diff
    global BACKEND_NAME
    for k in _KERNELS:
        globals()[k] = getattr(impl, k)
    BACKEND_NAME = impl.BACKEND_NAME


def available_backends() -> tuple[str, ...]:
    return ("python",) if _ckernels is None else ("compiled", "python")


def use(name: str) -> None:
    """Re-points the kernel functions; intended for tests and benchmarks."""
    if name == "python":
        _bind(_pykernels)
    elif name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built in this environment")
        _bind(_ckernels)
    else:
        raise ValueError(f"unknown backend '{name}'")


_bind(_impl)
