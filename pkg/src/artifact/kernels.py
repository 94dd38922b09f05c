"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set ``ARTIFACT_KERNELS=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("ARTIFACT_KERNELS", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels
        BACKEND = "python"

reduce_basis = _impl.reduce_basis
candidates = _impl.candidates
siegel_eval = _impl.siegel_eval
orbit_integral = _impl.orbit_integral
