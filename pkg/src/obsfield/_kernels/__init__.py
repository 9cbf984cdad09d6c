"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built and importable; setting
``OBSFIELD_PURE_PYTHON=1`` forces the fallback.  ``BACKEND`` names the
active implementation.
"""
import os

from . import _pykernels as python_backend
from ._pykernels import KIND_KL, KIND_RENYI, KIND_TSALLIS

compiled_backend = None
if os.environ.get("OBSFIELD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

leapfrog_kg = _active.leapfrog_kg
shifted_divergences_1d = _active.shifted_divergences_1d


def available_backends():
    """Mapping of backend name to module, for cross-checking and benchmarks."""
    out = {"python": python_backend}
    if compiled_backend is not None:
        out["cython"] = compiled_backend
    return out


__all__ = [
    "BACKEND",
    "KIND_KL",
    "KIND_RENYI",
    "KIND_TSALLIS",
    "available_backends",
    "leapfrog_kg",
    "shifted_divergences_1d",
]
