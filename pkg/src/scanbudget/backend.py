"""Kernel backend selection.

The hot kernels (BPFA Gibbs phases, Sibson queries) exist twice: compiled
Cython in scanbudget._native and pure numpy in scanbudget._fallback. The
compiled module is preferred when importable. Set SCANBUDGET_BACKEND=pure
or =native to force one (forcing an unavailable native build raises).
"""

import os

_requested = os.environ.get("SCANBUDGET_BACKEND", "").strip().lower()

if _requested == "pure":
    from . import _fallback as kernels
elif _requested == "native":
    from . import _native as kernels  # ImportError here means no compiled core
else:
    try:
        from . import _native as kernels
    except ImportError:
        from . import _fallback as kernels

BACKEND = kernels.BACKEND_NAME


def available_backends():
    names = ["pure"]
    try:
        from . import _native  # noqa: F401
        names.insert(0, "native")
    except ImportError:
        pass
    return names
