"""Evaluation-kernel backends.

The compiled extension is preferred when it imported cleanly; the NumPy
reference implementation is the fallback.  Both expose the same
forward/backward contract and agree to floating-point roundoff.  Set
NEUTDIFF_KERNEL=reference|fused to force a backend.
"""

import importlib
import os

from . import reference

try:
    _fused = importlib.import_module(__name__ + "._fused")
except ImportError:
    _fused = None


def available_backends():
    out = {"reference": reference}
    if _fused is not None:
        out["fused"] = _fused
    return out


def get_backend(name: str | None = None):
    choice = name or os.environ.get("NEUTDIFF_KERNEL")
    backends = available_backends()
    if choice:
        if choice not in backends:
            raise ValueError(f"kernel backend {choice!r} not available "
                             f"(have {sorted(backends)})")
        return backends[choice]
    return backends.get("fused", reference)


def param_count(arch) -> int:
    return reference.param_count(arch)
