"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``TRAJBASKET_PURE=1``
to force the pure-Python fallback.
"""
from __future__ import annotations

import importlib
import os

from . import _fallback

__all__ = ["BACKEND", "backend", "simulate_patients", "count_responders", "logit_normal_mcmc"]


def backend(name: str):
    """Module implementing the kernels: ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "compiled":
        return importlib.import_module("._kernels", __package__)
    raise ValueError(f"unknown backend {name!r}")


if os.environ.get("TRAJBASKET_PURE", "") not in ("", "0"):
    _impl, BACKEND = _fallback, "python"
else:
    try:
        _impl, BACKEND = backend("compiled"), "compiled"
    except ImportError:
        _impl, BACKEND = _fallback, "python"

simulate_patients = _impl.simulate_patients
count_responders = _impl.count_responders
logit_normal_mcmc = _impl.logit_normal_mcmc
