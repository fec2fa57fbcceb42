"""Select the customer-phase kernel: compiled if importable, else pure Python.

Set ``PROMOSIM_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernel

_compiled = None
if os.environ.get("PROMOSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
MAX_LENDERS = 32


def get_kernel(backend: str | None = None):
    """Return a ``customer_phase`` callable for ``backend`` (default: best available)."""
    backend = backend or BACKEND
    if backend == "python":
        return _pykernel.customer_phase
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available; build the extension first")
        return _compiled.customer_phase
    raise ValueError(f"unknown kernel backend {backend!r}")


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def pack_params(params, representative_balance, horizon, comfort, benchmark_apr, weight_mode, max_cards):
    vals = [getattr(params, n) for n in params.names()]
    vals += [representative_balance, horizon, comfort, benchmark_apr, weight_mode, max_cards]
    return np.asarray(vals, dtype=np.float64)
