"""Backend selection for the blockwise metric scans.

Prefers the compiled extension; falls back to the numpy implementation when
the extension was not built. `BACKEND` names the one in use, and
`available_backends()` exposes both for the parity tests and the benchmark.
"""

from __future__ import annotations

import numpy as np

from . import _blockops_np

try:
    from . import _blockops as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_active = _compiled if _compiled is not None else _blockops_np


def block_log_ratio_sum(values: np.ndarray, block: int) -> tuple[float, int]:
    return _active.block_log_ratio_sum(np.ascontiguousarray(values, dtype=np.float64), block)


def block_plip_contrast_sum(values: np.ndarray, block: int, gamma: float) -> tuple[float, int]:
    return _active.block_plip_contrast_sum(
        np.ascontiguousarray(values, dtype=np.float64), block, gamma
    )


def available_backends() -> dict:
    """Importable backends keyed by name ('numpy' always, 'cython' if built)."""
    backends = {"numpy": _blockops_np}
    if _compiled is not None:
        backends["cython"] = _compiled
    return backends
