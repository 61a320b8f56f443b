"""Training-sweep kernels with backend selection at import time.

The compiled extension ``magicquad._sweep`` is preferred when present; a
NumPy implementation with identical semantics is the fallback.  Setting the
environment variable ``MAGICQUAD_FORCE_PYTHON=1`` before import forces the
fallback (used by the benchmark to compare both backends).
"""

from __future__ import annotations

import os

import numpy as np


def _np_rank1_update_rowmax(resid: np.ndarray, coef: np.ndarray, basis_row: np.ndarray) -> np.ndarray:
    """In place ``resid -= outer(coef, basis_row)``; return per-row sup norms."""
    if coef.shape[0] != resid.shape[0] or basis_row.shape[0] != resid.shape[1]:
        raise ValueError("shape mismatch in rank-1 update")
    resid -= coef[:, None] * basis_row[None, :]
    return np.abs(resid).max(axis=1)


def _np_abs_rowmax(mat: np.ndarray) -> np.ndarray:
    """Per-row sup norm of a matrix."""
    return np.abs(mat).max(axis=1)


if os.environ.get("MAGICQUAD_FORCE_PYTHON") == "1":
    _impl = None
else:
    try:
        from . import _sweep as _impl
    except ImportError:
        _impl = None

if _impl is not None:
    BACKEND = "cython"
    rank1_update_rowmax = _impl.rank1_update_rowmax
    abs_rowmax = _impl.abs_rowmax
else:
    BACKEND = "numpy"
    rank1_update_rowmax = _np_rank1_update_rowmax
    abs_rowmax = _np_abs_rowmax


def backend_name() -> str:
    """Name of the active sweep backend: ``"cython"`` or ``"numpy"``."""
    return BACKEND
