"""Convolution kernel backend, selected once at import.

The compiled Cython extension is preferred; the numpy implementation in
``pure`` is the fallback.  Set SAFLOSIM_KERNELS=pure (or py/numpy) to force
the fallback, SAFLOSIM_KERNELS=cython to require the extension.  Both
backends produce results equal to ~1e-12 (they differ only in summation
order), and each is bitwise deterministic with itself.
"""

from __future__ import annotations

import os

import numpy as np

from . import pure

_choice = os.environ.get("SAFLOSIM_KERNELS", "").lower()

_impl = None
BACKEND = "pure"
if _choice not in ("py", "pure", "numpy"):
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = None
if _impl is None:
    _impl = pure


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_forward(x_padded, w):
    return _impl.conv1d_forward(_c(x_padded), _c(w))


def conv1d_backward_input(dy, w, padded_len):
    return _impl.conv1d_backward_input(_c(dy), _c(w), padded_len)


def conv1d_backward_weights(x_padded, dy):
    return _impl.conv1d_backward_weights(_c(x_padded), _c(dy))


def backends() -> dict[str, object]:
    """All importable backends, for parity tests and the benchmark."""

    out = {"pure": pure}
    try:
        from . import _fast  # type: ignore[attr-defined]

        out["cython"] = _fast
    except ImportError:
        pass
    return out
