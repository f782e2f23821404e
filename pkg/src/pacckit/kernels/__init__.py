"""Numeric kernels with two interchangeable backends.

The numba backend JIT-compiles the hot per-batch operations; the numpy
backend is plain vectorized numpy. Backend selection happens once at import:

* ``PACCKIT_NUMBA=0`` forces the numpy backend.
* ``PACCKIT_NUMBA=1`` requires numba and fails loudly if it is missing.
* unset/``auto``: numba when importable, numpy otherwise.

``python -m pacckit.kernels.bench`` times both backends side by side.
Results are deterministic within a backend; across backends elementwise ops
may differ in the last ulp, so cross-backend comparisons are tolerance-based.
"""

import os

from . import numpy_impl

_FLAG = os.environ.get("PACCKIT_NUMBA", "auto").strip().lower()

if _FLAG in ("0", "off", "false", "no"):
    _impl = numpy_impl
else:
    try:
        from . import numba_impl as _impl
    except ImportError:
        if _FLAG in ("1", "on", "true", "yes"):
            raise
        _impl = numpy_impl

BACKEND = _impl.NAME

dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
relu = _impl.relu
relu_backward = _impl.relu_backward
sigmoid = _impl.sigmoid
sigmoid_backward = _impl.sigmoid_backward
bce_mean = _impl.bce_mean
bce_grad_mean = _impl.bce_grad_mean
adam_step = _impl.adam_step


def available_backends():
    names = ["numpy"]
    try:
        from . import numba_impl  # noqa: F401

        names.append("numba")
    except ImportError:
        pass
    return names


def get_impl(name):
    """Fetch a backend module by name, bypassing the env-flag dispatch."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")
