"""Select the kernel backend at import time.

The compiled extension is preferred when present; the numpy twins are the
fallback. ``CLOUDVOL_KERNELS=numpy|cython`` forces a choice (forcing
``cython`` raises if the extension was not built). The active backend is
reported by :func:`kernel_backend` and in ``cloudvol.cli --version``.
"""

import os

from . import _kernels_np

_FORCE = os.environ.get("CLOUDVOL_KERNELS", "auto").lower()

if _FORCE == "numpy":
    _impl = _kernels_np
elif _FORCE == "cython":
    from . import _kernels as _impl  # type: ignore[attr-defined]
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_np

im2col = _impl.im2col
col2im = _impl.col2im
adam_step_inplace = _impl.adam_step_inplace
scatter_add_rows = _impl.scatter_add_rows


def kernel_backend() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return _impl.BACKEND_NAME
