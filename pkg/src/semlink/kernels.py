"""Kernel backend selection.

Uses the compiled ``_kernels`` extension when it was built, otherwise the
numpy implementation in ``_pykernels``.  Setting ``SEMLINK_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("SEMLINK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

q_func = _impl.q_func
rho_hat_vec = _impl.rho_hat_vec
surrogate_vec = _impl.surrogate_vec
weighted_surrogate = _impl.weighted_surrogate
weighted_rho_hat = _impl.weighted_rho_hat
dual_allocate = _impl.dual_allocate
