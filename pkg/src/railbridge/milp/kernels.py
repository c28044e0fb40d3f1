"""Kernel selection: compiled extension when available, numpy otherwise.

Set RAILBRIDGE_PURE_PY=1 to force the numpy fallback (used by the kernel
parity tests and the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("RAILBRIDGE_PURE_PY"):
    from . import _kernels_py as impl
else:
    try:
        from . import _kernels as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as impl

choose_entering = impl.choose_entering
ratio_test = impl.ratio_test
update_binv = impl.update_binv
COMPILED = impl.COMPILED
