"""Backend selection for the hot kernels.

Prefers the compiled Cython module; falls back to the pure numpy versions when
the extension is unavailable or ``AIGFLOW_PURE_PY`` is set. Both backends are
contractually bit-identical (see tests/test_kernels.py).
"""

from __future__ import annotations

import os

if os.environ.get("AIGFLOW_PURE_PY", "") not in ("", "0"):
    from . import _kern_py as _impl
else:
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kern_py as _impl

BACKEND = _impl.BACKEND_NAME

cone_members = _impl.cone_members
reach_pairs = _impl.reach_pairs
sim_words = _impl.sim_words
