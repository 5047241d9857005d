"""Kernel backend selection.

The compiled Cython extension is preferred when it built; otherwise the
pure-numpy fallback is used. Set ``REGTRACK_BACKEND=python`` to force the
fallback (useful for benchmarking) or ``REGTRACK_BACKEND=compiled`` to make
a missing extension a hard error.
"""

import os

_requested = os.environ.get("REGTRACK_BACKEND", "auto").strip().lower()

if _requested in ("auto", "", "compiled", "c"):
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested in ("compiled", "c"):
            raise
        from . import fallback as _impl
        BACKEND = "python"
elif _requested in ("python", "pure", "fallback"):
    from . import fallback as _impl
    BACKEND = "python"
else:
    raise ValueError(f"unknown REGTRACK_BACKEND value: {_requested!r}")

bilinear_sample = _impl.bilinear_sample
bilinear_sample_grad = _impl.bilinear_sample_grad
