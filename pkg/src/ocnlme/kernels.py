"""Backend selection for the Riccati kernels.

The compiled extension is used when it imports; otherwise (or when
``OCNLME_PURE=1`` is set) the NumPy fallback is used. ``BACKEND`` names the
active one.
"""

import os

from . import _lqcore_py

if os.environ.get("OCNLME_PURE") == "1":
    _impl = _lqcore_py
else:
    try:
        from . import _lqcore as _impl
    except ImportError:
        _impl = _lqcore_py

BACKEND = "python" if _impl is _lqcore_py else "compiled"
riccati_backward = _impl.riccati_backward
forward_pass = _impl.forward_pass
exp_transition = _impl.exp_transition

__all__ = ["BACKEND", "riccati_backward", "forward_pass", "exp_transition"]
