"""Hot-loop kernels: compiled extension when built, numpy fallback otherwise.

Set ``ERGOREG_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
damped_path_sums = _kernels_py.damped_path_sums

if os.environ.get("ERGOREG_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        damped_path_sums = _compiled.damped_path_sums


def backends():
    """Available implementations of ``damped_path_sums`` keyed by name."""
    out = {"python": _kernels_py.damped_path_sums}
    try:
        from . import _kernels as compiled
    except ImportError:
        return out
    out["cython"] = compiled.damped_path_sums
    return out
