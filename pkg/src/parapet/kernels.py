"""Backend selection for the rollout kernel.

The compiled extension is used when it was built; otherwise, or when
``PARAPET_PURE_PYTHON=1`` is set, the pure-Python twin takes over. Both
produce bit-identical rollouts.
"""

import os

from . import _pykernels
from ._pykernels import CROSSED, EXHAUSTED, N_PARAMS, RUNNING, STOPPED  # noqa: F401

python_advance = _pykernels.advance

try:
    from ._kernels import advance as compiled_advance
except ImportError:  # extension not built
    compiled_advance = None

if compiled_advance is not None and os.environ.get("PARAPET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    advance = compiled_advance
    BACKEND = "cython"
else:
    advance = python_advance
    BACKEND = "python"
