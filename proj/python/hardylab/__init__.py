"""Numerical laboratory for local Hardy spaces on periodic grids.

The compiled extension carries the implementation; this package re-exports it.
When running against a plain CMake build (no installed wheel), point
HARDYLAB_EXT_DIR at the directory holding the compiled ``_core`` module.
"""

import os
import sys

_ext_dir = os.environ.get("HARDYLAB_EXT_DIR")
if _ext_dir and _ext_dir not in sys.path:
    sys.path.insert(0, _ext_dir)

try:
    from _core import *  # noqa: F401,F403  (CMake build tree layout)
    from _core import __doc__ as _core_doc
except ImportError:
    from hardylab._core import *  # noqa: F401,F403  (installed wheel layout)
    from hardylab._core import __doc__ as _core_doc

__doc__ = _core_doc or __doc__
