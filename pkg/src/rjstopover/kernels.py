"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded.  Set ``RJSTOPOVER_BACKEND=python`` to force the
fallback (the benchmark and the backend-agreement tests do this through
:func:`load`).
"""

import importlib
import os

_MODULES = {"cython": "rjstopover._ckernels", "python": "rjstopover._pykernels"}


def load(name):
    """Return the kernel module for backend ``name`` ('cython' or 'python')."""
    return importlib.import_module(_MODULES[name])


def _select():
    forced = os.environ.get("RJSTOPOVER_BACKEND", "").strip().lower()
    if forced == "python":
        return "python", load("python")
    try:
        return "cython", load("cython")
    except ImportError:
        if forced == "cython":
            raise
        return "python", load("python")


BACKEND, _impl = _select()
open_core = _impl.open_core
closed_core = _impl.closed_core


def available():
    """Names of the backends importable in this environment."""
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names
