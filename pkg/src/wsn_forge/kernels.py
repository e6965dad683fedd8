"""Backend selection for the engine core.

The compiled extension is used when it imports; otherwise the pure-Python
reference runs. ``WSN_FORGE_BACKEND=python`` forces the fallback and
``WSN_FORGE_BACKEND=compiled`` makes a missing extension an error.
"""
import os

from . import _core_py as python_core

try:
    from . import _core as compiled_core
except ImportError:
    compiled_core = None


def select(name=None):
    """Return the core module for ``name`` ('python', 'compiled' or None for auto)."""
    name = name or os.environ.get("WSN_FORGE_BACKEND", "auto")
    if name == "python":
        return python_core
    if name == "compiled":
        if compiled_core is None:
            raise ImportError("compiled core requested but wsn_forge._core is not built")
        return compiled_core
    if name != "auto":
        raise ValueError(f"unknown backend {name!r}")
    return compiled_core if compiled_core is not None else python_core


core = select()
BACKEND = core.BACKEND
