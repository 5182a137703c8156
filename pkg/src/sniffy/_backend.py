"""Kernel backend selection.

The compiled extension ``sniffy._core`` is used when it imports; otherwise the
pure-Python kernels are used.  ``SNIFFY_BACKEND=python`` forces the fallback,
``SNIFFY_BACKEND=native`` makes a missing extension an error.
"""

from __future__ import annotations

import os
from types import ModuleType

from sniffy import _pykernels

try:
    from sniffy import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None


def native_available() -> bool:
    return _core is not None


def kernels(name: str | None = None) -> ModuleType:
    choice = (name or os.environ.get("SNIFFY_BACKEND", "auto")).lower()
    if choice == "python":
        return _pykernels
    if choice == "native":
        if _core is None:
            raise ImportError("compiled core sniffy._core is not built")
        return _core
    if choice != "auto":
        raise ValueError(f"unknown backend {choice!r}")
    return _core if _core is not None else _pykernels


def name(mod: ModuleType | None = None) -> str:
    return "native" if (mod or kernels()) is _core and _core is not None else "python"
