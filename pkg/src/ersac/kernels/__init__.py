"""Numeric kernel backend selection.

The compiled extension (`ersac.kernels._core`, Cython) is preferred when it
imported cleanly; otherwise the pure-numpy reference implementation is used.
Set ERSAC_KERNELS=python or ERSAC_KERNELS=cython to force a backend (the
latter raises if the extension is unavailable).
"""
from __future__ import annotations

import os

from . import _numpy_ref

_forced = os.environ.get("ERSAC_KERNELS", "").strip().lower()

_impl = None
if _forced in ("", "cython"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None
        if _forced == "cython":
            raise ImportError(
                "ERSAC_KERNELS=cython but the compiled extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )
if _impl is None:
    _impl = _numpy_ref

act_policy = _impl.act_policy
forward_batch = _impl.forward_batch
backward_batch = _impl.backward_batch


def backend_name() -> str:
    return _impl.BACKEND


def available_backends():
    names = ["python"]
    try:
        from . import _core  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the raw kernel module for `name` ('python' or 'cython')."""
    if name == "python":
        return _numpy_ref
    if name == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
