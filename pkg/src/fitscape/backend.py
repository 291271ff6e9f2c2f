"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the
pure-Python kernel takes over with identical semantics (and identical
trajectories, draw for draw).  Set ``FITSCAPE_BACKEND=python`` to force
the fallback, e.g. for benchmarking.
"""

from __future__ import annotations

import os

from . import _pykernel

_forced = os.environ.get("FITSCAPE_BACKEND", "").strip().lower()

if _forced in ("", "compiled"):
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _pykernel
        BACKEND = "python"
elif _forced == "python":
    _impl = _pykernel
    BACKEND = "python"
else:
    raise RuntimeError(f"unknown FITSCAPE_BACKEND value: {_forced!r}")

PopKernel = _impl.PopKernel
run_coupled = _impl.run_coupled


def get_impl(name: str):
    """Explicit backend module by name ('compiled' or 'python')."""
    if name == "python":
        return _pykernel
    if name == "compiled":
        from . import _speedups
        return _speedups
    raise ValueError(f"unknown backend: {name!r}")


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _speedups  # noqa: F401
        out.insert(0, "compiled")
    except ImportError:
        pass
    return out
