"""Numba dispatch.

Hot kernels are written twice: a loop-level version compiled with
``numba.njit`` and a vectorised numpy version.  The active backend is chosen
once at import from ``VBPR_DISABLE_NUMBA`` (any of ``1/true/yes``) and can be
switched at runtime with :func:`use_backend` for tests and benchmarks.
"""
from __future__ import annotations

import contextlib
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("VBPR_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if HAS_NUMBA and not _env_disabled() else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
