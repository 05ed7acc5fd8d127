"""Backend selection: compiled Cython core when present, numpy fallback otherwise.

Set H2CROSS_BACKEND=pure to force the fallback, H2CROSS_BACKEND=compiled to
require the extension (ImportError if missing). The active module is the
mutable attribute `backend`; call sites look it up through this package so
tests can swap it.
"""

import os

from . import _fallback

_requested = os.environ.get("H2CROSS_BACKEND", "").strip().lower()

compiled = None
if _requested != "pure":
    try:
        from . import _core as compiled
    except ImportError:
        if _requested == "compiled":
            raise
        compiled = None

backend = compiled if compiled is not None else _fallback


def available_backends():
    names = {"pure": _fallback}
    if compiled is not None:
        names["compiled"] = compiled
    return names


def get_backend(name):
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(available_backends())}") from None


def has_fused_aca(mod=None):
    return hasattr(backend if mod is None else mod, "aca_kernel")
