"""Backend selection for the hot kernels.

The compiled core (`fracbnn.backend._native`, built from Cython) is used
when importable; otherwise the pure-numpy fallback takes over.  Set
FRACBNN_BACKEND=native|fallback to force a choice (forcing `native` when
the extension is missing raises at import).
"""

import os
from contextlib import contextmanager

from . import _fallback

_requested = os.environ.get("FRACBNN_BACKEND", "auto").lower()

if _requested not in ("auto", "native", "fallback"):
    raise ValueError(f"FRACBNN_BACKEND must be auto|native|fallback, got {_requested!r}")

if _requested == "fallback":
    impl = _fallback
else:
    try:
        from . import _native as impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "native":
            raise
        impl = _fallback

conv_base = impl.conv_base
frac_update = impl.frac_update
quantize_pack = impl.quantize_pack


def name() -> str:
    return impl.NAME


def available_backends():
    names = ["fallback"]
    try:
        from . import _native  # noqa: F401
        names.insert(0, "native")
    except ImportError:
        pass
    return names


def get_impl(backend_name: str):
    """Return a specific backend module (for benchmarks and tests)."""
    if backend_name == "fallback":
        return _fallback
    if backend_name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown backend {backend_name!r}")


@contextmanager
def use(backend_name: str):
    """Temporarily route the kernels through a specific backend.

    Rebinds the module-level dispatch; not safe to nest across threads,
    intended for benchmarks and cross-backend tests.
    """
    global impl, conv_base, frac_update, quantize_pack
    prev = impl

    def _bind(m):
        global impl, conv_base, frac_update, quantize_pack
        impl, conv_base, frac_update, quantize_pack = (
            m, m.conv_base, m.frac_update, m.quantize_pack)

    _bind(get_impl(backend_name))
    try:
        yield
    finally:
        _bind(prev)
