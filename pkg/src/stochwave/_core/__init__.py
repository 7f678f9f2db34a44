"""Numerical core: compiled stepper kernel with a pure-Python fallback.

The compiled extension is optional; ``get_backend`` selects it when it is
importable and the request allows it.  Both backends implement the same
``accumulate_step`` contract (see ``_fallback`` for the reference
semantics).
"""

from . import _fallback

try:
    from . import _speedups

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _speedups = None
    HAVE_COMPILED = False

__all__ = ["HAVE_COMPILED", "backend_name", "get_backend"]


def get_backend(name: str = "auto"):
    """Resolve a kernel backend by name: 'auto', 'compiled' or 'python'."""
    if name == "auto":
        return _speedups if HAVE_COMPILED else _fallback
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled backend requested but the extension is not built")
        return _speedups
    if name == "python":
        return _fallback
    raise ValueError(f"unknown backend {name!r}")


def backend_name(module) -> str:
    return "compiled" if module is _speedups else "python"
