"""Backend selection for the backward-tree kernel.

The compiled extension is used when it imports; set ``GEOPRESSURE_PURE=1`` to
force the numpy fallback (used by the benchmark and the backend-agreement tests).
"""
import os

from . import _pytree

try:
    if os.environ.get("GEOPRESSURE_PURE") == "1":
        raise ImportError("pure backend requested")
    from . import _ctree
except ImportError:
    _ctree = None

BACKENDS = {"python": _pytree.tree_lse}
if _ctree is not None:
    BACKENDS["compiled"] = _ctree.tree_lse

BACKEND = "compiled" if _ctree is not None else "python"
tree_lse = BACKENDS[BACKEND]


def get(name=None):
    """Kernel callable by name; ``None`` gives the import-time default."""
    if name is None:
        return tree_lse
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
