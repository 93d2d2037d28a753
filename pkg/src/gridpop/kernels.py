"""Backend selection for the hot raster and solver kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``GRIDPOP_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementations are used. The raster kernels agree
exactly; the solver agrees up to floating-point summation order.
"""
import logging
import os

from gridpop import _pykernels

logger = logging.getLogger(__name__)

KERNELS = ("edt_squared", "label8", "supercover_segments", "rasterize_discs", "fista_huber_l1")


def _load_compiled():
    if os.environ.get("GRIDPOP_PURE_PYTHON", "0") not in ("", "0"):
        return None
    try:
        from gridpop import _ckernels
    except ImportError as exc:  # pragma: no cover - depends on build
        logger.debug("compiled kernels unavailable: %s", exc)
        return None
    return _ckernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for
    the active default)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


_active = get_backend()
edt_squared = _active.edt_squared
label8 = _active.label8
supercover_segments = _active.supercover_segments
rasterize_discs = _active.rasterize_discs
fista_huber_l1 = _active.fista_huber_l1
