"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
versions are used.  Set ``GEO_OPT_KERNELS=python`` to force the fallback
or ``GEO_OPT_KERNELS=cython`` to make a missing extension an error.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_requested = os.environ.get("GEO_OPT_KERNELS", "auto").lower()

if _requested == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _requested == "cython":
            raise
        log.info("compiled kernels unavailable, using numpy fallback")
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

two_site_descent = _impl.two_site_descent
advance_left = _impl.advance_left
advance_right = _impl.advance_right
sample_chain = _impl.sample_chain
