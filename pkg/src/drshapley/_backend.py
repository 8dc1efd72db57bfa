"""Backend selection: numba-compiled kernels with a pure NumPy fallback.

The environment variable DRSHAPLEY_BACKEND picks the implementation:

* "numba"  -- compile every kernel with @njit (default when numba imports)
* "numpy"  -- run the kernel source as plain Python over NumPy scalars

Both run the identical source (_kernels.py) and produce bit-identical
streams and estimates; the numpy path exists for debugging and for
environments where numba is unavailable.

Use active() to get the kernel namespace, and wrap pure-path calls in
errstate() so the wrapping uint64 RNG arithmetic stays silent.
"""

import contextlib
import importlib.util
import inspect
import os
import sys
import warnings

import numpy as np

from . import _kernels as _pure

_VALID = ("numba", "numpy")


def _requested() -> str:
    val = os.environ.get("DRSHAPLEY_BACKEND", "").strip().lower()
    if val and val not in _VALID:
        warnings.warn(
            f"DRSHAPLEY_BACKEND={val!r} not recognized (expected one of "
            f"{_VALID}); falling back to autodetection")
        val = ""
    return val


def _load_jitted():
    import numba

    # A second module object is built from the kernel source so the pure
    # namespace stays untouched.  It must live in sys.modules under a
    # resolvable dotted name, otherwise numba's on-disk cache records the
    # functions as belonging to '<dynamic>' and warm loads break.
    modname = "drshapley._kernels_jit"
    spec = importlib.util.spec_from_file_location(modname, _pure.__file__)
    mod = importlib.util.module_from_spec(spec)
    sys.modules[modname] = mod
    try:
        spec.loader.exec_module(mod)
        for name, fn in list(vars(mod).items()):
            if inspect.isfunction(fn) and fn.__module__ == modname:
                setattr(mod, name, numba.njit(cache=True, nogil=True)(fn))
    except BaseException:
        del sys.modules[modname]
        raise
    return mod


_active = None
_name = None


def _initialize():
    global _active, _name
    req = _requested()
    if req != "numpy":
        try:
            _active = _load_jitted()
            _name = "numba"
            return
        except ImportError:
            if req == "numba":
                raise
    _active = _pure
    _name = "numpy"


_initialize()


def active():
    """The kernel namespace currently in use."""
    return _active


def backend_name() -> str:
    return _name


def errstate():
    """Context manager silencing uint64 wraparound on the pure path.

    The jitted kernels never raise numpy warnings, so this is a no-op
    there; keeping call sites uniform costs nothing.
    """
    if _name == "numpy":
        return np.errstate(over="ignore")
    return contextlib.nullcontext()
