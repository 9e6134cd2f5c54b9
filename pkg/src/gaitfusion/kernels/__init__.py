"""Backend selection for the compiled hot loops.

The Cython extension is optional; when it is missing every caller falls back
to the numpy implementations.  `NATIVE` is the extension module or None, and
`BACKEND` names what import found.
"""

try:
    from . import _native as NATIVE
except ImportError:
    NATIVE = None

BACKEND = "python" if NATIVE is None else "native"
