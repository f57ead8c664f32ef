"""Kernel selection: the compiled event loop when built, else the Python twin.

Set ``METROPATH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernel

_compiled = None
if not os.environ.get("METROPATH_PURE_PYTHON"):
    try:
        from . import _kernel as _compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _compiled = None

DEFAULT = "cython" if _compiled is not None else "python"


def available() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_kernel(name: str | None = None):
    name = name or DEFAULT
    if name == "python":
        return _pykernel.simulate
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not built; reinstall the package")
        return _compiled.simulate
    raise ValueError(f"unknown backend {name!r}")
