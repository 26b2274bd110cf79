"""Backend selection for the hot loops.

The compiled extension ``qtomo._ckernels`` is used when it imports; the numpy
module ``qtomo._kernels_py`` is the fallback.  Setting the environment
variable ``QTOMO_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    if os.environ.get("QTOMO_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
backend: ModuleType = _compiled if _compiled is not None else _kernels_py
BACKEND_NAME = "compiled" if _compiled is not None else "python"


def get_backend(name: str) -> ModuleType:
    """Return a specific backend by name ('compiled' or 'python')."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def set_threads(n: int) -> None:
    """Cap worker threads used by the compiled loops."""
    backend.set_threads(int(n))


def joint_photon_values(x, theta, t_nodes, w_nodes, kappa, nmax):
    return backend.joint_photon_values(x, theta, t_nodes, w_nodes, kappa, nmax)


def total_photon_values(x, t_nodes, weights, kappa):
    return backend.total_photon_values(x, t_nodes, weights, kappa)


def trig_inverse_cdf(u, phi, cdf_re, cdf_im, grid):
    return backend.trig_inverse_cdf(u, phi, cdf_re, cdf_im, grid)
