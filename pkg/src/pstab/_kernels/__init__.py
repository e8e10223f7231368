"""Backend selection for the time-stepping kernels.

Prefers the compiled Cython extension when it was built; falls back to the
pure NumPy/SciPy implementation otherwise. Set PSTAB_KERNEL=python to force
the fallback (the benchmark uses this, and it is the escape hatch if a wheel
was built on an incompatible toolchain).
"""

import os

from . import _cn_py

if os.environ.get("PSTAB_KERNEL", "").lower() in ("python", "py", "pure"):
    _impl = _cn_py
    BACKEND = "python"
else:
    try:
        from . import _cn_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _cn_py
        BACKEND = "python"

cn_evolve = _impl.cn_evolve
cn_sweep_block = _impl.cn_sweep_block

__all__ = ["cn_evolve", "cn_sweep_block", "BACKEND"]
