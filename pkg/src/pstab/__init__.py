"""pstab: approximate-periodic solves and periodic stabilization for
perturbed parabolic problems on interval and rectangle domains.

The package splits into:

    spectral    grids, elliptic operator assembly, eigenbasis, Gram matrices
    evolution   Crank-Nicolson stepping, period maps, energy and field norms
    periodic    head-constrained periodic solves and head-size selection
    control     control matrix/offset assembly and stabilizing synthesis
    scenarios   the resonant reference problem, presets and parameter sweeps
    exprlang    the small expression language used by config files
    cli         the ``pstab`` command line front end
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
