"""Kernel selection: compiled extension when available, NumPy fallback otherwise.

Set HOMSIM_NO_EXT=1 to force the fallback (useful for testing and
benchmarking the two implementations against each other).
"""

import os

from .py import correlate_kernel as correlate_kernel_py

if os.environ.get("HOMSIM_NO_EXT"):
    COMPILED = False
    correlate_kernel = correlate_kernel_py
else:
    try:
        from ._corr import correlate_kernel

        COMPILED = True
    except ImportError:
        COMPILED = False
        correlate_kernel = correlate_kernel_py

__all__ = ["correlate_kernel", "correlate_kernel_py", "COMPILED"]
