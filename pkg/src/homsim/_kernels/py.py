"""Pure-NumPy fallback for the time-tag correlator kernel.

Same contract as the compiled version in _corr.pyx: chunked searchsorted
window lookup instead of an explicit pair loop, identical bin semantics
(round-half-away-from-zero, symmetric under stream exchange).
"""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 16


def correlate_kernel(
    tags1: np.ndarray, tags2: np.ndarray, bin_width: int, n_half: int
) -> np.ndarray:
    tags1 = np.asarray(tags1, dtype=np.int64)
    tags2 = np.asarray(tags2, dtype=np.int64)
    counts = np.zeros(2 * n_half + 1, dtype=np.int64)
    if tags1.size == 0 or tags2.size == 0:
        return counts
    # Qualifying pairs satisfy 2*|tau| < (2*n_half + 1) * bin_width; the
    # half-open search bounds below reproduce that with integer tags.
    half_span = ((2 * n_half + 1) * bin_width - 1) // 2
    n_bins = 2 * n_half + 1
    for start in range(0, tags1.size, _CHUNK):
        t1 = tags1[start : start + _CHUNK]
        lo = np.searchsorted(tags2, t1 - half_span, side="left")
        hi = np.searchsorted(tags2, t1 + half_span, side="right")
        n_pairs = hi - lo
        if n_pairs.sum() == 0:
            continue
        # Expand (lo, hi) ranges into flat partner indices.
        offsets = np.repeat(np.cumsum(n_pairs) - n_pairs, n_pairs)
        idx = np.arange(int(n_pairs.sum())) - offsets + np.repeat(lo, n_pairs)
        tau = tags2[idx] - np.repeat(t1, n_pairs)
        atau = np.abs(tau)
        k = (2 * atau + bin_width) // (2 * bin_width)
        k = np.where(tau < 0, -k, k)
        keep = np.abs(k) <= n_half
        counts += np.bincount(
            (k[keep] + n_half).astype(np.int64), minlength=n_bins
        ).astype(np.int64)
    return counts
